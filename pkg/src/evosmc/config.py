"""JSON run-configuration loading.

A config file has four sections: ``run`` (engine hyperparameters),
``task`` (description, language, and the initial-program prior),
``evaluator`` (how rewards are computed), and ``llm`` (proposal backend).
Secrets never appear in config files; the API key is named by an
environment variable and read at request time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Program, RunConfig, derive_rng, make_program
from .evaluators import BitstringEvaluator, EvalSpec, SubprocessEvaluator
from .llm.client import OpenAiChatClient
from .llm.kernels import RewardLedger, make_llm_kernels
from .llm.mockserver import MockLlmTransport

__all__ = ["ConfigError", "RunSetup", "load_config", "build_setup"]


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunSetup:
    """Everything the engine entry point needs, built from one config file."""

    config: RunConfig
    task_description: str
    language: str
    prior: Callable[[np.random.Generator], Program]
    evaluator: object
    client: OpenAiChatClient
    kernels: dict
    ledger: RewardLedger
    deterministic_timestamps: bool
    raw: dict


def _section(raw: dict, name: str, required: bool = True) -> dict:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing config section {name!r}")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def _build_run_config(section: dict) -> RunConfig:
    allowed = set(RunConfig.__dataclass_fields__)
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown run options: {sorted(unknown)}")
    try:
        return RunConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad run options: {exc}") from exc


def _build_prior(section: dict, language: str, config_dir: str) -> Callable[[np.random.Generator], Program]:
    kind = section.get("type")
    if kind == "random_bits":
        n_bits = int(section.get("n_bits", 0))
        if n_bits < 1:
            raise ConfigError("random_bits prior needs n_bits >= 1")

        def draw_bits(rng: np.random.Generator) -> Program:
            bits = rng.integers(0, 2, size=n_bits)
            return make_program("".join(str(int(b)) for b in bits), language)

        return draw_bits
    if kind == "seed_program":
        source = section.get("source")
        path = section.get("path")
        if (source is None) == (path is None):
            raise ConfigError("seed_program prior needs exactly one of source or path")
        if path is not None:
            if not os.path.isabs(path):
                path = os.path.join(config_dir, path)
            with open(path, encoding="utf-8") as fh:
                source = fh.read()
        if not source:
            raise ConfigError("seed program is empty")
        seed_prog = make_program(source, language)
        return lambda rng: seed_prog
    raise ConfigError(f"unknown prior type {kind!r}")


def _build_evaluator(section: dict, reward_floor: float, config_dir: str):
    kind = section.get("type")
    if kind == "bitstring":
        n_bits = int(section.get("n_bits", 0))
        if n_bits < 1:
            raise ConfigError("bitstring evaluator needs n_bits >= 1")
        return BitstringEvaluator(n_bits=n_bits, reward_floor=reward_floor)
    if kind == "subprocess":
        command = section.get("command")
        if not isinstance(command, list) or not command or not all(isinstance(c, str) for c in command):
            raise ConfigError("subprocess evaluator needs a non-empty command list of strings")
        command = [
            c if os.path.isabs(c) or os.sep not in c else os.path.normpath(os.path.join(config_dir, c))
            for c in command
        ]
        try:
            spec = EvalSpec(
                command=tuple(command),
                timeout_s=float(section.get("timeout_s", 90.0)),
                reward_floor=reward_floor,
                source_suffix=str(section.get("source_suffix", ".py")),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return SubprocessEvaluator(spec)
    raise ConfigError(f"unknown evaluator type {kind!r}")


def _build_client(section: dict, seed: int) -> OpenAiChatClient:
    backend = section.get("backend", "mock")
    ensemble_rng = derive_rng(seed, 0, "ensemble")
    common = dict(
        models=tuple(section.get("models", ("scripted",))),
        timeout_s=float(section.get("timeout_s", 60.0)),
        max_retries=int(section.get("max_retries", 3)),
        request_budget=section.get("request_budget"),
        ensemble_rng=ensemble_rng,
    )
    if backend == "mock":
        return OpenAiChatClient(endpoint="mock://local", transport=MockLlmTransport(), **common)
    if backend == "openai":
        endpoint = section.get("endpoint")
        if not endpoint:
            raise ConfigError("openai backend needs an endpoint")
        return OpenAiChatClient(
            endpoint=endpoint,
            api_key_env=str(section.get("api_key_env", "EVOSMC_API_KEY")),
            **common,
        )
    raise ConfigError(f"unknown llm backend {backend!r}")


def build_setup(raw: dict, config_dir: str = ".", seed_override: int | None = None) -> RunSetup:
    """Validate a parsed config dict and construct all run components."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    run_section = dict(_section(raw, "run", required=False))
    if seed_override is not None:
        run_section["seed"] = seed_override
    config = _build_run_config(run_section)

    task = _section(raw, "task")
    language = str(task.get("language", "python"))
    description = str(task.get("description", ""))
    prior = _build_prior(_section(task, "prior"), language, config_dir)

    evaluator = _build_evaluator(_section(raw, "evaluator"), config.reward_floor, config_dir)

    llm = _section(raw, "llm", required=False)
    client = _build_client(llm, config.seed)
    ledger = RewardLedger()
    kernels = make_llm_kernels(
        client,
        metrics_provider=ledger.metrics_for,
        temperature=float(llm.get("temperature", 1.0)),
        max_tokens=int(llm.get("max_tokens", 4096)),
        lenient_diff_whitespace=bool(llm.get("lenient_diff_whitespace", False)),
    )

    log = _section(raw, "log", required=False)
    deterministic = bool(log.get("deterministic_timestamps", True))

    resolved = dict(raw)
    resolved["run"] = run_section
    return RunSetup(
        config=config,
        task_description=description,
        language=language,
        prior=prior,
        evaluator=ledger.wrap(evaluator),
        client=client,
        kernels=kernels,
        ledger=ledger,
        deterministic_timestamps=deterministic,
        raw=resolved,
    )


def load_config(path: str, seed_override: int | None = None) -> RunSetup:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    return build_setup(raw, config_dir=os.path.dirname(os.path.abspath(path)), seed_override=seed_override)
