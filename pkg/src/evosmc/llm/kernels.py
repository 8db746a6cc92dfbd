"""LLM-backed proposal kernels for the four mutation modes.

Diff kernels ask for SEARCH/REPLACE edits and apply them to the parent;
rewrite kernels ask for a full program.  Any malformed model output or
failed edit application becomes a parse failure, which the MH chain
auto-rejects; it never aborts a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import KERNEL_IDS, Program, make_program
from ..mutate import MutationContext, ProposalResult
from .client import ChatError, ChatRequest, OpenAiChatClient
from .diff import DiffError, apply_diff
from .parse import ParseError, parse_response
from .prompts import render_prompt

__all__ = ["RewardLedger", "LlmProposalKernel", "make_llm_kernels"]


@dataclass
class RewardLedger:
    """Digest-keyed record of evaluated rewards, used to render the
    performance-metrics block of prompts."""

    rewards: dict = field(default_factory=dict)

    def note(self, program: Program, value: float) -> None:
        self.rewards[program.digest] = value

    def metrics_for(self, program: Program) -> str:
        value = self.rewards.get(program.digest)
        return "" if value is None else f"reward: {value:.6g}"

    def wrap(self, evaluator):
        """Evaluator decorator that records every result into the ledger."""
        ledger = self

        class _Recording:
            deterministic = getattr(evaluator, "deterministic", False)

            def evaluate(self, program: Program):
                reward = evaluator.evaluate(program)
                ledger.note(program, reward.value)
                return reward

        return _Recording()


@dataclass
class LlmProposalKernel:
    kernel_id: str
    client: OpenAiChatClient
    temperature: float = 1.0
    max_tokens: int = 4096
    lenient_diff_whitespace: bool = False
    metrics_provider: Callable[[Program], str] | None = None

    def __post_init__(self):
        if self.kernel_id not in KERNEL_IDS:
            raise ValueError(f"unknown kernel {self.kernel_id!r}")
        self.expect = "diff" if self.kernel_id.startswith("diff") else "code"

    def propose(self, parent: Program, context: MutationContext, rng: np.random.Generator) -> ProposalResult:
        metrics = self.metrics_provider(parent) if self.metrics_provider else ""
        system, user = render_prompt(self.kernel_id, parent, metrics, context.inspirations)
        request = ChatRequest(
            model=self.client.pick_model(),
            system=system,
            user=user,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
        )
        try:
            raw = self.client.chat(request)
        except ChatError as exc:
            return ProposalResult(candidate=None, kernel_id=self.kernel_id, raw_response=f"<error: {exc}>", parse_ok=False)
        try:
            parsed = parse_response(raw, expect=self.expect)
            if self.expect == "diff":
                new_source = apply_diff(parent.source, parsed.edits, self.lenient_diff_whitespace)
            else:
                new_source = parsed.code
            candidate = make_program(new_source, parent.language_tag)
        except (ParseError, DiffError, ValueError):
            return ProposalResult(candidate=None, kernel_id=self.kernel_id, raw_response=raw, parse_ok=False)
        return ProposalResult(candidate=candidate, kernel_id=self.kernel_id, raw_response=raw)


def make_llm_kernels(
    client: OpenAiChatClient,
    metrics_provider: Callable[[Program], str] | None = None,
    temperature: float = 1.0,
    max_tokens: int = 4096,
    lenient_diff_whitespace: bool = False,
) -> dict[str, LlmProposalKernel]:
    return {
        kid: LlmProposalKernel(
            kernel_id=kid,
            client=client,
            temperature=temperature,
            max_tokens=max_tokens,
            lenient_diff_whitespace=lenient_diff_whitespace,
            metrics_provider=metrics_provider,
        )
        for kid in KERNEL_IDS
    }
