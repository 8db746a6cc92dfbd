"""Prompt rendering for the four mutation kernels.

Templates live as data files next to this module and are checksummed so
silent drift fails tests.  Substitution fills {{language}},
{{code_content}}, {{performance_metrics}}, and {{inspiration_section}}.
"""

from __future__ import annotations

import hashlib
from importlib import resources
from typing import Sequence

from ..core import KERNEL_IDS, Program, RewardValue

__all__ = ["render_prompt", "render_inspiration_section", "verify_templates", "TEMPLATE_CHECKSUMS"]

# blake2b-64 of each template file; regenerate deliberately when a template
# changes (tests compare against the files on disk).
TEMPLATE_CHECKSUMS = {
    "diff_no_inspo.system.txt": "fc6916243104178a",
    "diff_no_inspo.user.txt": "c18a0fb755f5d9dd",
    "diff_with_inspo.system.txt": "0c5e33b10388f4fd",
    "diff_with_inspo.user.txt": "fda35fd2af1a581d",
    "rewrite_no_inspo.system.txt": "6d53d439bca2b33c",
    "rewrite_no_inspo.user.txt": "785d5f97bc58f63c",
    "rewrite_with_inspo.system.txt": "832b35260267389d",
    "rewrite_with_inspo.user.txt": "aaea75302e171952",
}


def _load(name: str) -> str:
    return resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")


def verify_templates() -> None:
    """Raise if any shipped template drifted from its pinned checksum."""
    for name, expected in TEMPLATE_CHECKSUMS.items():
        actual = hashlib.blake2b(_load(name).encode("utf-8"), digest_size=8).hexdigest()
        if actual != expected:
            raise RuntimeError(f"template {name} drifted: {actual} != {expected}")


def render_inspiration_section(
    inspirations: Sequence[tuple[Program, RewardValue]], language: str
) -> str:
    parts = []
    for i, (program, reward) in enumerate(inspirations, start=1):
        parts.append(
            f"## Reference Program {i} (reward: {reward.value:.6g})\n\n"
            f"```{language}\n{program.source}\n```"
        )
    return "\n\n".join(parts)


def render_prompt(
    kernel_id: str,
    parent: Program,
    metrics: str = "",
    inspirations: Sequence[tuple[Program, RewardValue]] = (),
) -> tuple[str, str]:
    """Return (system, user) prompts for the given kernel."""
    if kernel_id not in KERNEL_IDS:
        raise ValueError(f"unknown kernel {kernel_id!r}")
    language = parent.language_tag
    substitutions = {
        "{{language}}": language,
        "{{code_content}}": parent.source,
        "{{performance_metrics}}": metrics.strip() or "n/a",
        "{{inspiration_section}}": render_inspiration_section(inspirations, language),
    }
    system = _load(f"{kernel_id}.system.txt")
    user = _load(f"{kernel_id}.user.txt")
    for key, value in substitutions.items():
        system = system.replace(key, value)
        user = user.replace(key, value)
    return system, user
