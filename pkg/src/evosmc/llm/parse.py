"""Parsing of tagged model responses.

Responses carry <NAME>, <DESCRIPTION>, and either a <DIFF> section of
SEARCH/REPLACE blocks or a <CODE> section with one fenced code block.
Surrounding prose is tolerated; missing or malformed sections raise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .diff import DiffEdit

__all__ = ["ParseError", "MissingTag", "MalformedDiffBlock", "EmptyCode", "ParsedResponse", "parse_response"]


class ParseError(ValueError):
    pass


class MissingTag(ParseError):
    pass


class MalformedDiffBlock(ParseError):
    pass


class EmptyCode(ParseError):
    pass


@dataclass(frozen=True)
class ParsedResponse:
    name: str
    description: str
    edits: tuple[DiffEdit, ...] | None = None  # diff responses
    code: str | None = None  # rewrite responses


_BLOCK_RE = re.compile(
    r"<<<<<<<\s*SEARCH\n(.*?)\n?=======\n(.*?)\n?>>>>>>>\s*REPLACE",
    re.DOTALL,
)
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def _tag(raw: str, name: str, required: bool = True) -> str | None:
    m = re.search(rf"<{name}>(.*?)</{name}>", raw, re.DOTALL)
    if m is None:
        if required:
            raise MissingTag(f"response lacks <{name}> tag")
        return None
    return m.group(1).strip()


def _normalize_name(name: str) -> str:
    return re.sub(r"\s+", "_", name.strip().lower())


def parse_response(raw: str, expect: str) -> ParsedResponse:
    """Parse a tagged response; `expect` is "diff" or "code"."""
    if expect not in ("diff", "code"):
        raise ValueError(f"expect must be 'diff' or 'code', got {expect!r}")
    name = _normalize_name(_tag(raw, "NAME", required=False) or "unnamed")
    description = _tag(raw, "DESCRIPTION", required=False) or ""

    if expect == "diff":
        diff_text = _tag(raw, "DIFF")
        blocks = _BLOCK_RE.findall(diff_text)
        if not blocks:
            raise MalformedDiffBlock("no SEARCH/REPLACE blocks inside <DIFF>")
        if any(not s.strip() for s, _ in blocks):
            raise MalformedDiffBlock("empty SEARCH section")
        edits = tuple(DiffEdit(search=s, replace=r) for s, r in blocks)
        return ParsedResponse(name=name, description=description, edits=edits)

    code_text = _tag(raw, "CODE")
    fence = _FENCE_RE.search(code_text)
    code = fence.group(1) if fence else code_text
    code = code.strip("\n")
    if not code.strip():
        raise EmptyCode("empty <CODE> payload")
    return ParsedResponse(name=name, description=description, code=code)
