"""SEARCH/REPLACE edit application.

Matching is byte-for-byte: each search text must occur exactly once in the
current text.  Edits apply in order, so later edits see the result of
earlier ones.  A lenient mode that ignores trailing whitespace per line is
available behind a flag, default off.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

__all__ = ["DiffError", "NoMatch", "AmbiguousMatch", "NoOpEdit", "DiffEdit", "apply_diff"]


class DiffError(ValueError):
    pass


class NoMatch(DiffError):
    pass


class AmbiguousMatch(DiffError):
    pass


class NoOpEdit(DiffError):
    pass


@dataclass(frozen=True)
class DiffEdit:
    search: str
    replace: str

    def __post_init__(self):
        if not self.search:
            raise DiffError("search text must be non-empty")


def _strip_trailing(text: str) -> str:
    return re.sub(r"[ \t]+$", "", text, flags=re.MULTILINE)


def apply_diff(source: str, edits: Sequence[DiffEdit], lenient_trailing_whitespace: bool = False) -> str:
    """Apply each edit sequentially; every search must match exactly once."""
    text = source
    for i, edit in enumerate(edits):
        if edit.search == edit.replace:
            raise NoOpEdit(f"edit {i}: search equals replace")
        search = edit.search
        haystack = text
        if lenient_trailing_whitespace and haystack.count(search) == 0:
            haystack = _strip_trailing(text)
            search = _strip_trailing(search)
        count = haystack.count(search)
        if count == 0:
            raise NoMatch(f"edit {i}: search text not found")
        if count > 1:
            raise AmbiguousMatch(f"edit {i}: search text matches {count} locations")
        if haystack is not text:
            # Re-apply the unique lenient match against the original text by
            # locating the match via line offsets of the stripped view.
            idx = haystack.index(search)
            line_start = haystack.count("\n", 0, idx)
            n_lines = search.count("\n")
            lines = text.split("\n")
            before = "\n".join(lines[:line_start])
            after = "\n".join(lines[line_start + n_lines + 1 :])
            replaced = edit.replace
            text = (before + "\n" if before else "") + replaced + ("\n" + after if lines[line_start + n_lines + 1 :] else "")
        else:
            text = text.replace(search, edit.replace, 1)
    return text
