"""Reading and writing Gram matrices.

Text format: first line n, then n lines of n integers.  Lines starting
with ``#`` and blank lines are ignored.  A JSON array of arrays is also
accepted.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Union

from genuslab.errors import FormParseError
from genuslab.qform_core import QuadraticForm, validate_form


def parse_gram(text: str) -> List[List[int]]:
    stripped = text.strip()
    if stripped.startswith("["):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise FormParseError(f"invalid JSON Gram matrix: {exc}") from exc
        if not isinstance(raw, list) or not all(isinstance(row, list) for row in raw):
            raise FormParseError("JSON Gram matrix must be an array of arrays")
        for row in raw:
            for x in row:
                if not isinstance(x, int) or isinstance(x, bool):
                    raise FormParseError(f"non-integer entry {x!r}")
        return raw

    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise FormParseError("empty form file")
    try:
        n = int(lines[0])
        rows = [[int(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise FormParseError(f"non-integer token: {exc}") from exc
    if len(rows) != n or any(len(row) != n for row in rows):
        raise FormParseError(f"expected {n} rows of {n} integers")
    return rows


def parse_form(text: str) -> QuadraticForm:
    return validate_form(parse_gram(text))


def read_form(path: Union[str, Path]) -> QuadraticForm:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormParseError(f"cannot read {path}: {exc}") from exc
    return parse_form(text)
