"""Execution traces: ordered, canonically serialised event records."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator

from .protocol import to_plain


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


class Trace:
    """An append-only list of plain-JSON records.

    Records are normalised on append, so an in-memory trace and one loaded
    back from disk look identical to the oracles.
    """

    def __init__(self, records: Iterable[dict] = ()):
        self.records: list[dict] = []
        for r in records:
            self.append(r)

    def append(self, rec: dict) -> None:
        plain = to_plain(rec)
        plain["i"] = len(self.records)
        self.records.append(plain)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of(self, *kinds: str) -> list[dict]:
        ks = set(kinds)
        return [r for r in self.records if r["kind"] in ks]

    def first(self, kind: str) -> dict | None:
        for r in self.records:
            if r["kind"] == kind:
                return r
        return None

    @property
    def genesis(self) -> dict:
        g = self.first("genesis")
        if g is None:
            raise ValueError("trace has no genesis record")
        return g

    def to_jsonl(self) -> str:
        return "".join(_dumps(r) + "\n" for r in self.records)

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "Trace":
        t = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    t.records.append(json.loads(line))
        return t

    def render(self, limit: int | None = None) -> str:
        """Human-readable dump, one record per line."""
        lines = []
        for r in self.records[:limit]:
            rest = {k: v for k, v in r.items() if k not in ("kind", "t", "i")}
            body = " ".join(f"{k}={_short(v)}" for k, v in sorted(rest.items()))
            lines.append(f"[{r.get('t', 0):>5}] {r['kind']:<12} {body}")
        return "\n".join(lines)


def _short(v):
    if isinstance(v, str) and len(v) == 64:
        return v[:8]
    if isinstance(v, list) and len(v) > 6:
        return f"[{len(v)} items]"
    if isinstance(v, dict):
        return "{...}"
    return v
