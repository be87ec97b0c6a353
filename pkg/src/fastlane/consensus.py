"""Trusted total-order sequencer standing in for a consensus engine."""

from __future__ import annotations

from typing import Any


def item_id(item: Any) -> str:
    """Dedup key: certificates by transaction id, unlock certs by their id."""
    tx = getattr(item, "tx", None)
    if tx is not None:
        return "cert:" + tx.id
    return "ucert:" + item.id


class Sequencer:
    """A single append-only log with a read cursor per validator.

    Items are appended in the order `submit` is called; the simulator calls
    it in (arrival time, digest) order, which fixes the sequence.
    """

    def __init__(self, validator_ids=()):
        self.log: list[Any] = []
        self.slots: dict[str, int] = {}
        self.cursor: dict[str, int] = {v: 0 for v in validator_ids}

    def clone(self) -> "Sequencer":
        c = Sequencer()
        c.log = list(self.log)
        c.slots = dict(self.slots)
        c.cursor = dict(self.cursor)
        return c

    def submit(self, item: Any) -> int | None:
        """Append an item unless already present. Returns the new slot."""
        key = item_id(item)
        if key in self.slots:
            return None
        self.slots[key] = len(self.log)
        self.log.append(item)
        return len(self.log) - 1

    def has_next(self, validator_id: str) -> bool:
        return self.cursor.get(validator_id, 0) < len(self.log)

    def peek(self, validator_id: str) -> tuple[int, Any] | None:
        i = self.cursor.get(validator_id, 0)
        if i >= len(self.log):
            return None
        return i, self.log[i]

    def advance(self, validator_id: str) -> None:
        self.cursor[validator_id] = self.cursor.get(validator_id, 0) + 1

    def deliver_next(self, validator_id: str) -> tuple[int, Any] | None:
        nxt = self.peek(validator_id)
        if nxt is not None:
            self.advance(validator_id)
        return nxt

    def delivered(self, validator_id: str) -> list[Any]:
        return self.log[: self.cursor.get(validator_id, 0)]
