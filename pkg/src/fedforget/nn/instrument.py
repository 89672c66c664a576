"""Counters for work accounting (forward batches run, bytes moved)."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class Counters:
    forward_batches: int = 0

    def reset(self) -> None:
        self.forward_batches = 0


COUNTERS = Counters()
