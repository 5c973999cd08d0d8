"""Lossy, delayed broadcast channel between simulated MAVs."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    loss: float = 0.0
    delay: float = 0.05
    jitter: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss probability {self.loss} outside [0, 1]")
        if self.delay < 0 or self.jitter < 0:
            raise ValueError("delays must be non-negative")


@dataclass(frozen=True)
class Message:
    sender: int
    stamp: float
    payload: Any


class Channel:
    """Event queue of scheduled deliveries.

    Every directed link (sender, receiver) draws loss and jitter from its own
    seeded stream, so the delivery trace depends only on the seed and the
    sequence of broadcasts.
    """

    def __init__(self, params: ChannelParams, ids: Sequence[int]):
        self.params = params
        self.ids = list(ids)
        root = np.random.SeedSequence([params.seed, 0xC0FFEE])
        children = root.spawn(len(self.ids) ** 2)
        self._rng = {}
        for (a, b), ss in zip(itertools.product(self.ids, self.ids), children):
            self._rng[(a, b)] = np.random.default_rng(ss)
        self._queues: dict[int, list] = {i: [] for i in self.ids}
        self._seq = itertools.count()
        self.sent = 0
        self.delivered = 0

    def broadcast(self, msg: Message, now: float, receivers: Sequence[int] | None = None) -> list[tuple[int, float]]:
        """Schedule ``msg`` to every other MAV; returns ``[(receiver, delivery_time)]``."""
        p = self.params
        out = []
        targets = [r for r in (self.ids if receivers is None else receivers) if r != msg.sender]
        for r in targets:
            self.sent += 1
            rng = self._rng[(msg.sender, r)]
            # always draw both numbers so the stream position does not depend on outcomes
            drop, jit = rng.random(), rng.standard_normal()
            if drop < p.loss:
                continue
            t = now + max(0.0, p.delay + p.jitter * jit)
            heapq.heappush(self._queues[r], (t, msg.sender, next(self._seq), msg))
            out.append((r, t))
        return out

    def poll(self, receiver: int, now: float) -> list[Message]:
        """All messages due by ``now`` in delivery order (ties by sender id), each once."""
        q = self._queues[receiver]
        out = []
        while q and q[0][0] <= now + 1e-12:
            out.append(heapq.heappop(q)[3])
        self.delivered += len(out)
        return out

    def pending(self, receiver: int) -> int:
        return len(self._queues[receiver])
