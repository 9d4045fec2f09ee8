"""Scoped refresh: entity-ID notifications routed by slice overlap, lossy delivery, pull retrieval."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import UnknownCommit
from .memory import CommittedUpdate, GlobalStore
from .ontology import EntityKey, SliceSpec, slice_overlaps


@dataclass(frozen=True)
class RefreshNotification:
    """Announces a commit by the IDs of the entities it touched; no values."""

    commit_seq: int
    entities: frozenset[EntityKey]
    author: str

    @property
    def predicates(self) -> frozenset[str]:
        return frozenset(k.predicate for k in self.entities)

    @classmethod
    def for_update(cls, update: CommittedUpdate) -> "RefreshNotification":
        return cls(update.commit_seq, update.keys, update.author)


@dataclass(frozen=True, slots=True)
class DeliveryRecord:
    commit_seq: int
    recipient: str
    delivered: bool
    tick: int

    @property
    def outcome(self) -> str:
        return "Delivered" if self.delivered else "Dropped"


def route(n: RefreshNotification, slices: Iterable[SliceSpec]) -> set[str]:
    """Every agent other than the author whose slice reads one of the entities."""
    return {s.agent for s in slices if s.agent != n.author and slice_overlaps(s, n.entities)}


class Router:
    """Predicate -> subscriber index giving the same answer as :func:`route`."""

    def __init__(self, slices: Iterable[SliceSpec] = ()):
        self._subscribers: dict[str, set[str]] = defaultdict(set)
        self._slices: dict[str, SliceSpec] = {}
        for s in slices:
            self.add(s)

    def add(self, s: SliceSpec) -> None:
        self._slices[s.agent] = s
        for p in s.readable:
            self._subscribers[p].add(s.agent)

    def remove(self, agent: str) -> None:
        s = self._slices.pop(agent, None)
        if s is not None:
            for p in s.readable:
                self._subscribers[p].discard(agent)

    def route(self, n: RefreshNotification) -> list[str]:
        """Recipients in agent-id order (the order transport randomness is drawn in)."""
        preds = n.predicates
        if len(preds) == 1:
            out = set(self._subscribers.get(next(iter(preds)), ()))
        else:
            out = set()
            for p in preds:
                out |= self._subscribers.get(p, set())
        out.discard(n.author)
        return sorted(out)


def deliver(
    recipients: Iterable[str],
    drop_prob: float,
    rng: random.Random,
    commit_seq: int = 0,
    tick: int = 0,
) -> list[DeliveryRecord]:
    """One independent attempt per recipient; each dropped with probability ``drop_prob``.

    Recipients are visited in sorted order so the transport stream is consumed
    deterministically. With ``drop_prob == 0`` no random numbers are drawn.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError(f"drop_prob must be in [0, 1), got {drop_prob}")
    ordered: Sequence[str] = sorted(recipients)
    if drop_prob == 0.0:
        return [DeliveryRecord(commit_seq, r, True, tick) for r in ordered]
    draw = rng.random
    return [DeliveryRecord(commit_seq, r, draw() >= drop_prob, tick) for r in ordered]


def retrieve(store: GlobalStore, commit_seq: int) -> CommittedUpdate:
    update = store.get(commit_seq)
    if update is None:
        raise UnknownCommit(f"no commit {commit_seq} (latest is {store.latest_seq})")
    return update
