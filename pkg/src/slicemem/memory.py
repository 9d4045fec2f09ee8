"""Global canonical store, agent-local views, projection and the ordered merge.

Every view carries an order-independent digest: the sum (mod 2**128) of a
128-bit hash of each canonical ``[key, value, seq]`` entry. Two views have the
same digest exactly when their canonical snapshots have the same entries, and
the digest updates in O(1) per write, which keeps per-tick alignment checks
cheap.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterable, Iterator

from .errors import SeqOutOfRange, UnvalidatedUpdate
from .ontology import (
    Approved,
    EntityKey,
    SliceSpec,
    Statement,
    from_json_value,
    render_key,
    to_json_value,
)

DIGEST_MOD = 1 << 128


def entry_bytes(key: EntityKey, value: Any, seq: int) -> bytes:
    return json.dumps(
        [render_key(key), to_json_value(value), seq], separators=(",", ":")
    ).encode()


@lru_cache(maxsize=1 << 17)
def entry_hash(key: EntityKey, value: Any, seq: int) -> int:
    h = hashlib.blake2b(entry_bytes(key, value, seq), digest_size=16)
    return int.from_bytes(h.digest(), "big")


def digest_hex(digest: int) -> str:
    return f"{digest:032x}"


@dataclass(frozen=True, slots=True)
class CommittedUpdate:
    commit_seq: int
    tick: int
    statements: tuple[Statement, ...]
    author: str
    proposal_id: str = ""
    keys: frozenset[EntityKey] = field(init=False, repr=False, compare=False)
    predicates: frozenset[str] = field(init=False, repr=False, compare=False)
    hashes: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        # Derived once per commit; every integration of it reuses them.
        keys = frozenset(s.key for s in self.statements)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "predicates", frozenset(k.predicate for k in keys))
        hashes = tuple(entry_hash(s.key, s.value, self.commit_seq) for s in self.statements)
        object.__setattr__(self, "hashes", hashes)


class MemoryView:
    """Key -> (value, commit_seq of last writer), plus ``as_of_seq``.

    ``track_changes`` makes the view remember which keys changed since the
    last :meth:`take_changes`; the simulator uses it to log snapshot deltas.
    """

    __slots__ = ("entries", "as_of_seq", "digest", "integrated", "_hashes", "_changed")

    def __init__(self, track_changes: bool = False):
        self.entries: dict[EntityKey, tuple[Any, int]] = {}
        self.as_of_seq = 0
        self.digest = 0
        self.integrated: set[int] = set()
        self._hashes: dict[EntityKey, int] = {}
        self._changed: set[EntityKey] | None = set() if track_changes else None

    def put(self, key: EntityKey, value: Any, seq: int, h: int | None = None) -> None:
        """Write one entry; ``h`` may carry a precomputed :func:`entry_hash`."""
        if h is None:
            h = entry_hash(key, value, seq)
        self.digest = (self.digest + h - self._hashes.get(key, 0)) % DIGEST_MOD
        self._hashes[key] = h
        self.entries[key] = (value, seq)
        if self._changed is not None:
            self._changed.add(key)

    def get(self, key: EntityKey, default: Any = None) -> Any:
        entry = self.entries.get(key)
        return default if entry is None else entry[0]

    def seq_of(self, key: EntityKey) -> int:
        entry = self.entries.get(key)
        return 0 if entry is None else entry[1]

    def take_changes(self) -> list[tuple[EntityKey, Any, int]]:
        if not self._changed:
            return []
        out = [(k, *self.entries[k]) for k in sorted(self._changed, key=render_key)]
        self._changed.clear()
        return out

    def copy(self) -> "MemoryView":
        other = MemoryView(track_changes=self._changed is not None)
        other.entries = dict(self.entries)
        other.as_of_seq = self.as_of_seq
        other.digest = self.digest
        other._hashes = dict(self._hashes)
        other.integrated = set(self.integrated)
        return other

    def same_entries(self, other: "MemoryView") -> bool:
        return self.digest == other.digest and self.entries == other.entries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryView):
            return NotImplemented
        return self.as_of_seq == other.as_of_seq and self.same_entries(other)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[EntityKey]:
        return iter(self.entries)

    def __repr__(self) -> str:
        return f"MemoryView({len(self.entries)} entries, as_of_seq={self.as_of_seq})"


class GlobalStore:
    """Canonical memory for analysis: the current view plus the full commit history.

    ``on_commit`` is called with each new :class:`CommittedUpdate`; the
    simulator uses it to append Commit records to the trace.
    """

    def __init__(self, on_commit: Callable[[CommittedUpdate], None] | None = None):
        self.current = MemoryView()
        self.history: list[CommittedUpdate] = []
        self.on_commit = on_commit

    @property
    def latest_seq(self) -> int:
        return len(self.history)

    def get(self, commit_seq: int) -> CommittedUpdate | None:
        if 1 <= commit_seq <= len(self.history):
            return self.history[commit_seq - 1]
        return None

    def replay(self, upto: int | None = None) -> MemoryView:
        upto = self.latest_seq if upto is None else upto
        view = MemoryView()
        for update in self.history[:upto]:
            for s, h in zip(update.statements, update.hashes):
                view.put(s.key, s.value, update.commit_seq, h)
        view.as_of_seq = upto
        return view


def commit(store: GlobalStore, update: Approved, tick: int) -> CommittedUpdate:
    """Serialize a validated proposal into the store with the next commit_seq."""
    if not isinstance(update, Approved):
        raise UnvalidatedUpdate(f"commit needs a validation token, got {type(update).__name__}")
    p = update.proposal
    seq = store.latest_seq + 1
    committed = CommittedUpdate(seq, tick, p.statements, p.author, p.proposal_id)
    view = store.current
    for s, h in zip(p.statements, committed.hashes):
        view.put(s.key, s.value, seq, h)
    view.as_of_seq = seq
    store.history.append(committed)
    if store.on_commit is not None:
        store.on_commit(committed)
    return committed


def project(store: GlobalStore, slice: SliceSpec, at_seq: int) -> MemoryView:
    """Entries of the store as of ``at_seq`` whose predicate the slice can read."""
    if not 0 <= at_seq <= store.latest_seq:
        raise SeqOutOfRange(f"at_seq {at_seq} outside [0, {store.latest_seq}]")
    readable = slice.readable
    view = MemoryView()
    for update in store.history[:at_seq]:
        for s, h in zip(update.statements, update.hashes):
            if s.key.predicate in readable:
                view.put(s.key, s.value, update.commit_seq, h)
    view.as_of_seq = at_seq
    return view


NOOP = "noop"
STUTTER = "stutter"
APPLIED = "applied"


@dataclass(frozen=True, slots=True)
class MergeOutcome:
    kind: str
    keys: tuple[EntityKey, ...] = ()


_NOOP = MergeOutcome(NOOP)
_STUTTER = MergeOutcome(STUTTER)


def integrate(
    local: MemoryView,
    update: CommittedUpdate,
    slice: SliceSpec,
    revalidate: Callable[[CommittedUpdate], bool] | None = None,
) -> MergeOutcome:
    """Merge one committed update into a local view, exactly once, by commit order.

    A key only takes the new value if the update's commit_seq is not below
    the seq of the entry's current writer, so any delivery order converges to
    in-order replay. Within one update, a later statement on the same key
    wins, as it does in the store. ``revalidate`` returning False leaves the view untouched
    (a stutter).
    """
    seq = update.commit_seq
    if seq in local.integrated:
        return _NOOP
    readable = slice.readable
    if readable.isdisjoint(update.predicates):
        raise ValueError(f"update {seq} does not touch slice {slice.agent}")
    if revalidate is not None and not revalidate(update):
        return _STUTTER
    applied = []
    entries, hashes, changed = local.entries, local._hashes, local._changed
    digest = local.digest
    for s, h in zip(update.statements, update.hashes):
        key = s.key
        if key.predicate in readable:
            cur = entries.get(key)
            if cur is None or cur[1] <= seq:
                digest += h - hashes.get(key, 0)
                hashes[key] = h
                entries[key] = (s.value, seq)
                applied.append(key)
    if applied:
        local.digest = digest % DIGEST_MOD
        if changed is not None:
            changed.update(applied)
    local.integrated.add(seq)
    if seq > local.as_of_seq:
        local.as_of_seq = seq
    return MergeOutcome(APPLIED, tuple(applied))


# ---------------------------------------------------------------------------
# Canonical snapshots
# ---------------------------------------------------------------------------


def canonical_entries(view: MemoryView) -> list[list[Any]]:
    return [
        [render_key(k), to_json_value(v), s]
        for k, (v, s) in sorted(view.entries.items(), key=lambda kv: render_key(kv[0]))
    ]


def snapshot(view: MemoryView) -> bytes:
    """Key-sorted canonical bytes; equal views give identical bytes."""
    doc = {"as_of_seq": view.as_of_seq, "entries": canonical_entries(view)}
    return json.dumps(doc, separators=(",", ":")).encode()


def parse_snapshot(data: bytes | str) -> MemoryView:
    doc = json.loads(data)
    view = MemoryView()
    for key, value, seq in doc["entries"]:
        view.put(EntityKey.parse(key), from_json_value(value), int(seq))
    view.as_of_seq = int(doc["as_of_seq"])
    return view


def view_from_entries(entries: Iterable[tuple[EntityKey, Any, int]], as_of_seq: int = 0) -> MemoryView:
    view = MemoryView()
    for k, v, s in entries:
        view.put(k, v, s)
    view.as_of_seq = as_of_seq
    return view
