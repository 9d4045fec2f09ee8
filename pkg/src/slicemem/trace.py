"""Append-only event log and its JSON Lines form.

Line 1 is a header object (``{"schema": ..., ...}``) describing the run:
ontology, slices, schedules. Every further line is one event::

    {"seq": 17, "tick": 3, "kind": "commit", "commit_seq": 9, ...}

Payload values are stored JSON-native at emission time, so an in-memory
trace and one read back from disk are indistinguishable to the checkers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import MalformedTrace
from .ontology import EntityKey, Ontology, SliceSpec, Statement, from_json_value, render_key, to_json_value

SCHEMA = "slicemem.trace/1"

PROPOSE = "propose"
VALIDATE = "validate"
COMMIT = "commit"
NOTIFY = "notify"
DELIVER = "deliver"
DROP = "drop"
RETRIEVE = "retrieve"
INTEGRATE = "integrate"
STUTTER = "stutter"
REJECT = "reject"
REMOVE = "remove"
SNAPSHOT = "snapshot"

KINDS = frozenset(
    {PROPOSE, VALIDATE, COMMIT, NOTIFY, DELIVER, DROP, RETRIEVE, INTEGRATE, STUTTER, REJECT, REMOVE, SNAPSHOT}
)


@dataclass(slots=True)
class TraceEvent:
    seq: int
    tick: int
    kind: str
    data: dict[str, Any]

    @property
    def agent(self) -> str | None:
        return self.data.get("agent")

    def to_json(self) -> dict[str, Any]:
        return {"seq": self.seq, "tick": self.tick, "kind": self.kind, **self.data}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TraceEvent":
        try:
            seq, tick, kind = obj.pop("seq"), obj.pop("tick"), obj.pop("kind")
        except KeyError as exc:
            raise MalformedTrace(f"event missing field {exc}") from None
        if kind not in KINDS:
            raise MalformedTrace(f"unknown event kind {kind!r} at seq {seq}")
        return cls(seq, tick, kind, obj)


def encode_statements(statements: Iterable[Statement]) -> list[list[Any]]:
    return [[render_key(s.key), to_json_value(s.value)] for s in statements]


def decode_statements(rows: Iterable[list[Any]]) -> list[tuple[EntityKey, Any]]:
    return [(EntityKey.parse(k), from_json_value(v)) for k, v in rows]


def decode_entries(rows: Iterable[list[Any]]) -> list[tuple[EntityKey, Any, int]]:
    return [(EntityKey.parse(k), from_json_value(v), s) for k, v, s in rows]


@dataclass
class Trace:
    header: dict[str, Any]
    events: list[TraceEvent] = field(default_factory=list)

    def emit(self, kind: str, tick: int, **data: Any) -> TraceEvent:
        event = TraceEvent(len(self.events), tick, kind, data)
        self.events.append(event)
        return event

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> Iterator[TraceEvent]:
        wanted = set(kinds)
        return (e for e in self.events if e.kind in wanted)

    # -- header accessors --------------------------------------------------

    def slices(self) -> dict[str, SliceSpec]:
        return {a: SliceSpec.from_dict(a, d) for a, d in self.header.get("slices", {}).items()}

    def ontology(self) -> Ontology:
        if "ontology" not in self.header:
            raise MalformedTrace("header has no ontology")
        return Ontology.from_dict(self.header["ontology"])

    def removals(self) -> list[tuple[int, str]]:
        return [(int(t), a) for t, a in self.header.get("removals", [])]

    @property
    def last_tick(self) -> int:
        return self.events[-1].tick if self.events else 0

    # -- files --------------------------------------------------------------

    def dumps_lines(self) -> Iterator[str]:
        yield json.dumps(self.header, separators=(",", ":"), sort_keys=True)
        dumps = json.JSONEncoder(separators=(",", ":")).encode
        for e in self.events:
            yield dumps(e.to_json())

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.dumps_lines():
                fh.write(line)
                fh.write("\n")

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise MalformedTrace(f"cannot open trace {path}: {exc}") from None
        with fh:
            return cls.parse_lines(fh)

    @classmethod
    def parse_lines(cls, lines: Iterable[str]) -> "Trace":
        it = iter(lines)
        try:
            header = json.loads(next(it))
        except StopIteration:
            raise MalformedTrace("empty trace file") from None
        except json.JSONDecodeError as exc:
            raise MalformedTrace(f"bad header: {exc}") from None
        if not isinstance(header, dict) or header.get("schema") != SCHEMA:
            raise MalformedTrace(f"not a {SCHEMA} trace")
        trace = cls(header)
        for lineno, line in enumerate(it, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedTrace(f"line {lineno}: {exc}") from None
            trace.events.append(TraceEvent.from_json(obj))
        return trace
