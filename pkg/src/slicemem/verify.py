"""Post-hoc trace checkers.

All checkers read a :class:`~slicemem.trace.Trace` and return a
:class:`CheckReport`. They share a :class:`TraceIndex` (commits by seq,
slices, removals) and one replay of every agent's local view, rebuilt from
nothing but Commit and Integrate records. Snapshot events only carry a digest,
so comparing the replayed view's digest with the reported one is how the
checkers see inside an agent.

Conventions the replay relies on: an author applies its own commit locally
at commit time; every other change to a local view is an Integrate of a
commit that was previously delivered to that agent (system commits at setup
need no delivery).
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from . import trace as tr
from .errors import MalformedTrace, MissingSnapshots, ScopeNotCovered
from .memory import DIGEST_MOD, CommittedUpdate, digest_hex
from .ontology import EntityKey, SliceSpec, Statement

# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class CheckReport:
    name: str
    examined: int
    violations: list[tuple[int, str]] = field(default_factory=list)
    metric: str = ""
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    @property
    def score(self) -> str:
        if "bad" in self.details and "total" in self.details:
            return f"{self.details['bad']} / {self.details['total']}"
        return f"{len(self.violations)} / {self.examined}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "checker": self.name,
            "metric": self.metric,
            "examined": self.examined,
            "score": self.score,
            "verdict": self.verdict,
            "violations": [[s, d] for s, d in self.violations],
            "details": self.details,
        }


def summary_table(reports: Iterable[CheckReport]) -> str:
    rows = [("checker", "metric", "score", "verdict")]
    rows += [(r.name, r.metric, r.score, r.verdict) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------


class TraceIndex:
    def __init__(self, trace: tr.Trace):
        self.trace = trace
        header = trace.header
        self.slices: dict[str, SliceSpec] = trace.slices()
        self.system_authors = set(header.get("system_authors", []))
        self.removals = trace.removals()
        self.commits: dict[int, CommittedUpdate] = {}
        self.commit_event: dict[int, int] = {}
        self.order_problems: list[tuple[int, str]] = []
        self.by_seq: dict[int, tr.TraceEvent] = {}
        last = 0
        for e in trace.events:
            self.by_seq[e.seq] = e
            if e.kind != tr.COMMIT:
                continue
            seq = e.data.get("commit_seq")
            if not isinstance(seq, int):
                raise MalformedTrace(f"commit event {e.seq} has no integer commit_seq")
            if seq <= last:
                self.order_problems.append((e.seq, f"commit_seq {seq} not above {last}"))
            elif seq != last + 1:
                self.order_problems.append((e.seq, f"commit_seq jumps from {last} to {seq}"))
            last = max(last, seq)
            author, pid = e.data.get("author", ""), e.data.get("proposal_id", "")
            statements = tuple(
                Statement(k, v, author, pid) for k, v in tr.decode_statements(e.data["statements"])
            )
            self.commits[seq] = CommittedUpdate(seq, e.tick, statements, author, pid)
            self.commit_event[seq] = e.seq
        self._replay: Replay | None = None

    @property
    def final_tick(self) -> int:
        ticks = [e.tick for e in self.trace.events if e.kind == tr.SNAPSHOT]
        return max(ticks) if ticks else 0

    def replay(self) -> "Replay":
        if self._replay is None:
            self._replay = replay_locals(self)
        return self._replay


def index_of(trace: tr.Trace) -> TraceIndex:
    """Build (once) the shared index for a trace. Forged traces must be fresh objects."""
    cached = trace.__dict__.get("_index")
    if cached is None or cached[0] != len(trace.events):
        cached = (len(trace.events), TraceIndex(trace))
        trace.__dict__["_index"] = cached
    return cached[1]


# ---------------------------------------------------------------------------
# Local view replay
# ---------------------------------------------------------------------------


class _Local:
    __slots__ = ("entries", "hashes", "digest", "as_of")

    def __init__(self) -> None:
        self.entries: dict[EntityKey, tuple[Any, int]] = {}
        self.hashes: dict[EntityKey, int] = {}
        self.digest = 0
        self.as_of = 0

    def apply(self, update: CommittedUpdate, readable: frozenset[str], observe=None, agent="", tick=0):
        seq = update.commit_seq
        entries, hashes = self.entries, self.hashes
        for s, h in zip(update.statements, update.hashes):
            key = s.key
            if key.predicate not in readable:
                continue
            cur = entries.get(key)
            if cur is not None and cur[1] > seq:
                continue
            self.digest = (self.digest + h - hashes.get(key, 0)) % DIGEST_MOD
            hashes[key] = h
            entries[key] = (s.value, seq)
            if observe is not None:
                observe(agent, key, s.value, seq, tick)
        if seq > self.as_of:
            self.as_of = seq


@dataclass(frozen=True, slots=True)
class SnapRecord:
    event: int
    tick: int
    reported: str
    as_of_seq: int
    consistent: bool


@dataclass
class Replay:
    snapshots: dict[str, list[SnapRecord]]
    problems: list[tuple[int, str]]
    integrations: int
    # Event seqs where an agent's Integrate could not be replayed cleanly.
    faults: dict[str, list[int]] = field(default_factory=dict)


Observer = Callable[[str, EntityKey, Any, int, int], None]


def replay_locals(
    index: TraceIndex,
    observe: Observer | None = None,
    on_event: Callable[[tr.TraceEvent], None] | None = None,
) -> Replay:
    """Rebuild every agent's local view from the log and compare with its snapshots.

    ``observe(agent, key, value, seq, tick)`` sees every entry a view takes
    on; ``on_event`` sees each raw event before it is replayed.
    """
    slices = index.slices
    views = {a: _Local() for a in slices}
    pending: dict[str, set[int]] = {a: set() for a in slices}
    snaps: dict[str, list[SnapRecord]] = {a: [] for a in slices}
    problems: list[tuple[int, str]] = []
    faults: dict[str, list[int]] = {}
    commits, system = index.commits, index.system_authors
    seen_commits: set[int] = set()
    integrations = 0
    for e in index.trace.events:
        if on_event is not None:
            on_event(e)
        kind, data = e.kind, e.data
        if kind == tr.COMMIT:
            seq = data["commit_seq"]
            seen_commits.add(seq)
            author = data.get("author")
            if author in views:
                update = commits[seq]
                readable = slices[author].readable
                if not readable.isdisjoint(update.predicates):
                    views[author].apply(update, readable, observe, author, e.tick)
        elif kind == tr.DELIVER:
            for a in data.get("agents", ()):
                if a in pending:
                    pending[a].add(data["commit_seq"])
        elif kind == tr.STUTTER:
            a = data.get("agent")
            if a in pending:
                pending[a].discard(data.get("commit_seq"))
        elif kind == tr.INTEGRATE:
            a = data.get("agent")
            if a not in views:
                problems.append((e.seq, f"integrate by unknown agent {a!r}"))
                continue
            readable = slices[a].readable
            for seq in data.get("seqs", ()):
                integrations += 1
                update = commits.get(seq)
                if update is None or seq not in seen_commits:
                    problems.append((e.seq, f"{a} integrated commit {seq} that was never committed before"))
                    faults.setdefault(a, []).append(e.seq)
                    continue
                if readable.isdisjoint(update.predicates):
                    problems.append((e.seq, f"{a} integrated commit {seq} outside its slice"))
                    faults.setdefault(a, []).append(e.seq)
                    continue
                if seq in pending[a]:
                    pending[a].discard(seq)
                elif update.author not in system:
                    problems.append((e.seq, f"{a} integrated commit {seq} without a delivery"))
                    faults.setdefault(a, []).append(e.seq)
                views[a].apply(update, readable, observe, a, e.tick)
        elif kind == tr.SNAPSHOT:
            a = data.get("agent")
            if a not in views:
                problems.append((e.seq, f"snapshot from unknown agent {a!r}"))
                continue
            view = views[a]
            reported = data.get("digest")
            ok = reported == digest_hex(view.digest) and data.get("as_of_seq") == view.as_of
            if not ok:
                problems.append(
                    (e.seq, f"{a} snapshot at tick {e.tick} differs from its integrated updates")
                )
            snaps[a].append(SnapRecord(e.seq, e.tick, reported, data.get("as_of_seq", 0), ok))
    return Replay(snaps, problems, integrations, faults)


# ---------------------------------------------------------------------------
# Coherence
# ---------------------------------------------------------------------------


class RuleBook:
    """Re-evaluates the schema straight from the trace header's plain data."""

    def __init__(self, ontology: Mapping[str, Any]):
        self.predicates: dict[str, dict] = dict(ontology.get("predicates", {}))

    @staticmethod
    def in_domain(spec: Mapping[str, Any], value: Any) -> bool:
        kind = spec.get("domain")
        if kind == "enum":
            return isinstance(value, str) and value in spec["values"]
        if kind == "int":
            return type(value) is int and spec["low"] <= value <= spec["high"]
        if kind == "grid":
            return (
                isinstance(value, (list, tuple))
                and len(value) == 2
                and all(type(c) is int for c in value)
                and 0 <= value[0] < spec["width"]
                and 0 <= value[1] < spec["height"]
            )
        return False

    def problems(self, rows: list[list[Any]]) -> list[str]:
        parsed = []
        for key, value in rows:
            pred, _, subj = key.partition("@")
            parsed.append((pred, subj, list(value) if isinstance(value, tuple) else value))
        out = []
        for pred, subj, value in parsed:
            spec = self.predicates.get(pred)
            if spec is None:
                out.append(f"{pred}@{subj}: undeclared predicate")
                continue
            if not self.in_domain(spec, value):
                out.append(f"{pred}@{subj}: {value!r} outside domain")
            for rule in spec.get("constraints", ()):
                kind = rule.get("kind")
                if kind == "DomainMembership":
                    if not self.in_domain(rule, value):
                        out.append(f"{pred}@{subj}: breaks {rule['id']}")
                elif kind == "RequiredCoPredicate":
                    if "value" in rule and rule["value"] != value:
                        continue
                    co = rule["co_predicate"]
                    if not any(p == co and s == subj for p, s, _ in parsed):
                        out.append(f"{pred}@{subj}: breaks {rule['id']}")
                elif kind == "ForbiddenValuePair":
                    if value != rule["value"]:
                        continue
                    if any(
                        p == rule["other"] and s == subj and v == rule["other_value"]
                        for p, s, v in parsed
                    ):
                        out.append(f"{pred}@{subj}: breaks {rule['id']}")
                else:
                    out.append(f"{pred}: unknown rule kind {kind!r}")
        return out


def check_semantic_coherence(trace: tr.Trace, ont: Mapping[str, Any] | None = None) -> CheckReport:
    """Every commit re-validates, commits are gap-free, rejections leave memory alone."""
    index = index_of(trace)
    if index.order_problems:
        seq, msg = index.order_problems[0]
        raise MalformedTrace(f"event {seq}: {msg}")
    if ont is None:
        ont = trace.header.get("ontology", {"predicates": {}})
    book = RuleBook(ont)
    slices = index.slices
    violations: list[tuple[int, str]] = []
    rejected: set[str] = set()
    for e in trace.events:
        if e.kind == tr.COMMIT:
            data = e.data
            found = book.problems(data["statements"])
            author = data.get("author")
            if author in slices:
                writable = slices[author].writable
                found += [
                    f"{k}: outside {author}'s writable slice"
                    for k, _ in data["statements"]
                    if k.partition("@")[0] not in writable
                ]
            elif author not in index.system_authors:
                found.append(f"unknown author {author!r}")
            if data.get("proposal_id") in rejected:
                found.append(f"proposal {data.get('proposal_id')} was rejected earlier")
            if found:
                violations.append((e.seq, f"commit {data['commit_seq']}: " + "; ".join(found)))
        elif e.kind == tr.REJECT:
            rejected.add(e.data.get("proposal_id"))
            if e.data.get("global_before") != e.data.get("global_after"):
                violations.append((e.seq, f"rejection of {e.data.get('proposal_id')} changed memory"))
    return CheckReport(
        "coherence",
        len(index.commits),
        violations,
        "invalid committed updates",
        {"rejections": len(rejected)},
    )


# ---------------------------------------------------------------------------
# Causal isolation
# ---------------------------------------------------------------------------


def check_causal_isolation(
    trace: tr.Trace, slices: Mapping[str, SliceSpec] | None = None
) -> CheckReport:
    """Deliveries and integrations only within scope; no unexplained local change."""
    index = index_of(trace)
    slices = index.slices if slices is None else slices
    violations: list[tuple[int, str]] = []
    deliveries = 0
    for e in trace.events:
        if e.kind != tr.DELIVER:
            continue
        seq = e.data.get("commit_seq")
        update = index.commits.get(seq)
        for a in e.data.get("agents", ()):
            deliveries += 1
            s = slices.get(a)
            if s is None:
                violations.append((e.seq, f"delivery of {seq} to unknown agent {a!r}"))
            elif update is None:
                violations.append((e.seq, f"delivery of unknown commit {seq}"))
            elif s.readable.isdisjoint(update.predicates):
                violations.append((e.seq, f"commit {seq} delivered to {a}, whose slice does not overlap"))
            elif a == update.author:
                violations.append((e.seq, f"commit {seq} delivered back to its author {a}"))
    replay = index.replay()
    violations.extend(replay.problems)
    violations.sort()
    return CheckReport(
        "isolation",
        replay.integrations,
        violations,
        "updates outside agent scope accepted",
        {"deliveries": deliveries},
    )


# ---------------------------------------------------------------------------
# Stuttering alignment
# ---------------------------------------------------------------------------


def check_stuttering_alignment(trace: tr.Trace, max_lag: int | None = None) -> CheckReport:
    """Each local snapshot must equal the agent's global projection at some recent prefix.

    A projection state is a witness for a snapshot at tick t if it was current
    at some point during ticks [t - max_lag, t]. The last tick is excluded.
    """
    index = index_of(trace)
    if max_lag is None:
        max_lag = int(trace.header.get("max_lag", trace.header.get("flush_ticks", 0)))
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    slices = index.slices
    if not any(e.kind == tr.SNAPSHOT for e in trace.events):
        if slices:
            raise MissingSnapshots("trace has agents but no snapshot events")
        return CheckReport("alignment", 0, [], "agent projection violations", {"bad": 0, "total": 0})
    final = index.final_tick
    groups: dict[frozenset[str], _Group] = {}
    group_of = {}
    for a, s in slices.items():
        group_of[a] = groups.setdefault(s.readable, _Group(s.readable))
    violations: list[tuple[int, str]] = []
    bad: set[str] = set()
    seen: set[str] = set()
    checked = 0
    for e in trace.events:
        if e.kind == tr.COMMIT:
            update = index.commits[e.data["commit_seq"]]
            for g in groups.values():
                g.advance(update, e.tick)
        elif e.kind == tr.SNAPSHOT:
            a = e.data.get("agent")
            g = group_of.get(a)
            if g is None:
                violations.append((e.seq, f"snapshot from unknown agent {a!r}"))
                continue
            seen.add(a)
            if e.tick >= final:
                continue
            checked += 1
            if not g.witness(e.data.get("digest"), e.tick - max_lag):
                bad.add(a)
                violations.append((e.seq, f"{a} at tick {e.tick}: no projection within {max_lag} ticks"))
    return CheckReport(
        "alignment",
        checked,
        violations,
        "agent projection violations",
        {"bad": len(bad), "total": len(seen), "max_lag": max_lag, "final_tick": final},
    )


class _Group:
    """Projected digest of the global store for one readable set, with recent history."""

    def __init__(self, readable: frozenset[str]):
        self.readable = readable
        self.hashes: dict[EntityKey, int] = {}
        self.digest = 0
        self.current = digest_hex(0)
        self.past: deque[tuple[str, int]] = deque()  # (digest, tick it was superseded)
        self.count: Counter[str] = Counter()

    def advance(self, update: CommittedUpdate, tick: int) -> None:
        readable = self.readable
        if readable.isdisjoint(update.predicates):
            return
        d = self.digest
        for s, h in zip(update.statements, update.hashes):
            if s.key.predicate in readable:
                d += h - self.hashes.get(s.key, 0)
                self.hashes[s.key] = h
        self.digest = d % DIGEST_MOD
        self.past.append((self.current, tick))
        self.count[self.current] += 1
        self.current = digest_hex(self.digest)

    def witness(self, digest: str | None, since: int) -> bool:
        past, count = self.past, self.count
        while past and past[0][1] < since:
            old, _ = past.popleft()
            count[old] -= 1
            if not count[old]:
                del count[old]
        return digest == self.current or digest in count


# ---------------------------------------------------------------------------
# Probabilistic reflection
# ---------------------------------------------------------------------------


def check_probabilistic_reflection(trace: tr.Trace) -> CheckReport:
    """Accepted sampled proposals are committed verbatim and show up in the proposer's view.

    "Shows up" means the proposer's next snapshot covers the commit
    (``as_of_seq``) and, if that snapshot disagrees with the replayed view,
    the disagreement did not already exist at the snapshot before.
    """
    index = index_of(trace)
    proposals: dict[str, list] = {}
    commits_by_pid: dict[str, tuple[int, dict]] = {}
    accepted: list[tuple[int, str, str]] = []
    removed_at: dict[str, int] = {}
    for e in trace.events:
        if e.kind == tr.PROPOSE:
            proposals[e.data["proposal_id"]] = e.data["statements"]
        elif e.kind == tr.VALIDATE:
            if e.data.get("probabilistic") and e.data.get("verdict") == "Accept":
                accepted.append((e.seq, e.data["proposal_id"], e.data.get("agent")))
        elif e.kind == tr.COMMIT:
            commits_by_pid[e.data.get("proposal_id")] = (e.seq, e.data)
        elif e.kind == tr.REMOVE:
            removed_at[e.data.get("agent")] = e.seq
    replay = index.replay()
    violations: list[tuple[int, str]] = []
    for vseq, pid, agent in accepted:
        hit = commits_by_pid.get(pid)
        if hit is None or hit[0] < vseq:
            violations.append((vseq, f"accepted proposal {pid} was never committed"))
            continue
        cseq, data = hit
        if data["statements"] != proposals.get(pid):
            violations.append((cseq, f"commit of {pid} differs from the proposal"))
            continue
        snaps = replay.snapshots.get(agent, [])
        nxt = _first_after(snaps, cseq)
        if nxt is None:
            if agent not in removed_at and cseq < _last_snapshot_event(trace):
                violations.append((cseq, f"{agent} never snapshotted after committing {pid}"))
            continue
        prev_ok = nxt > 0 and snaps[nxt - 1].consistent
        rec = snaps[nxt]
        # A bad Integrate in between explains a divergence on its own; that is
        # the isolation checker's finding, not a failure to reflect this commit.
        explained = any(cseq < f < rec.event for f in replay.faults.get(agent, ()))
        if rec.as_of_seq < data["commit_seq"]:
            violations.append((rec.event, f"{agent}'s view does not cover its commit of {pid}"))
        elif not rec.consistent and (prev_ok or nxt == 0) and not explained:
            violations.append((rec.event, f"{agent}'s view diverged right after committing {pid}"))
    return CheckReport(
        "reflection",
        len(accepted),
        violations,
        "mismatched validated probabilistic proposals",
    )


def _first_after(snaps: list[SnapRecord], event_seq: int) -> int | None:
    lo, hi = 0, len(snaps)
    while lo < hi:
        mid = (lo + hi) // 2
        if snaps[mid].event <= event_seq:
            lo = mid + 1
        else:
            hi = mid
    return lo if lo < len(snaps) else None


def _last_snapshot_event(trace: tr.Trace) -> int:
    for e in reversed(trace.events):
        if e.kind == tr.SNAPSHOT:
            return e.seq
    return -1


# ---------------------------------------------------------------------------
# Failure containment
# ---------------------------------------------------------------------------


def _mentions(e: tr.TraceEvent, agent: str) -> bool:
    d = e.data
    if d.get("agent") == agent or d.get("author") == agent:
        return True
    if e.kind in (tr.DELIVER, tr.DROP):
        return agent in d.get("agents", ())
    if e.kind == tr.NOTIFY:
        return agent in d.get("recipients", ())
    return False


def check_failure_containment(
    trace: tr.Trace, removals: Iterable[tuple[int, str]] | None = None
) -> CheckReport:
    """After each removal: dead agents stay silent; everyone else stays coherent and aligned."""
    index = index_of(trace)
    removals = index.removals if removals is None else list(removals)
    if not removals:
        return CheckReport("containment", 0, [], "post-removal coherence violations", {"removals": 0})
    violations: list[tuple[int, str]] = []
    removed_event: dict[str, int] = {}
    for e in trace.events:
        if e.kind == tr.REMOVE:
            removed_event.setdefault(e.data.get("agent"), e.seq)
    for tick, agent in removals:
        if agent not in removed_event:
            violations.append((-1, f"{agent} scheduled for removal at tick {tick} but never removed"))
    dead_since = {a: removed_event[a] for _, a in removals if a in removed_event}
    examined = 0
    for e in trace.events:
        for agent, since in dead_since.items():
            if e.seq > since:
                examined += 1
                if _mentions(e, agent):
                    violations.append((e.seq, f"{e.kind} involving {agent} after its removal"))
    t_f = min(t for t, _ in removals)
    by_seq = index.by_seq

    def late(report: CheckReport) -> list[tuple[int, str]]:
        return [(s, d) for s, d in report.violations if s not in by_seq or by_seq[s].tick >= t_f]

    coherence = check_semantic_coherence(trace)
    isolation = check_causal_isolation(trace)
    alignment = check_stuttering_alignment(trace)
    dead = set(dead_since)
    survivors_bad = [
        (s, d) for s, d in late(alignment) if by_seq[s].data.get("agent") not in dead
    ]
    violations += late(coherence) + late(isolation) + survivors_bad
    violations.sort()
    return CheckReport(
        "containment",
        examined + coherence.examined,
        violations,
        "post-removal coherence violations",
        {"removals": len(removals), "from_tick": t_f},
    )


# ---------------------------------------------------------------------------
# Safety (bad-prefix monitors)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrecedenceProperty:
    """``then`` on a subject is bad unless ``first`` on the same subject was seen at a lower seq."""

    name: str
    first: tuple[str, Any]
    then: tuple[str, Any]

    @property
    def scope(self) -> frozenset[str]:
        return frozenset({self.first[0], self.then[0]})

    def monitor(self) -> "PrecedenceMonitor":
        return PrecedenceMonitor(self)


class PrecedenceMonitor:
    def __init__(self, prop: PrecedenceProperty):
        self.prop = prop
        self.earliest: dict[str, int] = {}
        self.bad: tuple[int, str] | None = None

    def observe(self, key: EntityKey, value: Any, seq: int) -> bool:
        """Feed one observed entry; returns True once a bad prefix has been seen."""
        if self.bad is not None:
            return True
        p = self.prop
        if (key.predicate, value) == p.first:
            self.earliest.setdefault(key.subject, seq)
            self.earliest[key.subject] = min(self.earliest[key.subject], seq)
        elif (key.predicate, value) == p.then:
            first = self.earliest.get(key.subject)
            if first is None or first >= seq:
                self.bad = (seq, f"{p.name}: {key.render()}={value} at seq {seq} without prior {p.first[0]}={p.first[1]}")
        return self.bad is not None


@dataclass(frozen=True)
class SafetyProperty:
    """Conjunction of precedence rules over a predicate scope."""

    name: str
    rules: tuple[PrecedenceProperty, ...]

    @property
    def scope(self) -> frozenset[str]:
        return frozenset().union(*(r.scope for r in self.rules))

    def monitor(self) -> "ConjunctionMonitor":
        return ConjunctionMonitor([r.monitor() for r in self.rules])


class ConjunctionMonitor:
    def __init__(self, parts: list[PrecedenceMonitor]):
        self.parts = parts

    def observe(self, key: EntityKey, value: Any, seq: int) -> bool:
        hit = False
        for m in self.parts:
            hit = m.observe(key, value, seq) or hit
        return hit

    @property
    def bad(self) -> tuple[int, str] | None:
        found = [m.bad for m in self.parts if m.bad is not None]
        return min(found) if found else None


SAR_CAUSALITY = SafetyProperty(
    "sar-causality",
    (
        PrecedenceProperty("relay-after-detection", ("Survivor", "detected"), ("Relay", "active")),
        PrecedenceProperty("rescue-after-relay", ("Relay", "active"), ("Rescue", "complete")),
    ),
)


def check_safety_property(
    trace: tr.Trace,
    prop: SafetyProperty | PrecedenceProperty = SAR_CAUSALITY,
    slices: Mapping[str, SliceSpec] | None = None,
) -> CheckReport:
    """Run the bad-prefix monitor on every covering agent's view and on the global commit order."""
    index = index_of(trace)
    slices = index.slices if slices is None else slices
    scope = prop.scope
    covering = sorted(a for a, s in slices.items() if scope <= s.readable)
    if not covering:
        raise ScopeNotCovered(f"no slice reads all of {sorted(scope)}")
    glob = prop.monitor()
    for seq in sorted(index.commits):
        update = index.commits[seq]
        for s in update.statements:
            if s.key.predicate in scope:
                glob.observe(s.key, s.value, seq)
    local = {a: prop.monitor() for a in covering}

    def observe(agent: str, key: EntityKey, value: Any, seq: int, tick: int) -> None:
        m = local.get(agent)
        if m is not None and key.predicate in scope:
            m.observe(key, value, seq)

    replay_locals(index, observe)
    violations: list[tuple[int, str]] = []
    g_bad = glob.bad
    if g_bad is not None:
        violations.append((index.commit_event.get(g_bad[0], -1), f"global: {g_bad[1]}"))
    local_fail = []
    for a in covering:
        b = local[a].bad
        if b is not None:
            local_fail.append(a)
            violations.append((index.commit_event.get(b[0], -1), f"{a}: {b[1]}"))
    global_pass = g_bad is None
    all_local_pass = not local_fail
    return CheckReport(
        "safety",
        len(covering) + 1,
        violations,
        "bad prefixes (local agents + global)",
        {
            "property": prop.name,
            "global_pass": global_pass,
            "local_failures": local_fail,
            "agents_checked": len(covering),
            "agents_skipped": len(slices) - len(covering),
            "implication_holds": global_pass or not all_local_pass,
        },
    )


# ---------------------------------------------------------------------------

CHECKERS: dict[str, Callable[..., CheckReport]] = {
    "coherence": check_semantic_coherence,
    "isolation": check_causal_isolation,
    "alignment": check_stuttering_alignment,
    "reflection": check_probabilistic_reflection,
    "containment": check_failure_containment,
    "safety": check_safety_property,
}
CORE_CHECKERS = ("coherence", "isolation", "alignment", "reflection", "containment")


def run_checkers(trace: tr.Trace, names: Iterable[str] = CORE_CHECKERS, max_lag: int | None = None) -> list[CheckReport]:
    out = []
    for name in names:
        if name not in CHECKERS:
            raise KeyError(name)
        if name == "alignment":
            out.append(check_stuttering_alignment(trace, max_lag))
        else:
            out.append(CHECKERS[name](trace))
    return out
