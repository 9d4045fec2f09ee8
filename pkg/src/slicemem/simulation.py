"""Tick-barrier scheduler: owns the store, the router, the transport stream and the trace.

Within a tick every live agent steps once, in agent-id order; the tick only
advances after all of them have finished. Notifications sent during tick t
become visible to recipients at tick t + 1.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from . import trace as tr
from .agent import AgentState, emit_snapshot, remove_agent, step
from .errors import ScheduleInvalid, UnknownAgent
from .memory import CommittedUpdate, GlobalStore, commit, integrate
from .ontology import (
    Approved,
    EntityKey,
    Ontology,
    SliceSpec,
    UpdateProposal,
    render_key,
    to_json_value,
    validate_proposal,
    validate_scoped,
)
from .transport import RefreshNotification, Router, deliver

SYSTEM_AUTHOR = "env"


def substream(run_seed: int, *names: object) -> random.Random:
    """Independent, reproducible RNG for one named purpose."""
    label = "/".join([str(run_seed), *map(str, names)])
    seed = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
    return random.Random(seed)


@dataclass(frozen=True)
class Injection:
    """A malformed proposal that replaces one agent's generator output for one tick."""

    tick: int
    agent: str
    statements: tuple[tuple[EntityKey, Any], ...]

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "agent": self.agent,
            "statements": [[k.render(), to_json_value(v)] for k, v in self.statements],
        }


class Simulation:
    def __init__(
        self,
        ontology: Ontology,
        agents: Sequence[AgentState],
        *,
        drop_prob: float = 0.0,
        transport_rng: random.Random | None = None,
        ticks: int = 0,
        flush_ticks: int = 0,
        removals: Iterable[tuple[int, str]] = (),
        injections: Iterable[Injection] = (),
        header: dict[str, Any] | None = None,
    ):
        if not 0.0 <= drop_prob < 1.0:
            raise ValueError(f"drop_prob must be in [0, 1), got {drop_prob}")
        self.ontology = ontology
        self.agents: dict[str, AgentState] = {}
        for a in agents:
            if a.id in self.agents:
                raise ValueError(f"duplicate agent id {a.id}")
            if a.slice.agent != a.id:
                raise ValueError(f"agent {a.id} carries the slice of {a.slice.agent}")
            ontology.check_slice(a.slice)
            self.agents[a.id] = a
        self.order = sorted(self.agents)
        self.drop_prob = drop_prob
        self.transport_rng = transport_rng or random.Random(0)
        self.ticks = ticks
        self.flush_ticks = flush_ticks
        self.removals = sorted(removals)
        self.injections = sorted(injections, key=lambda i: (i.tick, i.agent))
        for _, a in self.removals:
            if a not in self.agents:
                raise UnknownAgent(a)
        for inj in self.injections:
            self._check_injection(inj)
        self.router = Router(a.slice for a in self.agents.values())
        self._valid_cache: dict[tuple[int, frozenset[str]], bool] = {}
        head = {
            "schema": tr.SCHEMA,
            "ontology": ontology.to_dict(),
            "slices": {a.id: a.slice.to_dict() for a in self.agents.values()},
            "roles": {a.id: a.role for a in self.agents.values()},
            "probabilistic": sorted(a.id for a in self.agents.values() if a.generator.probabilistic),
            "system_authors": [SYSTEM_AUTHOR],
            "removals": [[t, a] for t, a in self.removals],
            "injections": [i.to_dict() for i in self.injections],
            "ticks": ticks,
            "flush_ticks": flush_ticks,
            "comm_prob": 1.0 - drop_prob,
        }
        head.update(header or {})
        self.trace = tr.Trace(head)
        self.store = GlobalStore(on_commit=self._on_commit)
        self.tick = 0

    # -- environment interface used by agent.step ---------------------------

    def proposals_open(self, tick: int) -> bool:
        return tick <= self.ticks

    def scoped_valid(self, update: CommittedUpdate, slice: SliceSpec) -> bool:
        key = (update.commit_seq, slice.readable)
        hit = self._valid_cache.get(key)
        if hit is None:
            hit = validate_scoped(self.ontology, slice, update.statements).accepted
            self._valid_cache[key] = hit
        return hit

    def publish(self, update: CommittedUpdate, tick: int) -> None:
        note = RefreshNotification.for_update(update)
        recipients = self.router.route(note)
        self.trace.emit(
            tr.NOTIFY,
            tick,
            commit_seq=update.commit_seq,
            author=update.author,
            entities=sorted(render_key(k) for k in note.entities),
            recipients=recipients,
        )
        if not recipients:
            return
        if self.drop_prob == 0.0:
            # Same outcome deliver() gives at p = 0, without building records.
            delivered, dropped = recipients, []
        else:
            records = deliver(
                recipients, self.drop_prob, self.transport_rng, update.commit_seq, tick
            )
            delivered = [r.recipient for r in records if r.delivered]
            dropped = [r.recipient for r in records if not r.delivered]
        if delivered:
            self.trace.emit(tr.DELIVER, tick, commit_seq=update.commit_seq, agents=delivered)
        if dropped:
            self.trace.emit(tr.DROP, tick, commit_seq=update.commit_seq, agents=dropped)
        item = (tick + 1, note, update.predicates)
        for r in delivered:
            self.agents[r].inbox.append(item)

    def _on_commit(self, update: CommittedUpdate) -> None:
        self.trace.emit(
            tr.COMMIT,
            update.tick,
            commit_seq=update.commit_seq,
            author=update.author,
            proposal_id=update.proposal_id,
            statements=tr.encode_statements(update.statements),
        )

    # -- setup ---------------------------------------------------------------

    def _check_injection(self, inj: Injection) -> None:
        agent = self.agents.get(inj.agent)
        if agent is None:
            raise UnknownAgent(inj.agent)
        probe = UpdateProposal.of(inj.agent, "probe", inj.statements)
        if validate_proposal(self.ontology, agent.slice, probe).accepted:
            raise ScheduleInvalid(
                "injections", f"injection for {inj.agent} at tick {inj.tick} would validate"
            )

    def seed_memory(self, pairs: Sequence[tuple[EntityKey, Any]], tick: int = 0) -> CommittedUpdate:
        """System write at setup: commit, then place into every reading agent's view directly."""
        proposal = UpdateProposal.of(SYSTEM_AUTHOR, f"{SYSTEM_AUTHOR}:{tick}", pairs)
        full = self.ontology.full_slice(SYSTEM_AUTHOR)
        result = validate_proposal(self.ontology, full, proposal)
        if not result.accepted:
            raise ValueError(f"initial memory invalid: {[e.describe() for e in result.errors]}")
        update = commit(self.store, Approved(proposal), tick)
        for aid in self.order:
            agent = self.agents[aid]
            if any(k.predicate in agent.slice.readable for k in update.keys):
                integrate(agent.local, update, agent.slice)
                self.trace.emit(tr.INTEGRATE, tick, agent=aid, seqs=[update.commit_seq])
        return update

    def initial_snapshots(self, tick: int = 0) -> None:
        for aid in self.order:
            emit_snapshot(self.agents[aid], self.trace, tick)

    # -- driving -------------------------------------------------------------

    @property
    def last_tick(self) -> int:
        return self.ticks + self.flush_ticks

    def run_tick(self, tick: int) -> None:
        self.tick = tick
        for t, aid in self.removals:
            if t == tick:
                remove_agent(self, aid, tick)
        for inj in self.injections:
            if inj.tick == tick:
                agent = self.agents[inj.agent]
                if agent.alive:
                    agent.override = list(inj.statements)
        for aid in self.order:
            agent = self.agents[aid]
            if agent.alive:
                step(agent, self, tick)

    def run(self) -> tr.Trace:
        for tick in range(self.tick + 1, self.last_tick + 1):
            self.run_tick(tick)
        return self.trace

    def alive(self) -> list[AgentState]:
        return [self.agents[a] for a in self.order if self.agents[a].alive]
