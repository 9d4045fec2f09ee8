"""Agent lifecycle: sync (drain, retrieve, revalidate, integrate), then propose.

Validators may be imperfect: ``epsilon`` is the false-accept probability on
invalid input and ``xi`` the false-reject probability on valid input. Both
default to zero, in which case no random numbers are drawn at all.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

from . import trace as tr
from .errors import DeadAgent, UnknownAgent
from .memory import STUTTER, CommittedUpdate, MemoryView, commit, digest_hex, integrate
from .ontology import (
    Approved,
    EntityKey,
    Ontology,
    SliceSpec,
    UpdateProposal,
    ValidationResult,
    slice_overlaps,
    validate_proposal,
    validate_scoped,
)
from .transport import RefreshNotification, retrieve

ACCEPT = "Accept"
REJECT = "Reject"
VALID = "Valid"
INVALID = "Invalid"


@dataclass(frozen=True)
class ValidatorParams:
    epsilon: float = 0.0
    xi: float = 0.0

    def __post_init__(self) -> None:
        for name in ("epsilon", "xi"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v}")

    @property
    def exact(self) -> bool:
        return self.epsilon == 0.0 and self.xi == 0.0


@dataclass(frozen=True)
class ValidationDecision:
    verdict: str
    ground_truth: str
    flipped: bool
    result: ValidationResult

    @property
    def accepted(self) -> bool:
        return self.verdict == ACCEPT


def noisy_verdict(params: ValidatorParams, valid: bool, rng: random.Random) -> tuple[bool, bool]:
    """(accepted, flipped) for a proposal whose true validity is ``valid``."""
    if valid:
        if params.xi and rng.random() < params.xi:
            return False, True
        return True, False
    if params.epsilon and rng.random() < params.epsilon:
        return True, True
    return False, False


def _decision(params: ValidatorParams, result: ValidationResult, rng: random.Random) -> ValidationDecision:
    accepted, flipped = noisy_verdict(params, result.accepted, rng)
    return ValidationDecision(
        ACCEPT if accepted else REJECT,
        VALID if result.accepted else INVALID,
        flipped,
        result,
    )


def probabilistic_validate(
    params: ValidatorParams,
    proposal: UpdateProposal,
    ont: Ontology,
    slice: SliceSpec,
    rng: random.Random,
) -> ValidationDecision:
    return _decision(params, validate_proposal(ont, slice, proposal), rng)


@dataclass(frozen=True)
class CommitDecision:
    committed: bool
    decisions: tuple[ValidationDecision, ...]
    token: Approved | None = None


def multi_validator_commit(
    proposal: UpdateProposal,
    validators: Sequence[tuple[ValidatorParams, random.Random]],
    ont: Ontology,
    slices: Sequence[SliceSpec],
) -> CommitDecision:
    """Commit only if every one of the r validators accepts.

    Validator 0 is the proposer and checks the full proposal against its
    writable set; the others revalidate the statements their slices can read.
    Evaluation stops at the first rejection, since later verdicts cannot
    change the outcome.
    """
    if not validators:
        raise ValueError("need at least one validator")
    if len(slices) != len(validators):
        raise ValueError("one slice per validator")
    decisions = []
    for i, ((params, rng), s) in enumerate(zip(validators, slices)):
        if i == 0:
            result = validate_proposal(ont, s, proposal)
        else:
            result = validate_scoped(ont, s, proposal.statements)
        d = _decision(params, result, rng)
        decisions.append(d)
        if not d.accepted:
            return CommitDecision(False, tuple(decisions))
    truth = decisions[0].ground_truth == VALID
    return CommitDecision(True, tuple(decisions), Approved(proposal, truth))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

Pairs = list[tuple[EntityKey, Any]]


class UpdateGenerator(Protocol):
    """Produces candidate statements from the agent's current view.

    An empty list is the empty proposal. ``probabilistic`` marks generators
    whose output is sampled; their accepted proposals are what the
    reflection checker audits.
    """

    probabilistic: bool

    def propose(self, view: MemoryView, rng: random.Random, tick: int) -> Pairs: ...


class IdleGenerator:
    probabilistic = False

    def propose(self, view: MemoryView, rng: random.Random, tick: int) -> Pairs:
        return []


class ScriptedGenerator:
    """Replays a fixed ``{tick: pairs}`` schedule. Handy in tests."""

    def __init__(self, script: dict[int, Pairs], probabilistic: bool = False):
        self.script = script
        self.probabilistic = probabilistic

    def propose(self, view: MemoryView, rng: random.Random, tick: int) -> Pairs:
        return list(self.script.get(tick, []))


@dataclass
class AgentState:
    id: str
    slice: SliceSpec
    generator: UpdateGenerator = field(default_factory=IdleGenerator)
    validator: ValidatorParams = field(default_factory=ValidatorParams)
    rng: random.Random = field(default_factory=random.Random)
    validator_rng: random.Random = field(default_factory=random.Random)
    local: MemoryView = field(default_factory=MemoryView)
    inbox: deque = field(default_factory=deque)
    alive: bool = True
    role: str = ""
    override: Pairs | None = None


class Environment(Protocol):
    """What a step needs from the scheduler that owns it."""

    ontology: Ontology
    store: Any
    trace: tr.Trace

    def proposals_open(self, tick: int) -> bool: ...

    def scoped_valid(self, update: CommittedUpdate, slice: SliceSpec) -> bool: ...

    def publish(self, update: CommittedUpdate, tick: int) -> None: ...


def step(agent: AgentState, env: Environment, tick: int) -> list[tr.TraceEvent]:
    """One lifecycle pass; returns the events it appended to ``env.trace``."""
    if not agent.alive:
        raise DeadAgent(f"{agent.id} was removed and cannot step")
    trace = env.trace
    start = len(trace.events)
    _sync(agent, env, tick)
    emit_snapshot(agent, trace, tick)
    if env.proposals_open(tick):
        _propose(agent, env, tick)
    return trace.events[start:]


def _sync(agent: AgentState, env: Environment, tick: int) -> None:
    inbox, trace, local, slice = agent.inbox, env.trace, agent.local, agent.slice
    retrieved: list[int] = []
    integrated: list[int] = []
    stutters: list[tuple[int, bool]] = []
    exact = agent.validator.exact

    def revalidate(update: CommittedUpdate) -> bool:
        valid = env.scoped_valid(update, slice)
        if exact:
            if not valid:
                stutters.append((update.commit_seq, False))
            return valid
        accepted, flipped = noisy_verdict(agent.validator, valid, agent.validator_rng)
        if not accepted:
            stutters.append((update.commit_seq, flipped))
        return accepted

    readable = slice.readable
    while inbox and inbox[0][0] <= tick:
        _, note, preds = inbox.popleft()
        if readable.isdisjoint(preds):
            continue
        update = retrieve(env.store, note.commit_seq)
        retrieved.append(update.commit_seq)
        outcome = integrate(local, update, slice, revalidate)
        if outcome.kind not in (STUTTER, "noop"):
            integrated.append(update.commit_seq)
    if retrieved:
        trace.emit(tr.RETRIEVE, tick, agent=agent.id, seqs=retrieved)
    for seq, flipped in stutters:
        trace.emit(tr.STUTTER, tick, agent=agent.id, commit_seq=seq, flipped=flipped)
    if integrated:
        trace.emit(tr.INTEGRATE, tick, agent=agent.id, seqs=integrated)


def emit_snapshot(agent: AgentState, trace: tr.Trace, tick: int) -> tr.TraceEvent:
    """Tick marker carrying the order-independent digest of the local view."""
    local = agent.local
    return trace.emit(
        tr.SNAPSHOT,
        tick,
        agent=agent.id,
        as_of_seq=local.as_of_seq,
        size=len(local.entries),
        digest=digest_hex(local.digest),
    )


def _propose(agent: AgentState, env: Environment, tick: int) -> None:
    adversarial = agent.override is not None
    if adversarial:
        pairs, agent.override = agent.override, None
    else:
        pairs = agent.generator.propose(agent.local, agent.rng, tick)
    if not pairs:
        return
    trace, store = env.trace, env.store
    proposal = UpdateProposal.of(
        agent.id,
        f"{agent.id}:{tick}",
        pairs,
        probabilistic=agent.generator.probabilistic and not adversarial,
        adversarial=adversarial,
    )
    trace.emit(
        tr.PROPOSE,
        tick,
        agent=agent.id,
        proposal_id=proposal.proposal_id,
        statements=tr.encode_statements(proposal.statements),
        probabilistic=proposal.probabilistic,
        adversarial=adversarial,
    )
    before = store.current.digest
    decision = probabilistic_validate(
        agent.validator, proposal, env.ontology, agent.slice, agent.validator_rng
    )
    trace.emit(
        tr.VALIDATE,
        tick,
        agent=agent.id,
        proposal_id=proposal.proposal_id,
        verdict=decision.verdict,
        ground_truth=decision.ground_truth,
        flipped=decision.flipped,
        probabilistic=proposal.probabilistic,
    )
    if not decision.accepted:
        # ξ-rejections and true rejections alike discard the proposal; no retry.
        trace.emit(
            tr.REJECT,
            tick,
            agent=agent.id,
            proposal_id=proposal.proposal_id,
            errors=[e.describe() for e in decision.result.errors],
            flipped=decision.flipped,
            global_before=digest_hex(before),
            global_after=digest_hex(store.current.digest),
        )
        return
    update = commit(store, Approved(proposal, decision.ground_truth == VALID), tick)
    if slice_overlaps(agent.slice, update.keys):
        integrate(agent.local, update, agent.slice)
    env.publish(update, tick)


def remove_agent(scheduler: Any, agent_id: str, tick: int) -> tr.TraceEvent:
    """Fail-stop an agent: frozen state, inbox discarded, no more routing or steps."""
    agent = scheduler.agents.get(agent_id)
    if agent is None:
        raise UnknownAgent(agent_id)
    if not agent.alive:
        raise ValueError(f"{agent_id} already removed")
    agent.alive = False
    discarded = len(agent.inbox)
    agent.inbox.clear()
    scheduler.router.remove(agent_id)
    return scheduler.trace.emit(tr.REMOVE, tick, agent=agent_id, discarded=discarded)


def pending_notifications(agent: AgentState) -> list[RefreshNotification]:
    return [n for _, n, _ in agent.inbox]
