"""Small clean run plus one deliberately broken trace per checker.

Every forged trace is a fresh :class:`Trace` object, so cached indexes of
the clean trace never leak into it. Each builder returns the trace together
with the event seq where the planted violation sits.
"""

from __future__ import annotations

from typing import Callable

from . import trace as tr
from .agent import ScriptedGenerator, ValidatorParams
from .memory import DIGEST_MOD, entry_hash
from .ontology import EntityKey
from .sar import COMPLETE, RESCUE, UNSEARCHED, ZONE_STATUS, ScenarioConfig, run_scenario
from .simulation import Injection
from .verify import index_of

# Close enough to 1 that the invalid injection is accepted for any practical seed.
NEAR_CERTAIN = 1.0 - 1e-12
ROGUE = "rescue_000"
ROGUE_ZONE = "z0_0"


def clean_config(**overrides) -> ScenarioConfig:
    """25 agents on a 6x6 grid for 30 ticks, with one removal pair and one bad injection."""
    cfg = ScenarioConfig(
        run_seed=7,
        ticks=30,
        flush_ticks=5,
        n_search=5,
        n_relay=10,
        n_rescue=10,
        width=6,
        height=6,
        removals=[(15, "relay_003"), (15, "rescue_004")],
        injections=[
            Injection(
                10,
                "search_001",
                ((EntityKey("Survivor", "z0_0"), "ghost"), (EntityKey("ZoneStatus", "z0_0"), "searched")),
            )
        ],
    )
    return cfg.with_overrides(**overrides).validate()


def clean_trace(config: ScenarioConfig | None = None) -> tr.Trace:
    return run_scenario(config or clean_config()).trace


def rebuild(header: dict, events: list[tuple[int, str, dict]]) -> tr.Trace:
    """New trace from (tick, kind, data) triples, renumbering event seqs."""
    out = tr.Trace(dict(header))
    for tick, kind, data in events:
        out.emit(kind, tick, **dict(data))
    return out


def _raw(trace: tr.Trace) -> list[tuple[int, str, dict]]:
    return [(e.tick, e.kind, dict(e.data)) for e in trace.events]


# ---------------------------------------------------------------------------


def forged_coherence(config: ScenarioConfig | None = None) -> tuple[tr.Trace, int]:
    """Search validators with epsilon ~ 1 wave the scheduled invalid injection through."""
    cfg = config or clean_config()
    noisy = cfg.with_overrides(validators={**cfg.validators, "search": ValidatorParams(NEAR_CERTAIN)})
    trace = run_scenario(noisy).trace
    bad = [
        e.seq
        for e in trace.of_kind(tr.COMMIT)
        if e.data.get("proposal_id", "").endswith(f":{cfg.injections[0].tick}")
        and e.data.get("author") == cfg.injections[0].agent
    ]
    if not bad:
        raise RuntimeError("the invalid injection was not committed")
    return trace, bad[0]


def forged_isolation(clean: tr.Trace) -> tuple[tr.Trace, int]:
    """Deliver one commit to an agent whose slice does not overlap it."""
    index = index_of(clean)
    events = _raw(clean)
    for pos, e in enumerate(clean.events):
        if e.kind != tr.COMMIT:
            continue
        update = index.commits[e.data["commit_seq"]]
        outsider = next(
            (a for a, s in sorted(index.slices.items())
             if a != update.author and s.readable.isdisjoint(update.predicates)),
            None,
        )
        if outsider is None:
            continue
        events.insert(pos + 1, (e.tick, tr.DELIVER, {"commit_seq": update.commit_seq, "agents": [outsider]}))
        return rebuild(clean.header, events), pos + 1
    raise RuntimeError("every commit overlaps every agent; nothing to forge")


def forged_alignment(clean: tr.Trace) -> tuple[tr.Trace, int]:
    """Add a never-committed entry to one mid-run snapshot's digest."""
    index = index_of(clean)
    final = index.final_tick
    snaps = [e for e in clean.events if e.kind == tr.SNAPSHOT and 0 < e.tick < final]
    target = snaps[len(snaps) // 2]
    ghost = entry_hash(EntityKey("Survivor", "nowhere"), "ghost", 10**9)
    events = _raw(clean)
    tick, kind, data = events[target.seq]
    data["digest"] = f"{(int(data['digest'], 16) + ghost) % DIGEST_MOD:032x}"
    events[target.seq] = (tick, kind, data)
    return rebuild(clean.header, events), target.seq


def forged_reflection(clean: tr.Trace) -> tuple[tr.Trace, int]:
    """Delete the Commit that followed one accepted probabilistic proposal.

    Returns the seq of the Validate event whose commit went missing.
    """
    accepted = [
        e for e in clean.events
        if e.kind == tr.VALIDATE and e.data.get("probabilistic") and e.data.get("verdict") == "Accept"
    ]
    target = accepted[len(accepted) // 2]
    pid = target.data["proposal_id"]
    events = [
        (e.tick, e.kind, dict(e.data))
        for e in clean.events
        if not (e.kind == tr.COMMIT and e.data.get("proposal_id") == pid)
    ]
    return rebuild(clean.header, events), target.seq


def forged_containment(clean: tr.Trace) -> tuple[tr.Trace, int]:
    """Have a removed agent propose one tick after its removal."""
    removal = next(e for e in clean.events if e.kind == tr.REMOVE)
    agent = removal.data["agent"]
    tick = removal.tick + 1
    pos = next(i for i, e in enumerate(clean.events) if e.tick >= tick)
    forged = {
        "agent": agent,
        "proposal_id": f"{agent}:{tick}",
        "statements": [[f"AgentPos@{agent}", [0, 0]]],
        "probabilistic": False,
        "adversarial": False,
    }
    events = _raw(clean)
    events.insert(pos, (tick, tr.PROPOSE, forged))
    return rebuild(clean.header, events), pos


def forged_safety(config: ScenarioConfig | None = None) -> tuple[tr.Trace, int]:
    """A rescuer declares a rescue complete at tick 1, before any relay can exist.

    The proposal is schema-valid, so it commits and propagates; only the
    causality property catches it.
    """
    cfg = config or clean_config()
    rogue = ScriptedGenerator(
        {1: [(EntityKey(RESCUE, ROGUE_ZONE), COMPLETE), (EntityKey(ZONE_STATUS, ROGUE_ZONE), UNSEARCHED)]}
    )
    trace = run_scenario(cfg, generators={ROGUE: rogue}).trace
    seq = next(
        e.seq for e in trace.of_kind(tr.COMMIT) if e.data.get("author") == ROGUE
    )
    return trace, seq


FORGERS: dict[str, Callable[[tr.Trace], tuple[tr.Trace, int]]] = {
    "isolation": forged_isolation,
    "alignment": forged_alignment,
    "reflection": forged_reflection,
    "containment": forged_containment,
}


def forged(name: str, clean: tr.Trace) -> tuple[tr.Trace, int]:
    """Forged fixture for checker ``name``; ``clean`` is used where the forgery edits a trace."""
    if name == "coherence":
        return forged_coherence()
    if name == "safety":
        return forged_safety()
    return FORGERS[name](clean)
