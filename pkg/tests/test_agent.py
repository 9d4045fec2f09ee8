import math
import random
from collections import defaultdict

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicemem import trace as tr
from slicemem.agent import (
    ACCEPT,
    REJECT,
    AgentState,
    IdleGenerator,
    ScriptedGenerator,
    ValidatorParams,
    multi_validator_commit,
    noisy_verdict,
    pending_notifications,
    probabilistic_validate,
    remove_agent,
    step,
)
from slicemem.errors import DeadAgent, UnknownAgent
from slicemem.fixtures import clean_config
from slicemem.memory import project, snapshot
from slicemem.ontology import EntityKey, EnumDomain, Ontology, SliceSpec, UpdateProposal, validate_proposal
from slicemem.sar import run_scenario
from slicemem.simulation import Simulation

ONT = Ontology(
    {
        "Survivor": EnumDomain(frozenset({"detected", "none"})),
        "Relay": EnumDomain(frozenset({"active", "inactive"})),
    }
)
S = EntityKey("Survivor", "z0")
R = EntityKey("Relay", "z0")
GOOD = UpdateProposal.of("w", "w:1", [(S, "detected")])
BAD = UpdateProposal.of("w", "w:2", [(S, "ghost")])
WRITER = SliceSpec("w", {"Survivor"}, {"Survivor"})


def sim_with(agents, **kw):
    return Simulation(ONT, agents, ticks=kw.pop("ticks", 5), **kw)


def test_params_bounds():
    ValidatorParams(0.0, 0.999)
    for bad in ((1.0, 0.0), (0.0, 1.0), (-0.1, 0.0)):
        with pytest.raises(ValueError):
            ValidatorParams(*bad)


@given(st.sampled_from([GOOD, BAD]), st.integers(0, 2**32))
def test_exact_validator_is_deterministic(p, seed):
    d = probabilistic_validate(ValidatorParams(), p, ONT, WRITER, random.Random(seed))
    assert d.accepted == validate_proposal(ONT, WRITER, p).accepted
    assert not d.flipped


def test_exact_validator_draws_nothing():
    rng = random.Random(3)
    state = rng.getstate()
    probabilistic_validate(ValidatorParams(), BAD, ONT, WRITER, rng)
    assert rng.getstate() == state


def test_false_accept_rate():
    params = ValidatorParams(epsilon=0.02)
    rng = random.Random(20)
    n = 1_000_000
    hits = sum(noisy_verdict(params, False, rng)[0] for _ in range(n))
    assert abs(hits / n - 0.02) <= 3 * math.sqrt(0.02 * 0.98 / n)


def test_false_accept_via_validate():
    params = ValidatorParams(epsilon=0.02)
    rng = random.Random(21)
    n = 100_000
    hits = sum(probabilistic_validate(params, BAD, ONT, WRITER, rng).accepted for _ in range(n))
    assert abs(hits / n - 0.02) <= 3 * math.sqrt(0.02 * 0.98 / n)


def test_false_reject_flags_flip():
    d = probabilistic_validate(ValidatorParams(xi=0.999999), GOOD, ONT, WRITER, random.Random(1))
    assert d.verdict == REJECT and d.flipped and d.ground_truth == "Valid"


def test_single_exact_validator_never_commits_invalid():
    rng = random.Random(0)
    for _ in range(1000):
        assert not multi_validator_commit(BAD, [(ValidatorParams(), rng)], ONT, [WRITER]).committed


def test_multi_validator_stops_at_first_reject():
    rngs = [random.Random(i) for i in range(3)]
    vals = [(ValidatorParams(), r) for r in rngs]
    slices = [WRITER, SliceSpec("v1", {"Survivor"}), SliceSpec("v2", {"Survivor"})]
    out = multi_validator_commit(BAD, vals, ONT, slices)
    assert not out.committed and len(out.decisions) == 1 and out.token is None
    ok = multi_validator_commit(GOOD, vals, ONT, slices)
    assert ok.committed and [d.verdict for d in ok.decisions] == [ACCEPT] * 3
    assert ok.token.ground_truth_valid


def test_multi_validator_argument_checks():
    with pytest.raises(ValueError):
        multi_validator_commit(GOOD, [], ONT, [])
    with pytest.raises(ValueError):
        multi_validator_commit(GOOD, [(ValidatorParams(), random.Random())], ONT, [])


def test_slice_must_belong_to_agent():
    with pytest.raises(ValueError):
        sim_with([AgentState("a", WRITER)])


def test_quiescent_step_emits_only_snapshot():
    a = AgentState("w", WRITER, IdleGenerator())
    sim = sim_with([a])
    events = step(a, sim, 1)
    assert [e.kind for e in events] == [tr.SNAPSHOT]
    assert len(a.local) == 0


def test_one_notification_one_integrate():
    writer = AgentState("w", WRITER, ScriptedGenerator({1: [(S, "detected")]}))
    reader = AgentState("r", SliceSpec("r", {"Survivor"}))
    sim = sim_with([writer, reader])
    sim.run_tick(1)
    assert len(pending_notifications(reader)) == 1
    events = step(reader, sim, 2)
    assert [e.kind for e in events if e.kind == tr.INTEGRATE] == [tr.INTEGRATE]
    assert reader.local.get(S) == sim.store.current.get(S)
    assert reader.local.seq_of(S) == sim.store.current.seq_of(S)


def test_notification_not_visible_same_tick():
    writer = AgentState("a", SliceSpec("a", {"Survivor"}, {"Survivor"}), ScriptedGenerator({1: [(S, "none")]}))
    reader = AgentState("b", SliceSpec("b", {"Survivor"}))
    sim = sim_with([writer, reader])
    sim.run_tick(1)  # "b" steps after "a" in the same tick
    assert len(reader.local) == 0
    sim.run_tick(2)
    assert reader.local.get(S) == "none"


def test_out_of_slice_agent_gets_nothing():
    writer = AgentState("w", WRITER, ScriptedGenerator({1: [(S, "none")]}))
    other = AgentState("x", SliceSpec("x", {"Relay"}))
    sim = sim_with([writer, other])
    sim.run()
    assert not any("x" in e.data.get("agents", ()) for e in sim.trace.of_kind(tr.DELIVER))
    assert len(other.local) == 0


def test_rejected_proposal_changes_nothing():
    a = AgentState("w", WRITER, ScriptedGenerator({1: [(S, "ghost")]}))
    sim = sim_with([a])
    before = snapshot(sim.store.current)
    sim.run_tick(1)
    (rej,) = list(sim.trace.of_kind(tr.REJECT))
    assert rej.data["global_before"] == rej.data["global_after"]
    assert snapshot(sim.store.current) == before


def test_remove_then_step():
    a = AgentState("w", WRITER, IdleGenerator())
    sim = sim_with([a])
    before = snapshot(sim.store.current)
    ev = remove_agent(sim, "w", 1)
    assert ev.kind == tr.REMOVE and ev.data["agent"] == "w"
    assert snapshot(sim.store.current) == before
    with pytest.raises(DeadAgent):
        step(a, sim, 2)
    with pytest.raises(ValueError):
        remove_agent(sim, "w", 2)
    with pytest.raises(UnknownAgent):
        remove_agent(sim, "ghost", 2)


def test_removed_agent_drops_inbox_and_routing():
    writer = AgentState("w", WRITER, ScriptedGenerator({1: [(S, "none")], 3: [(S, "detected")]}))
    reader = AgentState("r", SliceSpec("r", {"Survivor"}))
    sim = sim_with([writer, reader], removals=[(2, "r")])
    sim.run()
    (rem,) = list(sim.trace.of_kind(tr.REMOVE))
    assert rem.data["discarded"] == 1
    after = [e for e in sim.trace.events if e.seq > rem.seq]
    assert not any(e.data.get("agent") == "r" or "r" in e.data.get("agents", ()) for e in after)


# -- run-level invariants on a noisy small scenario ------------------------


@pytest.fixture(scope="module")
def noisy_trace():
    noisy = {r: ValidatorParams(0.1, 0.2) for r in ("search", "relay", "rescue")}
    return run_scenario(clean_config(validators=noisy, comm_prob=0.7)).trace


def test_exact_validators_never_flip(small_trace):
    assert not any(e.data.get("flipped") for e in small_trace.events)


def test_noisy_run_has_flips_and_stutters(noisy_trace):
    assert any(e.data.get("flipped") for e in noisy_trace.of_kind(tr.VALIDATE))
    assert any(True for _ in noisy_trace.of_kind(tr.STUTTER))


def test_integrations_stay_in_slice(noisy_trace):
    slices = noisy_trace.slices()
    keys_of = {
        e.data["commit_seq"]: {k.partition("@")[0] for k, _ in e.data["statements"]}
        for e in noisy_trace.of_kind(tr.COMMIT)
    }
    for e in noisy_trace.of_kind(tr.INTEGRATE):
        for seq in e.data["seqs"]:
            assert keys_of[seq] & slices[e.data["agent"]].readable


def test_stutter_only_ticks_keep_snapshot(noisy_trace):
    snaps = {(e.data["agent"], e.tick): e.data["digest"] for e in noisy_trace.of_kind(tr.SNAPSHOT)}
    integrated = {(e.data["agent"], e.tick) for e in noisy_trace.of_kind(tr.INTEGRATE)}
    committed = {(e.data["author"], e.tick) for e in noisy_trace.of_kind(tr.COMMIT)}
    checked = 0
    for e in noisy_trace.of_kind(tr.STUTTER):
        a, t = e.data["agent"], e.tick
        if (a, t) in integrated or (a, t - 1) in committed or (a, t - 1) not in snaps:
            continue
        assert snaps[(a, t)] == snaps[(a, t - 1)]
        checked += 1
    assert checked > 0


def test_dead_agents_are_silent(small_trace):
    removed = {e.data["agent"]: e.seq for e in small_trace.of_kind(tr.REMOVE)}
    assert len(removed) == 2
    for e in small_trace.events:
        for a, since in removed.items():
            if e.seq > since:
                assert e.data.get("agent") != a
                assert a not in e.data.get("agents", ())


def test_quiescent_flush_converges(small_sim):
    store = small_sim.store
    for a in small_sim.alive():
        assert snapshot(a.local) == snapshot(project(store, a.slice, store.latest_seq))
