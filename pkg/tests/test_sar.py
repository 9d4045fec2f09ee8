import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicemem import trace as tr
from slicemem.errors import ConfigInvalid, ScheduleInvalid
from slicemem.memory import MemoryView
from slicemem.ontology import SLICE, EntityKey, UpdateProposal, validate_proposal
from slicemem.sar import (
    ACTIVE,
    COMPLETE,
    DETECTED,
    IN_PROGRESS,
    PREDICATES,
    READABLE,
    WITHDRAWN,
    WRITABLE,
    RelayState,
    RescueState,
    ScenarioConfig,
    SearchState,
    auction_winner,
    bid_key,
    bid_score,
    build_simulation,
    build_slices,
    init_world,
    manhattan,
    preset_path,
    reference_config,
    relay_policy,
    rescue_policy,
    sar_ontology,
    search_policy,
    step_toward,
    zone_label,
    zone_xy,
)
from slicemem.simulation import Injection


class Fixed(random.Random):
    """RNG whose random() always returns the same number."""

    def __init__(self, value):
        super().__init__(0)
        self.value = value

    def random(self):
        return self.value


def world_for(**kw):
    cfg = ScenarioConfig(**{"n_search": 2, "n_relay": 2, "n_rescue": 3, "width": 5, "height": 5, **kw})
    return init_world(cfg)[0]


def view_of(*entries):
    v = MemoryView()
    for k, val, seq in entries:
        v.put(k, val, seq)
    return v


# -- world ------------------------------------------------------------------


def test_one_zone_one_searcher():
    world, initial = init_world(ScenarioConfig(n_search=1, n_relay=0, n_rescue=0, width=1, height=1))
    assert world.search_assignment == {"search_000": ["z0_0"]}
    assert (EntityKey("ZoneCoord", "z0_0"), (0, 0)) in initial


def test_world_is_seeded():
    a = init_world(ScenarioConfig(run_seed=5))
    b = init_world(ScenarioConfig(run_seed=5))
    c = init_world(ScenarioConfig(run_seed=6))
    assert a[0].search_assignment == b[0].search_assignment and a[1] == b[1]
    assert a[0].positions == b[0].positions
    assert a[0].search_assignment != c[0].search_assignment


def test_assignment_partitions_grid():
    world = world_for(n_search=7, width=6, height=4)
    zones = [z for zs in world.search_assignment.values() for z in zs]
    assert sorted(zones) == sorted(world.zones) and len(zones) == 24


def test_reference_preset_counts():
    cfg = reference_config()
    assert (cfg.n_search, cfg.n_relay, cfg.n_rescue) == (50, 100, 100)
    sim = build_simulation(cfg)
    roles = [a.role for a in sim.agents.values()]
    assert len(roles) == 250
    assert roles.count("search") == 50 and roles.count("relay") == 100 and roles.count("rescue") == 100


def test_geometry_helpers():
    assert zone_xy(zone_label(3, 7)) == (3, 7)
    assert manhattan((0, 0), (2, 3)) == 5
    assert step_toward((0, 0), (2, 3)) == (1, 0)
    assert step_toward((2, 0), (2, 3)) == (2, 1)
    assert step_toward((2, 3), (2, 3)) == (2, 3)


# -- search -----------------------------------------------------------------


def test_forced_detection():
    world = world_for()
    agent = "search_000"
    st_ = SearchState(agent, world.search_assignment[agent], world.positions[agent], world)
    out = dict(search_policy(st_, MemoryView(), Fixed(0.0)))
    zone = world.search_assignment[agent][0]
    assert out[EntityKey("Survivor", zone)] == DETECTED
    assert out[EntityKey("ZoneStatus", zone)] == "searched"


def test_detection_rate():
    world = world_for(n_search=1)
    st_ = SearchState("search_000", world.search_assignment["search_000"], (0, 0), world, 0.3)
    rng = random.Random(99)
    n = 10_000
    hits = 0
    for _ in range(n):
        out = search_policy(st_, MemoryView(), rng)
        hits += any(v == DETECTED for k, v in out if k.predicate == "Survivor")
    assert abs(hits / n - 0.3) <= 3 * math.sqrt(0.21 / n)


def test_exhausted_search_is_silent():
    world = world_for()
    zones = world.search_assignment["search_000"]
    st_ = SearchState("search_000", zones, (0, 0), world, max_passes=1)
    rng = random.Random(0)
    for _ in zones:
        assert search_policy(st_, MemoryView(), rng)
    assert st_.exhausted
    assert all(search_policy(st_, MemoryView(), rng) == [] for _ in range(5))


def test_search_waits_while_survivor_reported():
    world = world_for()
    zone = world.search_assignment["search_000"][0]
    xy = zone_xy(zone)
    view = view_of((EntityKey("Survivor", zone), DETECTED, 3), (EntityKey("ZoneStatus", zone), "searched", 3))
    st_ = SearchState("search_000", [zone], xy, world)
    assert search_policy(st_, view, Fixed(0.0)) == []


# -- relay ------------------------------------------------------------------


def test_relay_idle_without_detections():
    world = world_for()
    st_ = RelayState("relay_000", (0, 0), world)
    assert relay_policy(st_, MemoryView(), random.Random(0)) == []
    assert st_.pos == (0, 0)


def test_relay_at_target_activates():
    world = world_for()
    view = view_of((EntityKey("Survivor", "z2_2"), DETECTED, 4))
    st_ = RelayState("relay_000", (2, 2), world)
    assert relay_policy(st_, view, random.Random(0)) == [(EntityKey("Relay", "z2_2"), ACTIVE)]


def test_relay_walks_then_activates():
    world = world_for()
    view = view_of((EntityKey("Survivor", "z2_2"), DETECTED, 4))
    st_ = RelayState("relay_000", (0, 2), world)
    first = relay_policy(st_, view, random.Random(0))
    assert first == [(EntityKey("AgentPos", "relay_000"), (1, 2))]
    second = relay_policy(st_, view, random.Random(0))
    assert second[-1] == (EntityKey("Relay", "z2_2"), ACTIVE)


def test_relay_tie_break_reaches_both():
    world = world_for()
    view = view_of((EntityKey("Survivor", "z0_2"), DETECTED, 4), (EntityKey("Survivor", "z4_2"), DETECTED, 5))
    targets = set()
    for seed in range(40):
        st_ = RelayState("relay_000", (2, 2), world)
        relay_policy(st_, view, random.Random(seed))
        targets.add(st_.target)
    assert targets == {"z0_2", "z4_2"}


# -- rescue -----------------------------------------------------------------


def _episode_view(zone, bids, relay=True):
    entries = [(EntityKey("Survivor", zone), DETECTED, 10)]
    if relay:
        entries.append((EntityKey("Relay", zone), ACTIVE, 11))
    entries += [(bid_key(zone, a), score, 12 + i) for i, (a, score) in enumerate(bids)]
    return view_of(*entries)


def test_no_rescue_without_relay():
    world = world_for()
    view = _episode_view("z1_1", [("rescue_000", 0)], relay=False)
    st_ = RescueState("rescue_000", (1, 1), world)
    out = rescue_policy(st_, view, random.Random(0))
    assert all(k.predicate != "Rescue" for k, _ in out)


def test_single_bidder_rescues():
    world = world_for()
    view = _episode_view("z1_1", [("rescue_000", -1000)])
    st_ = RescueState("rescue_000", (1, 2), world)
    out = rescue_policy(st_, view, random.Random(0))
    assert (EntityKey("Rescue", "z1_1"), IN_PROGRESS) in out
    assert st_.target == "z1_1"


def test_nearest_bidder_wins():
    world = world_for()
    rng = random.Random(0)
    scores = [(f"rescue_00{i}", bid_score(d, rng, 0)) for i, d in enumerate([2, 1, 3])]
    # brute-force argmax over the bid tuples
    best = max(scores, key=lambda b: b[1])[0]
    assert best == "rescue_001"
    assert auction_winner([(s, a) for a, s in scores]) == best
    view = _episode_view("z1_1", scores)
    for agent, _ in scores:
        st_ = RescueState(agent, (1, 1), world)
        out = rescue_policy(st_, view, random.Random(0))
        started = (EntityKey("Rescue", "z1_1"), IN_PROGRESS) in out
        assert started == (agent == best)


def test_auction_ties_and_withdrawn():
    assert auction_winner([]) is None
    assert auction_winner([(5, "rescue_002"), (5, "rescue_001")]) == "rescue_001"
    world = world_for()
    view = _episode_view("z1_1", [("rescue_000", WITHDRAWN), ("rescue_001", -3000)])
    st_ = RescueState("rescue_001", (4, 4), world)
    assert (EntityKey("Rescue", "z1_1"), IN_PROGRESS) in rescue_policy(st_, view, random.Random(0))


def test_rescue_service_completes():
    world = world_for()
    view = _episode_view("z1_1", [("rescue_000", 0)])
    st_ = RescueState("rescue_000", (1, 1), world, service=(2, 2))
    rng = random.Random(0)
    rescue_policy(st_, view, rng)
    assert rescue_policy(st_, view, rng) == []
    done = rescue_policy(st_, view, rng)
    assert (EntityKey("Rescue", "z1_1"), COMPLETE) in done
    assert (EntityKey("ZoneStatus", "z1_1"), "unsearched") in done


def test_bid_scores_fit_schema():
    rng = random.Random(1)
    for d in range(0, 30):
        s = bid_score(d, rng, 100)
        assert WITHDRAWN < s <= 99


# -- injections and config --------------------------------------------------


def test_injections_rejected():
    ont = sar_ontology(10, 10)
    search = build_slices(ScenarioConfig(n_search=1, n_relay=0, n_rescue=0))["search_000"]
    ghost = UpdateProposal.of("search_000", "x", [(EntityKey("Survivor", "z0_0"), "ghost"), (EntityKey("ZoneStatus", "z0_0"), "searched")])
    assert not validate_proposal(ont, search, ghost).accepted
    relay = UpdateProposal.of("search_000", "y", [(EntityKey("Relay", "z4_4"), ACTIVE)])
    assert SLICE in validate_proposal(ont, search, relay).kinds()


def test_valid_injection_refused():
    cfg = ScenarioConfig(n_search=1, n_relay=0, n_rescue=0, ticks=5, injections=[
        Injection(2, "search_000", ((EntityKey("AgentPos", "search_000"), (0, 0)),))
    ])
    with pytest.raises(ScheduleInvalid):
        build_simulation(cfg)


@pytest.mark.parametrize(
    "field,value",
    [("comm_prob", 1.5), ("comm_prob", 0.0), ("fan_out", -0.1), ("width", 0), ("n_relay", -1), ("service_min", 9)],
)
def test_config_field_errors(field, value):
    with pytest.raises(ConfigInvalid) as err:
        ScenarioConfig(**{field: value}).validate()
    assert err.value.field == field


def test_config_unknown_key_and_bad_schedule():
    with pytest.raises(ConfigInvalid) as err:
        ScenarioConfig.from_dict({"colour": "blue"})
    assert err.value.field == "colour"
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(removals=[(5, "nobody_001")]).validate()
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(ticks=10, removals=[(50, "relay_000")]).validate()


def test_config_roundtrip(tmp_path):
    cfg = reference_config()
    assert ScenarioConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    assert ScenarioConfig.load(preset_path("reference")).to_dict() == cfg.to_dict()
    bad = tmp_path / "bad.toml"
    bad.write_text("ticks = [")
    with pytest.raises(ConfigInvalid):
        ScenarioConfig.load(bad)


def test_role_slices():
    for role in WRITABLE:
        assert WRITABLE[role] <= READABLE[role]


@given(st.floats(0.0, 1.0), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_fan_out_slices_cover_ontology(fan_out, seed):
    cfg = ScenarioConfig(run_seed=seed, fan_out=fan_out, n_search=2, n_relay=3, n_rescue=3)
    slices = build_slices(cfg)
    assert frozenset().union(*(s.readable for s in slices.values())) == frozenset(PREDICATES)
    for a, s in slices.items():
        assert s.writable <= s.readable


# -- run-level properties ---------------------------------------------------


def test_policies_stay_in_writable_slice(small_trace):
    slices = small_trace.slices()
    for e in small_trace.of_kind(tr.PROPOSE):
        if e.data["adversarial"]:
            continue
        writable = slices[e.data["agent"]].writable
        assert all(k.partition("@")[0] in writable for k, _ in e.data["statements"])


def test_causality_chain_in_commit_order(small_trace):
    """Brute-force scan: complete needs an earlier active relay, which needs an earlier detection."""
    seen: dict[tuple[str, str], int] = {}
    checked = 0
    for e in small_trace.of_kind(tr.COMMIT):
        seq = e.data["commit_seq"]
        for key, value in e.data["statements"]:
            pred, _, zone = key.partition("@")
            if pred == "Relay" and value == ACTIVE:
                assert ("Survivor", zone) in seen
            if pred == "Rescue" and value == COMPLETE:
                assert ("Relay", zone) in seen
                checked += 1
            if (pred, value) in (("Survivor", DETECTED), ("Relay", ACTIVE)):
                seen.setdefault((pred, zone), seq)
    assert checked > 0


def test_small_run_is_deterministic(small_trace):
    from slicemem.fixtures import clean_trace

    again = clean_trace()
    assert list(again.dumps_lines()) == list(small_trace.dumps_lines())
