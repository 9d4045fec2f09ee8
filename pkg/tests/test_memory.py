import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicemem.errors import SeqOutOfRange, UnvalidatedUpdate
from slicemem.memory import (
    APPLIED,
    NOOP,
    STUTTER,
    CommittedUpdate,
    GlobalStore,
    MemoryView,
    canonical_entries,
    commit,
    entry_hash,
    integrate,
    parse_snapshot,
    project,
    snapshot,
    view_from_entries,
)
from slicemem.ontology import Approved, EntityKey, SliceSpec, Statement, UpdateProposal

S1 = EntityKey("Survivor", "z1")
R2 = EntityKey("Relay", "z2")
ALL = SliceSpec("all", {"Survivor", "Relay", "Bid"}, {"Survivor", "Relay", "Bid"})


def put(store, *pairs, tick=0, author="a"):
    p = UpdateProposal.of(author, f"{author}:{store.latest_seq + 1}", pairs)
    return commit(store, Approved(p), tick)


def update(seq, *pairs, author="a"):
    return CommittedUpdate(seq, 0, tuple(Statement(k, v, author) for k, v in pairs), author)


def test_first_commit_is_seq_one():
    store = GlobalStore()
    assert put(store, (S1, "detected")).commit_seq == 1
    assert store.current.as_of_seq == 1


def test_last_writer_wins():
    store = GlobalStore()
    put(store, (R2, "active"))
    put(store, (R2, "inactive"))
    assert store.current.get(R2) == "inactive"
    assert store.current.seq_of(R2) == 2


def test_commit_requires_token():
    p = UpdateProposal.of("a", "a:1", [(S1, "detected")])
    with pytest.raises(UnvalidatedUpdate):
        commit(GlobalStore(), p, 0)


def test_on_commit_hook():
    seen = []
    store = GlobalStore(on_commit=seen.append)
    u = put(store, (S1, "none"))
    assert seen == [u]


def test_project_empty_store():
    assert len(project(GlobalStore(), ALL, 0)) == 0


def test_project_identity_and_filter():
    store = GlobalStore()
    put(store, (S1, "detected"))
    put(store, (R2, "active"))
    assert project(store, ALL, 2) == store.current
    only_relay = project(store, SliceSpec("r", {"Relay"}), 2)
    assert dict(only_relay.entries) == {R2: ("active", 2)}
    # brute-force filter oracle
    expect = {k: v for k, v in store.current.entries.items() if k.predicate == "Relay"}
    assert only_relay.entries == expect


def test_project_prefix_and_range():
    store = GlobalStore()
    put(store, (R2, "active"))
    put(store, (R2, "inactive"))
    assert project(store, ALL, 1).get(R2) == "active"
    with pytest.raises(SeqOutOfRange):
        project(store, ALL, 3)
    with pytest.raises(SeqOutOfRange):
        project(store, ALL, -1)


def test_integrate_exactly_once():
    view = MemoryView()
    u = update(1, (S1, "detected"))
    assert integrate(view, u, ALL).kind == APPLIED
    before = snapshot(view)
    assert integrate(view, u, ALL).kind == NOOP
    assert snapshot(view) == before


def test_out_of_order_same_key():
    u3, u5 = update(3, (R2, "inactive")), update(5, (R2, "active"))
    for order in itertools.permutations([u3, u5]):
        view = MemoryView()
        for u in order:
            integrate(view, u, ALL)
        assert view.get(R2) == "active"
        assert view.seq_of(R2) == 5


def test_stutter_leaves_view_untouched():
    view = MemoryView()
    integrate(view, update(1, (S1, "none")), ALL)
    before = snapshot(view)
    out = integrate(view, update(2, (S1, "detected")), ALL, revalidate=lambda u: False)
    assert out.kind == STUTTER
    assert snapshot(view) == before


def test_integrate_rejects_foreign_update():
    with pytest.raises(ValueError):
        integrate(MemoryView(), update(1, (S1, "none")), SliceSpec("r", {"Relay"}))


def test_integrate_keeps_only_readable():
    view = MemoryView()
    integrate(view, update(1, (S1, "none"), (R2, "active")), SliceSpec("r", {"Relay"}))
    assert set(view.entries) == {R2}
    assert view.as_of_seq == 1


def test_empty_snapshot():
    assert snapshot(MemoryView()) == b'{"as_of_seq":0,"entries":[]}'


def test_snapshot_insertion_order_irrelevant():
    a = view_from_entries([(S1, "none", 1), (R2, "active", 2)], 2)
    b = view_from_entries([(R2, "active", 2), (S1, "none", 1)], 2)
    assert snapshot(a) == snapshot(b)
    assert a.digest == b.digest


def test_digest_is_sum_of_entry_hashes():
    v = view_from_entries([(S1, "none", 1), (R2, "active", 2)])
    assert v.digest == (entry_hash(S1, "none", 1) + entry_hash(R2, "active", 2)) % (1 << 128)
    v.put(S1, "detected", 3)
    assert v.digest == (entry_hash(S1, "detected", 3) + entry_hash(R2, "active", 2)) % (1 << 128)


def test_tuple_values_roundtrip():
    v = view_from_entries([(EntityKey("AgentPos", "a"), (1, 2), 4)], 4)
    back = parse_snapshot(snapshot(v))
    assert back.get(EntityKey("AgentPos", "a")) == (1, 2)
    assert back == v


def test_global_replay_matches_current():
    store = GlobalStore()
    for i in range(20):
        put(store, (EntityKey("Bid", f"k{i % 3}"), i))
    assert store.replay() == store.current
    assert store.replay(5).get(EntityKey("Bid", "k1")) == 4


# -- properties -------------------------------------------------------------

KEYS = st.sampled_from([S1, R2, EntityKey("Bid", "x"), EntityKey("Bid", "y")])
VALS = st.one_of(st.integers(-3, 3), st.sampled_from(["detected", "none", "active"]))
BATCHES = st.lists(st.lists(st.tuples(KEYS, VALS), min_size=1, max_size=3), min_size=1, max_size=4)
READABLE = st.frozensets(st.sampled_from(["Survivor", "Relay", "Bid"]), min_size=1)


def _as_updates(batches):
    return [update(i + 1, *pairs) for i, pairs in enumerate(batches)]


@given(BATCHES, READABLE)
@settings(max_examples=60)
def test_any_delivery_order_matches_replay(batches, readable):
    updates = _as_updates(batches)
    s = SliceSpec("b", readable)
    relevant = [u for u in updates if readable & u.predicates]
    oracle = MemoryView()
    for u in relevant:
        integrate(oracle, u, s)
    for order in itertools.permutations(relevant):
        view = MemoryView()
        for u in order:
            integrate(view, u, s)
        assert snapshot(view) == snapshot(oracle)
        assert view.digest == oracle.digest


@given(st.lists(st.tuples(KEYS, VALS, st.integers(1, 50)), max_size=8), st.integers(0, 60))
def test_snapshot_parse_roundtrip(entries, as_of):
    v = view_from_entries(entries, as_of)
    once = snapshot(v)
    assert snapshot(parse_snapshot(once)) == once
    assert parse_snapshot(once).digest == v.digest


@given(BATCHES, READABLE, st.data())
def test_local_view_is_subset_of_projection(batches, readable, data):
    store = GlobalStore()
    for pairs in batches:
        put(store, *pairs)
    s = SliceSpec("b", readable)
    relevant = [u for u in store.history if readable & u.predicates]
    chosen = data.draw(st.lists(st.sampled_from(relevant), unique=True) if relevant else st.just([]))
    view = MemoryView()
    for u in chosen:
        integrate(view, u, s)
    proj = project(store, s, view.as_of_seq)
    for key, (value, seq) in view.entries.items():
        assert proj.seq_of(key) >= seq
    # delivering everything closes the gap exactly
    for u in relevant:
        integrate(view, u, s)
    assert canonical_entries(view) == canonical_entries(project(store, s, store.latest_seq))
