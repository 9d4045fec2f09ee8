"""Search-and-rescue scenario: grid world, role slices, scripted stochastic policies.

Roles and what they write:

* search -- walks its assigned zones, reports ``Survivor`` and ``ZoneStatus``
* relay  -- heads for detected survivors without a relay, writes ``Relay``
* rescue -- bids on survivors, rescues once a relay is up and its bid is best,
  then writes ``Rescue=complete`` and resets ``ZoneStatus`` to unsearched

A zone's *episode* is identified by the commit seq of its current
``Survivor=detected`` entry; ``Relay`` and ``Rescue`` entries older than
that seq belong to a previous episode.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .agent import AgentState, Pairs, ValidatorParams
from .errors import ConfigInvalid
from .memory import MemoryView
from .ontology import (
    DomainMembership,
    EntityKey,
    EnumDomain,
    ForbiddenValuePair,
    GridDomain,
    IntRange,
    Ontology,
    RequiredCoPredicate,
    SliceSpec,
    from_json_value,
)
from .simulation import Injection, Simulation, substream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SURVIVOR = "Survivor"
ZONE_STATUS = "ZoneStatus"
RELAY = "Relay"
RESCUE = "Rescue"
BID = "Bid"
AGENT_POS = "AgentPos"
ZONE_COORD = "ZoneCoord"
PREDICATES = (SURVIVOR, ZONE_STATUS, RELAY, RESCUE, BID, AGENT_POS, ZONE_COORD)

DETECTED, NONE = "detected", "none"
SEARCHED, UNSEARCHED = "searched", "unsearched"
ACTIVE, INACTIVE = "active", "inactive"
IN_PROGRESS, COMPLETE = "in_progress", "complete"

WITHDRAWN = -1_000_000
BID_MAX = 1_000

ROLES = ("search", "relay", "rescue")
WRITABLE = {
    "search": frozenset({SURVIVOR, ZONE_STATUS, AGENT_POS}),
    "relay": frozenset({RELAY, AGENT_POS}),
    "rescue": frozenset({RESCUE, BID, ZONE_STATUS, AGENT_POS}),
}
READABLE = {
    "search": frozenset({SURVIVOR, ZONE_STATUS, AGENT_POS, ZONE_COORD}),
    "relay": frozenset(PREDICATES),
    "rescue": frozenset(PREDICATES),
}
# Predicates relay/rescue can do without when fan_out < 1: everything their
# policy does not strictly need to function.
OPTIONAL = {
    "relay": frozenset(PREDICATES) - {SURVIVOR, RELAY, RESCUE, AGENT_POS},
    "rescue": frozenset(PREDICATES) - {SURVIVOR, RELAY, RESCUE, BID, ZONE_STATUS, AGENT_POS},
}


def sar_ontology(width: int, height: int) -> Ontology:
    grid = GridDomain(width, height)
    predicates = {
        SURVIVOR: EnumDomain(frozenset({DETECTED, NONE})),
        ZONE_STATUS: EnumDomain(frozenset({SEARCHED, UNSEARCHED})),
        RELAY: EnumDomain(frozenset({ACTIVE, INACTIVE})),
        RESCUE: EnumDomain(frozenset({IN_PROGRESS, COMPLETE})),
        BID: IntRange(WITHDRAWN, BID_MAX),
        AGENT_POS: grid,
        ZONE_COORD: grid,
    }
    constraints = (
        RequiredCoPredicate("survivor-needs-status", SURVIVOR, ZONE_STATUS),
        RequiredCoPredicate("rescue-complete-resets-status", RESCUE, ZONE_STATUS, COMPLETE),
        ForbiddenValuePair("no-empty-unsearched-report", SURVIVOR, NONE, ZONE_STATUS, UNSEARCHED),
        DomainMembership("bid-score-bound", BID, IntRange(WITHDRAWN, 99)),
    )
    return Ontology(predicates, constraints)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    run_seed: int = 0
    ticks: int = 100
    flush_ticks: int = 5
    comm_prob: float = 1.0
    fan_out: float = 1.0
    n_search: int = 50
    n_relay: int = 100
    n_rescue: int = 100
    width: int = 10
    height: int = 10
    detect_prob: float = 0.3
    search_passes: int = 0  # 0 keeps searching forever
    bid_limit: int = 3
    service_min: int = 2
    service_max: int = 5
    bid_perturbation: int = 100  # scores are in thousandths of a zone
    probabilistic: tuple[str, ...] = ROLES
    validators: dict[str, ValidatorParams] = field(default_factory=dict)
    removals: list[tuple[int, str]] = field(default_factory=list)
    injections: list[Injection] = field(default_factory=list)
    max_lag: int | None = None

    def validate(self) -> "ScenarioConfig":
        def need(ok: bool, name: str, msg: str) -> None:
            if not ok:
                raise ConfigInvalid(name, msg)

        for name in ("n_search", "n_relay", "n_rescue"):
            need(getattr(self, name) >= 0, name, "must be >= 0")
        need(self.n_search + self.n_relay + self.n_rescue > 0, "n_search", "no agents")
        need(self.width >= 1, "width", "must be >= 1")
        need(self.height >= 1, "height", "must be >= 1")
        need(self.ticks >= 0, "ticks", "must be >= 0")
        need(self.flush_ticks >= 0, "flush_ticks", "must be >= 0")
        need(0.0 < self.comm_prob <= 1.0, "comm_prob", f"must be in (0, 1], got {self.comm_prob}")
        need(0.0 <= self.fan_out <= 1.0, "fan_out", f"must be in [0, 1], got {self.fan_out}")
        need(0.0 <= self.detect_prob <= 1.0, "detect_prob", "must be a probability")
        need(self.search_passes >= 0, "search_passes", "must be >= 0")
        need(self.bid_limit >= 1, "bid_limit", "must be >= 1")
        need(1 <= self.service_min <= self.service_max, "service_min", "need 1 <= min <= max")
        need(0 <= self.bid_perturbation <= 100, "bid_perturbation", "must be in [0, 100]")
        need(self.max_lag is None or self.max_lag >= 0, "max_lag", "must be >= 0")
        for role in self.probabilistic:
            need(role in ROLES, "probabilistic", f"unknown role {role!r}")
        for role in self.validators:
            need(role in ROLES, "validators", f"unknown role {role!r}")
        ids = set(self.agent_ids())
        for tick, agent in self.removals:
            need(agent in ids, "removals", f"unknown agent {agent!r}")
            need(1 <= tick <= self.ticks, "removals", f"tick {tick} outside the run")
        for inj in self.injections:
            need(inj.agent in ids, "injections", f"unknown agent {inj.agent!r}")
            need(1 <= inj.tick <= self.ticks, "injections", f"tick {inj.tick} outside the run")
        return self

    @property
    def lag(self) -> int:
        return self.flush_ticks if self.max_lag is None else self.max_lag

    def agent_ids(self, role: str | None = None) -> list[str]:
        counts = {"search": self.n_search, "relay": self.n_relay, "rescue": self.n_rescue}
        roles = ROLES if role is None else (role,)
        return [f"{r}_{i:03d}" for r in roles for i in range(counts[r])]

    def with_overrides(self, **changes: Any) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    # -- (de)serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_seed": self.run_seed,
            "ticks": self.ticks,
            "flush_ticks": self.flush_ticks,
            "comm_prob": self.comm_prob,
            "fan_out": self.fan_out,
            "max_lag": self.lag,
            "probabilistic": list(self.probabilistic),
            "agents": {"search": self.n_search, "relay": self.n_relay, "rescue": self.n_rescue},
            "world": {"width": self.width, "height": self.height},
            "policy": {
                "detect_prob": self.detect_prob,
                "search_passes": self.search_passes,
                "bid_limit": self.bid_limit,
                "service_min": self.service_min,
                "service_max": self.service_max,
                "bid_perturbation": self.bid_perturbation,
            },
            "validators": {
                r: {"epsilon": v.epsilon, "xi": v.xi} for r, v in sorted(self.validators.items())
            },
            "removals": [{"tick": t, "agent": a} for t, a in self.removals],
            "injections": [i.to_dict() for i in self.injections],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioConfig":
        known = {
            "run_seed", "seed", "ticks", "flush_ticks", "comm_prob", "fan_out", "max_lag",
            "probabilistic", "agents", "world", "policy", "validators", "removals", "injections",
        }
        for k in d:
            if k not in known:
                raise ConfigInvalid(k, "unknown setting")
        agents = d.get("agents", {})
        world = d.get("world", {})
        policy = d.get("policy", {})
        try:
            validators = {
                role: ValidatorParams(float(v.get("epsilon", 0.0)), float(v.get("xi", 0.0)))
                for role, v in d.get("validators", {}).items()
            }
        except ValueError as exc:
            raise ConfigInvalid("validators", str(exc)) from None
        try:
            injections = [
                Injection(
                    int(i["tick"]),
                    i["agent"],
                    tuple((EntityKey.parse(k), from_json_value(v)) for k, v in i["statements"]),
                )
                for i in d.get("injections", [])
            ]
            removals = [(int(r["tick"]), r["agent"]) for r in d.get("removals", [])]
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigInvalid("injections/removals", f"malformed entry: {exc}") from None
        base = cls()
        cfg = cls(
            run_seed=int(d.get("run_seed", d.get("seed", base.run_seed))),
            ticks=int(d.get("ticks", base.ticks)),
            flush_ticks=int(d.get("flush_ticks", base.flush_ticks)),
            comm_prob=float(d.get("comm_prob", base.comm_prob)),
            fan_out=float(d.get("fan_out", base.fan_out)),
            n_search=int(agents.get("search", base.n_search)),
            n_relay=int(agents.get("relay", base.n_relay)),
            n_rescue=int(agents.get("rescue", base.n_rescue)),
            width=int(world.get("width", base.width)),
            height=int(world.get("height", base.height)),
            detect_prob=float(policy.get("detect_prob", base.detect_prob)),
            search_passes=int(policy.get("search_passes", base.search_passes)),
            bid_limit=int(policy.get("bid_limit", base.bid_limit)),
            service_min=int(policy.get("service_min", base.service_min)),
            service_max=int(policy.get("service_max", base.service_max)),
            bid_perturbation=int(policy.get("bid_perturbation", base.bid_perturbation)),
            probabilistic=tuple(d.get("probabilistic", base.probabilistic)),
            validators=validators,
            removals=removals,
            injections=injections,
            max_lag=None if d.get("max_lag") is None else int(d["max_lag"]),
        )
        return cfg.validate()

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigInvalid("config", f"{path}: {exc}") from None
        return cls.from_dict(data)


PRESET_DIR = Path(__file__).parent / "presets"


def preset_path(name: str) -> Path:
    return PRESET_DIR / f"{name}.toml"


def reference_config(**overrides: Any) -> ScenarioConfig:
    return ScenarioConfig.load(preset_path("reference")).with_overrides(**overrides).validate()


# ---------------------------------------------------------------------------
# World
# ---------------------------------------------------------------------------


def zone_label(x: int, y: int) -> str:
    return f"z{x}_{y}"


def zone_xy(label: str) -> tuple[int, int]:
    x, _, y = label[1:].partition("_")
    return int(x), int(y)


def manhattan(a: tuple[int, int], b: tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def step_toward(pos: tuple[int, int], target: tuple[int, int]) -> tuple[int, int]:
    """One move on the 4-neighbourhood, x first."""
    x, y = pos
    if x != target[0]:
        return (x + (1 if target[0] > x else -1), y)
    if y != target[1]:
        return (x, y + (1 if target[1] > y else -1))
    return pos


@dataclass
class ZoneKeys:
    survivor: EntityKey
    status: EntityKey
    relay: EntityKey
    rescue: EntityKey
    xy: tuple[int, int]


@dataclass
class World:
    width: int
    height: int
    zones: list[str]
    search_assignment: dict[str, list[str]]
    positions: dict[str, tuple[int, int]]
    rescuers: list[str] = field(default_factory=list)
    keys: dict[str, ZoneKeys] = field(default_factory=dict)
    bid_keys: dict[str, list[tuple[str, EntityKey]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for z in self.zones:
            self.keys[z] = ZoneKeys(
                EntityKey(SURVIVOR, z),
                EntityKey(ZONE_STATUS, z),
                EntityKey(RELAY, z),
                EntityKey(RESCUE, z),
                zone_xy(z),
            )
            self.bid_keys[z] = [(r, bid_key(z, r)) for r in self.rescuers]


def bid_key(zone: str, agent: str) -> EntityKey:
    return EntityKey(BID, f"{zone}/{agent}")


def pos_key(agent: str) -> EntityKey:
    return EntityKey(AGENT_POS, agent)


def init_world(config: ScenarioConfig) -> tuple[World, list[tuple[EntityKey, Any]]]:
    """Build the grid and the statements of the initial system commit."""
    if config.width < 1 or config.height < 1:
        raise ConfigInvalid("width", "grid has no zones")
    if config.n_search + config.n_relay + config.n_rescue <= 0:
        raise ConfigInvalid("n_search", "no agents")
    rng = substream(config.run_seed, "world")
    zones = [zone_label(x, y) for x in range(config.width) for y in range(config.height)]
    shuffled = list(zones)
    rng.shuffle(shuffled)
    searchers = config.agent_ids("search")
    assignment: dict[str, list[str]] = {}
    n = len(searchers)
    for i, agent in enumerate(searchers):
        lo, hi = (i * len(shuffled)) // n, ((i + 1) * len(shuffled)) // n
        assignment[agent] = shuffled[lo:hi]
    positions: dict[str, tuple[int, int]] = {}
    for agent in searchers:
        own = assignment[agent]
        positions[agent] = zone_xy(own[0]) if own else (0, 0)
    for agent in config.agent_ids("relay") + config.agent_ids("rescue"):
        positions[agent] = (rng.randrange(config.width), rng.randrange(config.height))
    world = World(
        config.width, config.height, zones, assignment, positions, config.agent_ids("rescue")
    )
    initial: list[tuple[EntityKey, Any]] = [(EntityKey(ZONE_COORD, z), zone_xy(z)) for z in zones]
    initial += [(pos_key(a), positions[a]) for a in sorted(positions)]
    return world, initial


def open_episode(view: MemoryView, keys: ZoneKeys) -> int:
    """Seq of the zone's live ``Survivor=detected`` entry, or 0 if nobody is waiting."""
    entry = view.entries.get(keys.survivor)
    if entry is None or entry[0] != DETECTED:
        return 0
    rescue = view.entries.get(keys.rescue)
    if rescue is not None and rescue[0] == COMPLETE and rescue[1] > entry[1]:
        return 0
    return entry[1]


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass
class SearchState:
    agent: str
    assignment: list[str]
    pos: tuple[int, int]
    world: World
    detect_prob: float = 0.3
    max_passes: int = 0
    index: int = 0
    passes: int = 0

    @property
    def exhausted(self) -> bool:
        return not self.assignment or (self.max_passes > 0 and self.passes >= self.max_passes)


def search_policy(st: SearchState, view: MemoryView, rng: random.Random) -> Pairs:
    if st.exhausted:
        return []
    zone = st.assignment[st.index]
    keys = st.world.keys[zone]
    out: Pairs = []
    if st.pos != keys.xy:
        st.pos = keys.xy
        out.append((pos_key(st.agent), keys.xy))
    # A reported survivor stays reported until a rescuer resets the zone.
    awaiting = view.get(keys.survivor) == DETECTED and view.get(keys.status) != UNSEARCHED
    if not awaiting:
        found = rng.random() < st.detect_prob
        out.append((keys.survivor, DETECTED if found else NONE))
        out.append((keys.status, SEARCHED))
    st.index += 1
    if st.index == len(st.assignment):
        st.index = 0
        st.passes += 1
    return out


def _nearest(zones: list[str], pos: tuple[int, int], world: World, rng: random.Random) -> str:
    best = min(manhattan(pos, world.keys[z].xy) for z in zones)
    tied = sorted(z for z in zones if manhattan(pos, world.keys[z].xy) == best)
    return tied[0] if len(tied) == 1 else rng.choice(tied)


@dataclass
class RelayState:
    agent: str
    pos: tuple[int, int]
    world: World
    target: str | None = None
    station: str | None = None


def _needs_relay(view: MemoryView, keys: ZoneKeys) -> bool:
    return open_episode(view, keys) > 0 and view.get(keys.relay) != ACTIVE


def relay_policy(st: RelayState, view: MemoryView, rng: random.Random) -> Pairs:
    world = st.world
    if st.station is not None:
        keys = world.keys[st.station]
        relay = view.entries.get(keys.relay)
        if relay is None or relay[0] != ACTIVE:
            st.station = None
        else:
            rescue = view.entries.get(keys.rescue)
            if rescue is not None and rescue[0] == COMPLETE and rescue[1] > relay[1]:
                st.station = None
                return [(keys.relay, INACTIVE)]
            return []
    if st.target is None or not _needs_relay(view, world.keys[st.target]):
        wanted = [z for z in world.zones if _needs_relay(view, world.keys[z])]
        if not wanted:
            st.target = None
            return []
        st.target = _nearest(wanted, st.pos, world, rng)
    keys = world.keys[st.target]
    out: Pairs = []
    if st.pos != keys.xy:
        st.pos = step_toward(st.pos, keys.xy)
        out.append((pos_key(st.agent), st.pos))
    if st.pos == keys.xy:
        out.append((keys.relay, ACTIVE))
        st.station, st.target = st.target, None
    return out


IDLE, MOVING, SERVING = "idle", "moving", "serving"


@dataclass
class RescueState:
    agent: str
    pos: tuple[int, int]
    world: World
    bid_limit: int = 3
    service: tuple[int, int] = (2, 5)
    perturbation: int = 100
    mode: str = IDLE
    target: str | None = None
    remaining: int = 0


def bid_score(distance: int, rng: random.Random, perturbation: int) -> int:
    """Closer is better; ties are split by a small random bonus."""
    bonus = rng.randrange(perturbation) if perturbation > 0 else 0
    return -1000 * distance + bonus


def live_bids(view: MemoryView, world: World, zone: str, episode: int) -> list[tuple[int, str]]:
    out = []
    for agent, key in world.bid_keys[zone]:
        entry = view.entries.get(key)
        if entry is not None and entry[1] > episode and entry[0] > WITHDRAWN:
            out.append((entry[0], agent))
    return out


def auction_winner(bids: list[tuple[int, str]]) -> str | None:
    """Highest score; equal scores go to the lexicographically smallest agent id."""
    if not bids:
        return None
    return min(bids, key=lambda b: (-b[0], b[1]))[1]


def _start_service(st: RescueState, rng: random.Random) -> None:
    st.mode = SERVING
    st.remaining = rng.randint(*st.service)


def rescue_policy(st: RescueState, view: MemoryView, rng: random.Random) -> Pairs:
    world = st.world
    if st.mode == MOVING:
        keys = world.keys[st.target]
        st.pos = step_toward(st.pos, keys.xy)
        if st.pos == keys.xy:
            _start_service(st, rng)
        return [(pos_key(st.agent), st.pos)]
    if st.mode == SERVING:
        st.remaining -= 1
        if st.remaining > 0:
            return []
        keys = world.keys[st.target]
        st.mode, st.target = IDLE, None
        return [(keys.rescue, COMPLETE), (keys.status, UNSEARCHED)]

    me = st.agent
    open_zones: list[tuple[str, int]] = []
    for z in world.zones:
        keys = world.keys[z]
        ep = open_episode(view, keys)
        if ep == 0:
            continue
        rescue = view.entries.get(keys.rescue)
        if rescue is not None and rescue[1] > ep:
            continue  # already claimed in this episode
        open_zones.append((z, ep))
    mine = {}
    for z, ep in open_zones:
        entry = view.entries.get(bid_key(z, me))
        if entry is not None and entry[1] > ep and entry[0] > WITHDRAWN:
            mine[z] = ep
    winnable = [
        z
        for z in mine
        if view.get(world.keys[z].relay) == ACTIVE
        and auction_winner(live_bids(view, world, z, mine[z])) == me
    ]
    if winnable:
        z = min(winnable, key=lambda z: (manhattan(st.pos, world.keys[z].xy), z))
        out: Pairs = [(world.keys[z].rescue, IN_PROGRESS)]
        out += [(bid_key(o, me), WITHDRAWN) for o in sorted(mine) if o != z]
        st.target = z
        if st.pos == world.keys[z].xy:
            _start_service(st, rng)
        else:
            st.mode = MOVING
        return out
    room = st.bid_limit - len(mine)
    if room <= 0:
        return []
    fresh = sorted(
        (manhattan(st.pos, world.keys[z].xy), z) for z, _ in open_zones if z not in mine
    )[:room]
    return [(bid_key(z, me), bid_score(d, rng, st.perturbation)) for d, z in fresh]


class PolicyGenerator:
    """Adapts a ``policy(state, view, rng)`` function to the generator protocol."""

    def __init__(self, policy, state, probabilistic: bool = True):
        self.policy = policy
        self.state = state
        self.probabilistic = probabilistic

    def propose(self, view: MemoryView, rng: random.Random, tick: int) -> Pairs:
        return self.policy(self.state, view, rng)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def role_of(agent_id: str) -> str:
    return agent_id.rpartition("_")[0]


def build_slices(config: ScenarioConfig) -> dict[str, SliceSpec]:
    """Role slices; with fan_out < 1 relay/rescue keep only a sample of optional predicates.

    Every predicate is still read by at least one agent, so the slices cover
    the ontology.
    """
    rng = substream(config.run_seed, "slices")
    slices: dict[str, SliceSpec] = {}
    for agent in config.agent_ids():
        role = role_of(agent)
        readable = READABLE[role]
        if config.fan_out < 1.0 and role in OPTIONAL:
            optional = sorted(OPTIONAL[role])
            keep = rng.sample(optional, round(config.fan_out * len(optional)))
            readable = (readable - OPTIONAL[role]) | frozenset(keep)
        slices[agent] = SliceSpec(agent, readable, WRITABLE[role])
    covered = frozenset().union(*(s.readable for s in slices.values())) if slices else frozenset()
    for p in PREDICATES:
        if p not in covered:
            owner = next((a for a in sorted(slices) if role_of(a) != "search"), None)
            if owner is not None:
                s = slices[owner]
                slices[owner] = SliceSpec(owner, s.readable | {p}, s.writable)
    return slices


def build_simulation(config: ScenarioConfig, generators: Mapping[str, Any] | None = None) -> Simulation:
    """Wire world, agents and schedules; the initial system commit is already applied."""
    config.validate()
    world, initial = init_world(config)
    ont = sar_ontology(config.width, config.height)
    slices = build_slices(config)
    agents = []
    for aid in config.agent_ids():
        role = role_of(aid)
        probabilistic = role in config.probabilistic
        if generators and aid in generators:
            gen = generators[aid]
        elif role == "search":
            gen = PolicyGenerator(
                search_policy,
                SearchState(
                    aid,
                    world.search_assignment[aid],
                    world.positions[aid],
                    world,
                    config.detect_prob,
                    config.search_passes,
                ),
                probabilistic,
            )
        elif role == "relay":
            gen = PolicyGenerator(relay_policy, RelayState(aid, world.positions[aid], world), probabilistic)
        else:
            gen = PolicyGenerator(
                rescue_policy,
                RescueState(
                    aid,
                    world.positions[aid],
                    world,
                    config.bid_limit,
                    (config.service_min, config.service_max),
                    config.bid_perturbation,
                ),
                probabilistic,
            )
        agents.append(
            AgentState(
                aid,
                slices[aid],
                generator=gen,
                validator=config.validators.get(role, ValidatorParams()),
                rng=substream(config.run_seed, "agent", aid),
                validator_rng=substream(config.run_seed, "validator", aid),
                role=role,
            )
        )
    sim = Simulation(
        ont,
        agents,
        drop_prob=1.0 - config.comm_prob,
        transport_rng=substream(config.run_seed, "transport"),
        ticks=config.ticks,
        flush_ticks=config.flush_ticks,
        removals=config.removals,
        injections=config.injections,
        header={"config": config.to_dict(), "max_lag": config.lag},
    )
    sim.seed_memory(initial, tick=0)
    sim.initial_snapshots(tick=0)
    sim.world = world
    return sim


def run_scenario(config: ScenarioConfig, generators: Mapping[str, Any] | None = None) -> Simulation:
    sim = build_simulation(config, generators)
    sim.run()
    return sim
