"""Benchmarks: message scaling with slice overlap, convergence-delay tails, ε^r Monte Carlo."""

from __future__ import annotations

import csv
import math
import random
import statistics
import warnings
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import trace as tr
from .agent import ValidatorParams, multi_validator_commit
from .errors import InsufficientData
from .ontology import EntityKey, EnumDomain, Ontology, SliceSpec, UpdateProposal
from .sar import ScenarioConfig, reference_config, run_scenario
from .simulation import substream
from .transport import RefreshNotification, Router, deliver
from .verify import index_of, replay_locals

# ---------------------------------------------------------------------------
# Communication scaling
# ---------------------------------------------------------------------------

F_GRID = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
PUBLISHER = "publisher"


@dataclass(frozen=True, slots=True)
class ScalingSample:
    f: float
    trial: int
    key: EntityKey
    messages: int


@dataclass(frozen=True)
class ScalingSummary:
    f: float
    n: int
    mean: float
    variance: float
    ideal: float
    pool_size: int = 200

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n else 0.0

    @property
    def reduction(self) -> float:
        """Saving against broadcast to the whole pool (pool_size + 1 messages)."""
        return 1.0 - self.mean / (self.pool_size + 1)


def pool_agents(pool_size: int) -> list[str]:
    half = pool_size // 2
    return [f"relay_{i:03d}" for i in range(half)] + [
        f"rescue_{i:03d}" for i in range(pool_size - half)
    ]


def channel_names(n: int) -> list[str]:
    return [f"ch{i:03d}" for i in range(n)]


def random_slices(
    agents: Sequence[str], channels: Sequence[str], f: float, rng: random.Random
) -> list[SliceSpec]:
    """Each agent reads exactly round(f * |channels|) channels, chosen uniformly."""
    k = round(f * len(channels))
    return [SliceSpec(a, frozenset(rng.sample(channels, k))) for a in agents]


def run_comm_scaling(
    pool_size: int = 200,
    f_grid: Iterable[float] = F_GRID,
    trials: int = 100,
    rng: random.Random | None = None,
    channels: int = 100,
) -> tuple[list[ScalingSample], list[ScalingSummary]]:
    """Publish one update per channel under random slice assignments; count messages.

    Messages per update are the routed recipients plus the proposer's own write.
    """
    rng = rng or random.Random(0)
    agents = pool_agents(pool_size)
    names = channel_names(channels)
    samples: list[ScalingSample] = []
    summaries: list[ScalingSummary] = []
    for f in f_grid:
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"f must be in [0, 1], got {f}")
        counts = []
        for trial in range(trials):
            router = Router(random_slices(agents, names, f, rng))
            for ch in names:
                key = EntityKey(ch, "x")
                note = RefreshNotification(trial, frozenset({key}), PUBLISHER)
                m = len(router.route(note)) + 1
                samples.append(ScalingSample(f, trial, key, m))
                counts.append(m)
        var = statistics.variance(counts) if len(counts) > 1 else 0.0
        summaries.append(
            ScalingSummary(
                f, len(counts), statistics.fmean(counts), var, f * pool_size + 1, pool_size
            )
        )
    return samples, summaries


def write_scaling_csv(path: str | Path, summaries: Sequence[ScalingSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f", "mean", "variance", "ideal", "n", "stderr"])
        for s in summaries:
            w.writerow([s.f, f"{s.mean:.6f}", f"{s.variance:.6f}", s.ideal, s.n, f"{s.stderr:.6f}"])


# ---------------------------------------------------------------------------
# Tail fitting
# ---------------------------------------------------------------------------

MIN_DELAYS = 30
# Points of S(k) backed by fewer delays than this are too noisy to fit.
MIN_TAIL_COUNT = 30


def survival(delays: Sequence[int]) -> list[float]:
    """S(k) = fraction of delays strictly greater than k, for k = 0..max(delays)."""
    if not delays:
        return []
    top = max(delays)
    hist = np.bincount(np.asarray(delays, dtype=np.int64), minlength=top + 1)
    n = len(delays)
    above = n - np.cumsum(hist)
    return (above / n).tolist()


@dataclass(frozen=True)
class TailFit:
    lambda_hat: float
    fit_r2: float
    intercept: float
    points: int

    @property
    def degenerate(self) -> bool:
        return math.isnan(self.fit_r2)


def fit_exponential_tail(delays: Sequence[int], min_count: int = MIN_TAIL_COUNT) -> TailFit:
    """Least-squares line through log S(k), over every k where S(k) > 0.

    Points where fewer than ``min_count`` delays exceed k are left out. The
    rate is minus the slope. Degenerate inputs (fewer than two points, or a
    flat curve) report ``fit_r2 = nan``.
    """
    if len(delays) < MIN_DELAYS:
        raise InsufficientData(f"need at least {MIN_DELAYS} delays, got {len(delays)}")
    s = np.asarray(survival(delays))
    above = s * len(delays)
    k = np.nonzero((s > 0) & (above >= min(min_count, len(delays)) - 1e-9))[0]
    if len(k) < 2:
        return TailFit(math.nan, math.nan, math.nan, len(k))
    y = np.log(s[k])
    if np.ptp(y) == 0:
        return TailFit(0.0, math.nan, float(y[0]), len(k))
    res = stats.linregress(k.astype(float), y)
    return TailFit(-float(res.slope), float(res.rvalue**2), float(res.intercept), len(k))


@dataclass
class SurvivalCurve:
    rho: float
    delays: list[int]
    censored: int = 0
    fit: TailFit | None = None
    survival: list[float] = field(default_factory=list)

    @property
    def lambda_hat(self) -> float:
        return self.fit.lambda_hat if self.fit else math.nan

    @property
    def fit_r2(self) -> float:
        return self.fit.fit_r2 if self.fit else math.nan


def alignment_delays(trace: tr.Trace) -> tuple[list[int], int]:
    """Per (commit, key, reader) delay until the reader's entry catches up.

    For a commit at tick t writing key k, every non-author agent that reads
    k contributes Δ = max(1, t' - t), where t' is the tick its local entry
    for k first carries that commit or a later one. Pairs still waiting when
    the run ends are censored and returned as a count; removed agents and
    setup commits are left out.
    """
    index = index_of(trace)
    system = index.system_authors
    commits = index.commits
    log: dict[EntityKey, list[tuple[int, int, str]]] = defaultdict(list)
    cursor: dict[tuple[str, EntityKey], int] = {}
    dead: set[str] = set()
    delays: list[int] = []

    def on_event(e: tr.TraceEvent) -> None:
        if e.kind == tr.COMMIT:
            update = commits[e.data["commit_seq"]]
            if update.author in system:
                return
            entry = (update.commit_seq, e.tick, update.author)
            for s in update.statements:
                log[s.key].append(entry)
        elif e.kind == tr.REMOVE:
            dead.add(e.data.get("agent"))

    def observe(agent: str, key: EntityKey, value, seq: int, tick: int) -> None:
        seen = log.get(key)
        if not seen:
            return
        i = cursor.get((agent, key), 0)
        n = len(seen)
        while i < n and seen[i][0] <= seq:
            _, t, author = seen[i]
            if author != agent:
                delays.append(tick - t if tick > t else 1)
            i += 1
        cursor[(agent, key)] = i

    replay_locals(index, observe, on_event)
    censored = 0
    for agent, s in index.slices.items():
        if agent in dead:
            continue
        for key, seen in log.items():
            if key.predicate in s.readable:
                rest = seen[cursor.get((agent, key), 0):]
                censored += sum(1 for _, _, author in rest if author != agent)
    return delays, censored


def run_convergence_tail(
    rhos: Iterable[float] = (0.2, 0.5, 0.8),
    ticks: int = 100,
    config: ScenarioConfig | None = None,
) -> list[SurvivalCurve]:
    base = config or reference_config()
    curves = []
    for rho in rhos:
        cfg = base.with_overrides(comm_prob=rho, ticks=ticks).validate()
        cfg.removals = [(t, a) for t, a in cfg.removals if t <= ticks]
        cfg.injections = [i for i in cfg.injections if i.tick <= ticks]
        sim = run_scenario(cfg)
        delays, censored = alignment_delays(sim.trace)
        curve = SurvivalCurve(rho, delays, censored, survival=survival(delays))
        if len(delays) >= MIN_DELAYS:
            curve.fit = fit_exponential_tail(delays)
        curves.append(curve)
    return curves


def write_tail_csv(path: str | Path, curves: Sequence[SurvivalCurve]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "k", "survival", "exp_fit"])
        for c in curves:
            lam = c.lambda_hat
            for k, s in enumerate(c.survival):
                fitted = math.exp(-lam * k) if not math.isnan(lam) else math.nan
                w.writerow([c.rho, k, f"{s:.6g}", f"{fitted:.6g}"])


@dataclass(frozen=True)
class StreamResult:
    rho: float
    eta: float
    waits: list[int]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.waits)

    @property
    def expected(self) -> float:
        return 1.0 / (self.rho * self.eta)

    @property
    def sigma_of_mean(self) -> float:
        p = self.rho * self.eta
        return math.sqrt((1 - p) / p**2 / len(self.waits))


def run_iid_stream(
    rho: float,
    eta: float = 0.25,
    steps: int = 20_000,
    agents: int = 20,
    channels: int = 100,
    rng: random.Random | None = None,
) -> StreamResult:
    """One update per step on a uniform channel; each reader's slice covers eta of them.

    Returns the gaps, in steps, between consecutive delivered relevant
    updates, pooled over readers (the first gap counts from step 0).
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must be in (0, 1]")
    rng = rng or random.Random(0)
    names = channel_names(channels)
    k = round(eta * channels)
    readers = [f"reader_{i:03d}" for i in range(agents)]
    router = Router(SliceSpec(a, frozenset(rng.sample(names, k))) for a in readers)
    last = {a: 0 for a in readers}
    waits: list[int] = []
    drop = 1.0 - rho
    for step in range(1, steps + 1):
        key = EntityKey(rng.choice(names), "x")
        note = RefreshNotification(step, frozenset({key}), PUBLISHER)
        for rec in deliver(router.route(note), drop, rng, step, step):
            if rec.delivered:
                waits.append(step - last[rec.recipient])
                last[rec.recipient] = step
    return StreamResult(rho, k / channels, waits)


# ---------------------------------------------------------------------------
# ε^r Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpsRResult:
    epsilon: float
    r: int
    trials: int
    commits: int
    ci_low: float
    ci_high: float
    guidance: str = ""

    @property
    def rate(self) -> float:
        return self.commits / self.trials

    @property
    def analytic(self) -> float:
        return self.epsilon**self.r

    @property
    def sigma(self) -> float:
        """Binomial standard deviation of the rate at the analytic value."""
        p = self.analytic
        return math.sqrt(p * (1 - p) / self.trials)


def _invalid_probe() -> tuple[Ontology, UpdateProposal]:
    ont = Ontology({"Survivor": EnumDomain(frozenset({"detected", "none"}))})
    proposal = UpdateProposal.of("proposer", "probe", [(EntityKey("Survivor", "z0_0"), "ghost")])
    return ont, proposal


def run_epsilon_r_montecarlo(
    epsilon: float, r: int, trials: int, rng: random.Random | None = None
) -> EpsRResult:
    """Push a known-invalid proposal through r independent validators, ``trials`` times."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng or random.Random(0)
    params = ValidatorParams(epsilon)
    ont, proposal = _invalid_probe()
    slices = [SliceSpec(f"validator_{i}", {"Survivor"}, {"Survivor"}) for i in range(r)]
    streams = [random.Random(rng.getrandbits(64)) for _ in range(r)]
    validators = [(params, s) for s in streams]
    commits = 0
    for _ in range(trials):
        if multi_validator_commit(proposal, validators, ont, slices).committed:
            commits += 1
    ci = stats.binomtest(commits, trials).proportion_ci(0.95)
    guidance = ""
    expected = trials * epsilon**r
    if 0 < expected < 10:
        need = math.ceil(10 / epsilon**r)
        guidance = f"only {expected:.3g} commits expected; use at least {need} trials"
        warnings.warn(guidance, stacklevel=2)
    return EpsRResult(epsilon, r, trials, commits, float(ci.low), float(ci.high), guidance)


def write_epsr_csv(path: str | Path, results: Sequence[EpsRResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "r", "trials", "commits", "rate", "ci_low", "ci_high", "analytic"])
        for x in results:
            w.writerow([x.epsilon, x.r, x.trials, x.commits, f"{x.rate:.6g}",
                        f"{x.ci_low:.6g}", f"{x.ci_high:.6g}", f"{x.analytic:.6g}"])


def trial_rng(run_seed: int, name: str) -> random.Random:
    return substream(run_seed, "bench", name)
