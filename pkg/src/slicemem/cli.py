"""Command line: ``slicemem simulate | verify | bench``.

Exit codes: 0 clean, 1 verification found violations, 2 usage or config
error, 3 unreadable or malformed trace.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy
import scipy

from . import __version__
from . import trace as tr
from .bench import (
    run_comm_scaling,
    run_convergence_tail,
    run_epsilon_r_montecarlo,
    trial_rng,
    write_epsr_csv,
    write_scaling_csv,
    write_tail_csv,
)
from .errors import ConfigInvalid, MalformedTrace, ScopeNotCovered
from .memory import MemoryView, digest_hex, entry_hash
from .ontology import to_json_value
from .sar import ScenarioConfig, preset_path, run_scenario
from .verify import CHECKERS, CORE_CHECKERS, run_checkers, summary_table

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_TRACE = 0, 1, 2, 3
SNAPSHOT_SCHEMA = "slicemem.snapshots/1"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def config_hash(config: ScenarioConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    path = args.config or preset_path("reference")
    config = ScenarioConfig.load(path)
    return config.with_overrides(
        run_seed=args.seed,
        comm_prob=args.comm_prob,
        fan_out=getattr(args, "fan_out", None),
        ticks=getattr(args, "ticks", None),
        flush_ticks=getattr(args, "flush_ticks", None),
        max_lag=getattr(args, "max_lag", None),
    ).validate()


def global_snapshot_lines(trace: tr.Trace) -> list[str]:
    """Per-tick global memory: entries committed that tick, plus size and digest afterwards."""
    by_tick: dict[int, list[tr.TraceEvent]] = defaultdict(list)
    for e in trace.of_kind(tr.COMMIT):
        by_tick[e.tick].append(e)
    view = MemoryView()
    lines = [json.dumps({"schema": SNAPSHOT_SCHEMA}, sort_keys=True)]
    for tick in range(0, trace.last_tick + 1):
        changes = []
        for e in by_tick.get(tick, ()):
            seq = e.data["commit_seq"]
            for k, v in tr.decode_statements(e.data["statements"]):
                view.put(k, v, seq, entry_hash(k, v, seq))
                changes.append([k.render(), to_json_value(v), seq])
            view.as_of_seq = seq
        record = {
            "tick": tick,
            "as_of_seq": view.as_of_seq,
            "size": len(view.entries),
            "digest": digest_hex(view.digest),
            "changes": changes,
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    return lines


def cmd_simulate(args: argparse.Namespace) -> int:
    started = _now()
    config = load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = run_scenario(config)
    trace_path = out / "trace.jsonl"
    snap_path = out / "snapshots.jsonl"
    sim.trace.write(trace_path)
    snap_path.write_text("\n".join(global_snapshot_lines(sim.trace)) + "\n")
    trace_sha = hashlib.sha256(trace_path.read_bytes()).hexdigest()
    manifest = {
        "config_hash": config_hash(config),
        "run_seed": config.run_seed,
        "config": config.to_dict(),
        "versions": {
            "slicemem": __version__,
            "trace_schema": tr.SCHEMA,
            "snapshot_schema": SNAPSHOT_SCHEMA,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
        },
        "paths": {"trace": str(trace_path), "snapshots": str(snap_path)},
        "trace_sha256": trace_sha,
        "commits": sim.store.latest_seq,
        "events": len(sim.trace),
        "started": started,
        "finished": _now(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"commits={sim.store.latest_seq} events={len(sim.trace)} trace={trace_path} sha256={trace_sha}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        trace = tr.Trace.read(args.trace)
    except (OSError, ValueError, KeyError, MalformedTrace) as exc:
        print(f"error: cannot read trace {args.trace}: {exc}", file=sys.stderr)
        return EXIT_TRACE
    names = args.checker or list(CORE_CHECKERS)
    try:
        reports = run_checkers(trace, names, args.max_lag)
    except (MalformedTrace, ScopeNotCovered) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TRACE
    print(summary_table(reports))
    for r in reports:
        for seq, msg in r.violations[: args.show]:
            print(f"  [{r.name}] seq {seq}: {msg}")
        extra = len(r.violations) - args.show
        if extra > 0:
            print(f"  [{r.name}] ... {extra} more")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(
            json.dumps([r.to_dict() for r in reports], indent=2, default=str) + "\n"
        )
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def cmd_bench(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = load_config(args).run_seed
    if args.trials is not None and args.trials < 1:
        raise ConfigInvalid("trials", "must be >= 1")
    if args.which == "scaling":
        _, summaries = run_comm_scaling(
            trials=args.trials or 100, rng=trial_rng(seed, "scaling")
        )
        write_scaling_csv(out / "scaling.csv", summaries)
        for s in summaries:
            print(f"f={s.f:<5} mean={s.mean:.3f} ideal={s.ideal:g} stderr={s.stderr:.3f} reduction={s.reduction:.1%}")
    elif args.which == "tail":
        rhos = args.rho or [0.2, 0.5, 0.8]
        for rho in rhos:
            if not 0.0 < rho <= 1.0:
                raise ConfigInvalid("rho", f"must be in (0, 1], got {rho}")
        config = load_config(args)
        curves = run_convergence_tail(rhos, ticks=config.ticks, config=config)
        write_tail_csv(out / "tail.csv", curves)
        for c in curves:
            mean = sum(c.delays) / len(c.delays) if c.delays else float("nan")
            print(
                f"rho={c.rho:<4} delays={len(c.delays)} censored={c.censored} "
                f"mean={mean:.3f} max={max(c.delays, default=0)} "
                f"lambda={c.lambda_hat:.4f} r2={c.fit_r2:.4f}"
            )
    else:
        eps = 0.2 if args.epsilon is None else args.epsilon
        r = 3 if args.r is None else args.r
        if not 0.0 <= eps < 1.0:
            raise ConfigInvalid("epsilon", f"must be in [0, 1), got {eps}")
        if r < 1:
            raise ConfigInvalid("r", "must be >= 1")
        res = run_epsilon_r_montecarlo(eps, r, args.trials or 100_000, trial_rng(seed, "epsr"))
        write_epsr_csv(out / "epsr.csv", [res])
        print(
            f"epsilon={eps} r={r} trials={res.trials} commits={res.commits} rate={res.rate:.6g} "
            f"ci95=[{res.ci_low:.6g}, {res.ci_high:.6g}] analytic={res.analytic:.6g} "
            f"analytic(0.02,3)={0.02 ** 3:.3g}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicemem", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"slicemem {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", type=Path, help="scenario TOML (default: reference preset)")
        sp.add_argument("--seed", type=int, help="override run_seed")
        sp.add_argument("--comm-prob", type=float, help="delivery probability rho")
        sp.add_argument("--fan-out", type=float, help="fraction of optional predicates kept per slice")
        sp.add_argument("--ticks", type=int, help="ticks with proposals enabled")
        sp.add_argument("--flush-ticks", type=int, help="quiescent ticks after the last proposal")
        sp.add_argument("--max-lag", type=int, help="alignment window, in ticks")

    s = sub.add_parser("simulate", help="run a scenario and write trace, snapshots, manifest")
    scenario_flags(s)
    s.add_argument("--out-dir", default="run", help="output directory")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run trace checkers")
    v.add_argument("trace", type=Path)
    v.add_argument("--checker", action="append", choices=sorted(CHECKERS),
                   help="checker to run; repeat for several (default: the five core checkers)")
    v.add_argument("--max-lag", type=int, help="alignment window (default: from the trace header)")
    v.add_argument("--out-dir", help="also write verify.json here")
    v.add_argument("--show", type=int, default=10, help="violations listed per checker")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="scaling, convergence-tail or epsilon^r benchmarks")
    b.add_argument("which", choices=("scaling", "tail", "epsr"))
    scenario_flags(b)
    b.add_argument("--out-dir", default="bench", help="CSV output directory")
    b.add_argument("--rho", type=float, action="append", help="delivery probability; repeatable (tail)")
    b.add_argument("--epsilon", type=float, help="validator false-accept rate (epsr)")
    b.add_argument("--r", type=int, help="number of validators (epsr)")
    b.add_argument("--trials", type=int, help="trials (scaling: per f; epsr: total)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"error: invalid config field {exc.field!r}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
