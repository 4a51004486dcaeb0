"""Command-line front end: ``geacl run | sweep | compare``.

Exit codes: 0 success, 2 configuration or usage error, 3 a run hit its
tick horizon before its stop condition.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import GOSSIP_MODES, MODES, ConfigError, RunConfig, from_dict, load, \
    packaged_config, to_dict
from .scenarios import run as run_scenario
from .scenarios.common import fmt
from .simnet import write_trace

EXIT_OK, EXIT_CONFIG, EXIT_TIMEOUT = 0, 2, 3

AXES = {
    "N": "synthetic.N",
    "fanout": "gossip.fanout",
    "mode": None,               # gossip variant or communication model, by value
    "drop_p": "network.drop_p",
    "suppression_k": "gossip.suppression_k",
    "k_corroboration": "trust.k",
}

BASE_COLUMNS = ["scenario", "mode", "gossip_mode", "seed", "timeout", "rounds",
                "trace_hash", "env_hash"]


# -- config resolution ----------------------------------------------------------

def resolve(path: Optional[str]) -> Optional[Path]:
    """A config path, falling back on a packaged config of the same bare name."""
    if path is None:
        return None
    p = Path(path)
    if not p.exists() and p.name == path and packaged_config(path).exists():
        return packaged_config(path)
    return p


def load_config(path: Optional[str], overrides: Sequence[str] = (),
                seed: Optional[int] = None) -> RunConfig:
    ovs = list(overrides)
    if seed is not None:
        ovs.append(f"seed={seed}")
    p = resolve(path)
    if p is None:
        return from_dict({}, ovs)
    return load(p, ovs)


def with_values(cfg: RunConfig, pairs: dict) -> RunConfig:
    data = to_dict(cfg)
    return from_dict(data, [(k, v) for k, v in pairs.items()])


def axis_overrides(axis: str, value) -> dict:
    if axis == "mode":
        if value in GOSSIP_MODES:
            return {"gossip.mode": value}
        if value in MODES:
            return {"mode": value}
        raise ConfigError(f"mode: unknown value {value!r}")
    return {AXES[axis]: value}


def parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def seed_list(base: int, spec: Optional[str]) -> list[int]:
    """``"20"`` means 20 seeds from ``base``; ``"3,5,8"`` lists them."""
    if spec is None:
        return [base]
    if "," in spec:
        return [int(s) for s in spec.split(",") if s.strip()]
    n = int(spec)
    if n < 1:
        raise ConfigError("--seeds: need at least one seed")
    return list(range(base, base + n))


def jobs_default() -> int:
    try:
        return max(1, int(os.environ.get("GEACL_SIM_JOBS", "1")))
    except ValueError:
        return 1


# -- execution ------------------------------------------------------------------

def execute(cfg: RunConfig) -> dict:
    """Run one configuration; returns the report as a plain dict (picklable)."""
    report, result = run_scenario(cfg)
    d = report.to_dict()
    d["_trace"] = result.trace if cfg.output.trace else None
    d["_gossip_mode"] = cfg.gossip.mode
    return d


def execute_all(cfgs: list[RunConfig], jobs: int) -> list[dict]:
    """Results in input order regardless of completion order."""
    if jobs <= 1 or len(cfgs) <= 1:
        return [execute(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(execute, cfgs))


def report_json(d: dict) -> str:
    clean = {k: v for k, v in d.items() if not k.startswith("_")}
    return json.dumps(clean, sort_keys=True, indent=2) + "\n"


def report_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "mode", "seed", "metric", "value"])
    for k in sorted(d["metrics"]):
        w.writerow([d["scenario"], d["mode"], d["seed"], k, fmt(d["metrics"][k])])
    return buf.getvalue()


def row_of(d: dict) -> dict:
    row = {"scenario": d["scenario"], "mode": d["mode"], "gossip_mode": d["_gossip_mode"],
           "seed": d["seed"], "timeout": d["timeout"], "rounds": d["rounds"],
           "trace_hash": d["trace_hash"], "env_hash": d["env_hash"]}
    for k, v in d["params"].items():
        row[f"param_{k}"] = v
    for k, v in d["metrics"].items():
        row[k] = v
    return row


def table_csv(rows: list[dict], lead: Sequence[str] = ()) -> str:
    cols = list(lead) + BASE_COLUMNS
    extra = sorted({k for r in rows for k in r} - set(cols))
    params = [k for k in extra if k.startswith("param_")]
    cols += params + [k for k in extra if k not in params]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def out_dir(args, cfg: RunConfig) -> Path:
    d = Path(args.out or cfg.output.dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- commands ---------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = load_config(args.config, args.override, args.seed)
    if args.trace:
        cfg.output.trace = True
    d = execute(cfg)
    out = out_dir(args, cfg)
    stem = f"{cfg.scenario}_{cfg.mode}_seed{cfg.seed}"
    (out / f"{stem}.json").write_text(report_json(d))
    (out / f"{stem}.csv").write_text(report_csv(d))
    if d["_trace"] is not None:
        write_trace(d["_trace"], out / f"{stem}.trace.ndjson")
    print(f"{stem}: trace {d['trace_hash'][:16]} -> {out / (stem + '.json')}")
    if d["timeout"]:
        print("timeout: stop condition not reached before max_ticks", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.override, args.seed)
    values = [parse_value(v) for v in (args.values or "").split(",") if v.strip()]
    if not values:
        raise ConfigError("--values: empty value list")
    seeds = seed_list(cfg.seed, args.seeds)
    cfgs, lead = [], []
    for v in values:
        for s in seeds:
            cfgs.append(with_values(cfg, {**axis_overrides(args.axis, v), "seed": s}))
            lead.append({"axis": args.axis, "value": v})
    results = execute_all(cfgs, args.jobs)
    rows = [{**l, **row_of(d)} for l, d in zip(lead, results)]
    out = out_dir(args, cfg)
    path = out / f"sweep_{cfg.scenario}_{args.axis}.csv"
    path.write_text(table_csv(rows, lead=("axis", "value")))
    print(f"{len(rows)} runs -> {path}")
    return EXIT_TIMEOUT if any(d["timeout"] for d in results) else EXIT_OK


def compare_table(pairs: list[tuple[dict, dict]]) -> dict:
    """Per-metric paired deltas (gossip - baseline) and win counts."""
    metrics = sorted({k for b, g in pairs for k in b["metrics"]})
    rows, summary = [], {}
    for m in metrics:
        deltas = []
        for b, g in pairs:
            x, y = b["metrics"].get(m), g["metrics"].get(m)
            ok = isinstance(x, (int, float)) and isinstance(y, (int, float)) \
                and not isinstance(x, bool) and not isinstance(y, bool)
            deltas.append(y - x if ok else None)
            rows.append({"seed": b["seed"], "metric": m, "baseline": x, "gossip": y,
                         "delta": y - x if ok else None})
        known = [d for d in deltas if d is not None]
        summary[m] = {"paired": len(known),
                      "gossip_higher": sum(1 for d in known if d > 0),
                      "gossip_lower": sum(1 for d in known if d < 0),
                      "ties": sum(1 for d in known if d == 0),
                      "mean_delta": sum(known) / len(known) if known else None}
    return {"rows": rows, "summary": summary}


def cmd_compare(args) -> int:
    cfg = load_config(args.config, args.override, args.seed)
    if cfg.scenario not in ("factory", "disaster"):
        raise ConfigError(f"compare: scenario {cfg.scenario!r} runs in a single mode")
    seeds = seed_list(cfg.seed, args.seeds)
    cfgs = []
    for s in seeds:
        for mode in ("BaselineDirect", "GossipAugmented"):
            cfgs.append(with_values(cfg, {"mode": mode, "seed": s}))
    results = execute_all(cfgs, args.jobs)
    pairs = [(results[i], results[i + 1]) for i in range(0, len(results), 2)]
    table = compare_table(pairs)
    out = out_dir(args, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "metric", "baseline", "gossip", "delta"])
    for r in table["rows"]:
        w.writerow([r["seed"], r["metric"], fmt(r["baseline"]), fmt(r["gossip"]),
                    fmt(r["delta"])])
    stem = f"compare_{cfg.scenario}"
    (out / f"{stem}.csv").write_text(buf.getvalue())
    (out / f"{stem}.json").write_text(json.dumps(
        {"scenario": cfg.scenario, "seeds": seeds, "summary": table["summary"],
         "rows": table["rows"]}, sort_keys=True, indent=2) + "\n")
    print(f"{len(results)} runs, {len(pairs)} pairs -> {out / (stem + '.csv')}")
    return EXIT_TIMEOUT if any(d["timeout"] for d in results) else EXIT_OK


# -- entry point ------------------------------------------------------------------

def parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (bare packaged names work too)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit master seed")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, repeatable")
    common.add_argument("--out", help="output directory (default: output.dir)")
    common.add_argument("--jobs", type=int, default=jobs_default(),
                        help="parallel runs (default: $GEACL_SIM_JOBS or 1)")
    p = argparse.ArgumentParser(prog="geacl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"geacl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="one run, report as JSON + CSV")
    r.add_argument("--trace", action="store_true", help="persist the event trace")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", parents=[common], help="values x seeds, one CSV row per run")
    s.add_argument("--axis", required=True, choices=sorted(AXES))
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--seeds", help="seed count from --seed, or a comma list")
    s.set_defaults(func=cmd_sweep)
    c = sub.add_parser("compare", parents=[common], help="paired baseline/gossip runs")
    c.add_argument("--seeds", help="seed count from --seed, or a comma list")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    p = parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
