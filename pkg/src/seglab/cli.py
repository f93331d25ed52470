"""Command-line entry point: ``seglab {gen|run|sweep|verify|plot}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from seglab import harness as H
from seglab import problems as P
from seglab.plot import render_svg

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

GEN_KINDS = ("monotone", "strongly-monotone", "divergence", "variance-floor", "rr-lb-seg", "rr-lb-sgda")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags below override its fields")
    p.add_argument("--preset", choices=sorted(H.PRESETS), help="start from a named preset")
    p.add_argument("--fast", action="store_true", help=f"use a {H.FAST_BUDGET}-pass budget")
    p.add_argument("--methods", help="comma-separated, e.g. SEG-FFA,SEG-RR:half,SEG-US:scale=0.5")
    p.add_argument("--eta", type=float, help="constant stepsize for every method")
    p.add_argument("--poly", help="polynomial decay 'eta0,shift,exponent' (eta0 may be 'auto')")
    p.add_argument("--problem", help="serialized problem JSON to use for every instance")
    p.add_argument("--budget", type=int, dest="budget_passes", help="budget in passes")
    p.add_argument("--stride", type=int, dest="checkpoint_stride", help="checkpoint stride in passes")
    p.add_argument("--instances", type=int, dest="instance_count", help="number of random instances")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    p.add_argument("--init", choices=("normal", "zero"), help="initial point")
    p.add_argument("--out", dest="output_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seglab", description="Shuffling-based stochastic extragradient experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a problem instance as JSON")
    g.add_argument("--kind", required=True, choices=GEN_KINDS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dx", type=int, default=20)
    g.add_argument("--dy", type=int, default=20)
    g.add_argument("--n", type=int, default=40)
    g.add_argument("--L", type=float, default=1.0)
    g.add_argument("--mu", type=float, default=0.5)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--out", default=".", help="output directory")

    r = sub.add_parser("run", help="run methods on random instances and aggregate")
    _add_experiment_flags(r)

    s = sub.add_parser("sweep", help="run a constant-stepsize grid")
    _add_experiment_flags(s)
    s.add_argument("--mantissas", default="1,2,5", help="grid mantissas a in a x 10^b")
    s.add_argument("--exponents", default="-4,-3", help="grid exponents b in a x 10^b")
    s.add_argument("--etas", help="explicit comma-separated stepsizes (overrides the a x 10^b grid)")

    v = sub.add_parser("verify", help="run verification checks")
    v.add_argument("suite", choices=("counterexamples", "error-order", "floor", "phi", "all"))
    v.add_argument("--out", help="write the JSON report here")

    pl = sub.add_parser("plot", help="plot aggregate CSVs as an SVG line chart")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.add_argument("--title", default="")
    return parser


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def resolve_config(args) -> H.ExperimentConfig:
    doc: dict = {}
    if args.preset:
        doc = H.preset_config(args.preset, fast=args.fast).to_dict()
    if args.config:
        try:
            doc.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if args.fast:
        doc["budget_passes"] = H.FAST_BUDGET
        doc.setdefault("checkpoint_stride", H.FAST_BUDGET // 100)
        doc["checkpoint_stride"] = min(doc["checkpoint_stride"], H.FAST_BUDGET // 100)
    for key in ("budget_passes", "checkpoint_stride", "instance_count", "master_seed", "init", "output_dir"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if args.methods is not None:
        doc["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
        doc["schedules"] = {}
        if not doc["methods"]:
            raise UsageError("--methods is empty")
    if args.eta is not None:
        doc["schedule"] = {"kind": "constant", "eta": args.eta}
    if args.poly:
        parts = args.poly.split(",")
        if len(parts) != 3:
            raise UsageError("--poly expects eta0,shift,exponent")
        eta0 = parts[0] if parts[0] == "auto" else float(parts[0])
        doc["schedule"] = {"kind": "poly", "eta0": eta0, "shift": float(parts[1]), "exponent": float(parts[2])}
    if args.problem:
        doc["problem"] = {"path": args.problem}
    if "problem" not in doc:
        raise UsageError("no problem source: use --preset, --config or --problem")
    if "methods" not in doc:
        raise UsageError("no methods: use --preset, --config or --methods")
    if not doc.get("output_dir"):
        raise UsageError("no output directory: use --out")
    return H.ExperimentConfig.from_dict(doc)


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "monotone":
        prob = P.gen_monotone(args.seed, args.dx, args.dy, args.n)
    elif kind == "strongly-monotone":
        prob = P.gen_strongly_monotone(args.seed, args.dx, args.dy, args.n)
    elif kind == "divergence":
        prob = P.divergence_example(args.L)
    elif kind == "variance-floor":
        prob = P.variance_floor_example(args.L, args.sigma)
    else:
        prob = P.rr_lower_bound_example(args.L, args.mu, args.sigma, args.n, kind.rsplit("-", 1)[1])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{kind}-{args.seed}.json"
    P.save_problem(prob, path)
    print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    config = resolve_config(args)
    result = H.run_experiment(config)
    H.write_experiment(result, config.output_dir)
    summary = result.summary()
    for m in summary["methods"]:
        flag = f" diverged on instances {m['diverged_instances']}" if m["diverged_instances"] else ""
        print(f"{m['method']:>18s}  pass {m['final_pass']:>7d}  geo-mean ratio {m['final_geo_mean_ratio']:.4e}{flag}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = resolve_config(args)
    if args.etas:
        etas = sorted(set(_floats(args.etas)))
    else:
        etas = H.stepsize_grid([int(a) if a.is_integer() else a for a in _floats(args.mantissas)],
                               [int(b) for b in _floats(args.exponents)])
    if not etas:
        raise UsageError("stepsize grid is empty")
    results = H.run_sweep(config, etas)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(H.sweep_csv(results))
    (out / "config.json").write_text(json.dumps({**config.to_dict(), "etas": etas}, indent=2, sort_keys=True) + "\n")
    for eta, res in results:
        finals = ", ".join(f"{m['method']}={m['final_geo_mean_ratio']:.3e}" for m in res.summary()["methods"])
        print(f"eta={eta:g}: {finals}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from seglab.verify import run_suite

    report = run_suite(args.suite)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    for c in report["checks"]:
        tag = "PASS" if c["pass"] else ("FAIL" if c["hard"] else "soft-fail")
        print(f"[{tag}] {c['check_name']}: observed {c['observed']} (expected {c['expected']}, tol {c['tolerance']})")
    print("suite", report["suite"], "passed" if report["passed"] else "FAILED")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_plot(args) -> int:
    merged: dict = {}
    for path in args.csv:
        for label, pts in H.read_aggregate(path).items():
            key = label if label not in merged else f"{label} ({Path(path).stem})"
            merged[key] = pts
    svg = render_svg(merged, args.title)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(svg)
    print(args.out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"seglab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        # invalid arguments, bad problem files, unwritable outputs
        print(f"seglab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
