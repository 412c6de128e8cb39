"""Command-line entry point: ``robustflow generate|estimate|detect|evaluate``.

Exit codes: 0 on success, 2 for usage/config/input-format problems, 3 for
data or model errors (infeasible refinement, alphabet mismatch, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import persist
from .errors import AlphabetMismatch, EmptyFamily, Infeasible, RobustFlowError
from .pipeline import RunConfig, detect_flows, estimate, evaluate, horizon_for
from .traffic_gen import GeneratorConfig, GroundTruth, generate

logger = logging.getLogger("robustflow")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    """Bad arguments, config or input file; maps to exit code 2."""


def _load_json(path):
    try:
        return persist.read_json(path)
    except FileNotFoundError as exc:
        raise UsageError(f"config not found: {path}") from exc
    except persist.FormatError as exc:
        raise UsageError(str(exc)) from exc


def _run_config(args) -> RunConfig:
    try:
        cfg = RunConfig.from_json(_load_json(args.config)) if args.config else RunConfig()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid run config: {exc}") from exc
    det = cfg.detection
    overrides = {}
    if getattr(args, "lambda_free", None) is not None:
        overrides["lambda_free"] = args.lambda_free
    if getattr(args, "lambda_based", None) is not None:
        overrides["lambda_based"] = args.lambda_based
    try:
        if overrides:
            cfg.detection = dataclasses.replace(det, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _distinct_paths(*paths):
    resolved = [Path(p).resolve() for p in paths if p is not None]
    if len(set(resolved)) != len(resolved):
        raise UsageError("input and output paths must be distinct")


def _read_flows(path):
    try:
        flows = persist.read_flows(path)
    except FileNotFoundError as exc:
        raise UsageError(f"flow file not found: {path}") from exc
    except persist.FormatError as exc:
        raise UsageError(str(exc)) from exc
    if not flows:
        raise UsageError(f"{path} contains no flows")
    return flows


def cmd_generate(args) -> int:
    try:
        gen = GeneratorConfig.from_json(_load_json(args.config))
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid generator config: {exc}") from exc
    if args.seed is not None:
        gen.seed = args.seed
    _distinct_paths(args.config, args.out, args.truth)
    flows, truth = generate(gen.nodes, gen.profile, gen.horizon_s, gen.anomalies, gen.seed, gen.start_clock_s)
    persist.write_flows(args.out, flows)
    persist.write_json(args.truth, truth.to_json())
    print(f"generated {len(flows)} flows from {len(gen.nodes)} nodes over {gen.horizon_s:g} s")
    for a in truth.anomalies:
        print(f"  anomaly {a['id']}: {a['ip']} [{a['start']:g}, {a['end']:g}) x{a['mean_size_multiplier']:g}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _run_config(args)
    _distinct_paths(args.flows, args.config, args.model, args.families, args.report)
    flows = _read_flows(args.flows)
    result = estimate(flows, cfg, args.method)
    persist.write_json(args.model, persist.feature_model_to_json(result.features))
    persist.write_families(args.families, result.robust, result.vanilla)
    if args.report:
        report = result.report()
        report["config"] = cfg.to_json()
        report["flows"] = len(flows)
        persist.write_json(args.report, report)
    for name, est in result.estimates.items():
        print(f"feature {name}: t_d={est.t_d} t_p={est.t_p}")
    for label, fam, cand in zip(("model-free", "model-based"), result.robust, result.candidates):
        if fam is not None:
            print(f"{label}: {len(fam)} of {len(cand)} candidates selected")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _run_config(args)
    _distinct_paths(args.flows, args.config, args.model, args.families, args.out)
    flows = _read_flows(args.flows)
    try:
        model = persist.feature_model_from_json(_load_json(args.model))
        free_fam, based_fam = persist.read_families(args.families, vanilla=args.vanilla)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except persist.FormatError as exc:
        raise UsageError(str(exc)) from exc
    if args.method == "free":
        based_fam = None
    elif args.method == "based":
        free_fam = None
    if free_fam is None and based_fam is None:
        wanted = "" if args.method == "both" else f"model-{args.method} "
        raise EmptyFamily(f"{args.families} holds no {wanted}PL family; re-run estimate with that --method")
    verdicts = detect_flows(flows, model, (free_fam, based_fam), cfg, horizon_for(flows, cfg))
    persist.write_timeline(args.out, verdicts)
    label = "vanilla" if args.vanilla else "robust"
    n_free = sum(v.alarm_free for v in verdicts)
    n_based = sum(v.alarm_based for v in verdicts)
    print(f"{label} detection over {len(verdicts)} windows: "
          f"{n_free} model-free alarms, {n_based} model-based alarms")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    _distinct_paths(args.timeline, args.truth, args.out)
    try:
        verdicts = persist.read_timeline(args.timeline)
        truth = GroundTruth.from_json(_load_json(args.truth))
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    except (persist.FormatError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot parse inputs: {exc}") from exc
    metrics = evaluate(verdicts, truth, cfg.windowing.window_size_s)
    persist.write_json(args.out, metrics)
    for name in ("free", "based"):
        m = metrics[name]
        if m["scored_windows"]:
            print(f"{name}: detected {m['detected']}/{metrics['anomalies']} anomalies, "
                  f"TP={m['tp']} FP={m['fp']} FN={m['fn']} TN={m['tn']}, "
                  f"false-alarm rate {m['false_alarm_rate']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def lambdas(sp):
        sp.add_argument("--lambda-free", type=float, help="model-free threshold (overrides config)")
        sp.add_argument("--lambda-based", type=float, help="model-based threshold (overrides config)")

    g = sub.add_parser("generate", help="synthesize diurnal flow traffic")
    g.add_argument("--config", required=True, help="generator config JSON")
    g.add_argument("--out", required=True, help="flow CSV to write")
    g.add_argument("--truth", required=True, help="ground-truth JSON to write")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="learn and refine PL families from reference flows")
    e.add_argument("flows", help="reference flow CSV")
    e.add_argument("--config", help="run config JSON")
    e.add_argument("--model", required=True, help="feature model JSON to write")
    e.add_argument("--families", required=True, help="PL family JSON to write")
    e.add_argument("--report", help="refinement report JSON to write")
    e.add_argument("--seed", type=int, help="k-means seed (overrides config)")
    e.add_argument("--method", choices=("free", "based", "both"), default="both",
                   help="which PL families to refine")
    lambdas(e)
    e.set_defaults(func=cmd_estimate)

    d = sub.add_parser("detect", help="run the window tests on a flow CSV")
    d.add_argument("flows", help="flow CSV to test")
    d.add_argument("--config", help="run config JSON")
    d.add_argument("--model", required=True, help="feature model JSON")
    d.add_argument("--families", required=True, help="PL family JSON")
    d.add_argument("--out", required=True, help="timeline CSV to write")
    d.add_argument("--vanilla", action="store_true", help="use the single stationary PL instead")
    d.add_argument("--method", choices=("free", "based", "both"), default="both")
    lambdas(d)
    d.set_defaults(func=cmd_detect)

    v = sub.add_parser("evaluate", help="score a timeline against ground truth")
    v.add_argument("timeline", help="timeline CSV from detect")
    v.add_argument("truth", help="ground-truth JSON from generate")
    v.add_argument("--config", help="run config JSON (for the window size)")
    v.add_argument("--out", required=True, help="metrics JSON to write")
    v.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as exc:
        print(f"error: {exc}\nhint: raise the threshold (--lambda-free / --lambda-based) "
              "so every reference window is covered by some candidate", file=sys.stderr)
        return EXIT_DATA
    except AlphabetMismatch as exc:
        print(f"error: {exc}\nhint: detect with the model file written by the same estimate run",
              file=sys.stderr)
        return EXIT_DATA
    except RobustFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
