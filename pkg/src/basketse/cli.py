"""Command-line interface: ``basketse <command> ...`` (or ``python -m basketse``).

Every command prints its primary output (JSON or CSV) to stdout or writes
it to ``--output``; a run manifest goes to ``--manifest`` or, when an output
file is given, next to it as ``<output>.manifest.json``. Primary outputs
carry no timestamps, so identical invocations give byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import pandas as pd

from . import __version__
from .errors import BasketSEError, ConfigError
from .estimate import METHODS, estimate_se
from .inference import INF, coverage_curve, power_curve, standardized_power
from .ingest import parse_generic, parse_olist, parse_uci, summarize, write_generic_csv
from .model import MetricKind, metric_value
from .resampling import BootstrapConfig, trajectory, trajectory_frame
from .simulation import SynthConfig, replication_dataset, run_aa, run_ab, run_simulate

FLOAT_FORMAT = "%.10g"
B_HELP = "bootstrap resamples (default 500; 500-1000 keeps the SE's coefficient of variation under 5%%)"


def _clean_json(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if hasattr(obj, "item"):
        return _clean_json(obj.item())
    return obj


def render(payload, fmt: str) -> str:
    """JSON for dicts/frames, CSV for frames or flat dicts."""
    if fmt == "json":
        if isinstance(payload, pd.DataFrame):
            payload = payload.to_dict(orient="records")
        return json.dumps(_clean_json(payload), indent=2, sort_keys=True) + "\n"
    frame = payload if isinstance(payload, pd.DataFrame) else pd.DataFrame([payload])
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buf.getvalue()


def _digest(path: Path) -> dict:
    if path.is_dir():
        return {str(p.relative_to(path)): _digest(p) for p in sorted(path.iterdir()) if p.is_file()}
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _parse_list(text, cast=float):
    return [cast(v) for v in str(text).split(",") if v.strip()]


def _load_dataset(args):
    adapter = getattr(args, "adapter", "generic")
    if adapter == "uci":
        return parse_uci(args.input)
    if adapter == "olist":
        return parse_olist(args.input)
    return parse_generic(args.input, args.mapping, delimiter=args.delimiter)


def _load_config(args) -> SynthConfig:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    return SynthConfig.from_dict(data)


def cmd_ingest(args):
    dataset, report = _load_dataset(args)
    if not args.output:
        raise ConfigError("ingest needs --output for the cleaned CSV")
    write_generic_csv(dataset, args.output)
    report_path = Path(args.report or f"{args.output}.report.json")
    report_path.write_text(report.to_json(indent=2) + "\n")
    return report.to_dict() if args.format == "json" else {
        "rows_read": report.rows_read, "rows_kept": report.rows_kept,
        **{f"dropped_{k}": v for k, v in report.dropped.items()},
        "users": report.users, "transactions": report.transactions, "units": report.units,
        "products": report.products, "span_days": report.span_days,
    }


def cmd_summary(args):
    dataset, _ = _load_dataset(args)
    return summarize(dataset).to_dict()


def _window_frac(args):
    if args.window_frac is None:
        return None
    if not 0 < args.window_frac <= 1:
        raise ConfigError("--window-frac must be in (0, 1]")
    return args.window_frac


def cmd_se(args):
    dataset, _ = _load_dataset(args)
    frac = _window_frac(args)
    if frac is not None:
        dataset = dataset.expanding_window(frac)
    est = estimate_se(dataset, args.metric, args.method, B=args.b, seed=args.seed,
                      batches=args.batches, threads=args.threads)
    out = {"metric": MetricKind.parse(args.metric).value, "estimate": metric_value(dataset, args.metric),
           "window_frac": frac if frac is not None else 1.0}
    out.update(est.to_dict())
    return out


def cmd_trajectory(args):
    dataset, _ = _load_dataset(args)
    config = BootstrapConfig(seed=args.seed, B=args.b, mode=args.mode, batches=args.batches,
                             threads=args.threads)
    return trajectory_frame(trajectory(dataset, args.metric, args.points, config), config)


def cmd_power(args):
    alphas = _parse_list(args.alpha)
    multiples = _parse_list(args.multiples) if args.multiples else [1.0]
    if args.theta_over_se is None:
        return power_curve(multiples, alphas, args.target_power, args.df)
    rows = []
    for alpha in alphas:
        for m in multiples:
            rows.append((m, standardized_power(args.theta_over_se / m, alpha, args.df), alpha))
    return pd.DataFrame(rows, columns=["multiple", "value", "alpha"])


def cmd_coverage(args):
    return coverage_curve(_parse_list(args.multiple), _parse_list(args.nominal), args.df)


def _methods(args):
    return _parse_list(args.methods, str)


def cmd_simulate(args):
    config = _load_config(args)
    if args.export:
        write_generic_csv(replication_dataset(config, args.seed, 0), args.export)
    result = run_simulate(config, args.reps, _methods(args), B=args.b, seed=args.seed, metric=args.metric)
    return _harness_payload(result, args.format)


def cmd_aa(args):
    result = run_aa(_load_config(args), args.reps, _methods(args), B=args.b, seed=args.seed,
                    metric=args.metric, alpha=args.alpha, workers=args.threads)
    return _harness_payload(result, args.format)


def cmd_ab(args):
    result = run_ab(_load_config(args), args.reps, args.effect, _methods(args), B=args.b, seed=args.seed,
                    metric=args.metric, alpha=args.alpha, workers=args.threads)
    return _harness_payload(result, args.format)


def _harness_payload(result, fmt):
    if fmt == "json":
        return result.to_dict()
    return pd.DataFrame(
        [
            {
                "method": m, "rate": result.rate.get(m, math.nan), "rate_se": result.rate_se.get(m, math.nan),
                "mean_se": result.mean_se[m], "mean_ratio_to_vanilla": result.mean_ratio_to_vanilla.get(m, math.nan),
                "kind": result.kind, "reps": result.reps, "B": result.B, "seed": result.seed,
            }
            for m in result.methods
        ]
    )


def _add_common(p, default_format="json"):
    p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("--output", help="write the primary output here instead of stdout")
    p.add_argument("--manifest", help="write the run manifest here")
    p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")


def _add_input(p, adapters=("generic", "uci", "olist")):
    p.add_argument("--input", required=True, help="data file (or Olist directory)")
    p.add_argument("--adapter", choices=adapters, default="generic")
    p.add_argument("--mapping", help="JSON column mapping for the generic adapter")
    p.add_argument("--delimiter", default=",")


def _add_harness(p, methods_default):
    p.add_argument("--config", help="JSON SynthConfig overrides")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--metric", default="abv", choices=[m.value for m in MetricKind])
    p.add_argument("--methods", default=methods_default, help=f"comma list from {', '.join(METHODS)}")
    p.add_argument("--b", type=int, default=200, help="bootstrap resamples per group")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basketse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean a raw dataset into the generic CSV layout")
    _add_input(p)
    _add_common(p)
    p.add_argument("--report", help="CleaningReport JSON path (default <output>.report.json)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("summary", help="users, transactions, units, products and span")
    _add_input(p)
    _add_common(p)
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("se", help="standard error of a metric")
    _add_input(p)
    _add_common(p)
    p.add_argument("--metric", required=True, choices=[m.value for m in MetricKind])
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--b", type=int, default=500, help=B_HELP)
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--seed", type=int, help="required for boot1/boot2")
    p.add_argument("--window-frac", type=float, help="use the first fraction of the time span")
    p.set_defaults(func=cmd_se)

    p = sub.add_parser("trajectory", help="bootstrap vs vanilla SE over expanding windows")
    _add_input(p)
    _add_common(p, "csv")
    p.add_argument("--metric", required=True, choices=[m.value for m in MetricKind])
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--b", type=int, default=500, help=B_HELP)
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mode", choices=("one-way", "multi-way"), default="one-way")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("power", help="two-tailed test power at SE multiples")
    _add_common(p, "csv")
    p.add_argument("--alpha", default="0.05", help="significance level(s), comma separated")
    p.add_argument("--theta-over-se", type=float,
                   help="standardised effect at multiple 1 (default: calibrated to --target-power)")
    p.add_argument("--target-power", type=float, default=0.8)
    p.add_argument("--multiples", help="comma-separated SE multiples (default 1)")
    p.add_argument("--df", type=float, default=INF, help="degrees of freedom (default inf: z-test)")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("coverage", help="true CI coverage when the SE is understated")
    _add_common(p, "csv")
    p.add_argument("--nominal", default="0.95", help="nominal level(s), comma separated")
    p.add_argument("--multiple", required=True, help="SE multiple(s), comma separated")
    p.add_argument("--df", type=float, default=INF)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("simulate", help="mean SE per method over synthetic datasets")
    _add_common(p)
    _add_harness(p, "vanilla,boot1,delta")
    p.add_argument("--export", help="also write replication 0's dataset as generic CSV")
    p.set_defaults(func=cmd_simulate)

    for name, helptext in (("aa", "A/A coverage harness"), ("ab", "A/B power harness")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_harness(p, "vanilla,boot1")
        p.add_argument("--alpha", type=float, default=0.05)
        if name == "ab":
            p.add_argument("--effect", type=float, required=True, help="multiplicative lift on spend")
        p.set_defaults(func=cmd_ab if name == "ab" else cmd_aa)
    return parser


def _manifest(args, argv, runtime):
    params = {k: v for k, v in vars(args).items() if k != "func"}
    inputs = {}
    for key in ("input", "config", "mapping"):
        value = params.get(key)
        if value and Path(value).exists():
            inputs[value] = _digest(Path(value))
    return {
        "command": args.command,
        "argv": list(argv),
        "parameters": params,
        "seeds": [params["seed"]] if params.get("seed") is not None else [],
        "input_digests": inputs,
        "version": __version__,
        "runtime_seconds": runtime,
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    output = args.output
    started = time.perf_counter()
    try:
        payload = args.func(args)
    except (BasketSEError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    runtime = time.perf_counter() - started
    text = render(payload, args.format)
    # ingest's --output is the cleaned CSV; its report goes to stdout
    if args.output and args.command != "ingest":
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    manifest_path = args.manifest or (f"{output}.manifest.json" if output else None)
    if manifest_path:
        Path(manifest_path).write_text(json.dumps(_clean_json(_manifest(args, argv, runtime)), indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
