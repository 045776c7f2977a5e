"""Command-line interface: ``cascadehist fit|eval|export|gen|benchmark``.

Exit codes: 0 success, 2 usage error, 3 data or schema error, 4 a search
or enumeration guard tripped.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .anneal import SearchGuardError
from .baselines import GENERATORS, titanic_schema
from .evaluation import loo_least_squares, test_log_likelihood
from .fitting import DEFAULTS, FitConfig, fit_model, sub_seed
from .schema import DataError, SchemaError, ingest_csv, load_schema, save_schema, split_dataset, write_csv
from .serialize import ModelFileError, load_model, model_to_dict, save_model, to_dot, to_text
from .tree import LeafStats, Tree

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_GUARD = 4

BENCH_COLUMNS = ["split", "model", "n_leaves", "test_loglik", "loo", "fit_seconds"]


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a checkout
        return "0+unknown"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command, argv, config, inputs, outputs, started) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "outputs": [str(p) for p in outputs],
        "tool_version": _version(),
        "python": platform.python_version(),
        "wall_seconds": round(time.perf_counter() - started, 6),
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


def _fmt_metric(v: float) -> str:
    return "-inf" if v == -math.inf else f"{v:.6f}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_data(args, schema):
    return ingest_csv(args.data, schema, ignore_extra=args.ignore_extra_columns)


def _fit_config(args, model: str, lams=None) -> FitConfig:
    warm = None
    if getattr(args, "warm_start", None):
        fitted, _ = load_model(args.warm_start)
        if not isinstance(fitted.model, Tree):
            raise UsageError("--warm-start needs a tree model file")
        warm = fitted.model
    try:
        return FitConfig(
            model=model,
            lams=lams if lams is not None else (args.lam or ()),
            alpha=args.alpha, eta=args.eta, gamma=args.gamma,
            max_card=args.max_card, min_support=args.min_support,
            iterations=args.iters, restart_period=args.restart_period,
            chains=args.chains, seed=args.seed,
            omit_dirichlet_normalizer=args.omit_dirichlet_normalizer,
            warm_start=warm,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_fit(args, argv) -> int:
    started = time.perf_counter()
    schema = load_schema(args.schema)
    data = _load_data(args, schema)
    if args.model == "list" and args.max_card > schema.p:
        raise UsageError(f"--max-card {args.max_card} exceeds the number of features ({schema.p})")
    config = _fit_config(args, args.model)
    if config.warm_start is not None and config.warm_start.schema != schema:
        raise UsageError("warm-start tree was fitted on a different schema")
    out = fit_model(data, config)
    extra = {}
    if out.selection:
        extra["selection"] = [{"lambda": lam, "validation_loglik": _fmt_metric(v)} for lam, v in out.selection]
    if out.rhat is not None:
        extra["rhat"] = out.rhat if math.isfinite(out.rhat) else str(out.rhat)
    obj = model_to_dict(out.fitted, out.kind, out.hyper, out.score, extra)
    save_model(obj, args.out)
    outputs = [args.out]
    if args.trace and out.result is not None:
        out.result.write_trace_csv(args.trace)
        outputs.append(args.trace)
    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, "fit", argv, config.resolved(), [args.data, args.schema, args.warm_start],
                    outputs, started)
    if out.score is not None:
        print(f"log_posterior: {out.score:.6f}")
    print(f"leaves: {out.fitted.n_leaves}")
    if out.rhat is not None:
        print(f"rhat: {out.rhat:.4f}")
    return 0


def cmd_eval(args, argv) -> int:
    started = time.perf_counter()
    fitted, _ = load_model(args.model_file)
    schema = fitted.schema
    if args.schema is not None and load_schema(args.schema) != schema:
        raise DataError("schema file does not match the model's schema")
    data = _load_data(args, schema)
    if args.metric == "loglik":
        value = test_log_likelihood(fitted, data, smoothing=args.smoothing, alpha=args.alpha)
    else:
        if data.n < 2:
            raise DataError("loo needs at least 2 rows")
        value = loo_least_squares(_restats(fitted, data))
    print(_fmt_metric(value))
    manifest = args.manifest or f"{args.model_file}.eval.manifest.json"
    _write_manifest(manifest, "eval", argv,
                    {"metric": args.metric, "smoothing": args.smoothing, "alpha": args.alpha,
                     "value": _fmt_metric(value)},
                    [args.model_file, args.data, args.schema], [], started)
    return 0


def _restats(fitted, data):
    """Leaf statistics of ``fitted``'s structure recomputed on ``data``."""
    pos = fitted.leaf_positions(data.unique_rows)
    if np.any(pos < 0):
        raise DataError("data fall outside the model's bins")
    counts = np.bincount(pos, weights=data.weights, minlength=fitted.n_leaves).astype(np.int64)
    st = fitted.stats
    return LeafStats(st.leaf_ids, counts, st.volumes, data.n)


def cmd_export(args, argv) -> int:
    started = time.perf_counter()
    fitted, obj = load_model(args.model_file)
    if args.format == "dot":
        text = to_dot(fitted)
    elif args.format == "text":
        text = to_text(fitted)
    else:
        text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    manifest = args.manifest or f"{args.out or args.model_file + '.export'}.manifest.json"
    _write_manifest(manifest, "export", argv, {"format": args.format},
                    [args.model_file], [args.out] if args.out else [], started)
    return 0


def cmd_gen(args, argv) -> int:
    started = time.perf_counter()
    outputs = []
    if args.dataset == "titanic":
        if args.out:
            raise UsageError("titanic data are not bundled; only --schema-out is available")
        schema = titanic_schema()
    else:
        data = GENERATORS[args.dataset]()
        schema = data.schema
        if args.out:
            write_csv(data, args.out)
            outputs.append(args.out)
    if args.schema_out:
        save_schema(schema, args.schema_out)
        outputs.append(args.schema_out)
    if not outputs:
        raise UsageError("nothing to write: give --out and/or --schema-out")
    manifest = args.manifest or f"{outputs[0]}.manifest.json"
    _write_manifest(manifest, "gen", argv, {"dataset": args.dataset}, [], outputs, started)
    return 0


def cmd_benchmark(args, argv) -> int:
    started = time.perf_counter()
    schema = load_schema(args.schema)
    data = _load_data(args, schema)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    bad = [m for m in models if m not in ("leaf", "branch", "list", "histogram")]
    if bad or not models:
        raise UsageError(f"unknown model(s) {bad}; choose from leaf,branch,list,histogram")
    lam_for = {"leaf": args.lambda_leaf, "branch": args.lambda_branch, "list": args.lambda_list,
               "histogram": ()}
    # one shared parse for the other hyperparameters
    args.lam = None
    args.max_card = min(args.max_card, schema.p)
    rows = []
    configs = {}
    for k in range(args.splits):
        train, test = split_dataset(data, 0.5, sub_seed(args.seed, "split", k))
        for model in models:
            cfg = _fit_config(args, model, lam_for[model])
            cfg = replace(cfg, seed=sub_seed(args.seed, "fit", k, model))
            configs[model] = cfg.resolved()
            t0 = time.perf_counter()
            out = fit_model(train, cfg)
            secs = time.perf_counter() - t0
            ll = test_log_likelihood(out.fitted, test)
            loo = loo_least_squares(out.fitted.stats) if train.n >= 2 else math.nan
            timing = "NA" if args.no_timings else f"{secs:.3f}"
            rows.append([k, model, out.fitted.n_leaves, _fmt_metric(ll), _fmt_metric(loo), timing])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        w.writerows(rows)
    manifest = args.manifest or f"{args.out}.manifest.json"
    cfg = {"splits": args.splits, "seed": args.seed, "models": models, "fits": configs}
    _write_manifest(manifest, "benchmark", argv, cfg, [args.data, args.schema], [args.out], started)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_hyper_args(p, lam_flags: bool = True) -> None:
    if lam_flags:
        p.add_argument("--lambda", dest="lam", type=_float_list, default=None,
                       help="Poisson mean, or a comma list selected on an internal 80/20 split "
                            "(defaults: leaf 5, branch 2, list 3)")
    p.add_argument("--alpha", type=float, default=None,
                   help="Dirichlet concentration (defaults: 2 for trees, 1 for lists)")
    p.add_argument("--eta", type=float, default=None, help="rule-size Poisson mean for lists (default 1)")
    p.add_argument("--gamma", type=float, default=None,
                   help="feature-usage regularizer for the branch model, in (0, 1)")
    p.add_argument("--max-card", type=int, default=3, help="largest antecedent size H for lists (default 3)")
    p.add_argument("--min-support", type=int, default=None, help="drop antecedents matching fewer rows")
    p.add_argument("--iters", type=_positive_int, default=10_000,
                   help="annealing iterations, or per-chain MCMC budget for lists (default 10000)")
    p.add_argument("--restart-period", type=_positive_int, default=2_500,
                   help="annealing restart period (default 2500)")
    p.add_argument("--chains", type=int, default=None,
                   help="independent chains (default 1 for trees, 3 for lists; lists need >= 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--omit-dirichlet-normalizer", action="store_true",
                   help="list posterior without the Gamma((m+1)alpha)/Gamma(alpha)^(m+1) factor")
    p.add_argument("--ignore-extra-columns", action="store_true",
                   help="skip CSV columns that are not in the schema")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadehist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a tree, rule list or histogram")
    p.add_argument("--model", required=True, choices=["leaf", "branch", "list", "histogram"])
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default="model.json")
    p.add_argument("--manifest", default=None, help="default: <out>.manifest.json")
    p.add_argument("--trace", default=None, help="write the score trace CSV here")
    p.add_argument("--warm-start", default=None, help="tree model file to start annealing from")
    _add_hyper_args(p)

    p = sub.add_parser("eval", help="test log-likelihood or leave-one-out score")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", default=None, help="must match the model's schema if given")
    p.add_argument("--metric", choices=["loglik", "loo"], default="loglik")
    p.add_argument("--smoothing", action="store_true", help="posterior-mean leaf masses")
    p.add_argument("--alpha", type=float, default=1.0, help="smoothing concentration (default 1)")
    p.add_argument("--ignore-extra-columns", action="store_true")
    p.add_argument("--manifest", default=None, help="default: <model-file>.eval.manifest.json")

    p = sub.add_parser("export", help="render a model as DOT, text or JSON")
    p.add_argument("--model-file", required=True)
    p.add_argument("--format", choices=["dot", "text", "json"], default="text")
    p.add_argument("--out", default=None, help="default: stdout")
    p.add_argument("--manifest", default=None,
                   help="default: <out>.manifest.json, or <model-file>.export.manifest.json")

    p = sub.add_parser("gen", help="write a synthetic dataset and/or schema")
    p.add_argument("--dataset", required=True, choices=sorted(GENERATORS) + ["titanic"])
    p.add_argument("--out", default=None, help="CSV path")
    p.add_argument("--schema-out", default=None, help="schema JSON path")
    p.add_argument("--manifest", default=None)

    p = sub.add_parser("benchmark", help="repeated half splits over several models")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--splits", type=_positive_int, default=5)
    p.add_argument("--models", default="leaf,branch,list,histogram")
    p.add_argument("--out", default="benchmark.csv")
    p.add_argument("--manifest", default=None)
    p.add_argument("--no-timings", action="store_true",
                   help="write fit_seconds as NA so reruns give byte-identical CSVs")
    p.add_argument("--lambda-leaf", type=_float_list, default=(5.0, 8.0))
    p.add_argument("--lambda-branch", type=_float_list, default=(2.0, 3.0))
    p.add_argument("--lambda-list", type=_float_list, default=(DEFAULTS["list"]["lam"],))
    _add_hyper_args(p, lam_flags=False)
    p.set_defaults(gamma=0.5)
    return parser


COMMANDS = {
    "fit": cmd_fit, "eval": cmd_eval, "export": cmd_export,
    "gen": cmd_gen, "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "chains", None) is not None:
        if args.chains < 1:
            parser.print_usage(sys.stderr)
            print("error: --chains must be positive", file=sys.stderr)
            return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, ModelFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SearchGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
