"""Command-line interface: ``rsens <subcommand> [options]``.

Subcommands: rank, simulate-main, simulate-interactions, cv, stability, check.
Each writes a flat CSV (method,key,score,rank,stderr) to ``--csv`` or
stdout, and optionally a JSON metadata file via ``--json``. Failures print
a JSON error object on stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
import time
from importlib import metadata

import numpy as np
import scipy

from .data import ConfigError, ingest_csv, validate_config
from .errors import RsensError

log = logging.getLogger("rsens")

CSV_COLUMNS = ("method", "key", "score", "rank", "stderr")
EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"rsens": pkg, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _pair_key(pair, names=None) -> str:
    d, e = pair
    return f"{names[d]}:{names[e]}" if names else f"{d}:{e}"


# ---------------------------------------------------------------------------
# subcommand runners: each returns (rows, extra metadata)
# ---------------------------------------------------------------------------


def _run_rank(cfg):
    from .gp import gp_fit
    from .sensitivity import rank_features
    from .simharness import FEATURE_METHODS, PAIR_METHODS, gp_feature_scores, gp_pair_scores

    data = ingest_csv(cfg["data"], cfg["target"], cfg["likelihood"], cfg["standardize"])
    model = gp_fit(data.X, data.y, likelihood=data.likelihood, n_restarts=cfg["restarts"], seed=cfg["seed"])
    names = data.feature_names
    if cfg["pairs"]:
        methods = cfg["methods"] if cfg["methods"] != ["rsens"] else ["rsens2"]
        scores = gp_pair_scores(model, data.X, methods, alpha=cfg["alpha"])
        allowed = PAIR_METHODS
    else:
        scores = gp_feature_scores(model, data.X, data.y, cfg["methods"], alpha=cfg["alpha"], seed=cfg["seed"])
        allowed = FEATURE_METHODS
    rows = []
    for m, s in scores.items():
        rep = rank_features(s, m)
        for key in rep.ordered():
            label = _pair_key(key, names) if isinstance(key, tuple) else names[key]
            rows.append({"method": m, "key": label, "score": rep.scores[key], "rank": rep.ranks[key]})
    extra = {
        "n": data.n,
        "features": list(names),
        "kernel": repr(model.kernel),
        "noise_var": model.noise_var,
        "log_marginal": model.log_marginal,
        "methods_available": list(allowed),
    }
    return rows, extra


def _run_simulate_main(cfg):
    from .simharness import FEATURE_METHODS, MainEffectConfig, run_main_effect_experiment

    me = MainEffectConfig(n=cfg["n"], d=cfg["d"], shape=cfg["shape"], predictor_dist=cfg["dist"],
                          noise_sd=cfg["noise_sd"], seed=cfg["seed"])
    methods = cfg["methods"] or list(FEATURE_METHODS)
    table = run_main_effect_experiment(me, methods, cfg["reps"], seed=cfg["seed"])
    rows = [
        {"method": r["method"], "key": r["model"], "score": r["mean"], "stderr": r["stderr"]}
        for r in table.rows
    ]
    return rows, {"variance_constants": list(me.variance_constants), "amplitudes": list(me.amplitudes)}


def _run_simulate_interactions(cfg):
    from .simharness import PAIR_METHODS, InteractionConfig, run_interaction_experiment

    ic = InteractionConfig(n_values=tuple(int(n) for n in cfg["n_values"]), replications=cfg["reps"],
                           methods=tuple(cfg["methods"] or PAIR_METHODS), noise_sd=cfg["noise_sd"],
                           n_restarts=cfg["restarts"], seed=cfg["seed"])
    table = run_interaction_experiment(ic)
    rows = [
        {"method": r["method"], "key": f"n={r['n']}|{_pair_key(r['pair'])}|{r['kind']}|{r['structure']}",
         "score": r["mean"], "stderr": r["stderr"]}
        for r in table.rows
    ]
    extra = {"interaction_pairs": [list(p) for p in ic.interaction_pairs],
             "false_pairs": [list(p) for p in ic.false_pairs],
             "main_shapes": list(ic.main_shapes), "main_amplitudes": list(ic.main_amplitudes)}
    return rows, extra


def _run_cv(cfg):
    from .simharness import PAIR_METHODS, cv_mlpd_experiment

    data = ingest_csv(cfg["data"], cfg["target"], cfg["likelihood"], cfg["standardize"])
    table = cv_mlpd_experiment(data, cfg["methods"] or list(PAIR_METHODS), cfg["interactions"],
                               n_splits=cfg["splits"], train_size=cfg["train_size"], seed=cfg["seed"],
                               n_restarts=cfg["restarts"])
    rows = [
        {"method": r["method"], "key": "k=all" if r["count"] < 0 else f"k={r['count']}",
         "score": r["mean"], "stderr": r["stderr"]}
        for r in table.rows
    ]
    extra = {
        "n": data.n, "features": list(data.feature_names),
        "failed_splits": table.meta["failed"],
        "splits_ok": table.meta["n_splits"] - len(table.meta["failed"]),
        "per_split": table.raw["records"],
    }
    return rows, extra


def _run_stability(cfg):
    from .simharness import PAIR_METHODS, bootstrap_entropy

    data = ingest_csv(cfg["data"], cfg["target"], cfg["likelihood"], cfg["standardize"])
    rows = []
    for m in cfg["methods"] or list(PAIR_METHODS):
        h = bootstrap_entropy(data, m, cfg["boot"], cfg["top_k"], seed=cfg["seed"], n_restarts=cfg["restarts"])
        rows.append({"method": m, "key": f"entropy_top{cfg['top_k']}", "score": h})
    return rows, {"n": data.n}


def _run_check(cfg):
    from .checks import run_checks

    results = run_checks(cfg["seed"])
    rows = [{"method": c.name, "key": "pass" if c.passed else "fail", "score": c.error} for c in results]
    failed = [c.name for c in results if not c.passed]
    return rows, {"failed": failed, "tolerances": {c.name: c.tol for c in results}}


RUNNERS = {
    "rank": _run_rank,
    "simulate-main": _run_simulate_main,
    "simulate-interactions": _run_simulate_interactions,
    "cv": _run_cv,
    "stability": _run_stability,
    "check": _run_check,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _methods(text):
    return [m.strip() for m in text.split(",") if m.strip()]


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsens", description="Uncertainty-aware sensitivity analysis for predictive models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_required=True):
        sp.add_argument("--config", help="JSON file of options; command-line flags override it")
        sp.add_argument("--csv", help="write the result table here instead of stdout")
        sp.add_argument("--json", help="write run metadata (config, seed, versions, timings) here")
        sp.add_argument("--no-timings", action="store_true", help="omit wall-clock timings from the JSON")
        sp.add_argument("--seed", type=int, help="random seed" + (" (required)" if seed_required else ""))
        sp.add_argument("-v", "--verbose", action="store_true")

    def dataset(sp):
        sp.add_argument("--data", help="CSV file with a header row")
        sp.add_argument("--target", help="name of the target column")
        sp.add_argument("--likelihood", choices=("gaussian", "probit", "poisson"))
        sp.add_argument("--no-standardize", dest="standardize", action="store_const", const=False)
        sp.add_argument("--restarts", type=int, help="hyperparameter optimisation restarts")

    sp = sub.add_parser("rank", help="feature or pair importances of a GP fitted to a dataset")
    common(sp, seed_required=False)
    dataset(sp)
    sp.add_argument("--method", dest="methods", type=_methods, help="comma-separated method names")
    sp.add_argument("--alpha", type=float, help="Renyi order (does not change rankings)")
    sp.add_argument("--pairs", action="store_const", const=True, help="rank pairwise interactions")

    sp = sub.add_parser("simulate-main", help="main-effect ranking experiment with oracle models")
    common(sp)
    sp.add_argument("--shape")
    sp.add_argument("--dist", help="StudentT3, StdNormal, GaussMixture2 or CorrelatedGauss")
    sp.add_argument("--n", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--noise-sd", type=float)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--method", dest="methods", type=_methods)

    sp = sub.add_parser("simulate-interactions", help="interaction detection experiment")
    common(sp)
    sp.add_argument("--n-values", type=_ints, help="comma-separated sample sizes")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--method", dest="methods", type=_methods)
    sp.add_argument("--noise-sd", type=float)
    sp.add_argument("--restarts", type=int)

    sp = sub.add_parser("cv", help="cross-validated MLPD of models with selected interactions")
    common(sp)
    dataset(sp)
    sp.add_argument("--interactions", type=_ints, help="comma-separated interaction counts")
    sp.add_argument("--splits", type=int)
    sp.add_argument("--train-size", type=int)
    sp.add_argument("--method", dest="methods", type=_methods)

    sp = sub.add_parser("stability", help="bootstrap entropy of pair rankings")
    common(sp)
    dataset(sp)
    sp.add_argument("--method", dest="methods", type=_methods)
    sp.add_argument("--boot", type=int)
    sp.add_argument("--top-k", type=int)

    sp = sub.add_parser("check", help="run the numerical self-checks")
    common(sp, seed_required=False)
    return p


_NON_CONFIG = {"command", "config", "csv", "json", "no_timings", "verbose"}


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"no such config file: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, value in vars(args).items():
        if key not in _NON_CONFIG and value is not None:
            cfg[key] = value
    return validate_config(args.command, cfg)


def run_command(argv=None, stdout=None, stderr=None) -> int:
    """Run one CLI invocation; returns the process exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=stderr)
        cfg = _load_config(args)
        t0 = time.perf_counter()
        rows, extra = RUNNERS[command](cfg)
        elapsed = time.perf_counter() - t0
        text = _csv_text(rows)
        if args.csv:
            with open(args.csv, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            stdout.write(text)
        if args.json:
            meta = {"command": command, "config": cfg, "seed": cfg.get("seed"), "versions": _versions(),
                    "result": extra}
            if not args.no_timings:
                meta["timings"] = {"total_seconds": round(elapsed, 3)}
            with open(args.json, "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
                fh.write("\n")
        if command == "check" and extra["failed"]:
            _emit_error(stderr, command, "CheckFailed", f"checks failed: {', '.join(extra['failed'])}")
            return EXIT_RUNTIME
        return 0
    except ConfigError as exc:
        _emit_error(stderr, command, "ConfigError", str(exc))
        return EXIT_CONFIG
    except (RsensError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _emit_error(stderr, command, type(exc).__name__, str(exc))
        return EXIT_RUNTIME


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit_error(stream, command, kind, message):
    stream.write(json.dumps({"error": kind, "command": command, "message": message}) + "\n")


def main(argv=None) -> int:
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
