"""``netma`` command line: simulate, fit, predict, evaluate, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import io as nio
from .errors import ConfigError, DataError, IncompletePredictionsError, IntegrityError, NetmaError
from .graph import PairSet, assign_folds, enumerate_pairs, split_pairs
from .lsm import FitConfig
from .metrics import CandidatePredictions, average_predictions, evaluate, full_fit_candidates, predict_pairs
from .qp import QpDiagnostics, WeightVector, solve_simplex_qp
from .rng import stream
from .simulate import gen_network, make_partition, run_case, run_sweep
from .weights import DEBIAS_MODES, CandidateSet, build_cv_qp, ecv_select, equal_weights, fold_fit_predict, worker_count

log = logging.getLogger("netma")

FIT_KEYS = {"m_candidates", "candidates", "k_folds", "ratio", "seed", "debias_mode", "max_iters",
            "rel_tol", "partition", "covariates", "warm_start"}
WEIGHT_METHODS = ("netma", "ecv", "equal")


def _versions():
    return {"netma": __version__, "numpy": np.__version__, "python": platform.python_version()}


def _write_manifest(out: Path, doc: dict):
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve(base: Optional[Path], value) -> Path:
    p = Path(value)
    if base is not None and not p.is_absolute():
        p = base / p
    return p


# --- simulate -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    """One synthetic network, its split and the held-out truth, ready for ``fit``."""
    doc = nio.load_json(args.config)
    doc.pop("sweep", None)
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg, _ = nio.sim_config_from_dict(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    layers, truth = gen_network(cfg, stream(cfg.seed, "network", 0))
    partition = make_partition(cfg, 0)
    edge_files = []
    for t, layer in enumerate(layers, 1):
        name = "edges.tsv" if len(layers) == 1 else f"edges_{t}.tsv"
        nio.write_edge_list(out / name, layer)
        edge_files.append(name)
    nio.write_partition(out / "partition.tsv", partition)
    nio.write_pairs(out / "pairs.tsv", partition.psi2)
    target = partition.psi2
    labels = np.stack([target.values(a.entries) for a in layers])
    probs = np.stack([target.values(p) for p in truth.p_matrix])
    nio.write_truth(out / "truth.tsv", target, labels, probs)
    nio.write_params(out / "truth_params.txt", truth.params)

    fit_doc = {"m_candidates": cfg.m_candidates, "k_folds": cfg.k_folds, "seed": cfg.seed,
               "debias_mode": cfg.debias_mode, "max_iters": cfg.max_iters, "rel_tol": cfg.rel_tol,
               "partition": "partition.tsv"}
    if truth.covariates is not None:
        nio.write_covariates(out / "covariates.tsv", truth.covariates)
        fit_doc["covariates"] = "covariates.tsv"
    (out / "fit_config.json").write_text(json.dumps(fit_doc, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, {
        "command": "simulate", "seed": cfg.seed, "config": cfg.to_dict(),
        "config_hash": nio.config_hash(cfg.to_dict()), "versions": _versions(),
        "edges": edge_files, "gamma": [float(g) for g in truth.gamma], "p": float(partition.p),
    })
    log.info("wrote %d layer(s), %d held-out pairs to %s", len(layers), len(target), out)
    return 0


# --- fit ------------------------------------------------------------------------

def _fit_settings(doc: dict, n_layers: int):
    unknown = set(doc) - FIT_KEYS
    if unknown:
        raise ConfigError(f"unknown fit config keys: {sorted(unknown)}")
    if "candidates" in doc:
        candidates = CandidateSet(tuple(doc["candidates"]))
    else:
        candidates = CandidateSet.up_to(int(doc.get("m_candidates", 6)))
    k_folds = int(doc.get("k_folds", 10 if n_layers == 1 else 5))
    if k_folds < 2:
        raise ConfigError("k_folds must be at least 2")
    mode = doc.get("debias_mode", "paper_literal")
    if mode not in DEBIAS_MODES:
        raise ConfigError(f"unknown debias mode {mode!r}")
    fit_cfg = FitConfig(max_iters=int(doc.get("max_iters", 200)), rel_tol=float(doc.get("rel_tol", 1e-6)),
                        warm_start=bool(doc.get("warm_start", False)))
    ratio = tuple(int(r) for r in doc.get("ratio", (7, 3)))
    return candidates, k_folds, mode, fit_cfg, ratio


def cmd_fit(args) -> int:
    """Candidate fits on the observed pairs plus NetMA, ECV and equal weights."""
    doc = nio.load_json(args.config) if args.config else {}
    base = Path(args.config).parent if args.config else None
    if args.seed is not None:
        doc["seed"] = args.seed
    seed = int(doc.get("seed", 0))
    paths = [p for p in args.edges.split(",") if p]
    layers = nio.read_layers(paths)
    n = layers[0].n
    candidates, k_folds, mode, fit_cfg, ratio = _fit_settings(doc, len(layers))

    covariates = None
    if doc.get("covariates"):
        covariates = nio.read_covariates(_resolve(base, doc["covariates"]), n)
        if len(layers) > 1:
            raise ConfigError("covariates are only supported for single-layer fits")

    folds = None
    part_path = args.partition or (doc.get("partition") and _resolve(base, doc["partition"]))
    if part_path:
        partition, folds = nio.read_partition(part_path)
        if partition.n != n:
            raise DataError(f"partition covers {partition.n} nodes, edge list has {n}")
    else:
        partition = split_pairs(enumerate_pairs(n), ratio, stream(seed, "split"))
    if folds is None or folds.k_folds != k_folds:
        folds = assign_folds(partition.psi1, k_folds, stream(seed, "folds"))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    full = full_fit_candidates(layers, partition, candidates, fit_cfg, covariates)
    preds = fold_fit_predict(layers, partition, folds, candidates, fit_cfg, covariates, mode,
                             full_fits=full.fits)
    qp = build_cv_qp(layers, folds, preds)
    diag = QpDiagnostics()
    w_netma = solve_simplex_qp(qp, diagnostics=diag)
    m_star = ecv_select(layers, folds, preds, qp)
    weights = {"netma": w_netma.w, "ecv": WeightVector.vertex(candidates.M, m_star).w,
               "equal": equal_weights(candidates.M).w}

    param_files = []
    for d, params in zip(candidates.dims, full.fits):
        name = f"params_d{d}.txt"
        nio.write_params(out / name, params)
        param_files.append(name)
    nio.write_weight_table(out / "weights.csv",
                           [(m, d, w) for m in WEIGHT_METHODS for d, w in zip(candidates.dims, weights[m])])
    nio.write_partition(out / "partition.tsv", partition, folds)
    nio.write_qp(out / "qp.json", qp, diag, w_netma.w)
    if covariates is not None:
        nio.write_covariates(out / "covariates.tsv", covariates)
    settings = {"candidates": list(candidates.dims), "k_folds": k_folds, "debias_mode": mode,
                "max_iters": fit_cfg.max_iters, "rel_tol": fit_cfg.rel_tol, "ratio": list(ratio),
                "warm_start": fit_cfg.warm_start, "seed": seed}
    _write_manifest(out, {
        "command": "fit", "seed": seed, "config_hash": nio.config_hash({**doc, **settings}),
        "versions": _versions(), "n": n, "n_layers": len(layers),
        "p": float(partition.p), "p_fraction": str(partition.p), "candidates": list(candidates.dims),
        "params": param_files, "k_folds": k_folds, "debias_mode": mode,
        "covariates": "covariates.tsv" if covariates is not None else None,
        "ecv_choice": candidates.dims[m_star],
    })
    log.info("netma weights %s", np.round(w_netma.w, 4).tolist())
    return 0


# --- predict --------------------------------------------------------------------

def cmd_predict(args) -> int:
    """Weighted held-out predictions from a ``fit`` output directory."""
    fits = Path(args.fits)
    try:
        manifest = json.loads((fits / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IntegrityError(f"{fits} has no manifest.json")
    table = nio.read_weight_table(args.weights or fits / "weights.csv")
    if args.method not in table:
        raise DataError(f"weights file has no rows for method {args.method!r}")
    row = table[args.method]
    dims = list(manifest["candidates"])
    if sorted(row) != sorted(dims):
        raise IntegrityError(f"weights cover dimensions {sorted(row)}, fits cover {dims}")
    w = np.array([row[d] for d in dims])

    params = []
    for d, name in zip(dims, manifest["params"]):
        path = fits / name
        if not path.exists():
            raise IntegrityError(f"missing candidate file {path}")
        params.append(nio.read_params(path))
    n = int(manifest["n"])
    if any(p.n != n for p in params):
        raise IntegrityError("candidate files disagree with the manifest on the node count")
    covariates = None
    if manifest.get("covariates"):
        covariates = nio.read_covariates(fits / manifest["covariates"], n)

    target = nio.read_pairs(args.pairs, n) if args.pairs else PairSet.empty(n)
    p = float(manifest["p"])
    values = np.stack([predict_pairs(prm, target, p, covariates) for prm in params])
    combined = average_predictions(CandidatePredictions(target, values, p), w)
    nio.write_predictions(args.out, target, combined, with_layer=int(manifest["n_layers"]) > 1)
    return 0


# --- evaluate -------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    preds = nio.read_predictions(args.pred)
    truth = nio.read_truth(args.truth)
    if not truth:
        raise DataError("truth file is empty")
    keys = sorted(truth)
    missing = [k for k in keys if k not in preds]
    if missing:
        i, j, t = missing[0]
        raise IncompletePredictionsError(
            f"{len(missing)} truth entries have no prediction, e.g. ({i + 1}, {j + 1}, layer {t + 1})")
    q = np.array([preds[k] for k in keys])
    labels = np.array([truth[k][0] for k in keys])
    probs = [truth[k][1] for k in keys]
    has_probs = all(v is not None for v in probs)
    report = evaluate(q, labels, np.array(probs, dtype=float) if has_probs else None)
    nio.write_metrics(args.out, [(args.label, name, v, float("nan")) for name, v in report.as_dict().items()])
    return 0


# --- experiment -----------------------------------------------------------------

def cmd_experiment(args) -> int:
    doc = nio.load_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg, sweep = nio.sim_config_from_dict(doc)
    workers = worker_count()
    if sweep:
        results = run_sweep(cfg, sweep, workers)
    else:
        results = [run_case(cfg, workers)]
    out = Path(args.out)
    nio.write_experiment(out, results)
    failures = sum(len(r.failures) for r in results)
    _write_manifest(out, {
        "command": "experiment", "seed": cfg.seed, "config": doc,
        "config_hash": nio.config_hash(doc), "versions": _versions(),
        "replications": sum(len(r.records) for r in results), "failed_replications": failures,
    })
    if failures:
        log.warning("%d replication(s) failed; results are partial", failures)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netma", description="Latent space model averaging for link prediction.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate one synthetic network with a held-out split")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit candidates and compute NetMA / ECV / equal weights")
    p.add_argument("--edges", required=True, help="edge list, or comma-separated list for several layers")
    p.add_argument("--config")
    p.add_argument("--partition", help="observed / held-out split (overrides the config)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="averaged probabilities for a list of pairs")
    p.add_argument("--fits", required=True)
    p.add_argument("--weights")
    p.add_argument("--pairs")
    p.add_argument("--method", default="netma", choices=WEIGHT_METHODS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against held-out truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", default="prediction")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run the simulation harness")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NetmaError as exc:
        print(f"netma {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"netma {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
