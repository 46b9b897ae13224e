"""Readers and writers for every on-disk format.

Node indices in files are 1-based. Floats are written with 17 significant
digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError, IntegrityError, ParseError, ShapeError
from .graph import AdjacencyView, EdgePartition, FoldAssignment, PairSet
from .lsm import LsmParams
from .qp import QpDiagnostics, QpProblem
from .simulate import METHODS, ExperimentResult, SimConfig, _mean_se


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _header_nodes(line: str, path) -> Optional[int]:
    body = line.lstrip("#").strip()
    if body.startswith("nodes="):
        try:
            return int(body.split("=", 1)[1])
        except ValueError:
            raise ParseError(f"bad node count header {line.strip()!r}", path, 1)
    return None


def _read_rows(path) -> Tuple[Optional[int], List[Tuple[int, List[str]]]]:
    """Split a tab-separated file into (node count from header, [(line no, fields)])."""
    n = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                got = _header_nodes(line, path)
                if got is not None:
                    n = got
                continue
            rows.append((lineno, line.rstrip("\n").split("\t")))
    return n, rows


def _pair(fields, path, lineno, n):
    try:
        i, j = int(fields[0]), int(fields[1])
    except (ValueError, IndexError):
        raise ParseError(f"expected two integer node indices, got {fields!r}", path, lineno)
    if i == j:
        raise ParseError(f"self-loop ({i}, {j})", path, lineno)
    if min(i, j) < 1 or (n is not None and max(i, j) > n):
        raise ParseError(f"node index out of range in ({i}, {j})", path, lineno)
    return min(i, j) - 1, max(i, j) - 1


# --- edge lists ---------------------------------------------------------------

def write_edge_list(path, adjacency: AdjacencyView):
    edges = adjacency.edges()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={adjacency.n}\n")
        for i, j in edges:
            fh.write(f"{i + 1}\t{j + 1}\n")


def read_edge_list(path, n: Optional[int] = None, layer_id=None) -> AdjacencyView:
    header_n, rows = _read_rows(path)
    n = n if n is not None else header_n
    if n is None:
        raise ParseError("missing '# nodes=N' header", path, 1)
    pairs = []
    for lineno, fields in rows:
        if len(fields) != 2:
            raise ParseError(f"expected 'i<TAB>j', got {len(fields)} fields", path, lineno)
        pairs.append(_pair(fields, path, lineno, n))
    return AdjacencyView.from_edges(n, PairSet.from_pairs(n, pairs), layer_id)


def read_layers(paths: Sequence) -> List[AdjacencyView]:
    layers = []
    for t, p in enumerate(paths):
        layers.append(read_edge_list(p, layer_id=t if len(paths) > 1 else None))
    if len({a.n for a in layers}) > 1:
        raise ShapeError("edge lists disagree on the number of nodes")
    return layers


def write_pairs(path, pairs: PairSet):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={pairs.n}\n")
        for i, j in pairs:
            fh.write(f"{i + 1}\t{j + 1}\n")


def read_pairs(path, n: Optional[int] = None) -> PairSet:
    header_n, rows = _read_rows(path)
    n = n if n is not None else header_n
    if n is None:
        raise ParseError("missing '# nodes=N' header", path, 1)
    return PairSet.from_pairs(n, [_pair(f, path, ln, n) for ln, f in rows])


# --- partitions and folds -----------------------------------------------------

def write_partition(path, partition: EdgePartition, folds: Optional[FoldAssignment] = None):
    """One line per pair: ``i, j, part (1 observed / 2 held out)[, fold]``."""
    n = partition.n
    part = {c: "1" for c in partition.psi1.codes.tolist()}
    part.update({c: "2" for c in partition.psi2.codes.tolist()})
    fold = {}
    if folds is not None:
        fold = dict(zip(folds.psi1.codes.tolist(), (folds.labels + 1).tolist()))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={n}\n")
        for code in sorted(part):
            i, j = divmod(code, n)
            line = f"{i + 1}\t{j + 1}\t{part[code]}"
            if folds is not None and code in fold:
                line += f"\t{fold[code]}"
            fh.write(line + "\n")


def read_partition(path) -> Tuple[EdgePartition, Optional[FoldAssignment]]:
    n, rows = _read_rows(path)
    if n is None:
        raise ParseError("missing '# nodes=N' header", path, 1)
    psi1, psi2, fold_of = [], [], {}
    for lineno, fields in rows:
        if len(fields) not in (3, 4):
            raise ParseError("expected 'i<TAB>j<TAB>part[<TAB>fold]'", path, lineno)
        i, j = _pair(fields, path, lineno, n)
        if fields[2] == "1":
            psi1.append((i, j))
            if len(fields) == 4:
                try:
                    fold_of[i * n + j] = int(fields[3]) - 1
                except ValueError:
                    raise ParseError(f"bad fold label {fields[3]!r}", path, lineno)
        elif fields[2] == "2":
            psi2.append((i, j))
        else:
            raise ParseError(f"part must be 1 or 2, got {fields[2]!r}", path, lineno)
    p1, p2 = PairSet.from_pairs(n, psi1), PairSet.from_pairs(n, psi2)
    if len(p1) != len(psi1) or len(p2) != len(psi2):
        raise ParseError("duplicate pair in partition file", path)
    try:
        partition = EdgePartition(p1, p2)
    except DataError as exc:
        raise ParseError(str(exc), path)
    folds = None
    if fold_of:
        if len(fold_of) != len(p1):
            raise ParseError("fold labels must be given for every observed pair or none", path)
        labels = np.array([fold_of[c] for c in p1.codes.tolist()])
        if labels.min() < 0:
            raise ParseError("fold labels are 1-based", path)
        folds = FoldAssignment(p1, labels, int(labels.max()) + 1)
    return partition, folds


# --- covariates -----------------------------------------------------------------

def write_covariates(path, x: np.ndarray):
    n = x.shape[0]
    i, j = np.triu_indices(n, 1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={n}\n")
        for a, b, v in zip(i.tolist(), j.tolist(), x[i, j].tolist()):
            if v != 0.0:
                fh.write(f"{a + 1}\t{b + 1}\t{fmt(v)}\n")


def read_covariates(path, n: Optional[int] = None) -> np.ndarray:
    header_n, rows = _read_rows(path)
    n = n if n is not None else header_n
    if n is None:
        raise ParseError("missing '# nodes=N' header", path, 1)
    x = np.zeros((n, n))
    for lineno, fields in rows:
        if len(fields) != 3:
            raise ParseError("expected 'i<TAB>j<TAB>value'", path, lineno)
        i, j = _pair(fields, path, lineno, n)
        try:
            v = float(fields[2])
        except ValueError:
            raise ParseError(f"bad covariate value {fields[2]!r}", path, lineno)
        x[i, j] = x[j, i] = v
    return x


# --- latent space parameters ------------------------------------------------------

def write_params(path, params: LsmParams):
    """``alpha`` line + values, ``beta`` line + value (or ``none``), then one
    ``z,t,d_t`` block of N rows per layer."""
    lines = ["alpha", ",".join(fmt(v) for v in params.alpha), "beta",
             "none" if params.beta is None else fmt(params.beta)]
    for t, zt in enumerate(params.z, 1):
        lines.append(f"z,{t},{zt.shape[1]}")
        lines.extend(",".join(fmt(v) for v in row) for row in zt)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_params(path) -> LsmParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        if lines[0] != "alpha" or lines[2] != "beta":
            raise ParseError("expected 'alpha' and 'beta' header rows", path, 1)
        alpha = np.array([float(v) for v in lines[1].split(",")])
        beta = None if lines[3] == "none" else float(lines[3])
        n = alpha.size
        zs, pos = [], 4
        while pos < len(lines):
            head = lines[pos].split(",")
            if len(head) != 3 or head[0] != "z":
                raise ParseError(f"expected 'z,t,d_t', got {lines[pos]!r}", path, pos + 1)
            d = int(head[2])
            block = lines[pos + 1:pos + 1 + n]
            if len(block) != n:
                raise ParseError("truncated latent block", path, pos + 1)
            zs.append(np.array([[float(v) for v in row.split(",")] for row in block]).reshape(n, d))
            pos += 1 + n
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed parameter file ({exc})", path)
    return LsmParams(alpha, tuple(zs), beta)


# --- weights, predictions, metrics ---------------------------------------------------

def write_weight_table(path, rows: Iterable[Tuple[str, int, float]]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "candidate_dim", "mean_weight"])
        for method, dim, weight in rows:
            w.writerow([method, int(dim), fmt(weight)])


def read_weight_table(path) -> Dict[str, Dict[int, float]]:
    out: Dict[str, Dict[int, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["method", "candidate_dim", "mean_weight"]:
            raise ParseError("weight table header must be method,candidate_dim,mean_weight", path, 1)
        for lineno, row in enumerate(reader, 2):
            try:
                out.setdefault(row["method"], {})[int(row["candidate_dim"])] = float(row["mean_weight"])
            except (TypeError, ValueError):
                raise ParseError(f"bad weight row {row!r}", path, lineno)
    return out


def write_predictions(path, pairs: PairSet, values: np.ndarray, with_layer: bool):
    """``values`` has shape ``(T, |pairs|)``."""
    values = np.atleast_2d(values)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "t", "probability"] if with_layer else ["i", "j", "probability"])
        for t in range(values.shape[0]):
            for (i, j), v in zip(pairs, values[t].tolist()):
                row = [i + 1, j + 1] + ([t + 1] if with_layer else []) + [fmt(v)]
                w.writerow(row)


def read_predictions(path) -> Dict[Tuple[int, int, int], float]:
    """Map ``(i, j, t)`` (0-based) to probability."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (["i", "j", "probability"], ["i", "j", "t", "probability"]):
            raise ParseError("prediction header must be i,j[,t],probability", path, 1)
        layered = len(header) == 4
        for lineno, row in enumerate(reader, 2):
            try:
                i, j = int(row[0]) - 1, int(row[1]) - 1
                t = int(row[2]) - 1 if layered else 0
                out[(min(i, j), max(i, j), t)] = float(row[-1])
            except (ValueError, IndexError):
                raise ParseError(f"bad prediction row {row!r}", path, lineno)
    return out


def read_truth(path) -> Dict[Tuple[int, int, int], Tuple[int, Optional[float]]]:
    """Truth file rows: ``i<TAB>j<TAB>t<TAB>label[<TAB>probability]``."""
    _, rows = _read_rows(path)
    out = {}
    for lineno, fields in rows:
        if len(fields) not in (4, 5):
            raise ParseError("expected 'i<TAB>j<TAB>t<TAB>label[<TAB>prob]'", path, lineno)
        i, j = _pair(fields, path, lineno, None)
        try:
            t = int(fields[2]) - 1
            label = int(fields[3])
            prob = float(fields[4]) if len(fields) == 5 else None
        except ValueError:
            raise ParseError(f"bad truth row {fields!r}", path, lineno)
        if label not in (0, 1):
            raise ParseError(f"label must be 0 or 1, got {label}", path, lineno)
        out[(i, j, t)] = (label, prob)
    return out


def write_truth(path, pairs: PairSet, labels: np.ndarray, probs: Optional[np.ndarray] = None):
    labels = np.atleast_2d(labels)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes={pairs.n}\n")
        for t in range(labels.shape[0]):
            for k, (i, j) in enumerate(pairs):
                line = f"{i + 1}\t{j + 1}\t{t + 1}\t{int(labels[t, k])}"
                if probs is not None:
                    line += f"\t{fmt(probs[t, k])}"
                fh.write(line + "\n")


def write_metrics(path, rows: Iterable[Tuple[str, str, float, float]]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "metric", "mean", "stderr"])
        for method, metric, mean, se in rows:
            w.writerow([method, metric, fmt(mean), fmt(se)])


def read_metrics(path) -> Dict[Tuple[str, str], Tuple[float, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return {(r["method"], r["metric"]): (float(r["mean"]), float(r["stderr"])) for r in reader}


def write_qp(path, qp: QpProblem, diagnostics: Optional[QpDiagnostics] = None, weights=None):
    doc = {
        "m": qp.m,
        "H": [float(v) for v in qp.h_matrix.reshape(-1)],
        "h": [float(v) for v in qp.h_vector],
    }
    if weights is not None:
        doc["weights"] = [float(v) for v in np.asarray(weights)]
    if diagnostics is not None:
        doc["diagnostics"] = {
            "iterations": diagnostics.iterations,
            "fw_gap": diagnostics.fw_gap,
            "objective": diagnostics.objective,
            "source": diagnostics.source,
            "merged_duplicates": diagnostics.merged_duplicates,
        }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_qp(path) -> QpProblem:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    m = int(doc["m"])
    return QpProblem(np.array(doc["H"]).reshape(m, m), np.array(doc["h"]))


# --- configs --------------------------------------------------------------------

SIM_KEYS = {f for f in SimConfig.__dataclass_fields__}


def load_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def sim_config_from_dict(doc: dict) -> Tuple[SimConfig, Optional[list]]:
    """``SimConfig`` plus the optional list of sweep values under ``sweep``."""
    doc = dict(doc)
    sweep = doc.pop("sweep", None)
    unknown = set(doc) - SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return SimConfig(**doc), sweep
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc))


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --- experiment results ------------------------------------------------------------

def _d0_label(d0) -> str:
    return "-".join(str(d) for d in d0)


def write_experiment(out_dir, results: Sequence[ExperimentResult]):
    """``results.csv``, ``weights.csv`` and ``replications.csv`` for a sweep."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "method", "n", "d0", "m", "metric", "mean", "stderr"])
        for res in results:
            cfg = res.config
            if not res.records:
                continue
            metrics = list(res.records[0].metrics["netma"].as_dict())
            for method in METHODS:
                for metric in metrics:
                    mean, se = res.summary(method, metric)
                    w.writerow([cfg.case, method, cfg.n, _d0_label(cfg.d0), cfg.m_candidates,
                                metric, fmt(mean), fmt(se)])
            cand = np.array([r.candidate_risk for r in res.records])
            for k in range(cand.shape[1]):
                mean, se = _mean_se(cand[:, k])
                w.writerow([cfg.case, f"candidate_{k + 1}", cfg.n, _d0_label(cfg.d0),
                            cfg.m_candidates, "relative_risk", fmt(mean), fmt(se)])
    with open(out_dir / "weights.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "n", "d0", "m", "method", "candidate_dim", "mean_weight"])
        for res in results:
            cfg = res.config
            if not res.records:
                continue
            for method in ("equal", "ecv", "netma"):
                for k, v in enumerate(res.mean_weights(method), 1):
                    w.writerow([cfg.case, cfg.n, _d0_label(cfg.d0), cfg.m_candidates, method, k, fmt(v)])
    with open(out_dir / "replications.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "n", "d0", "m", "replication", "method", "quantity", "value"])
        for res in results:
            cfg = res.config
            key = [cfg.case, cfg.n, _d0_label(cfg.d0), cfg.m_candidates]
            for r in res.records:
                for method in METHODS:
                    for metric, v in r.metrics[method].as_dict().items():
                        w.writerow(key + [r.replication, method, metric, fmt(v)])
                    if method in r.cv_objective:
                        w.writerow(key + [r.replication, method, "cv_objective", fmt(r.cv_objective[method])])
            for q, msg in res.failures:
                w.writerow(key + [q, "failed", "error", msg])

