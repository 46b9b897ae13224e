"""K-fold edge cross-validation weights for candidate latent dimensions.

Every candidate is refitted K times, each time with one fold of the
observed pairs hidden; the hidden fold is then predicted. Those hold-out
predictions define a quadratic CV criterion in the weights, which NetMA
minimises over the simplex. ECV keeps only the best single candidate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DataError,
    DivergenceError,
    IncompletePredictionsError,
    InvalidFoldCountError,
    ShapeError,
)
from .graph import AdjacencyView, EdgePartition, FoldAssignment, mask
from .lsm import FitConfig, LsmParams, pgd_fit, sigmoid, theta_matrix
from .qp import QpProblem, WeightVector, solve_simplex_qp

DEBIAS_MODES = ("paper_literal", "full")


@dataclass(frozen=True)
class CandidateSet:
    dims: Tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise DataError("candidate set is empty")
        if dims[0] < 1 or any(b <= a for a, b in zip(dims, dims[1:])):
            raise DataError("candidate dimensions must be strictly increasing positive integers")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def up_to(cls, m: int) -> "CandidateSet":
        return cls(tuple(range(1, m + 1)))

    @property
    def M(self) -> int:
        return len(self.dims)

    def __len__(self):
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)


@dataclass(frozen=True, eq=False)
class FoldPredictions:
    """Hold-out predictions aligned with ``folds.psi1``.

    ``values[m, t, i]`` is candidate ``m``'s clipped prediction for layer
    ``t`` at the ``i``-th observed pair, made by the fit that excluded that
    pair's fold.
    """

    folds: FoldAssignment
    candidates: CandidateSet
    values: np.ndarray
    debias_mode: str = "paper_literal"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != self.candidates.M or v.shape[2] != len(self.folds.psi1):
            raise ShapeError(f"prediction array has shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k_folds(self) -> int:
        return self.folds.k_folds

    @property
    def n_layers(self) -> int:
        return self.values.shape[1]

    def fold_values(self, m: int, k: int, layer: int = 0):
        """``(pairs of fold k, candidate m's predictions there)``."""
        pos = self.folds.positions(k)
        return self.folds.psi1.subset(pos), self.values[m, layer, pos]

    def scaled(self, c: float) -> "FoldPredictions":
        return FoldPredictions(self.folds, self.candidates, self.values * c, self.debias_mode)


def f1_debias(x, k_folds: int):
    """``K * sigmoid(x) / (K - 1)``: undoes the fold held out during refitting."""
    if k_folds < 2:
        raise InvalidFoldCountError(f"K must be at least 2, got {k_folds}")
    return k_folds * sigmoid(x) / (k_folds - 1)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("NETMA_THREADS", "1")))
    except ValueError:
        return 1


def _as_layers(a) -> List[AdjacencyView]:
    if isinstance(a, AdjacencyView):
        return [a]
    a = list(a)
    if not a:
        raise DataError("no adjacency layers given")
    n = a[0].n
    if any(x.n != n for x in a):
        raise ShapeError("layers disagree on node count")
    return a


def fold_fit_predict(a, partition: EdgePartition, folds: FoldAssignment, candidates: CandidateSet,
                     fit_config: FitConfig = FitConfig(), covariates=None,
                     debias_mode: str = "paper_literal", full_fits: Optional[Sequence[LsmParams]] = None,
                     schedule: Optional[Sequence[Tuple[int, int]]] = None,
                     workers: Optional[int] = None) -> FoldPredictions:
    """Refit every candidate with each fold hidden and predict that fold.

    ``schedule`` fixes the order of the ``(m, k)`` fits; it has no effect
    on the result. With ``fit_config.warm_start`` the refits start from
    ``full_fits`` instead of the spectral initialiser.
    """
    if debias_mode not in DEBIAS_MODES:
        raise DataError(f"unknown debias mode {debias_mode!r}")
    layers = _as_layers(a)
    if folds.psi1 != partition.psi1:
        raise DataError("folds are not defined over the partition's observed pairs")
    k_folds = folds.k_folds
    p = float(partition.p)
    n_layers = len(layers)
    values = np.full((candidates.M, n_layers, len(folds.psi1)), np.nan)

    if schedule is None:
        schedule = [(m, k) for m in range(candidates.M) for k in range(k_folds)]
    fold_pos = [folds.positions(k) for k in range(k_folds)]
    train_masks = []
    for k in range(k_folds):
        zeroed = partition.psi2.union(folds.psi1.subset(fold_pos[k]))
        train_masks.append([mask(layer, zeroed) for layer in layers])
    if fit_config.warm_start and full_fits is None:
        raise DataError("warm_start needs the full-data fits")

    def task(mk):
        m, k = mk
        cfg = fit_config
        if fit_config.warm_start:
            cfg = FitConfig(fit_config.max_iters, fit_config.step_alpha, fit_config.step_z,
                            fit_config.rel_tol, full_fits[m], True)
        try:
            params, _ = pgd_fit(train_masks[k], candidates.dims[m], cfg, covariates)
        except DivergenceError as exc:
            raise DivergenceError(f"candidate {candidates.dims[m]}, fold {k + 1}: {exc}",
                                  iteration=exc.iteration) from exc
        pos = fold_pos[k]
        rows, cols = folds.psi1.rows[pos], folds.psi1.cols[pos]
        out = []
        for t in range(n_layers):
            theta = theta_matrix(params, t, covariates)
            pred = f1_debias(theta[rows, cols], k_folds)
            if debias_mode == "full":
                pred = pred / p
            out.append(np.clip(pred, 0.0, 1.0))
        return m, k, out

    workers = workers or worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(task, schedule))
    else:
        results = [task(mk) for mk in schedule]
    for m, k, out in results:
        for t in range(n_layers):
            values[m, t, fold_pos[k]] = out[t]
    return FoldPredictions(folds, candidates, values, debias_mode)


def _observed_labels(layers, folds) -> np.ndarray:
    return np.stack([folds.psi1.values(layer.entries) for layer in layers])


def build_cv_qp(a, folds: FoldAssignment, preds: FoldPredictions) -> QpProblem:
    """Quadratic form of the CV criterion, one term per observed pair and layer."""
    layers = _as_layers(a)
    v = preds.values
    if v.shape[1] != len(layers):
        raise ShapeError(f"predictions cover {v.shape[1]} layers, data has {len(layers)}")
    if preds.folds.psi1 != folds.psi1 or not np.array_equal(preds.folds.labels, folds.labels):
        raise IncompletePredictionsError("predictions were made for a different fold assignment")
    if np.isnan(v).any():
        raise IncompletePredictionsError("some fold predictions are missing")
    y = _observed_labels(layers, folds)
    m = v.shape[0]
    hm = np.zeros((m, m))
    hv = np.zeros(m)
    # entry by entry, so identical candidates get bit-identical rows
    for t in range(len(layers)):
        vt = v[:, t, :]
        for a in range(m):
            hv[a] += 2.0 * np.dot(vt[a], y[t])
            for b in range(a, m):
                hm[a, b] += np.dot(vt[a], vt[b])
    iu = np.triu_indices(m, 1)
    hm[iu[1], iu[0]] = hm[iu]
    return QpProblem(hm, hv)


def label_energy(a, folds: FoldAssignment) -> float:
    """Sum of squared observed labels: the weight-free part of the CV criterion."""
    y = _observed_labels(_as_layers(a), folds)
    return float(np.sum(y * y))


def cv_criterion(a, folds: FoldAssignment, preds: FoldPredictions, w) -> float:
    """Mean squared hold-out error of the ``w``-weighted prediction."""
    layers = _as_layers(a)
    y = _observed_labels(layers, folds)
    w = np.asarray(w, dtype=np.float64)
    combined = np.einsum("m,mti->ti", w, preds.values)
    return float(np.sum((y - combined) ** 2) / (len(layers) * len(folds.psi1)))


def equal_weights(m: int) -> WeightVector:
    if m < 1:
        raise DataError("need at least one candidate")
    return WeightVector(np.full(m, 1.0 / m))


def ecv_select(a, folds: FoldAssignment, preds: FoldPredictions, qp: Optional[QpProblem] = None) -> int:
    """Position (0-based) of the candidate with the smallest CV criterion.

    Ties go to the lowest position.
    """
    if qp is None:
        qp = build_cv_qp(a, folds, preds)
    scores = [qp.objective(WeightVector.vertex(qp.m, k).w) for k in range(qp.m)]
    return int(np.argmin(scores))


def netma_weights(a, partition: EdgePartition, folds: FoldAssignment, candidates: CandidateSet,
                  fit_config: FitConfig = FitConfig(), covariates=None,
                  debias_mode: str = "paper_literal", full_fits=None, tol: float = 1e-10):
    """Fold refits, CV quadratic program and simplex solve in one call.

    Returns ``(weights, qp, fold_predictions)``.
    """
    preds = fold_fit_predict(a, partition, folds, candidates, fit_config, covariates,
                             debias_mode, full_fits)
    qp = build_cv_qp(a, folds, preds)
    w = solve_simplex_qp(qp, tol)
    return w, qp, preds
