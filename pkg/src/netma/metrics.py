"""Held-out predictions and the scores used to compare them.

Final candidate predictions come from fits on all observed pairs and are
divided by the observed fraction ``p`` before clipping to [0, 1]. Metrics
pool every (layer, pair) point into one list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DivergenceError, ShapeError, UndefinedMetricError
from .graph import EdgePartition, PairSet, mask
from .lsm import FitConfig, LsmParams, pgd_fit, sigmoid, theta_matrix
from .weights import CandidateSet, _as_layers

MLOGF_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class CandidatePredictions:
    """``values[m, t, i]``: candidate ``m``'s prediction at ``target`` pair ``i`` of layer ``t``."""

    target: PairSet
    values: np.ndarray
    p_used: float
    candidates: Optional[CandidateSet] = None
    fits: Tuple[LsmParams, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != len(self.target):
            raise ShapeError(f"prediction array has shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MetricReport:
    auroc: float
    aupr: float
    mlogf: float
    mse: float
    n_evaluated: int
    relative_risk: Optional[float] = None
    mse_truth: Optional[float] = None

    def as_dict(self):
        out = {"auroc": self.auroc, "aupr": self.aupr, "mlogf": self.mlogf, "mse": self.mse}
        if self.relative_risk is not None:
            out["relative_risk"] = self.relative_risk
        if self.mse_truth is not None:
            out["mse_truth"] = self.mse_truth
        return out


def f2_debias(x, n_pairs: int, n_observed: int):
    """``|pairs| * sigmoid(x) / |observed pairs|``."""
    return n_pairs * sigmoid(x) / n_observed


def predict_pairs(params: LsmParams, target: PairSet, p: float, covariates=None) -> np.ndarray:
    """Debiased, clipped predictions of one fit at ``target``; shape ``(T, |target|)``."""
    out = np.empty((params.n_layers, len(target)))
    for t in range(params.n_layers):
        theta = theta_matrix(params, t, covariates)
        out[t] = np.clip(sigmoid(target.values(theta)) / p, 0.0, 1.0)
    return out


def fit_on_observed(a, partition: EdgePartition, d, fit_config: FitConfig = FitConfig(),
                    covariates=None) -> LsmParams:
    layers = _as_layers(a)
    masked = [mask(layer, partition.psi2) for layer in layers]
    params, _ = pgd_fit(masked, d, fit_config, covariates)
    return params


def full_fit_candidates(a, partition: EdgePartition, candidates: CandidateSet,
                        fit_config: FitConfig = FitConfig(), covariates=None,
                        target: Optional[PairSet] = None) -> CandidatePredictions:
    """Fit each candidate on all observed pairs and predict ``target`` (default: held-out pairs)."""
    target = partition.psi2 if target is None else target
    p = float(partition.p)
    fits, values = [], []
    for d in candidates.dims:
        try:
            params = fit_on_observed(a, partition, d, fit_config, covariates)
        except DivergenceError as exc:
            raise DivergenceError(f"candidate {d}: {exc}", iteration=exc.iteration) from exc
        fits.append(params)
        values.append(predict_pairs(params, target, p, covariates))
    return CandidatePredictions(target, np.stack(values), p, candidates, tuple(fits))


def average_predictions(preds: CandidatePredictions, w) -> np.ndarray:
    """Weighted combination of the candidates; shape ``(T, |target|)``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (preds.M,):
        raise ShapeError(f"{w.size} weights for {preds.M} candidates")
    return np.clip(np.tensordot(w, preds.values, axes=1), 0.0, 1.0)


def _check_pair(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores for {y.size} labels")
    if s.size == 0:
        raise UndefinedMetricError("no points to evaluate")
    return s, y.astype(bool)


def _average_ranks(x):
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    mid = ends - (counts - 1) / 2.0
    return mid[inverse]


def auroc(scores, labels) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic (ties count one half)."""
    s, y = _check_pair(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positive and negative labels")
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds are the distinct scores in decreasing order; tied scores
    enter together. Each recall increment is weighted by the precision at
    that threshold.
    """
    s, y = _check_pair(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPR needs at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def mlogf(pred, labels, eps: float = MLOGF_EPS) -> float:
    """Mean Bernoulli log-likelihood with predictions clipped to [eps, 1 - eps]."""
    q, y = _check_pair(pred, labels)
    q = np.clip(q, eps, 1.0 - eps)
    return float(np.mean(np.where(y, np.log(q), np.log1p(-q))))


def mse(pred, target) -> float:
    q = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if q.shape != t.shape:
        raise ShapeError(f"{q.size} predictions for {t.size} targets")
    if q.size == 0:
        raise UndefinedMetricError("no points to evaluate")
    return float(np.mean((q - t) ** 2))


def relative_risk(pred, truth) -> float:
    """``sum((pred - truth)^2) / sum(truth^2)`` over all pairs and layers."""
    q = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    if q.shape != t.shape:
        raise ShapeError(f"{q.size} predictions for {t.size} truth values")
    denom = float(np.sum(t * t))
    if denom == 0.0:
        raise UndefinedMetricError("relative risk is undefined for an all-zero truth")
    return float(np.sum((q - t) ** 2) / denom)


def evaluate(pred, labels, truth=None, eps: float = MLOGF_EPS) -> MetricReport:
    """All metrics for one prediction; ``truth`` (probabilities) adds risk and MSE against P."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    y = labels.astype(bool)
    has_both = 0 < y.sum() < y.size
    report = dict(
        auroc=auroc(pred, labels) if has_both else float("nan"),
        aupr=aupr(pred, labels) if y.any() else float("nan"),
        mlogf=mlogf(pred, labels, eps),
        mse=mse(pred, labels),
        n_evaluated=int(pred.size),
    )
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64).reshape(-1)
        report["relative_risk"] = relative_risk(pred, truth)
        report["mse_truth"] = mse(pred, truth)
    return MetricReport(**report)


def stack_layers(values: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(v).reshape(-1) for v in values])
