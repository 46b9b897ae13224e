"""Minimise ``w'Hw - h'w`` over the probability simplex.

Accelerated projected gradient (FISTA with restarts) does the bulk of the
work; the result is then polished by solving the KKT system on its support
and compared against every vertex and the barycentre, so the returned
point is never worse than any of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidQPError, ShapeError

PSD_TOL = 1e-8
SYMMETRY_TOL = 1e-10
MAX_ITERS = 100_000


@dataclass(frozen=True, eq=False)
class QpProblem:
    h_matrix: np.ndarray
    h_vector: np.ndarray

    def __post_init__(self):
        hm = np.array(self.h_matrix, dtype=np.float64)
        hv = np.array(self.h_vector, dtype=np.float64).reshape(-1)
        if hm.ndim != 2 or hm.shape != (hv.size, hv.size):
            raise ShapeError(f"H must be {hv.size}x{hv.size}, got {hm.shape}")
        hm.setflags(write=False)
        hv.setflags(write=False)
        object.__setattr__(self, "h_matrix", hm)
        object.__setattr__(self, "h_vector", hv)

    @property
    def m(self) -> int:
        return self.h_vector.size

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.h_matrix @ w - self.h_vector @ w)

    def check(self):
        """Raise :class:`InvalidQPError` unless H is symmetric PSD up to roundoff."""
        hm = self.h_matrix
        scale = max(1.0, float(np.max(np.abs(hm))) if hm.size else 1.0)
        if np.max(np.abs(hm - hm.T), initial=0.0) > SYMMETRY_TOL * scale:
            raise InvalidQPError("H is not symmetric")
        if not (np.all(np.isfinite(hm)) and np.all(np.isfinite(self.h_vector))):
            raise InvalidQPError("H or h contains non-finite values")
        lam_min = float(np.linalg.eigvalsh((hm + hm.T) / 2).min())
        if lam_min < -PSD_TOL * scale:
            raise InvalidQPError(f"H is not positive semidefinite (min eigenvalue {lam_min:.3g})")


@dataclass
class QpDiagnostics:
    iterations: int = 0
    fw_gap: float = float("nan")
    objective: float = float("nan")
    source: str = ""
    merged_duplicates: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class WeightVector:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64).reshape(-1)
        if w.size < 1:
            raise ShapeError("weight vector is empty")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ShapeError("weights must be nonnegative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def __len__(self):
        return self.w.size

    def __getitem__(self, k):
        return self.w[k]

    def __array__(self, dtype=None, copy=None):
        return self.w if dtype is None else self.w.astype(dtype)

    @classmethod
    def vertex(cls, m: int, k: int) -> "WeightVector":
        w = np.zeros(m)
        w[k] = 1.0
        return cls(w)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ks > 0)[-1]
    shift = css[rho] / (rho + 1.0)
    return np.maximum(v - shift, 0.0)


def _clean(w: np.ndarray) -> np.ndarray:
    """Exact feasibility: clip tiny negatives and renormalise."""
    w = np.maximum(np.asarray(w, dtype=np.float64), 0.0)
    s = w.sum()
    if s <= 0:
        w = np.full(w.size, 1.0 / w.size)
    else:
        w = w / s
    # push the residual rounding error onto the largest entry
    k = int(np.argmax(w))
    w[k] += 1.0 - w.sum()
    return np.maximum(w, 0.0)


def _fw_gap(hm, hv, w):
    grad = 2.0 * hm @ w - hv
    return float(grad @ w - grad.min())


def _apg(hm, hv, w0, tol, max_iters):
    lip = 2.0 * float(np.linalg.eigvalsh(hm).max()) if hm.size else 0.0
    if lip <= 0:
        # linear objective: best vertex
        w = np.zeros(hv.size)
        w[int(np.argmax(hv))] = 1.0
        return w, 0
    step = 1.0 / lip
    w = w0.copy()
    y = w.copy()
    t = 1.0
    f_prev = w @ hm @ w - hv @ w
    it = 0
    for it in range(1, max_iters + 1):
        grad = 2.0 * hm @ y - hv
        w_new = project_simplex(y - step * grad)
        f_new = w_new @ hm @ w_new - hv @ w_new
        if f_new > f_prev:
            if t == 1.0:
                # a plain projected step from w failed to descend: roundoff floor
                break
            # adaptive restart
            t = 1.0
            y = w.copy()
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, t = w_new, t_new
        done = abs(f_prev - f_new) <= tol * max(1.0, abs(f_new)) and _fw_gap(hm, hv, w) <= tol * max(1.0, abs(f_new))
        f_prev = f_new
        if done:
            break
    return w, it


def _support_polish(hm, hv, w, thresh=1e-12):
    """Solve the equality-constrained QP on the support of ``w``."""
    s = np.flatnonzero(w > thresh)
    if s.size == 0:
        return None
    k = s.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * hm[np.ix_(s, s)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([hv[s], [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    ws = sol[:k]
    if np.any(ws < 0) or not np.all(np.isfinite(ws)):
        return None
    out = np.zeros(w.size)
    out[s] = ws
    return _clean(out)


def _duplicate_groups(hm, hv):
    """Groups of candidates whose H rows and h entries coincide exactly."""
    m = hv.size
    groups, seen = [], set()
    for a in range(m):
        if a in seen:
            continue
        grp = [a]
        for b in range(a + 1, m):
            if b not in seen and hv[a] == hv[b] and np.array_equal(hm[a], hm[b]):
                grp.append(b)
                seen.add(b)
        groups.append(grp)
    return groups


def solve_simplex_qp(qp: QpProblem, tol: float = 1e-10, max_iters: int = MAX_ITERS,
                     diagnostics: Optional[QpDiagnostics] = None) -> WeightVector:
    """Weights minimising ``qp.objective`` over the probability simplex.

    Candidates with identical rows of H and entries of h are merged before
    solving and their mass goes to the lowest index, so exact ties resolve
    deterministically.
    """
    qp.check()
    m = qp.m
    diag = diagnostics if diagnostics is not None else QpDiagnostics()
    if m == 1:
        diag.objective = qp.objective([1.0])
        diag.source = "singleton"
        diag.fw_gap = 0.0
        return WeightVector([1.0])

    groups = _duplicate_groups(qp.h_matrix, qp.h_vector)
    reps = [g[0] for g in groups]
    diag.merged_duplicates = [g for g in groups if len(g) > 1]
    hm = np.ascontiguousarray(qp.h_matrix[np.ix_(reps, reps)])
    hm = (hm + hm.T) / 2.0
    hv = qp.h_vector[reps]
    r = len(reps)

    def full(wr):
        out = np.zeros(m)
        out[reps] = wr
        return out

    cands = []
    if r > 1:
        w_apg, iters = _apg(hm, hv, np.full(r, 1.0 / r), tol, max_iters)
        diag.iterations = iters
        w_apg = _clean(w_apg)
        cands.append(("apg", full(w_apg)))
        polished = _support_polish(hm, hv, w_apg)
        if polished is not None:
            cands.append(("polish", full(polished)))
    for k in reps:
        cands.append(("vertex", WeightVector.vertex(m, k).w))
    cands.append(("equal", np.full(m, 1.0 / m)))
    vals = [qp.objective(w) for _, w in cands]
    best = int(np.argmin(vals))  # first minimum wins
    diag.source, w = cands[best]

    diag.objective = qp.objective(w)
    diag.fw_gap = _fw_gap(qp.h_matrix, qp.h_vector, w)
    return WeightVector(w)
