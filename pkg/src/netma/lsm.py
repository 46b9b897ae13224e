"""Inner-product latent space model and its projected gradient fit.

Layer ``t`` has logit connection probabilities

    theta[t] = alpha 1' + 1 alpha' + Z[t] Z[t]' (+ beta X)

with ``alpha`` shared by all layers and every ``Z[t]`` column-centred.
Single-layer networks are the ``T = 1`` case throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError, DivergenceError, InvalidDimensionError, NumericError, ShapeError
from .graph import AdjacencyView, MaskedAdjacency

INIT_CLIP = 1e-6
STEP_DELTA = 1e-8
MAX_HALVINGS = 60


@dataclass(frozen=True, eq=False)
class LsmParams:
    alpha: np.ndarray
    z: Tuple[np.ndarray, ...]
    beta: Optional[float] = None

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64).reshape(-1)
        z = tuple(np.array(zt, dtype=np.float64).reshape(alpha.size, -1) for zt in self.z)
        if not z:
            raise ShapeError("at least one latent layer is required")
        for arr in (alpha, *z):
            arr.setflags(write=False)
            if not np.all(np.isfinite(arr)):
                raise NumericError("parameters must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "z", z)
        if self.beta is not None:
            object.__setattr__(self, "beta", float(self.beta))

    @property
    def n(self) -> int:
        return self.alpha.size

    @property
    def d(self) -> List[int]:
        return [zt.shape[1] for zt in self.z]

    @property
    def n_layers(self) -> int:
        return len(self.z)

    def __eq__(self, other):
        if not isinstance(other, LsmParams):
            return NotImplemented
        return (
            np.array_equal(self.alpha, other.alpha)
            and len(self.z) == len(other.z)
            and all(np.array_equal(a, b) for a, b in zip(self.z, other.z))
            and self.beta == other.beta
        )

    __hash__ = None


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 200
    step_alpha: Union[float, str] = "auto"
    step_z: Union[float, str] = "auto"
    rel_tol: float = 1e-6
    init: Optional[LsmParams] = None
    warm_start: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise DataError("max_iters must be at least 1")
        if self.rel_tol <= 0:
            raise DataError("rel_tol must be positive")
        for name in ("step_alpha", "step_z"):
            v = getattr(self, name)
            if isinstance(v, str):
                if v != "auto":
                    raise DataError(f"{name} must be a number or 'auto'")
            elif v < 0:
                raise DataError(f"{name} must be nonnegative")


@dataclass
class FitTrace:
    objective_per_iter: List[float] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False


def sigmoid(x):
    """Logistic function, evaluated on the branch that avoids overflow."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    return np.logaddexp(0.0, x)


def _dense(a) -> np.ndarray:
    if isinstance(a, MaskedAdjacency):
        return a.dense
    if isinstance(a, AdjacencyView):
        return a.entries
    return np.asarray(a, dtype=np.float64)


def _layers(a_train) -> List[np.ndarray]:
    if isinstance(a_train, (MaskedAdjacency, AdjacencyView, np.ndarray)):
        a_train = [a_train]
    mats = [_dense(a) for a in a_train]
    if not mats:
        raise ShapeError("no layers given")
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise ShapeError(f"all layers must be {n}x{n}, got {m.shape}")
    return mats


def _covariate_matrix(covariates, n):
    if covariates is None:
        return None
    x = getattr(covariates, "x", covariates)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n, n):
        raise ShapeError(f"covariate matrix must be {n}x{n}, got {x.shape}")
    return x


def theta_matrix(params: LsmParams, layer: int = 0, covariates=None) -> np.ndarray:
    n = params.n
    zt = params.z[layer]
    theta = params.alpha[:, None] + params.alpha[None, :] + zt @ zt.T
    x = _covariate_matrix(covariates, n)
    if x is not None:
        if params.beta is None:
            raise ShapeError("covariates given but params have no beta")
        theta = theta + params.beta * x
    return theta


def nll_objective(a_train, params: LsmParams, covariates=None) -> float:
    """Negative log-likelihood summed over every ordered entry, diagonal included."""
    mats = _layers(a_train)
    if len(mats) != params.n_layers:
        raise ShapeError(f"{len(mats)} layers of data, {params.n_layers} in params")
    total = 0.0
    for t, a in enumerate(mats):
        theta = theta_matrix(params, t, covariates)
        total += _layer_nll(a, theta)
    if not np.isfinite(total):
        raise NumericError("objective is not finite")
    return float(total)


def _layer_nll(a, theta):
    return float(np.sum(softplus(theta) - a * theta))


def _nll_and_prob(a, theta):
    """Layer objective and ``sigmoid(theta)`` sharing one ``exp`` pass."""
    e = np.exp(-np.abs(theta))
    inv = 1.0 / (1.0 + e)
    pos = theta >= 0
    nll = float(np.sum(np.maximum(theta, 0.0) + np.log1p(e) - a * theta))
    return nll, np.where(pos, inv, e * inv)


def gradients(a_train, params: LsmParams, covariates=None):
    """Analytic gradient of :func:`nll_objective`.

    Returns ``(g_alpha, [g_z per layer], g_beta)``; ``g_beta`` is None
    without covariates.
    """
    mats = _layers(a_train)
    x = _covariate_matrix(covariates, params.n)
    g_alpha = np.zeros(params.n)
    g_z = []
    g_beta = 0.0 if x is not None else None
    for t, a in enumerate(mats):
        resid = a - sigmoid(theta_matrix(params, t, x))
        g_z.append(-2.0 * resid @ params.z[t])
        g_alpha -= 2.0 * resid.sum(axis=1)
        if x is not None:
            g_beta -= float(np.sum(resid * x))
    return g_alpha, g_z, g_beta


def latent_from_gram(g: np.ndarray, d: int) -> np.ndarray:
    """Top-``d`` positive eigenpairs of ``g`` as an ``n x d`` factor.

    Columns are eigenvectors scaled by the square root of their eigenvalue;
    when fewer than ``d`` eigenvalues are positive the rest are zero.
    """
    n = g.shape[0]
    if d > n:
        raise InvalidDimensionError(f"dimension {d} exceeds node count {n}")
    vals, vecs = np.linalg.eigh((g + g.T) / 2.0)
    order = np.argsort(vals)[::-1][:d]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > 0
    out = np.zeros((n, d))
    out[:, keep] = vecs[:, keep] * np.sqrt(vals[keep])
    # fix each column's sign so the result does not depend on LAPACK's choice
    for k in np.flatnonzero(keep):
        col = out[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            out[:, k] = -col
    return out


def spectral_init(a_train, d, tau: Optional[float] = None, eps: float = INIT_CLIP) -> LsmParams:
    """Starting point for :func:`pgd_fit` built from one eigendecomposition per layer.

    ``alpha`` comes from the logit of each node's observed degree fraction;
    each ``Z[t]`` from the positive part of the doubly-centred logit matrix.
    """
    if isinstance(a_train, (MaskedAdjacency, AdjacencyView, np.ndarray)):
        a_train = [a_train]
    mats = _layers(a_train)
    n = mats[0].shape[0]
    if tau is None:
        taus = [a.tau for a in a_train if isinstance(a, MaskedAdjacency)]
        tau = float(np.mean(taus)) if taus else 1.0
    if tau <= 0:
        raise DataError("tau must be positive")
    dims = _dims(d, len(mats))
    for dt in dims:
        if dt < 1 or dt > n:
            raise InvalidDimensionError(f"dimension {dt} outside [1, {n}]")

    abar = np.mean(mats, axis=0)
    rowmean = abar.sum(axis=1) / max(n - 1, 1)
    alpha0 = logit(np.clip(rowmean / tau, eps, 1 - eps))
    j = np.eye(n) - 1.0 / n
    zs = []
    for a, dt in zip(mats, dims):
        g = logit(np.clip(a / tau, eps, 1 - eps)) - alpha0[:, None] - alpha0[None, :]
        g = j @ g @ j
        zt = latent_from_gram(g, dt)
        zs.append(zt - zt.mean(axis=0))
    return LsmParams(alpha0, tuple(zs))


def _dims(d, n_layers) -> List[int]:
    if np.isscalar(d):
        return [int(d)] * n_layers
    dims = [int(x) for x in d]
    if len(dims) != n_layers:
        raise ShapeError(f"{len(dims)} dimensions for {n_layers} layers")
    return dims


def auto_steps(params: LsmParams, covariates=None):
    """Default step sizes ``(eta_alpha, [eta_z per layer], eta_beta)``."""
    n = params.n
    eta_alpha = 1.0 / (4.0 * n)
    eta_z = [1.0 / (2.0 * _spec_norm(zt) ** 2 + STEP_DELTA) for zt in params.z]
    eta_beta = None
    x = _covariate_matrix(covariates, n)
    if x is not None:
        eta_beta = _beta_step(eta_alpha, x)
    return eta_alpha, eta_z, eta_beta


def _beta_step(eta_alpha, x):
    # equals 1 / ||X||_F^2 at the automatic alpha step
    fro2 = float(np.sum(x * x))
    return eta_alpha * 4.0 * x.shape[0] / fro2 if fro2 > 0 else 0.0


def _spec_norm(z):
    if z.size == 0:
        return 0.0
    return float(np.linalg.norm(z, 2))


def pgd_fit(a_train, d, config: FitConfig = FitConfig(), covariates=None):
    """Fit the model to (masked) adjacency layers by projected gradient descent.

    Every iteration takes a gradient step on each ``Z[t]``, re-centres its
    columns, and then steps ``alpha`` (and ``beta`` with covariates) using
    residuals from all layers at the same iterate. Stops after
    ``config.max_iters`` iterations or once the relative objective change
    drops below ``config.rel_tol``. With both steps on "auto", a step that
    would raise the objective is retried at half the size, and the smaller
    steps are kept from then on.
    """
    if isinstance(a_train, (MaskedAdjacency, AdjacencyView, np.ndarray)):
        a_train = [a_train]
    mats = _layers(a_train)
    n = mats[0].shape[0]
    x = _covariate_matrix(covariates, n)
    dims = _dims(d, len(mats))

    if config.init is not None:
        init = config.init
        if init.d != dims or init.n != n:
            raise ShapeError("initial parameters do not match data and dimension")
    else:
        init = spectral_init(a_train, dims)
    beta = (init.beta if init.beta is not None else 0.0) if x is not None else None
    params = LsmParams(init.alpha, init.z, beta)

    eta_alpha, eta_z, eta_beta = auto_steps(params, x)
    if config.step_alpha != "auto":
        eta_alpha = float(config.step_alpha)
        if x is not None:
            eta_beta = _beta_step(eta_alpha, x)
    if config.step_z != "auto":
        eta_z = [float(config.step_z)] * len(mats)

    alpha = params.alpha.copy()
    zs = [zt.copy() for zt in params.z]
    trace = FitTrace()

    def evaluate(alpha, zs, beta):
        probs, obj = [], 0.0
        for a, zt in zip(mats, zs):
            th = alpha[:, None] + alpha[None, :] + zt @ zt.T
            if x is not None:
                th += beta * x
            nll, prob = _nll_and_prob(a, th)
            probs.append(prob)
            obj += nll
        return probs, obj

    probs, obj = evaluate(alpha, zs, beta)
    if not np.isfinite(obj):
        raise DivergenceError("objective not finite at initial point", iteration=0)
    trace.objective_per_iter.append(obj)

    # auto steps come from the initial point only; shrink them if they overshoot
    adaptive = config.step_alpha == "auto" and config.step_z == "auto"
    for u in range(config.max_iters):
        resids = [a - prob for a, prob in zip(mats, probs)]
        resid_sum = np.sum(resids, axis=0)
        for halving in range(MAX_HALVINGS + 1):
            new_zs = []
            for t, resid in enumerate(resids):
                zt = zs[t] + 2.0 * eta_z[t] * (resid @ zs[t])
                new_zs.append(zt - zt.mean(axis=0))
            new_alpha = alpha + 2.0 * eta_alpha * resid_sum.sum(axis=1)
            new_beta = beta
            if x is not None:
                new_beta = beta + 2.0 * eta_beta * float(np.sum(resid_sum * x))
            with np.errstate(over="ignore", invalid="ignore"):
                new_probs, new_obj = evaluate(new_alpha, new_zs, new_beta)
            if not adaptive or (np.isfinite(new_obj) and new_obj <= obj):
                break
            eta_alpha /= 2.0
            eta_z = [e / 2.0 for e in eta_z]
            if eta_beta is not None:
                eta_beta /= 2.0
        trace.iterations_run = u + 1
        if not np.isfinite(new_obj):
            raise DivergenceError(f"objective diverged at iteration {u + 1}", iteration=u + 1)
        alpha, zs, beta, probs = new_alpha, new_zs, new_beta, new_probs
        trace.objective_per_iter.append(new_obj)
        change = abs(obj - new_obj) / max(abs(obj), 1.0)
        obj = new_obj
        if change < config.rel_tol:
            trace.converged = True
            break

    return LsmParams(alpha, tuple(zs), beta), trace
