"""Synthetic latent space networks and the oracle / equal / ECV / NetMA harness."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DataError, InvalidDimensionError, NumericError, UndefinedMetricError
from .graph import AdjacencyView, EdgePartition, assign_folds, egocentric_split, enumerate_pairs, split_pairs
from .lsm import FitConfig, LsmParams, sigmoid, theta_matrix
from .metrics import MetricReport, average_predictions, evaluate, fit_on_observed, full_fit_candidates, predict_pairs
from .qp import WeightVector
from .rng import stream
from .weights import CandidateSet, DEBIAS_MODES, ecv_select, equal_weights, netma_weights

log = logging.getLogger(__name__)

METHODS = ("oracle", "equal", "ecv", "netma")
CASES = ("dim_sweep", "size_sweep", "density_sweep")
EXTENSIONS = ("none", "covariates", "egocentric")
_DEGREE_EXPR = re.compile(r"^\s*([0-9.eE+-]+)\s*\*?\s*\(\s*n\s*-\s*1\s*\)\s*$")


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    t_layers: int = 1
    d0: Tuple[int, ...] = (4,)
    avg_degree: Union[float, str] = 60.0
    m_candidates: int = 6
    ratio: Tuple[int, int] = (7, 3)
    k_folds: Optional[int] = None
    q_reps: int = 100
    case: str = "dim_sweep"
    extension: str = "none"
    sampled_fraction: float = 0.9
    seed: int = 0
    debias_mode: str = "paper_literal"
    max_iters: int = 200
    rel_tol: float = 1e-6

    def __post_init__(self):
        d0 = (self.d0,) if np.isscalar(self.d0) else tuple(self.d0)
        d0 = tuple(int(x) for x in d0)
        if len(d0) == 1 and self.t_layers > 1:
            d0 = d0 * self.t_layers
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "ratio", tuple(int(r) for r in self.ratio))
        ext = self.extension
        if isinstance(ext, str) and ext.startswith("egocentric:"):
            object.__setattr__(self, "extension", "egocentric")
            object.__setattr__(self, "sampled_fraction", float(ext.split(":", 1)[1]))
        if self.k_folds is None:
            object.__setattr__(self, "k_folds", 10 if self.t_layers == 1 else 5)
        self.validate()

    def validate(self):
        if self.n < 2 or self.t_layers < 1 or self.m_candidates < 1 or self.q_reps < 1:
            raise ConfigError("n, t_layers, m_candidates and q_reps must be positive (n >= 2)")
        if len(self.d0) != self.t_layers or min(self.d0) < 1:
            raise ConfigError("d0 needs one positive dimension per layer")
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}")
        if self.extension not in EXTENSIONS:
            raise ConfigError(f"unknown extension {self.extension!r}")
        if self.extension == "covariates" and self.t_layers != 1:
            raise ConfigError("the covariate extension is single-layer")
        if self.debias_mode not in DEBIAS_MODES:
            raise ConfigError(f"unknown debias mode {self.debias_mode!r}")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if self.target_degree() <= 0:
            raise ConfigError("average degree must be positive")

    def target_degree(self) -> float:
        if isinstance(self.avg_degree, str):
            m = _DEGREE_EXPR.match(self.avg_degree)
            if not m:
                raise ConfigError(f"cannot parse avg_degree {self.avg_degree!r}")
            return float(m.group(1)) * (self.n - 1)
        return float(self.avg_degree)

    def fit_config(self) -> FitConfig:
        return FitConfig(max_iters=self.max_iters, rel_tol=self.rel_tol)

    def to_dict(self):
        out = asdict(self)
        out["d0"] = list(self.d0)
        out["ratio"] = list(self.ratio)
        return out


@dataclass
class GroundTruth:
    p_matrix: List[np.ndarray]
    params: LsmParams
    d0: Tuple[int, ...]
    gamma: List[float]
    covariates: Optional[np.ndarray] = None


def gen_alpha(n: int, rng) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=n)


def gen_latent(n: int, d0: int, rng) -> np.ndarray:
    """Centred Gaussian latent positions rescaled so that ``Z'Z = n I``."""
    if d0 >= n:
        raise InvalidDimensionError(f"d0={d0} must be below n={n}")
    z = rng.standard_normal((n, d0))
    z -= z.mean(axis=0)
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))  # keep the orientation of the draw
    z = q * math.sqrt(n)
    return z - z.mean(axis=0)


def average_row_sum(p: np.ndarray) -> float:
    return float(p.sum(axis=1).mean())


def degree_scale(p_raw: np.ndarray, target_degree: float):
    """Multiply by ``gamma = target / ARS(p_raw)`` and clip to [0, 1].

    Returns ``(scaled, gamma)``.
    """
    ars = average_row_sum(p_raw)
    if ars <= 0:
        raise UndefinedMetricError("cannot scale a zero probability matrix")
    gamma = target_degree / ars
    scaled = gamma * p_raw
    clipped = scaled > 1.0
    if clipped.any():
        log.info("degree scaling clipped %.4f of entries to 1", clipped.mean())
        scaled = np.minimum(scaled, 1.0)
    return scaled, gamma


def sample_adjacency(p_matrix: np.ndarray, rng, layer_id=None) -> AdjacencyView:
    n = p_matrix.shape[0]
    i, j = np.triu_indices(n, 1)
    draws = (rng.random(i.size) < p_matrix[i, j]).astype(np.float64)
    a = np.zeros((n, n))
    a[i, j] = draws
    a[j, i] = draws
    return AdjacencyView(a, layer_id)


def gen_covariates(n: int, rng) -> np.ndarray:
    i, j = np.triu_indices(n, 1)
    x = np.zeros((n, n))
    vals = rng.uniform(0.0, 1.0, size=i.size)
    x[i, j] = vals
    x[j, i] = vals
    return x


def gen_network(config: SimConfig, rng) -> Tuple[List[AdjacencyView], GroundTruth]:
    n = config.n
    alpha = gen_alpha(n, rng)
    zs = [gen_latent(n, d, rng) for d in config.d0]
    x = beta = None
    if config.extension == "covariates":
        beta = float(rng.uniform(0.0, 1.0))
        x = gen_covariates(n, rng)
    params = LsmParams(alpha, tuple(zs), beta)
    target = config.target_degree()
    layers, ps, gammas = [], [], []
    for t in range(config.t_layers):
        p_raw = sigmoid(theta_matrix(params, t, x))
        np.fill_diagonal(p_raw, 0.0)
        p, gamma = degree_scale(p_raw, target)
        p.setflags(write=False)
        ps.append(p)
        gammas.append(gamma)
        layers.append(sample_adjacency(p, rng, layer_id=t if config.t_layers > 1 else None))
    return layers, GroundTruth(ps, params, config.d0, gammas, x)


@dataclass
class ReplicationRecord:
    replication: int
    metrics: Dict[str, MetricReport]
    weights: Dict[str, np.ndarray]
    cv_objective: Dict[str, float]
    candidate_risk: np.ndarray
    ecv_index: int


@dataclass
class ExperimentResult:
    config: SimConfig
    records: List[ReplicationRecord] = field(default_factory=list)
    failures: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def metric_values(self, method: str, metric: str) -> np.ndarray:
        return np.array([getattr(r.metrics[method], metric) for r in self.records], dtype=float)

    def summary(self, method: str, metric: str) -> Tuple[float, float]:
        """Mean and standard error across replications."""
        vals = self.metric_values(method, metric)
        return _mean_se(vals)

    def mean_weights(self, method: str) -> np.ndarray:
        return np.mean([r.weights[method] for r in self.records], axis=0)

    def candidate_risk_means(self) -> np.ndarray:
        return np.mean([r.candidate_risk for r in self.records], axis=0)


def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
    return mean, se


def make_partition(config: SimConfig, replication: int) -> EdgePartition:
    rng = stream(config.seed, "split", replication)
    if config.extension == "egocentric":
        return egocentric_split(config.n, config.sampled_fraction, rng)
    return split_pairs(enumerate_pairs(config.n), config.ratio, rng)


def run_replication(config: SimConfig, replication: int) -> ReplicationRecord:
    """One generate / split / fit / weight / evaluate round."""
    layers, truth = gen_network(config, stream(config.seed, "network", replication))
    partition = make_partition(config, replication)
    folds = assign_folds(partition.psi1, config.k_folds, stream(config.seed, "folds", replication))
    candidates = CandidateSet.up_to(config.m_candidates)
    fit_cfg = config.fit_config()
    x = truth.covariates

    full = full_fit_candidates(layers, partition, candidates, fit_cfg, x)
    w_netma, qp, _ = netma_weights(layers, partition, folds, candidates, fit_cfg, x,
                                   config.debias_mode)
    m_star = ecv_select(layers, folds, None, qp)
    weights = {
        "equal": equal_weights(candidates.M).w,
        "ecv": WeightVector.vertex(candidates.M, m_star).w,
        "netma": w_netma.w,
    }

    target = partition.psi2
    truth_vals = np.stack([target.values(p) for p in truth.p_matrix])
    label_vals = np.stack([target.values(a.entries) for a in layers])

    oracle_params = fit_on_observed(layers, partition, list(config.d0), fit_cfg, x)
    preds = {"oracle": predict_pairs(oracle_params, target, float(partition.p), x)}
    for method, w in weights.items():
        preds[method] = average_predictions(full, w)

    metrics = {m: evaluate(preds[m], label_vals, truth_vals) for m in METHODS}
    cand_risk = np.array([evaluate(full.values[k], label_vals, truth_vals).relative_risk
                          for k in range(candidates.M)])
    cv = {m: qp.objective(w) for m, w in weights.items()}
    weights["oracle"] = np.full(candidates.M, np.nan)
    return ReplicationRecord(replication, metrics, weights, cv, cand_risk, m_star)


def run_case(config: SimConfig, workers: int = 1) -> ExperimentResult:
    """All ``q_reps`` replications of one configuration.

    A replication that fails numerically is logged, counted and skipped.
    Every replication draws from its own named streams, so the result does
    not depend on scheduling.
    """
    result = ExperimentResult(config)
    reps = range(config.q_reps)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_safe_replication, [config] * len(reps), reps))
    else:
        outcomes = [_safe_replication(config, q) for q in reps]
    for q, out in zip(reps, outcomes):
        if isinstance(out, ReplicationRecord):
            result.records.append(out)
        else:
            log.warning("replication %d failed: %s", q, out)
            result.failures.append((q, out))
    return result


def _safe_replication(config, q):
    try:
        return run_replication(config, q)
    except (NumericError, DataError) as exc:
        return f"{type(exc).__name__}: {exc}"


SWEEP_FIELD = {"dim_sweep": "m_candidates", "size_sweep": "n", "density_sweep": "avg_degree"}


def run_sweep(config: SimConfig, values: Sequence, workers: int = 1) -> List[ExperimentResult]:
    """``run_case`` at each value of the case's swept parameter."""
    name = SWEEP_FIELD[config.case]
    return [run_case(replace(config, **{name: v}), workers) for v in values]
