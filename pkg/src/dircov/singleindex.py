"""Single-index-model data generation, the link-function catalogue, level-set
partitioning, the averaged conditional least squares (ACLS) estimator, and the
adaptive level-set-count selection rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import Dataset, OlsFit, ols_fit
from .matops import SymMatrix, sym_eigen
from .randgen import CovModel, RngStream, _gen, sample_gaussian

LINKS = {
    "identity": lambda t: t,
    "logit": lambda t: 1.0 / (1.0 + np.exp(-t)),
    "relu": lambda t: np.maximum(0.0, t),
    "tanh": np.tanh,
    "shifted_abs": lambda t: np.abs(t - 0.5),
    "mixed": lambda t: t + t**2 + np.cos(t),
}

# Fixed seed for the one-off link-variance calibration draws; independent of
# user seeds so calibration is a pure function of (link, sigma).
_CALIBRATION_SEED = 52_81_2020
_CALIBRATION_DRAWS = 10**6
_variance_cache: dict[tuple[str, float], float] = {}


class UnknownLinkError(ValueError):
    """Link name is not in the catalogue."""


class EmptyModelError(ValueError):
    """No level set passed the admission filters; callers treat lambda_1 = 0."""


class DegenerateResponseError(ValueError):
    """Responses are constant; the rescaling map is undefined."""


def link_function(kind: str):
    try:
        return LINKS[kind]
    except KeyError:
        raise UnknownLinkError(f"unknown link {kind!r}; known: {sorted(LINKS)}") from None


@dataclass(frozen=True)
class SimConfig:
    """One single-index sampling setup: E[Y|X] = f(a^T X) plus Gaussian noise
    with variance sigma_zeta^2 * Var(f(a^T X))."""

    index: np.ndarray
    link: str
    sigma_zeta: float
    cov: CovModel

    def __post_init__(self):
        a = np.asarray(self.index, dtype=float).reshape(-1)
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ValueError("index vector must have unit norm")
        if a.shape[0] != self.cov.dim:
            raise ValueError("index vector length must match the covariance dimension")
        if self.sigma_zeta < 0.0:
            raise ValueError("sigma_zeta must be >= 0")
        link_function(self.link)
        object.__setattr__(self, "index", a)

    @property
    def dim(self) -> int:
        return self.cov.dim


@dataclass(frozen=True)
class LevelSetPartition:
    """Assignment of samples to the J dyadic response regions [(l-1)/J, l/J)."""

    j: int
    assignments: np.ndarray  # region index in 1..J per sample
    counts: np.ndarray       # length J, sums to N exactly

    @property
    def densities(self) -> np.ndarray:
        return self.counts / self.counts.sum()


@dataclass(frozen=True)
class AclsModel:
    """Averaged outer-product model: matrix, leading eigenpair, admitted level
    sets, and the per-level-set local fits."""

    j: int
    alpha: float
    matrix: SymMatrix
    top_eigenvalue: float
    top_eigenvector: np.ndarray
    active_set: tuple[int, ...]
    local_fits: dict[int, tuple[OlsFit, float]]


def calibrate_link_variance(link: str, sigma: float) -> float:
    """Var(f(g)) for g ~ N(0, sigma^2): analytic for the identity link,
    a cached fixed-seed 1e6-draw Monte-Carlo estimate otherwise."""
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    if link == "identity":
        return sigma * sigma
    f = link_function(link)
    key = (link, float(sigma))
    if key not in _variance_cache:
        g = RngStream(_CALIBRATION_SEED).generator()
        values = f(sigma * g.standard_normal(_CALIBRATION_DRAWS))
        _variance_cache[key] = float(np.var(values))
    return _variance_cache[key]


def generate_sim_data(cfg: SimConfig, n: int, rng) -> Dataset:
    """Draw N samples of (X, Y): X from the configured covariance model, then
    Y = f(a^T X) + zeta from the same stream (features first, noise second)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = _gen(rng)
    data = sample_gaussian(cfg.cov, n, g)
    f = link_function(cfg.link)
    signal = f(data.x @ cfg.index)
    if cfg.sigma_zeta > 0.0:
        sigma_p = math.sqrt(float(cfg.index @ cfg.cov.matrix.entries @ cfg.index))
        noise_sd = cfg.sigma_zeta * math.sqrt(calibrate_link_variance(cfg.link, sigma_p))
        y = signal + noise_sd * g.standard_normal(n)
    else:
        y = signal
    return data.with_response(y)


def rescale_responses(y: np.ndarray) -> np.ndarray:
    """Monotone affine map of the responses into [0, 1).

    The divisor carries a (1 + 2^-20) pad so the maximum lands strictly below
    one; order statistics (hence level-set structure) are preserved.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("responses must be finite")
    lo, hi = float(y.min()), float(y.max())
    if hi == lo:
        raise DegenerateResponseError("responses are constant; cannot rescale to [0, 1)")
    return (y - lo) / ((hi - lo) * (1.0 + 2.0**-20))


def partition_level_sets(y: np.ndarray, j: int) -> LevelSetPartition:
    """Region index floor(J*y) + 1 for responses in [0, 1)."""
    y = np.asarray(y, dtype=float)
    if j < 1:
        raise ValueError("J must be >= 1")
    if y.size == 0 or np.any(y < 0.0) or np.any(y >= 1.0):
        raise ValueError("responses must lie in [0, 1)")
    # the min() guards float roundup of J*y for y just under 1
    assignments = np.minimum(np.floor(j * y).astype(int), j - 1) + 1
    counts = np.bincount(assignments, minlength=j + 1)[1:]
    return LevelSetPartition(j=j, assignments=assignments, counts=counts)


def acls_fit(data: Dataset, j: int, alpha: float, rtol: float | None = None) -> AclsModel:
    """Averaged conditional least squares with J level sets.

    Per level set: the minimal-norm OLS vector; admitted sets need empirical
    density above alpha/J and at least 2D samples (both filters jointly). The
    admitted rank-one terms are density-weighted into the averaged matrix and
    its leading eigenvector is the index estimate.
    """
    if data.y is None:
        raise ValueError("acls_fit needs a response vector")
    if alpha <= 0.0:
        raise ValueError("alpha must be > 0")
    part = partition_level_sets(data.y, j)
    n, d = data.n, data.dim
    matrix = np.zeros((d, d))
    active: list[int] = []
    local: dict[int, tuple[OlsFit, float]] = {}
    for level in range(1, j + 1):
        count = int(part.counts[level - 1])
        density = count / n
        if density <= alpha / j or count < 2 * d:
            continue
        fit = ols_fit(data.subset(part.assignments == level), rtol)
        active.append(level)
        local[level] = (fit, density)
        matrix += density * np.outer(fit.coef, fit.coef)
    if not active:
        raise EmptyModelError(f"no active level set for J={j} (alpha={alpha}, N={n}, D={d})")
    sym = SymMatrix(matrix)
    eig = sym_eigen(sym)
    return AclsModel(
        j=j,
        alpha=alpha,
        matrix=sym,
        top_eigenvalue=float(eig.eigenvalues[0]),
        top_eigenvector=eig.eigenvectors[:, 0],
        active_set=tuple(active),
        local_fits=local,
    )


def level_grid(k_max: int) -> list[int]:
    """Deduplicated exponential grid ceil(1.5^k), k = 0..k_max."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    grid: list[int] = []
    for k in range(k_max + 1):
        j = math.ceil(1.5**k)
        if not grid or j > grid[-1]:
            grid.append(j)
    return grid


def select_from_scores(trace: list[tuple[int, float]]) -> int:
    """Largest J whose score J*lambda_1 strictly beats every smaller grid entry."""
    best_j = trace[0][0]
    seen_max = trace[0][0] * trace[0][1]
    for j, lam in trace[1:]:
        score = j * lam
        if score > seen_max:
            best_j = j
            seen_max = score
    return best_j


def select_level_count(
    data: Dataset, alpha: float, k_max: int = 40, rtol: float | None = None
) -> tuple[int, list[tuple[int, float]]]:
    """Adaptive choice of the level-set count J.

    Evaluates lambda_1 of the averaged matrix over the exponential grid
    (entries beyond N/(2D) are dropped since their level sets cannot all pass
    the size filter; empty models score 0) and keeps the largest J whose
    J*lambda_1 exceeds that of every smaller grid entry. Returns the choice
    plus the full (J, lambda_1) trace for diagnostics.
    """
    if data.y is None:
        raise ValueError("select_level_count needs a response vector")
    cap = data.n / (2 * data.dim)
    grid = [j for j in level_grid(k_max) if j <= cap] or [1]
    trace: list[tuple[int, float]] = []
    for j in grid:
        try:
            lam = acls_fit(data, j, alpha, rtol).top_eigenvalue
        except EmptyModelError:
            lam = 0.0
        trace.append((j, lam))
    return select_from_scores(trace), trace


def aligned_error(u: np.ndarray, a: np.ndarray) -> float:
    """Sign-invariant distance min over s in {-1, 1} of ||s*u - a||_2."""
    u = np.asarray(u, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if u.shape != a.shape:
        raise ValueError("vectors must share a dimension")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9 or abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise ValueError("aligned_error expects unit vectors")
    return math.sqrt(max(2.0 - 2.0 * abs(float(u @ a)), 0.0))
