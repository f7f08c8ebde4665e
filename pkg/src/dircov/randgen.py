"""Seed-driven construction of covariance models and samplers.

Determinism contract: an (master_seed, stream_index) pair fixes the entire
output bit-for-bit, on every platform and for any parallelism degree. Streams
are numpy PCG64 generators keyed through SeedSequence spawn keys; Gaussian
variates use numpy's ziggurat. Samplers consume their generator in a fixed
documented order so outputs never depend on call context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import Dataset
from .matops import Projector, SymMatrix, psd_sqrt


@dataclass(frozen=True)
class RngStream:
    """Value-type handle for one reproducible random stream."""

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        lo = self.stream_index & 0xFFFFFFFF
        hi = self.stream_index >> 32
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(lo, hi))
        return np.random.Generator(np.random.PCG64(seq))


def _gen(rng) -> np.random.Generator:
    """Accept either an RngStream or an already-running Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


@dataclass(frozen=True)
class CovModel:
    """A covariance matrix plus the label/parameter that produced it."""

    label: str
    dim: int
    nu: float
    matrix: SymMatrix

    def __post_init__(self):
        lam = self.matrix.eigen().eigenvalues
        if lam[-1] < -1e-10 * max(float(lam[0]), 0.0):
            raise ValueError(f"covariance model {self.label!r} is not PSD")


def haar_orthogonal(dim: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
    R-diagonal sign fix (naive QR is not Haar)."""
    g = _gen(rng)
    a = g.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    return q * np.where(d < 0, -1.0, 1.0)


def make_sigma_setting1(nu: float, rng) -> CovModel:
    """Sigma = U diag(1,1,1,1,1,nu,...,nu) U^T with U Haar orthogonal, D=10."""
    if not (0.0 < nu <= 1.0):
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    u = haar_orthogonal(10, rng)
    s = np.concatenate([np.ones(5), np.full(5, nu)])
    return CovModel(label="setting1", dim=10, nu=float(nu), matrix=SymMatrix((u * s) @ u.T))


def make_sigma_setting2(nu: float, dim: int) -> CovModel:
    """AR(1) correlation matrix: Sigma[i, j] = nu^|i-j|."""
    if not (0.0 < nu < 1.0):
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    idx = np.arange(dim)
    m = nu ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    return CovModel(label="setting2", dim=dim, nu=float(nu), matrix=SymMatrix(m))


def make_sigma_identity(dim: int) -> CovModel:
    return CovModel(label="identity", dim=dim, nu=1.0, matrix=SymMatrix(np.eye(dim)))


def make_sigma_custom(matrix, nu: float = float("nan")) -> CovModel:
    m = matrix if isinstance(matrix, SymMatrix) else SymMatrix(matrix)
    return CovModel(label="custom", dim=m.dim, nu=nu, matrix=m)


def sample_gaussian(model: CovModel, n: int, rng) -> Dataset:
    """N rows of N(0, Sigma): one standard-normal block times the symmetric
    square root of Sigma."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = _gen(rng)
    root = psd_sqrt(model.matrix).entries
    return Dataset(g.standard_normal((n, model.dim)) @ root)


def sample_ball_uniform(dim: int, n: int, rng) -> Dataset:
    """N rows uniform on the unit ball: Gaussian direction times U^(1/D) radius.

    Draw order is fixed: the (n, dim) normal block first, then the n radii.
    """
    if dim < 1 or n < 1:
        raise ValueError("dim and n must be >= 1")
    g = _gen(rng)
    direction = g.standard_normal((n, dim))
    radius = g.random(n) ** (1.0 / dim)
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return Dataset(direction / norms * radius[:, None])


def random_orthoprojector(dim: int, rank: int, rng) -> Projector:
    """P = V V^T with V the first `rank` columns of a Haar orthogonal matrix."""
    if not (1 <= rank <= dim):
        raise ValueError(f"rank must lie in [1, {dim}], got {rank}")
    v = haar_orthogonal(dim, rng)[:, :rank]
    p = v @ v.T
    return Projector(matrix=(p + p.T) / 2.0, rank=rank)
