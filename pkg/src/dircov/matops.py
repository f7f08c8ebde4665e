"""Dense symmetric linear algebra: eigendecomposition with a fixed sign
convention, PSD pseudoinverse and square root, spectral projectors and
subspace-overlap norms.

Everything here is a pure function of its inputs; all values are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotPsdError(ValueError):
    """Matrix has an eigenvalue below the negative tolerance band."""


class DimensionMismatchError(ValueError):
    """Operands have incompatible dimensions."""


def default_rtol(dim: int) -> float:
    """Numerical-rank tolerance: eigenvalues below ``rtol * lambda_max`` count as zero."""
    return dim * np.finfo(float).eps


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value (2-norm) of a dense matrix or vector."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return float(np.linalg.norm(m, 2))


class SymMatrix:
    """Real symmetric matrix, symmetrized as (M + M^T)/2 on construction.

    Caches its eigendecomposition after the first request.
    """

    __slots__ = ("entries", "dim", "_eigen")

    def __init__(self, entries: np.ndarray):
        m = np.asarray(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 1:
            raise DimensionMismatchError("dimension must be >= 1")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix entries must be finite")
        sym = (m + m.T) / 2.0
        sym.setflags(write=False)
        self.entries = sym
        self.dim = sym.shape[0]
        self._eigen = None

    def eigen(self) -> "EigenDecomp":
        if self._eigen is None:
            self._eigen = sym_eigen(self)
        return self._eigen

    def __repr__(self) -> str:  # pragma: no cover
        return f"SymMatrix(dim={self.dim})"


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues sorted descending; eigenvectors as columns, column k paired
    with ``eigenvalues[k]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class Projector:
    """Symmetric idempotent matrix together with its (integer) rank."""

    matrix: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _coerce(m) -> SymMatrix:
    return m if isinstance(m, SymMatrix) else SymMatrix(m)


def sym_eigen(m: SymMatrix) -> EigenDecomp:
    """Eigendecomposition with deterministic ordering and signs.

    Eigenvalues come out nonincreasing. Each eigenvector is flipped so its
    entry of largest absolute value is positive (first such entry on ties),
    which makes every downstream quantity byte-reproducible.
    """
    m = _coerce(m)
    w, v = np.linalg.eigh(m.entries)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for k in range(v.shape[1]):
        j = int(np.argmax(np.abs(v[:, k])))
        if v[j, k] < 0:
            v[:, k] = -v[:, k]
    w.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomp(eigenvalues=w, eigenvectors=v)


def _psd_eigen(m: SymMatrix, rtol: float | None) -> tuple[EigenDecomp, float, float]:
    """Shared PSD validation: returns (decomposition, cut level, rtol used)."""
    m = _coerce(m)
    if rtol is None:
        rtol = default_rtol(m.dim)
    e = m.eigen()
    lam_top = max(float(e.eigenvalues[0]), 0.0)
    if float(e.eigenvalues[-1]) < -rtol * lam_top:
        raise NotPsdError(
            f"matrix is not PSD at tolerance {rtol:g}: "
            f"min eigenvalue {e.eigenvalues[-1]:g}, max {e.eigenvalues[0]:g}"
        )
    return e, rtol * lam_top, rtol


def pinv_psd(m: SymMatrix, rtol: float | None = None) -> SymMatrix:
    """Moore-Penrose pseudoinverse of a PSD matrix.

    Eigenvalues at or below ``rtol * max(lambda_1, 0)`` are treated as exactly
    zero; the rest are inverted in the eigenbasis.
    """
    e, cut, _ = _psd_eigen(m, rtol)
    lam = e.eigenvalues
    inv = np.where(lam > cut, 1.0, 0.0)
    # guard the division so zero eigenvalues never touch 1/0
    inv = inv / np.where(lam > cut, lam, 1.0)
    v = e.eigenvectors
    return SymMatrix((v * inv) @ v.T)


def psd_sqrt(m: SymMatrix, rtol: float | None = None) -> SymMatrix:
    """Symmetric PSD square root; negative eigenvalues inside the tolerance
    band are clamped to zero (sample covariances are PSD only up to rounding)."""
    e, _, _ = _psd_eigen(m, rtol)
    root = np.sqrt(np.maximum(e.eigenvalues, 0.0))
    v = e.eigenvectors
    return SymMatrix((v * root) @ v.T)


def spectral_projector(e: EigenDecomp, i: int, l: int) -> Projector:
    """Orthoprojector onto the span of eigenvectors i..l (1-based, inclusive)."""
    d = e.dim
    if not (1 <= i <= l <= d):
        raise IndexError(f"indices must satisfy 1 <= i <= l <= {d}, got i={i}, l={l}")
    v = e.eigenvectors[:, i - 1 : l]
    p = v @ v.T
    return Projector(matrix=(p + p.T) / 2.0, rank=l - i + 1)


def identity_projector(dim: int) -> Projector:
    return Projector(matrix=np.eye(dim), rank=dim)


def complement(p: Projector) -> Projector:
    """I - P, the projector onto the orthogonal complement."""
    return Projector(matrix=np.eye(p.dim) - p.matrix, rank=p.dim - p.rank)


def projector_overlap(q: Projector, p: Projector) -> float:
    """||Q P||_2, the sine of the largest principal angle between Im(P) and
    the complement of Im(Q)'s kernel. Lands in [0, 1] up to rounding."""
    if q.dim != p.dim:
        raise DimensionMismatchError(f"dimension mismatch: {q.dim} vs {p.dim}")
    return spectral_norm(q.matrix @ p.matrix)


def numerical_rank(m: SymMatrix, rtol: float | None = None) -> int:
    """Number of eigenvalues above ``rtol * max(lambda_1, 0)``."""
    m = _coerce(m)
    if rtol is None:
        rtol = default_rtol(m.dim)
    lam = m.eigen().eigenvalues
    cut = rtol * max(float(lam[0]), 0.0)
    return int(np.sum(lam > cut))
