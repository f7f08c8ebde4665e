"""Directional error functionals, eigengap quantities, the Davis-Kahan
diagnostic, relative eigenvalue error, the whitened-perturbation rank test,
and Gaussian psi2/kappa proxies.

psi2 norms are not identifiable from finite data; the proxies below implement
the exact Gaussian closed form sqrt(8/3 * variance). The scalar 8/3 solves
E exp(g^2/s^2) = (1 - 2/s^2)^(-1/2) = 2 for a standard normal g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matops import (
    Projector,
    SymMatrix,
    complement,
    default_rtol,
    numerical_rank,
    pinv_psd,
    psd_sqrt,
    spectral_norm,
    spectral_projector,
)

GAUSSIAN_PSI2_SQ = 8.0 / 3.0


class RankCollapseError(ValueError):
    """Sample spectrum lost the rank needed for a relative comparison."""


@dataclass(frozen=True)
class GapReport:
    """Sample and population eigengaps for an index block [i, l]."""

    i: int
    l: int
    delta_sample: float
    delta_population: float


@dataclass(frozen=True)
class DkDiagnostic:
    """One Davis-Kahan comparison: lhs = ||Q_{i,l}(hat) P_{i,l}||_2, rhs the
    (pi/2) perturbation bound. Invalid (rhs = inf) when the sample gap closes."""

    lhs: float
    rhs: float
    valid: bool


def _entries(m) -> np.ndarray:
    return m.entries if isinstance(m, SymMatrix) else np.asarray(m, dtype=float)


def directional_cov_error(a, b, s_hat, s) -> float:
    """||A (Sigma_hat - Sigma) B^T||_2 for test matrices A (d1 x D), B (d2 x D)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    delta = _entries(s_hat) - _entries(s)
    if a.shape[1] != delta.shape[0] or b.shape[1] != delta.shape[0]:
        raise ValueError(
            f"test matrices with {a.shape[1]}/{b.shape[1]} columns do not fit dim {delta.shape[0]}"
        )
    return spectral_norm(a @ delta @ b.T)


def directional_prec_error(a, b, s_hat_dagger, s_dagger) -> float:
    """||A (Sigma_hat^+ - Sigma^+) B^T||_2; same contract with precision matrices."""
    return directional_cov_error(a, b, s_hat_dagger, s_dagger)


def normalized_prec_error(a, b, s_hat_dagger, s_dagger) -> float:
    """Directional precision error over its natural directional scale
    sqrt(||A Sigma^+ A^T||_2 ||B Sigma^+ B^T||_2)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sd = _entries(s_dagger)
    scale = math.sqrt(spectral_norm(a @ sd @ a.T) * spectral_norm(b @ sd @ b.T))
    return directional_prec_error(a, b, s_hat_dagger, s_dagger) / scale


def normalized_cov_error(a, b, s_hat, s) -> float:
    """Directional covariance error over sqrt(||A Sigma A^T||_2 ||B Sigma B^T||_2)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sm = _entries(s)
    scale = math.sqrt(spectral_norm(a @ sm @ a.T) * spectral_norm(b @ sm @ b.T))
    return directional_cov_error(a, b, s_hat, s) / scale


def eigengap(spec_true, spec_hat, i: int, l: int, rank: int) -> GapReport:
    """Sample gap delta_il and population gap delta*_il for the block [i, l].

    delta_il is the distance from [lambda_l(Sigma), lambda_i(Sigma)] to
    (-inf, lambda_{l+1}(hat)] union [lambda_{i-1}(hat), +inf), with the
    sentinel conventions lambda_0(hat) = +inf and lambda_{D+1}(hat) = -inf.
    The population gap uses lambda_0(Sigma) = +inf and
    lambda_{rank+1}(Sigma) = 0 at the boundary indices.
    """
    spec_true = np.asarray(spec_true, dtype=float)
    spec_hat = np.asarray(spec_hat, dtype=float)
    d = spec_true.shape[0]
    if spec_hat.shape[0] != d:
        raise ValueError("spectra must have equal length")
    if not (1 <= i <= l <= d):
        raise IndexError(f"indices must satisfy 1 <= i <= l <= {d}, got i={i}, l={l}")

    def lam_hat(k: int) -> float:
        if k == 0:
            return math.inf
        if k == d + 1:
            return -math.inf
        return float(spec_hat[k - 1])

    def lam_pop(k: int) -> float:
        if k == 0:
            return math.inf
        if k == rank + 1:
            return 0.0
        if k > d:
            return 0.0
        return float(spec_true[k - 1])

    low, high = float(spec_true[l - 1]), float(spec_true[i - 1])
    below = max(low - lam_hat(l + 1), 0.0)  # distance to (-inf, lambda_{l+1}(hat)]
    above = max(lam_hat(i - 1) - high, 0.0)  # distance to [lambda_{i-1}(hat), +inf)
    delta_sample = min(below, above)

    delta_population = min(lam_pop(i - 1) - lam_pop(i), lam_pop(l) - lam_pop(l + 1))
    return GapReport(i=i, l=l, delta_sample=delta_sample, delta_population=max(delta_population, 0.0))


def davis_kahan_check(s, s_hat, i: int, l: int, rank: int | None = None) -> DkDiagnostic:
    """Evaluate both sides of the deterministic Davis-Kahan inequality
    ||Q_{i,l}(hat) P_{i,l}||_2 <= (pi/2) ||(Sigma - Sigma_hat) P_{i,l}||_2 / delta_il.

    The inequality itself is asserted by tests, not at runtime; a closed gap
    flags the diagnostic invalid instead of raising so Monte-Carlo sweeps can
    tabulate the failure rate.
    """
    s = s if isinstance(s, SymMatrix) else SymMatrix(s)
    s_hat = s_hat if isinstance(s_hat, SymMatrix) else SymMatrix(s_hat)
    e_true = s.eigen()
    e_hat = s_hat.eigen()
    if rank is None:
        rank = numerical_rank(s)
    p = spectral_projector(e_true, i, l)
    q = complement(spectral_projector(e_hat, i, l))
    gap = eigengap(e_true.eigenvalues, e_hat.eigenvalues, i, l, rank)
    lhs = spectral_norm(q.matrix @ p.matrix)
    if gap.delta_sample > 0.0:
        rhs = (math.pi / 2.0) * spectral_norm((s.entries - s_hat.entries) @ p.matrix) / gap.delta_sample
        return DkDiagnostic(lhs=lhs, rhs=rhs, valid=True)
    return DkDiagnostic(lhs=lhs, rhs=math.inf, valid=False)


def relative_eigenvalue_error(s, s_hat, rtol: float | None = None) -> float:
    """|lambda_d(Sigma)/lambda_d(Sigma_hat) - 1| with d = rank(Sigma) at rtol."""
    s = s if isinstance(s, SymMatrix) else SymMatrix(s)
    s_hat = s_hat if isinstance(s_hat, SymMatrix) else SymMatrix(s_hat)
    if rtol is None:
        rtol = default_rtol(s.dim)
    d = numerical_rank(s, rtol)
    lam_hat = s_hat.eigen().eigenvalues
    cut = rtol * max(float(lam_hat[0]), 0.0)
    lam_d_hat = float(lam_hat[d - 1])
    if lam_d_hat <= cut:
        raise RankCollapseError(
            f"sample eigenvalue {d} is {lam_d_hat:g}, at or below the rank cut {cut:g}"
        )
    return abs(float(s.eigen().eigenvalues[d - 1]) / lam_d_hat - 1.0)


def whitened_perturbation(s, s_hat, rtol: float | None = None) -> float:
    """||sqrt(Sigma^+) (Sigma - Sigma_hat) sqrt(Sigma^+)||_2.

    Values below 1 certify that Sigma_hat keeps the image (hence rank) of Sigma.
    """
    s = s if isinstance(s, SymMatrix) else SymMatrix(s)
    s_hat = s_hat if isinstance(s_hat, SymMatrix) else SymMatrix(s_hat)
    w = psd_sqrt(pinv_psd(s, rtol)).entries
    return spectral_norm(w @ (s.entries - s_hat.entries) @ w)


def gaussian_psi2_proxy(a, s) -> float:
    """Gaussian closed form for ||A X~||_psi2: sqrt(8/3 * ||A Sigma A^T||_2)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    sm = _entries(s)
    if a.shape[1] != sm.shape[0]:
        raise ValueError(f"A with {a.shape[1]} columns does not fit dim {sm.shape[0]}")
    return math.sqrt(GAUSSIAN_PSI2_SQ * spectral_norm(a @ sm @ a.T))


def kappa_proxy(p: Projector, s, rtol: float | None = None) -> float:
    """Gaussian proxy for the directional sub-Gaussian condition number:
    (8/3)^2 ||P Sigma^+ P||_2 ||P Sigma P||_2 (uses Sigma^+ Sigma Sigma^+ = Sigma^+)."""
    s = s if isinstance(s, SymMatrix) else SymMatrix(s)
    if p.dim != s.dim:
        raise ValueError(f"projector dim {p.dim} does not match matrix dim {s.dim}")
    sd = pinv_psd(s, rtol).entries
    pm = p.matrix
    return (
        GAUSSIAN_PSI2_SQ**2
        * spectral_norm(pm @ sd @ pm)
        * spectral_norm(pm @ s.entries @ pm)
    )
