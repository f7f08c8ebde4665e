"""Finite-sample moment estimators and the minimal-norm OLS single-index fit.

The sample covariance uses empirical centering and divisor N (not N-1); this
matches the estimator the rest of the library is built around and differs
from numpy.cov's default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matops import SymMatrix, pinv_psd


class EmptyDataError(ValueError):
    """Dataset has no rows."""


class MissingResponseError(ValueError):
    """Operation needs a response vector but the dataset has none."""


class Dataset:
    """N x D feature matrix plus an optional length-N response vector.

    Rows are i.i.d. samples. Immutable after construction.
    """

    __slots__ = ("x", "y")

    def __init__(self, x: np.ndarray, y: np.ndarray | None = None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] < 1:
            raise EmptyDataError("dataset needs at least one row")
        if not np.all(np.isfinite(x)):
            raise ValueError("feature matrix must be finite")
        if y is not None:
            y = np.asarray(y, dtype=float).reshape(-1)
            if y.shape[0] != x.shape[0]:
                raise ValueError(f"y has length {y.shape[0]}, expected {x.shape[0]}")
            if not np.all(np.isfinite(y)):
                raise ValueError("response vector must be finite")
            y.setflags(write=False)
        x.setflags(write=False)
        self.x = x
        self.y = y

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.x[mask], None if self.y is None else self.y[mask])

    def with_response(self, y: np.ndarray) -> "Dataset":
        return Dataset(self.x, y)

    def to_csv(self, path) -> None:
        """Write as ``x1,...,xD[,y]`` with shortest round-trip floats and LF endings."""
        cols = [f"x{j + 1}" for j in range(self.dim)]
        if self.y is not None:
            cols.append("y")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(self.n):
                row = [repr(float(v)) for v in self.x[i]]
                if self.y is not None:
                    row.append(repr(float(self.y[i])))
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            has_y = header[-1] == "y"
            d = len(header) - (1 if has_y else 0)
            rows = []
            for line in fh:
                line = line.strip()
                if line:
                    rows.append([float(v) for v in line.split(",")])
        data = np.asarray(rows, dtype=float)
        if data.shape[1] != len(header):
            raise ValueError("CSV row width does not match header")
        if has_y:
            return cls(data[:, :d], data[:, d])
        return cls(data)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Dataset(n={self.n}, dim={self.dim}, y={'yes' if self.y is not None else 'no'})"


@dataclass(frozen=True)
class OlsFit:
    """Minimal-norm least squares fit: intercept, coefficient vector, and the
    normalized direction (absent when the coefficient vector vanishes)."""

    intercept: float
    coef: np.ndarray
    direction: np.ndarray | None


def sample_mean(data: Dataset) -> np.ndarray:
    return data.x.mean(axis=0)


def sample_covariance(data: Dataset) -> SymMatrix:
    """Centered second moment with divisor N."""
    xc = data.x - data.x.mean(axis=0)
    return SymMatrix(xc.T @ xc / data.n)


def sample_precision(data: Dataset, rtol: float | None = None) -> SymMatrix:
    """Pseudoinverse of the sample covariance."""
    return pinv_psd(sample_covariance(data), rtol)


def cross_covariance(data: Dataset) -> np.ndarray:
    """Empirical Cov(X, Y) with divisor N."""
    if data.y is None:
        raise MissingResponseError("cross_covariance needs a response vector")
    xc = data.x - data.x.mean(axis=0)
    yc = data.y - data.y.mean()
    return xc.T @ yc / data.n


def ols_fit(data: Dataset, rtol: float | None = None) -> OlsFit:
    """Minimal 2-norm least squares solution via the pseudoinverse closed form.

    The pseudoinverse route (rather than a generic solver) makes the
    minimal-norm convention explicit in rank-deficient cases.
    """
    if data.y is None:
        raise MissingResponseError("ols_fit needs a response vector")
    coef = sample_precision(data, rtol).entries @ cross_covariance(data)
    norm = float(np.linalg.norm(coef))
    direction = coef / norm if norm > 0.0 else None
    return OlsFit(intercept=float(data.y.mean()), coef=coef, direction=direction)
