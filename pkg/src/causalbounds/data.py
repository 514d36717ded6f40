"""Dataset container, outcome functionals, and CSV ingestion.

CSV schema: columns ``x0..x{d-1},a,y`` with an optional header row; the
covariate dimension is inferred.  d = 0 encodes the marginal (covariate-free)
case.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Dataset",
    "identity_phi",
    "indicator_phi",
    "table_phi",
    "load_csv",
    "save_csv",
]


def identity_phi(y: np.ndarray) -> np.ndarray:
    return np.asarray(y, dtype=float)


def indicator_phi(threshold: float) -> Callable[[np.ndarray], np.ndarray]:
    """phi(y) = 1{y <= threshold}; turns bounds into CDF bounds."""

    def phi(y):
        return (np.asarray(y, dtype=float) <= threshold).astype(float)

    phi.threshold = threshold
    return phi


def table_phi(table: dict) -> Callable[[np.ndarray], np.ndarray]:
    """User-supplied lookup table y -> phi(y) for discrete outcomes."""

    def phi(y):
        return np.array([table[v] for v in np.asarray(y).tolist()], dtype=float)

    return phi


@dataclass
class Dataset:
    """Rows of (covariates X, binary treatment A, outcome Y) plus phi."""

    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    phi: Callable[[np.ndarray], np.ndarray] = identity_phi
    _phi_cache: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.X.shape[0] == 1 and self.X.size == 0:
            self.X = self.X.reshape(0, 0)
        self.A = np.asarray(self.A).astype(int)
        self.Y = np.asarray(self.Y, dtype=float)
        n = len(self.A)
        if self.X.shape[0] != n and not (self.X.size == 0 and self.X.shape[1] == 0):
            # allow (n, 0) covariates for the marginal case
            if self.X.size == 0:
                self.X = np.zeros((n, 0))
            else:
                raise ValueError("X, A, Y must have equal length")
        if len(self.Y) != n:
            raise ValueError("X, A, Y must have equal length")
        if not np.isin(self.A, (0, 1)).all():
            raise ValueError("treatment A must be binary 0/1")
        if np.isnan(self.X).any() or np.isnan(self.Y).any():
            raise ValueError("missing values are not allowed")

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def phi_values(self) -> np.ndarray:
        if self._phi_cache is None:
            self._phi_cache = np.asarray(self.phi(self.Y), dtype=float)
        return self._phi_cache

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.A[idx], self.Y[idx], phi=self.phi)

    def arm(self, a: int) -> "Dataset":
        return self.subset(self.A == a)


def _parse_header(first_line: str) -> bool:
    tokens = [t.strip() for t in first_line.split(",")]
    try:
        [float(t) for t in tokens]
        return False
    except ValueError:
        return True


def load_csv(path, phi: Callable = identity_phi) -> Dataset:
    """Read a dataset CSV; raises ValueError with row numbers on bad rows."""
    with open(path, "r") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    has_header = _parse_header(lines[0])
    body = lines[1:] if has_header else lines
    try:
        raw = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed CSV ({exc})") from None
    if raw.shape[1] < 2:
        raise ValueError(f"{path}: need at least columns a,y")
    d = raw.shape[1] - 2
    X, A, Y = raw[:, :d], raw[:, d], raw[:, d + 1]
    bad = np.nonzero((A != 0) & (A != 1))[0]
    if bad.size:
        offset = 2 if has_header else 1
        raise ValueError(f"{path}: non-binary treatment at row {bad[0] + offset}")
    return Dataset(X, A, Y, phi=phi)


def save_csv(data: Dataset, path) -> None:
    header = ",".join([f"x{j}" for j in range(data.d)] + ["a", "y"])
    body = np.column_stack([data.X, data.A.astype(float), data.Y])
    np.savetxt(path, body, delimiter=",", header=header, comments="", fmt="%.17g")
