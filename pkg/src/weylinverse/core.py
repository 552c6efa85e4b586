"""Shared types: pole structure, spectral charts, grids, potentials and the gauge matrix.

Every array held by these containers is made read-only on construction, so
instances can be passed between workers without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-8
RENORM_TOL = 1e-4


class WeylError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(WeylError, ValueError):
    """Argument lies outside the domain of a map (pole or excluded point)."""


class ValidationError(WeylError, ValueError):
    """Input data violates a structural invariant."""


class ConvergenceError(WeylError, ArithmeticError):
    """An iterative construction failed to settle."""


class ConditioningError(WeylError, ArithmeticError):
    """A linear system is too ill-conditioned to trust."""


class QualityError(WeylError, ArithmeticError):
    """A computed quantity drifted beyond its admissible tolerance."""


class TruncationWarning(UserWarning):
    """A truncation certificate is weaker than requested."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PoleSet:
    """Real pole locations ``d`` with sign weights ``b``."""

    d: tuple[float, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        d = tuple(float(v) for v in self.d)
        b = tuple(int(v) for v in self.b)
        if len(d) == 0 or len(d) != len(b):
            raise ValidationError("d and b must be non-empty and of equal length")
        if not all(np.isfinite(d)):
            raise ValidationError("pole locations must be finite reals")
        if len(set(d)) != len(d):
            raise ValidationError(f"pole locations must be distinct, got {d}")
        if any(v not in (1, -1) for v in b):
            raise ValidationError(f"weights must be +1 or -1, got {b}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return len(self.d)

    @property
    def D(self) -> np.ndarray:
        return np.diag(np.array(self.d, dtype=float))

    @property
    def B(self) -> np.ndarray:
        return np.diag(np.array(self.b, dtype=float))

    def min_gap(self) -> float:
        if self.m == 1:
            return np.inf
        d = np.array(self.d)
        diff = np.abs(d[:, None] - d[None, :])
        return float(diff[~np.eye(self.m, dtype=bool)].min())

    def coefficients(self, lam) -> np.ndarray:
        """Scalar weights ``b_k / (lam - d_k)``, shape ``lam.shape + (m,)``."""
        lam = np.asarray(lam, dtype=complex)
        gap = lam[..., None] - np.array(self.d)
        if np.any(gap == 0):
            raise DomainError("spectral parameter coincides with a pole")
        return np.array(self.b) / gap

    def to_dict(self) -> dict:
        return {"d": list(self.d), "b": list(self.b)}


def map_mu_to_lambda(k: int, mu, poles: PoleSet):
    """Chart of pole ``k``: ``lam = d_k + b_k / (2 mu)``. Works elementwise."""
    mu_arr = np.asarray(mu, dtype=complex)
    if np.any(mu_arr == 0):
        raise DomainError("mu = 0 is the point at infinity of the pole chart")
    out = poles.d[k] + poles.b[k] / (2.0 * mu_arr)
    return out[()] if out.ndim == 0 else out


def map_lambda_to_mu(k: int, lam, poles: PoleSet):
    """Inverse chart: ``mu = b_k / (2 (lam - d_k))``."""
    lam_arr = np.asarray(lam, dtype=complex)
    if np.any(lam_arr == poles.d[k]):
        raise DomainError(f"lambda = {poles.d[k]} is a pole of the system")
    out = poles.b[k] / (2.0 * (lam_arr - poles.d[k]))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectralPoint:
    k: int
    mu: complex
    lam: complex

    @classmethod
    def from_mu(cls, k: int, mu: complex, poles: PoleSet) -> "SpectralPoint":
        return cls(k, complex(mu), complex(map_mu_to_lambda(k, mu, poles)))

    @classmethod
    def from_lambda(cls, k: int, lam: complex, poles: PoleSet) -> "SpectralPoint":
        return cls(k, complex(map_lambda_to_mu(k, lam, poles)), complex(lam))

    def consistent(self, poles: PoleSet, rtol: float = 1e-12) -> bool:
        back = map_mu_to_lambda(self.k, self.mu, poles)
        return abs(back - self.lam) <= rtol * max(1.0, abs(self.lam))


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[0, l]`` with ``n`` subintervals."""

    l: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"grid needs n >= 2 subintervals, got {self.n}")
        if not (np.isfinite(self.l) and self.l > 0):
            raise ValidationError(f"grid length must be positive, got {self.l}")
        object.__setattr__(self, "l", float(self.l))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.l / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.l, self.n + 1)

    def weights(self, r: int | None = None) -> np.ndarray:
        """Trapezoid weights on ``[0, x_r]`` (whole grid when ``r`` is None)."""
        r = self.n if r is None else r
        w = np.full(r + 1, self.h)
        if r == 0:
            return np.zeros(1)
        w[0] = w[-1] = self.h / 2
        return w

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.l, self.n * factor)


def normalize_rows(rows: np.ndarray, tol: float = ROW_TOL, renorm_tol: float = RENORM_TOL) -> np.ndarray:
    """Return unit rows; rescale mild drift, reject anything beyond ``renorm_tol``."""
    rows = np.asarray(rows, dtype=complex)
    norms = np.linalg.norm(rows, axis=-1)
    drift = np.abs(norms - 1.0)
    worst = float(drift.max()) if drift.size else 0.0
    if worst <= tol:
        return rows
    if worst <= renorm_tol:
        return rows / norms[..., None]
    raise ValidationError(f"row norm drift {worst:.3e} exceeds {renorm_tol:g}")


@dataclass(frozen=True)
class PotentialField:
    """Rows ``beta_k(x_i)`` stored as an array of shape ``(m, n+1, 2)``."""

    grid: GridSpec
    rows: np.ndarray
    strict: bool = field(default=False)
    renormalize: bool = field(default=True)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=complex)
        if rows.ndim != 3 or rows.shape[1:] != (self.grid.n + 1, 2):
            raise ValidationError(
                f"rows must have shape (m, {self.grid.n + 1}, 2), got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("rows contain non-finite values")
        if self.renormalize:
            rows = normalize_rows(rows)
        if self.strict:
            bad = np.flatnonzero(np.abs(rows[:, 0, 0]) < ROW_TOL)
            if bad.size:
                raise ValidationError(
                    f"first boundary entry vanishes for pole indices {bad.tolist()}")
        object.__setattr__(self, "rows", _frozen(rows))

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def at_origin(self) -> np.ndarray:
        return self.rows[:, 0, :]

    def row_drift(self) -> float:
        return float(np.abs(np.linalg.norm(self.rows, axis=-1) - 1.0).max())

    def projectors(self) -> np.ndarray:
        """``beta_k^* beta_k`` at every node, shape ``(m, n+1, 2, 2)``."""
        return self.rows.conj()[..., :, None] * self.rows[..., None, :]

    @classmethod
    def from_function(cls, grid: GridSpec, fn, strict: bool = False) -> "PotentialField":
        """Sample ``fn(x) -> (m, len(x), 2)`` on the grid."""
        return cls(grid, np.asarray(fn(grid.x), dtype=complex), strict=strict)


def gauge_Q(beta_row) -> np.ndarray:
    """Unitary gauge ``[[b1, b2], [-conj b2, conj b1]]`` of a unit row.

    Accepts stacked rows of shape ``(..., 2)`` and returns ``(..., 2, 2)``.
    """
    row = normalize_rows(np.asarray(beta_row, dtype=complex))
    b1, b2 = row[..., 0], row[..., 1]
    top = np.stack([b1, b2], axis=-1)
    bottom = np.stack([-b2.conj(), b1.conj()], axis=-1)
    return np.stack([top, bottom], axis=-2)


J_SIGN = np.diag([1.0, -1.0]).astype(complex)
