"""Direct problem: fundamental solutions, Weyl disks and WT-functions.

The system is ``w' = i sum_k b_k (lam - d_k)^-1 beta_k^* beta_k w`` on a uniform
grid.  Integration is classical RK4 with the rows linearly interpolated (and
renormalized) at half steps.  Each grid cell is split into ``substeps`` RK4 steps so that the
step times the coefficient size stays below ``STEP_RATIO``; near a pole the
coefficient is large and the default of one step per cell would be useless.

Many spectral parameters are integrated at once: the state is a stack of
2x2 matrices, one per parameter value.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    J_SIGN,
    ConvergenceError,
    DomainError,
    PoleSet,
    PotentialField,
    QualityError,
    TruncationWarning,
    ValidationError,
    gauge_Q,
    map_lambda_to_mu,
    map_mu_to_lambda,
)

STEP_RATIO = 0.2
MOBIUS_EPS = 1e-8
ODE_AGREEMENT = 1e-6
MAX_SUBSTEPS = 4096


@dataclass(frozen=True)
class FundamentalSolution:
    lam: complex
    samples: np.ndarray
    substeps: int
    discrepancy: float = 0.0

    @property
    def converged(self) -> bool:
        return self.discrepancy <= ODE_AGREEMENT


@dataclass(frozen=True)
class WeylDisk:
    l: float
    mu: complex
    rho0: complex
    rho1: float
    rho2: float
    R: np.ndarray

    @property
    def center(self) -> complex:
        return self.rho0

    @property
    def radius(self) -> float:
        return float(1.0 / np.sqrt(self.rho1 * self.rho2))

    def point(self, Theta: complex) -> complex:
        return self.rho1 ** -0.5 * Theta * self.rho2 ** -0.5 + self.rho0

    def contains(self, other: "WeylDisk", tol: float = 1e-10) -> bool:
        return abs(other.center - self.center) + other.radius <= self.radius + tol


@dataclass(frozen=True)
class WeylData:
    """WT-functions sampled on the line ``Im mu = eta``.

    ``phi`` has shape ``(m, len(zeta))``; row ``k`` holds ``phi_k``.
    """

    zeta: np.ndarray
    eta: float
    phi: np.ndarray
    M: float
    l: float
    truncation_bound: float
    c: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def mu(self) -> np.ndarray:
        return self.zeta + 1j * self.eta

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.phi, axis=0).max())

    def columns(self) -> tuple[list[str], np.ndarray]:
        names = ["zeta"]
        cols = [self.zeta]
        for k in range(self.m):
            names += [f"re_phi{k + 1}", f"im_phi{k + 1}"]
            cols += [self.phi[k].real, self.phi[k].imag]
        return names, np.column_stack(cols)


# ---------------------------------------------------------------- integration

def _interpolated_projectors(potential: PotentialField, substeps: int) -> np.ndarray:
    """``beta^* beta`` at every half substep, shape ``(2*n*s + 1, m, 2, 2)``."""
    rows = potential.rows
    n = potential.grid.n
    pts = 2 * substeps
    t = np.arange(pts) / pts
    left = rows[:, :-1, None, :]
    right = rows[:, 1:, None, :]
    mid = (1 - t)[None, None, :, None] * left + t[None, None, :, None] * right
    mid = mid.reshape(rows.shape[0], n * pts, 2)
    # a chord between unit rows is shorter than 1; rescaling keeps tr(coefficient)
    # and therefore det w exact
    mid = mid / np.linalg.norm(mid, axis=-1, keepdims=True)
    fine = np.concatenate([mid, rows[:, -1:, :]], axis=1)
    proj = fine.conj()[..., :, None] * fine[..., None, :]
    return np.ascontiguousarray(proj.transpose(1, 0, 2, 3))


def substeps_for(potential: PotentialField, poles: PoleSet, lams) -> int:
    """Smallest power-of-two cell split keeping step*|coefficient| <= STEP_RATIO."""
    coef = np.abs(poles.coefficients(np.atleast_1d(lams))).sum(axis=-1).max()
    need = coef * potential.grid.h / STEP_RATIO
    s = 1
    while s < need:
        s *= 2
    return s


def propagate(potential: PotentialField, poles: PoleSet, lams, substeps: int,
              path: bool = False) -> np.ndarray:
    """RK4 for a stack of spectral parameters.

    Returns ``w(l, lam)`` with shape ``(L, 2, 2)``, or the node samples with
    shape ``(L, n+1, 2, 2)`` when ``path`` is set.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    coef = 1j * poles.coefficients(lams)
    proj = _interpolated_projectors(potential, substeps)
    n = potential.grid.n
    step = potential.grid.h / substeps
    L = lams.size
    w = np.broadcast_to(np.eye(2, dtype=complex), (L, 2, 2)).copy()
    out = None
    if path:
        out = np.empty((L, n + 1, 2, 2), dtype=complex)
        out[:, 0] = w
    C0 = np.einsum("lk,kab->lab", coef, proj[0])
    for i in range(n * substeps):
        Cm = np.einsum("lk,kab->lab", coef, proj[2 * i + 1])
        C1 = np.einsum("lk,kab->lab", coef, proj[2 * i + 2])
        k1 = C0 @ w
        k2 = Cm @ (w + 0.5 * step * k1)
        k3 = Cm @ (w + 0.5 * step * k2)
        k4 = C1 @ (w + step * k3)
        w = w + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        C0 = C1
        if path and (i + 1) % substeps == 0:
            out[:, (i + 1) // substeps] = w
    return out if path else w


def integrate_fundamental(potential: PotentialField, poles: PoleSet, lam: complex,
                          substeps: int | None = None, check: bool = True,
                          tol: float = ODE_AGREEMENT) -> FundamentalSolution:
    """Fundamental solution ``w(x_i, lam)`` with ``w(0) = I`` at every node.

    With ``check`` the cell split doubles until two successive runs agree to
    ``tol`` (relative), up to ``MAX_SUBSTEPS``; the finer run is returned.
    """
    lam = complex(lam)
    if lam in poles.d:
        raise DomainError(f"lambda = {lam} is a pole of the system")
    s = substeps or substeps_for(potential, poles, lam)
    w = propagate(potential, poles, [lam], s, path=True)[0]
    disc = 0.0
    while check:
        fine = propagate(potential, poles, [lam], 2 * s, path=True)[0]
        scale = max(1.0, float(np.abs(fine).max()))
        disc = float(np.abs(fine - w).max() / scale)
        w, s = fine, 2 * s
        if disc <= tol:
            break
        if s >= MAX_SUBSTEPS:
            warnings.warn(f"RK4 step doubling changed w by {disc:.2e} at lambda={lam}",
                          TruncationWarning, stacklevel=2)
            break
    return FundamentalSolution(lam, w, s, disc)


# ------------------------------------------------------------- the M bound

def _row_derivative(potential: PotentialField) -> np.ndarray:
    return np.gradient(potential.rows, potential.grid.h, axis=1, edge_order=2)


def bound_M(potential: PotentialField, poles: PoleSet, margin: float = 0.1,
            max_iter: int = 100) -> float:
    """Cutoff ``M`` with ``sup ||xi|| < M/4`` on ``Im mu < -M/4``.

    ``||Q' Q^*||`` equals the row derivative norm because ``Q`` is unitary; the
    cross terms are bounded by ``1 / (|d_k - d_p| - 2/M)``.
    """
    slope = np.linalg.norm(_row_derivative(potential), axis=-1).max(axis=1)
    return bound_M_from_slopes(slope, poles, margin, max_iter)


def bound_M_from_slopes(slopes, poles: PoleSet, margin: float = 0.1,
                        max_iter: int = 100) -> float:
    """Same cutoff from per-pole bounds on ``||beta_k'||``.

    The fixed point of ``M -> 4 * bound(M)`` is approached from below by a
    nondecreasing sequence, then inflated by ``1 + margin``.
    """
    if margin <= 0:
        raise ValidationError("margin must be positive")
    slope = np.broadcast_to(np.asarray(slopes, dtype=float), (poles.m,))
    if not np.all(np.isfinite(slope)):
        raise ConvergenceError("row derivative is not finite")
    d = np.array(poles.d)

    def bound(M: float) -> float:
        worst = 0.0
        for k in range(poles.m):
            gaps = np.abs(np.delete(d, k) - d[k]) - (2.0 / M if M > 0 else np.inf)
            if np.any(gaps <= 0):
                return np.inf
            worst = max(worst, slope[k] + np.sum(1.0 / gaps))
        return worst

    M = 0.0 if poles.m == 1 else 4.0 / poles.min_gap()
    for _ in range(max_iter):
        target = 4.0 * bound(M)
        if not np.isfinite(target):
            M = 2.0 * M if M > 0 else 1.0
            continue
        if target <= M * (1 + 1e-12):
            break
        M = target
    else:
        raise ConvergenceError(f"M iteration did not settle in {max_iter} steps")
    return float(max(4.0 * margin, (1.0 + margin) * M))


def xi_norms(potential: PotentialField, poles: PoleSet, k: int, mus) -> np.ndarray:
    """Spectral norms ``||xi(x_i, mu)||``, shape ``(len(mus), n+1)``."""
    mus = np.atleast_1d(np.asarray(mus, dtype=complex))
    Q = gauge_Q(potential.rows[k])
    dQ = gauge_Q_derivative(potential, k)
    static = dQ @ Q.conj().transpose(0, 2, 1)
    lams = map_mu_to_lambda(k, mus, poles)
    proj = potential.projectors()
    out = np.empty((mus.size, potential.grid.n + 1))
    for j, lam in enumerate(np.atleast_1d(lams)):
        cross = sum(poles.b[p] * proj[p] / (lam - poles.d[p])
                    for p in range(poles.m) if p != k)
        xi = static + 1j * (Q @ cross @ Q.conj().transpose(0, 2, 1)) if poles.m > 1 else static
        out[j] = np.linalg.norm(xi, ord=2, axis=(1, 2))
    return out


def gauge_Q_derivative(potential: PotentialField, k: int) -> np.ndarray:
    db = _row_derivative(potential)[k]
    top = np.stack([db[:, 0], db[:, 1]], axis=-1)
    bottom = np.stack([-db[:, 1].conj(), db[:, 0].conj()], axis=-1)
    return np.stack([top, bottom], axis=-2)


# ------------------------------------------------------ gauge, frakA, disks

def gauge_transform_W(w: FundamentalSolution, k: int, mu: complex,
                      potential: PotentialField, poles: PoleSet) -> np.ndarray:
    """``W_k(x, mu) = exp(-i x mu) Q_k(x) w(x, lam(mu))`` at every node."""
    lam = map_mu_to_lambda(k, mu, poles)
    if abs(lam - w.lam) > 1e-10 * max(1.0, abs(lam)):
        raise ValidationError(f"mu={mu} maps to {lam}, solution was built at {w.lam}")
    phase = np.exp(-1j * potential.grid.x * mu)
    return phase[:, None, None] * (gauge_Q(potential.rows[k]) @ w.samples)


def matrix_frakA(W_conj: np.ndarray) -> np.ndarray:
    """``Q(0) W(x, mu)^-1`` from the samples of ``W`` at ``conj(mu)``.

    Uses ``W(x, conj mu)^* = W(x, mu)^-1`` and ``W(0, conj mu) = Q(0)``.
    """
    W_conj = np.asarray(W_conj)
    q0 = W_conj[0] if W_conj.ndim == 3 else None
    if q0 is None:
        raise ValidationError("matrix_frakA needs the full node samples of W")
    return q0 @ W_conj.conj().swapaxes(-1, -2)


def weyl_disk(W_l: np.ndarray, q0: np.ndarray, mu: complex, l: float) -> WeylDisk:
    """Disk parameters from ``R = Q(0) W^* j W Q(0)^*`` at ``x = l``."""
    R = q0 @ W_l.conj().T @ J_SIGN @ W_l @ q0.conj().T
    R11 = R[0, 0].real
    if R11 <= 0:
        raise DomainError(f"R11 = {R11:.3e} <= 0: mu={mu} lies outside the admissible half-plane")
    rho0 = -R[0, 1] / R11
    inv2 = (R[1, 0] * R[0, 1] / R11 - R[1, 1]).real
    if inv2 <= 0:
        raise DomainError(f"rho2 is not positive at mu={mu}: M is too small")
    return WeylDisk(float(l), complex(mu), complex(rho0), float(R11), float(1.0 / inv2), R)


def approx_weyl_point(frakA_at_l, theta=0.0):
    """Moebius image ``(A11 theta + A12) / (A21 theta + A22)``; vectorized."""
    A = np.asarray(frakA_at_l)
    num = A[..., 0, 0] * theta + A[..., 0, 1]
    den = A[..., 1, 0] * theta + A[..., 1, 1]
    if np.any(np.abs(den) < np.finfo(float).tiny):
        raise QualityError("degenerate disk: vanishing Moebius denominator")
    out = num / den
    return out[()] if np.ndim(out) == 0 else out


def wt_function(psi, beta0, eps: float = MOBIUS_EPS, mu=None):
    """``(conj b1 psi - b2) / (conj b2 psi + b1)`` for the boundary row ``beta0``."""
    b1, b2 = complex(beta0[0]), complex(beta0[1])
    psi = np.asarray(psi, dtype=complex)
    den = b2.conjugate() * psi + b1
    bad = np.abs(den) <= eps
    if np.any(bad):
        where = np.asarray(mu)[bad][0] if mu is not None else None
        raise QualityError(f"near-singular Moebius denominator (|den| <= {eps:g}) at mu={where}")
    out = (b1.conjugate() * psi - b2) / den
    return out[()] if out.ndim == 0 else out


def frakA_at_l(potential: PotentialField, poles: PoleSet, k: int, mus,
               substeps: int | None = None) -> np.ndarray:
    """``frakA_k(l, mu)`` up to a scalar factor, for a stack of ``mu``.

    ``frakA(l, mu) = Q(0) W(l, conj mu)^*``; the phase ``exp(i l mu)`` is
    dropped because every consumer forms ratios.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=complex))
    lam_conj = map_mu_to_lambda(k, mus.conj(), poles)
    q0 = gauge_Q(potential.rows[k, 0])
    ql = gauge_Q(potential.rows[k, -1])
    out = np.empty((mus.size, 2, 2), dtype=complex)
    order = np.argsort(np.abs(mus))
    # group by required resolution so that small |mu| do not pay for large ones
    for chunk in np.array_split(order, max(1, min(8, mus.size // 64))):
        if chunk.size == 0:
            continue
        s = substeps or substeps_for(potential, poles, lam_conj[chunk])
        wl = propagate(potential, poles, lam_conj[chunk], s)
        out[chunk] = q0 @ (ql @ wl).conj().swapaxes(-1, -2)
    return out


def weyl_point(potential: PotentialField, poles: PoleSet, k: int, mus, theta=0.0,
               substeps: int | None = None) -> np.ndarray:
    """Approximate Weyl point at ``x = l`` for every ``mu``."""
    return approx_weyl_point(frakA_at_l(potential, poles, k, mus, substeps), theta)


def truncation_bound(eta: float, M: float, l: float) -> float:
    return float(2.0 * np.exp((2.0 * eta + M / 2.0) * l))


def default_zeta(M: float, count: int = 1024, zeta_max: float | None = None) -> np.ndarray:
    a = zeta_max if zeta_max is not None else 64.0 * max(1.0, M)
    return np.linspace(-a, a, count)


def sample_weyl_function(potential: PotentialField, poles: PoleSet, eta: float,
                         zeta=None, M: float | None = None, tol: float | None = None,
                         workers: int = 1, substeps: int | None = None) -> WeylData:
    """Sample every ``phi_k`` on ``mu = zeta + i eta`` using the ``theta = 0`` point."""
    M = bound_M(potential, poles) if M is None else float(M)
    if not eta < -M / 4:
        raise ValidationError(f"eta={eta} must lie below -M/4 = {-M / 4:.4g}")
    zeta = default_zeta(M) if zeta is None else np.asarray(zeta, dtype=float)
    mus = zeta + 1j * eta
    l = potential.grid.l
    bound = truncation_bound(eta, M, l)
    if tol is not None and bound > tol:
        warnings.warn(f"truncation bound {bound:.2e} exceeds requested {tol:.2e}",
                      TruncationWarning, stacklevel=2)

    def one(k):
        psi = weyl_point(potential, poles, k, mus, substeps=substeps)
        return wt_function(psi, potential.rows[k, 0], mu=mus)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            phi = np.array(list(pool.map(one, range(poles.m))))
    else:
        phi = np.array([one(k) for k in range(poles.m)])
    b0 = potential.at_origin()
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(np.abs(b0[:, 0]) > 0, -b0[:, 1] / b0[:, 0], np.nan)
    return WeylData(zeta, float(eta), phi, M, l, bound, c)


__all__ = [
    "FundamentalSolution", "WeylDisk", "WeylData", "integrate_fundamental",
    "bound_M", "bound_M_from_slopes", "xi_norms", "gauge_transform_W", "matrix_frakA", "weyl_disk",
    "approx_weyl_point", "wt_function", "sample_weyl_function", "weyl_point",
    "frakA_at_l", "propagate", "truncation_bound", "default_zeta", "map_lambda_to_mu",
]
