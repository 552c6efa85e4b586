"""Sine-Gordon in laboratory coordinates: zero-curvature pair and recovery of cos(omega).

Conventions: ``SWAP = [[0, 1], [1, 0]]`` and ``SIGN = diag(1, -1)``.  The
x-direction system has poles ``d = (1, -1)`` with weights ``(1, 1)``; the
t-direction system has the same poles with weights ``(1, -1)``.  Pole
indices are 0-based, so the sign factor ``(-1)^k`` of the U-families reads
``-1`` for index 0 and ``+1`` for index 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import direct, inverse
from .core import (
    ConvergenceError,
    DomainError,
    GridSpec,
    PoleSet,
    PotentialField,
    QualityError,
    ValidationError,
    gauge_Q,
    map_mu_to_lambda,
)

X_POLES = PoleSet((1.0, -1.0), (1, 1))
T_POLES = PoleSet((1.0, -1.0), (1, -1))
SWAP = np.array([[0, 1], [1, 0]], dtype=complex)
SIGN = np.diag([1.0, -1.0]).astype(complex)
UNITARITY_LIMIT = 1e-6
MOBIUS_FLOOR = 1e-12
# the t-direction limits cost grows with |mu|; a narrower default band than
# the direct module's keeps a recovery under half a minute
ZETA_COUNT = 512
ZETA_SCALE = 16.0


class HorizonError(ConvergenceError):
    """The limiting ratio has not settled within the time horizon."""


# ------------------------------------------------------------ exact fields

def kink(x, t, speed: float = 0.5):
    """Travelling kink ``4 arctan(exp((x - v t)/sqrt(1 - v^2)))`` with both first derivatives."""
    if not abs(speed) < 1:
        raise ValidationError("kink speed must satisfy |v| < 1")
    gamma = np.sqrt(1.0 - speed ** 2)
    xi = (np.asarray(x, dtype=float) - speed * np.asarray(t, dtype=float)) / gamma
    omega = 4.0 * np.arctan(np.exp(xi))
    omega_x = 2.0 / np.cosh(xi) / gamma
    return omega, omega_x, -speed * omega_x


def constant_pi(x, t):
    shape = np.broadcast(np.asarray(x), np.asarray(t)).shape
    return np.full(shape, np.pi), np.zeros(shape), np.zeros(shape)


def fd4(values, h: float) -> np.ndarray:
    """Fourth-order first derivative on a uniform grid (one-sided five-point stencils at the ends)."""
    f = np.asarray(values, dtype=float)
    if f.size < 5:
        raise ValidationError("fourth-order stencil needs at least five samples")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


# --------------------------------------------------------------- generators

def x_generator(omega, omega_t) -> np.ndarray:
    """``-i (omega_t/4 SIGN + sin(omega/2)/2 SWAP)``, vectorized."""
    omega = np.asarray(omega, dtype=float)[..., None, None]
    omega_t = np.asarray(omega_t, dtype=float)[..., None, None]
    return -1j * (omega_t / 4 * SIGN + 0.5 * np.sin(omega / 2) * SWAP)


def t_generator(omega, omega_x) -> np.ndarray:
    """``-i omega_x/4 SIGN + cos(omega/2)/2 SWAP SIGN``, vectorized."""
    omega = np.asarray(omega, dtype=float)[..., None, None]
    omega_x = np.asarray(omega_x, dtype=float)[..., None, None]
    return -1j * omega_x / 4 * SIGN + 0.5 * np.cos(omega / 2) * (SWAP @ SIGN)


def evolve_q(generator, nodes, q0=None, substeps: int = 1) -> np.ndarray:
    """RK4 for ``q' = C(s) q`` through ``nodes`` (increasing or decreasing).

    ``generator(s)`` returns the 2x2 coefficient at an array of positions.
    Returns samples at every node, shape ``(len(nodes), 2, 2)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    q = np.eye(2, dtype=complex) if q0 is None else np.array(q0, dtype=complex)
    out = np.empty((nodes.size, 2, 2), dtype=complex)
    out[0] = q
    fine = np.concatenate([np.linspace(a, b, 2 * substeps + 1)[:-1]
                           for a, b in zip(nodes[:-1], nodes[1:])] + [nodes[-1:]])
    C = generator(fine)
    for i in range(nodes.size - 1):
        for s in range(substeps):
            j = 2 * (i * substeps + s)
            h = fine[j + 2] - fine[j]
            k1 = C[j] @ q
            k2 = C[j + 1] @ (q + 0.5 * h * k1)
            k3 = C[j + 1] @ (q + 0.5 * h * k2)
            k4 = C[j + 2] @ (q + h * k3)
            q = q + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = q
    drift = unitarity_drift(out)
    if drift > UNITARITY_LIMIT:
        raise QualityError(f"q lost unitarity: drift {drift:.2e}")
    return out


def unitarity_drift(q) -> float:
    q = np.asarray(q)
    return float(np.abs(q.conj().swapaxes(-1, -2) @ q - np.eye(2)).max())


def beta_from_omega(omega, q):
    """Rows ``[1, i e^{+-i omega/2}] q / sqrt 2``; vectorized over leading axes."""
    omega = np.asarray(omega, dtype=float)
    q = np.asarray(q, dtype=complex)
    ones = np.ones_like(omega, dtype=complex)
    v1 = np.stack([ones, 1j * np.exp(0.5j * omega)], axis=-1) / np.sqrt(2)
    v2 = np.stack([ones, 1j * np.exp(-0.5j * omega)], axis=-1) / np.sqrt(2)
    return np.einsum("...a,...ab->...b", v1, q), np.einsum("...a,...ab->...b", v2, q)


def cos_from_rows(beta1, beta2) -> np.ndarray:
    """``2 |beta1 beta2^*|^2 - 1``."""
    inner = np.einsum("...c,...c->...", beta1, np.conj(beta2))
    return 2.0 * np.abs(inner) ** 2 - 1.0


def pair_matrix(beta1, beta2, lam: complex, poles: PoleSet) -> np.ndarray:
    """``i sum_k b_k (lam - d_k)^-1 beta_k^* beta_k``."""
    if any(lam == d for d in poles.d):
        raise DomainError(f"lambda = {lam} is a pole")
    out = 0
    for k, beta in enumerate((beta1, beta2)):
        proj = np.conj(beta)[..., :, None] * beta[..., None, :]
        out = out + 1j * poles.b[k] / (lam - poles.d[k]) * proj
    return out


# ------------------------------------------------------------ field (oracle)

@dataclass(frozen=True)
class SGField:
    """Exact-solution field on a space-time grid: ``omega``, ``q`` and both rows.

    Arrays are indexed ``[x, t]``; ``t`` must contain 0.
    """

    x: np.ndarray
    t: np.ndarray
    omega: np.ndarray
    q: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    solution: object = field(default=None, compare=False, repr=False)

    @classmethod
    def from_solution(cls, solution, x, t, substeps: int = 1) -> "SGField":
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        zero = np.flatnonzero(np.isclose(t, 0.0, atol=1e-14))
        if x[0] != 0 or zero.size != 1:
            raise ValidationError("grid must start at x = 0 and contain t = 0")
        j0 = int(zero[0])

        def along_t(s):
            w, wx, _ = solution(0.0, s)
            return t_generator(w, wx)

        q_edge = np.empty((t.size, 2, 2), dtype=complex)
        q_edge[j0:] = evolve_q(along_t, t[j0:], substeps=substeps)
        q_edge[: j0 + 1] = evolve_q(along_t, t[: j0 + 1][::-1], substeps=substeps)[::-1]
        q = np.empty((x.size, t.size, 2, 2), dtype=complex)
        for j, tj in enumerate(t):
            def along_x(s, tj=tj):
                w, _, wt = solution(s, tj)
                return x_generator(w, wt)
            q[:, j] = evolve_q(along_x, x, q0=q_edge[j], substeps=substeps)
        X, T = np.meshgrid(x, t, indexing="ij")
        omega = solution(X, T)[0]
        b1, b2 = beta_from_omega(omega, q)
        return cls(x, t, omega, q, b1, b2, solution)

    def path_discrepancy(self, substeps: int = 1) -> float:
        """``||q(X, t_end)||`` via x-then-t against the stored t-then-x value."""
        sol = self.solution
        j0 = int(np.flatnonzero(np.isclose(self.t, 0.0, atol=1e-14))[0])

        def along_x(s):
            w, _, wt = sol(s, 0.0)
            return x_generator(w, wt)

        qx = evolve_q(along_x, self.x, substeps=substeps)[-1]
        X = self.x[-1]

        def along_t(s):
            w, wx, _ = sol(X, s)
            return t_generator(w, wx)

        qxt = evolve_q(along_t, self.t[j0:], q0=qx, substeps=substeps)[-1]
        return float(np.abs(qxt - self.q[-1, -1]).max())

    def potential_at(self, j: int) -> PotentialField:
        """Rows ``beta_k(., t_j)`` as a potential of the x-direction system."""
        grid = GridSpec(float(self.x[-1]), self.x.size - 1)
        rows = np.stack([self.beta1[:, j], self.beta2[:, j]])
        return PotentialField(grid, rows)


def zero_curvature_residual(fld: SGField, lam: complex) -> float:
    """Max over interior nodes of ``||G_t - F_x + G F - F G||`` (central differences)."""
    G = pair_matrix(fld.beta1, fld.beta2, lam, X_POLES)
    F = pair_matrix(fld.beta1, fld.beta2, lam, T_POLES)
    hx = fld.x[1] - fld.x[0]
    ht = fld.t[1] - fld.t[0]
    Gt = (G[1:-1, 2:] - G[1:-1, :-2]) / (2 * ht)
    Fx = (F[2:, 1:-1] - F[:-2, 1:-1]) / (2 * hx)
    Gi, Fi = G[1:-1, 1:-1], F[1:-1, 1:-1]
    R = Gt - Fx + Gi @ Fi - Fi @ Gi
    return float(np.linalg.norm(R, ord=2, axis=(-2, -1)).max())


# ------------------------------------------------------------ boundary data

@dataclass(frozen=True)
class BoundaryData:
    """``omega(0, t)`` and ``omega_x(0, t)`` on a uniform time grid containing 0."""

    t: np.ndarray
    omega0: np.ndarray
    omega1: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        w0 = np.asarray(self.omega0, dtype=float)
        w1 = np.asarray(self.omega1, dtype=float)
        if t.ndim != 1 or t.size < 5 or w0.shape != t.shape or w1.shape != t.shape:
            raise ValidationError("boundary samples must be three 1-D arrays of equal length >= 5")
        if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(w1))):
            raise ValidationError("boundary samples must be finite")
        dt = np.diff(t)
        if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt[0]:
            raise ValidationError("time grid must be uniform and increasing")
        if not np.any(np.isclose(t, 0.0, atol=1e-12 * max(1.0, abs(t).max()))):
            raise ValidationError("time grid must contain t = 0")
        for name, v in (("t", t), ("omega0", w0), ("omega1", w1)):
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_solution(cls, solution, horizon: float, n: int) -> "BoundaryData":
        """Sample an exact solution at ``x = 0`` on ``2n + 1`` nodes of ``[-horizon, horizon]``."""
        t = np.linspace(-horizon, horizon, 2 * n + 1)
        w, wx, _ = solution(0.0, t)
        return cls(t, w, wx)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def origin(self) -> int:
        return int(np.argmin(np.abs(self.t)))

    def omega0_t(self) -> np.ndarray:
        return fd4(self.omega0, self.dt)

    def slope_bounds(self) -> tuple[float, float]:
        """Bounds on ``||d beta_k / dx||`` and ``||d beta_k / dt||`` from boundary suprema."""
        wt = float(np.abs(self.omega0_t()).max())
        wx = float(np.abs(self.omega1).max())
        along_x = wx / (2 * np.sqrt(2)) + wt / 4 + 0.5
        along_t = wt / (2 * np.sqrt(2)) + wx / 4 + 0.5
        return along_x, along_t

    def q_edge(self) -> np.ndarray:
        """``q(0, t)`` at every node, from ``q(0, 0) = I``."""
        w0 = CubicSpline(self.t, self.omega0)
        w1 = CubicSpline(self.t, self.omega1)

        def gen(s):
            return t_generator(w0(s), w1(s))

        j0 = self.origin
        q = np.empty((self.t.size, 2, 2), dtype=complex)
        q[j0:] = evolve_q(gen, self.t[j0:])
        q[: j0 + 1] = evolve_q(gen, self.t[: j0 + 1][::-1])[::-1]
        return q

    def rows(self) -> np.ndarray:
        """``beta_k(0, t)`` stacked as ``(2, len(t), 2)``."""
        b1, b2 = beta_from_omega(self.omega0, self.q_edge())
        return np.stack([b1, b2])


def cutoffs(bd: BoundaryData, margin: float = 0.1) -> tuple[float, float]:
    """``(M_x, M_1)``: the x-direction cutoff and the half-plane bound for the t-limits."""
    sx, st = bd.slope_bounds()
    Mx = direct.bound_M_from_slopes([sx, sx], X_POLES, margin)
    Mt = direct.bound_M_from_slopes([st, st], T_POLES, margin)
    return Mx, Mt / 4


def default_horizon(eta: float, M1: float) -> float:
    if not eta < -M1:
        raise DomainError(f"Im mu = {eta} must lie below -M1 = {-M1:.4g}")
    return 20.0 / abs(eta + M1)


# --------------------------------------------------------------- U-families

def _segment(rows, bd: BoundaryData, start: int, stop: int) -> tuple[PotentialField, PoleSet]:
    """Time-direction system on nodes ``start..stop`` (either order) as a potential in ``|t|``."""
    step = 1 if stop >= start else -1
    idx = np.arange(start, stop + step, step)
    grid = GridSpec(abs(stop - start) * bd.dt, idx.size - 1)
    poles = T_POLES if step > 0 else PoleSet(T_POLES.d, tuple(-b for b in T_POLES.b))
    return PotentialField(grid, rows[:, idx]), poles


def _propagate_t(rows, bd: BoundaryData, start: int, stop: int, lams, path: bool = False):
    if start == stop:
        eye = np.broadcast_to(np.eye(2, dtype=complex), (len(lams), 2, 2)).copy()
        return eye[:, None] if path else eye
    pot, poles = _segment(rows, bd, start, stop)
    lams = np.asarray(lams)
    out = np.empty((lams.size,) + ((abs(stop - start) + 1,) if path else ()) + (2, 2), dtype=complex)
    order = np.argsort(np.abs(lams - np.mean(T_POLES.d)))
    for chunk in np.array_split(order, max(1, min(8, lams.size // 64))):
        if chunk.size:
            s = direct.substeps_for(pot, poles, lams[chunk])
            out[chunk] = direct.propagate(pot, poles, lams[chunk], s, path=path)
    return out


def build_U(bd: BoundaryData, k: int, mus, stop: int | None = None, path: bool = True):
    """``U_k(t, mu) = exp(-+ i t mu) Q_k(0, t) Z(t, lam) Q_k(0, 0)^*`` from ``t = 0`` to node ``stop``.

    Returns ``(times, U)`` with ``U`` of shape ``(len(mus), nodes, 2, 2)``
    (or ``(len(mus), 2, 2)`` at ``stop`` only when ``path`` is false).
    ``stop`` defaults to the last node for index 0 and the first for index 1.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=complex))
    rows = bd.rows()
    j0 = bd.origin
    if stop is None:
        stop = bd.t.size - 1 if k == 0 else 0
    lams = map_mu_to_lambda(k, mus, X_POLES)
    Z = _propagate_t(rows, bd, j0, stop, np.atleast_1d(lams), path=path)
    step = 1 if stop >= j0 else -1
    idx = np.arange(j0, stop + step, step)
    Q = gauge_Q(rows[k, idx])
    Q0h = gauge_Q(rows[k, j0]).conj().T
    sign = -1.0 if k == 0 else 1.0
    times = bd.t[idx]
    if path:
        phase = np.exp(sign * 1j * np.outer(mus, times))
        return times, phase[..., None, None] * (Q[None] @ Z @ Q0h)
    phase = np.exp(sign * 1j * mus * times[-1])
    return times[-1], phase[:, None, None] * (Q[-1] @ Z @ Q0h)


@dataclass(frozen=True)
class PsiLimit:
    psi: np.ndarray
    horizon: float
    change: float


def psi_at_origin(bd: BoundaryData, mus, horizon: float | None = None,
                  tol: float = 1e-6) -> PsiLimit:
    """Weyl points ``psi_k(0, mu)`` as limits of ``-u12/u11`` for ``t -> +inf`` (index 0) and ``-inf`` (index 1).

    The ratio is evaluated at ``T/2`` and ``T``; a change above ``tol`` means
    the horizon is too short.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=complex))
    eta = float(mus.imag.max())
    _, M1 = cutoffs(bd)
    T = default_horizon(eta, M1) if horizon is None else float(horizon)
    half_nodes = int(round(T / 2 / bd.dt))
    j0 = bd.origin
    if j0 + 2 * half_nodes >= bd.t.size or j0 - 2 * half_nodes < 0:
        raise ValidationError(f"boundary data cover |t| <= {bd.t[-1]:g}, horizon {T:.4g} needs more")
    rows = bd.rows()
    out = np.empty((2, mus.size), dtype=complex)
    change = 0.0
    for k in (0, 1):
        direction = 1 if k == 0 else -1
        mid, end = j0 + direction * half_nodes, j0 + 2 * direction * half_nodes
        lams = np.atleast_1d(map_mu_to_lambda(k, mus, X_POLES))
        Z1 = _propagate_t(rows, bd, j0, mid, lams)
        Z2 = _propagate_t(rows, bd, mid, end, lams) @ Z1
        Q0h = gauge_Q(rows[k, j0]).conj().T
        ratios = []
        for Z, j in ((Z1, mid), (Z2, end)):
            A = gauge_Q(rows[k, j]) @ Z @ Q0h
            ratios.append(-A[:, 0, 1] / A[:, 0, 0])
        change = max(change, float(np.abs(ratios[1] - ratios[0]).max()))
        out[k] = ratios[1]
    if change > tol:
        raise HorizonError(f"limit ratio moved by {change:.2e} between T/2 and T = {2 * half_nodes * bd.dt:.4g}")
    return PsiLimit(out, 2 * half_nodes * bd.dt, change)


def evolve_psi(psi0, U) -> np.ndarray:
    """Moebius action ``(u11 psi + u12) / (u21 psi + u22)``; vectorized over leading axes."""
    U = np.asarray(U)
    psi0 = np.asarray(psi0, dtype=complex)
    den = U[..., 1, 0] * psi0 + U[..., 1, 1]
    if np.any(np.abs(den) < MOBIUS_FLOOR * np.abs(U).max(axis=(-2, -1))):
        raise QualityError("degenerate Moebius action: vanishing denominator")
    return (U[..., 0, 0] * psi0 + U[..., 0, 1]) / den


# ----------------------------------------------------------------- recovery

@dataclass(frozen=True)
class CosOmega:
    x: np.ndarray
    values: np.ndarray
    report: inverse.ReconstructionReport
    weyl_set: inverse.WeylSetData
    horizon: float


def weyl_set_at(bd: BoundaryData, t: float, eta: float, zeta, horizon: float | None = None,
                tol: float = 1e-6) -> tuple[inverse.WeylSetData, float]:
    """Weyl set of the x-direction system at time ``t`` from boundary data alone."""
    zeta = np.asarray(zeta, dtype=float)
    mus = zeta + 1j * eta
    Mx, _ = cutoffs(bd)
    if not eta < -Mx / 4:
        raise DomainError(f"eta={eta} must lie below -M/4 = {-Mx / 4:.4g}")
    lim = psi_at_origin(bd, mus, horizon, tol)
    j = int(np.argmin(np.abs(bd.t - t)))
    if abs(bd.t[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValidationError(f"t={t} is not a node of the boundary grid")
    rows = bd.rows()
    psi = lim.psi.copy()
    if j != bd.origin:
        for k in (0, 1):
            _, U = build_U(bd, k, mus, stop=j, path=False)
            psi[k] = evolve_psi(psi[k], U)
    ws = inverse.WeylSetData(zeta, eta, rows[:, j], psi, Mx, np.inf)
    return ws, lim.horizon


def recover_cos_omega(bd: BoundaryData, t: float, grid: GridSpec, eta: float = -4.0,
                      zeta=None, horizon: float | None = None, tol: float = 1e-6,
                      range_tol: float = 1e-2) -> CosOmega:
    """``cos omega(x, t)`` on ``grid`` from boundary data."""
    if zeta is None:
        Mx, _ = cutoffs(bd)
        zeta = direct.default_zeta(Mx, ZETA_COUNT, ZETA_SCALE * max(1.0, Mx))
    ws, T = weyl_set_at(bd, t, eta, zeta, horizon, tol)
    report = inverse.recover_from_weyl_set(ws, X_POLES, grid)
    rows = report.potential.rows
    values = cos_from_rows(rows[0], rows[1])
    if np.any(values < -1 - range_tol) or np.any(values > 1 + range_tol):
        raise QualityError(f"recovered cos(omega) leaves [-1, 1] by more than {range_tol:g}")
    return CosOmega(grid.x, values, report, ws, T)


__all__ = [
    "X_POLES", "T_POLES", "HorizonError", "kink", "constant_pi", "fd4", "x_generator",
    "t_generator", "evolve_q", "unitarity_drift", "beta_from_omega", "cos_from_rows",
    "pair_matrix", "SGField", "zero_curvature_residual", "BoundaryData", "cutoffs",
    "default_horizon", "build_U", "PsiLimit", "psi_at_origin", "evolve_psi", "CosOmega",
    "weyl_set_at", "recover_cos_omega",
]
