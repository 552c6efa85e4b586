"""Structured operator node ``(A, S, Pi)`` and the recovery of the potential.

Discretization conventions
--------------------------
Functions on ``[0, l]`` are sampled on the uniform grid and integrals use the
trapezoid rule.  Vectors are stored node-major: entry ``i*m + k`` is the
``k``-th component at node ``x_i``.

``S = B Dtilde + int s(x, u) . du`` is stored in its symmetric Nystrom form
``Smat = I (x) B Dtilde + W^1/2 K W^1/2`` where ``K`` holds the kernel samples
and ``W`` the trapezoid weights, so ``Smat`` is exactly Hermitian.  For the
restriction to ``[0, x_r]`` we work with ``H_r = W_r^-1 (x) B Dtilde + K_r``,
whose inverse gives ``S(r)^-1 = W_r^-1 H_r^-1`` and the kernel ``T_r`` after
subtracting the multiplication part and dividing by the weights.  ``W_r``
carries the endpoint weight ``h/2`` at ``x_r``, which is what keeps the
recovered rows second-order accurate.

Inner integrals of the resolvent integrate the exponential factor exactly
against the piecewise-linear interpolant of the input (a product trapezoid
rule), so constant inputs are reproduced to rounding error.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConditioningError,
    DomainError,
    GridSpec,
    PoleSet,
    PotentialField,
    QualityError,
    TruncationWarning,
    ValidationError,
)

COND_LIMIT = 1e12
CONTOUR_POINTS = 64


class ContourError(DomainError):
    """Contour radius reaches another pole."""


# ----------------------------------------------------------------- synthesis

@dataclass(frozen=True)
class ColumnSamples:
    """Synthesized columns on the grid: ``values[k]``, ``deriv[k]`` for each pole."""

    grid: GridSpec
    values: np.ndarray
    deriv: np.ndarray
    c: np.ndarray
    alpha: np.ndarray
    tail: float


def asymptotic_constants(zeta, eta, values, fraction: float = 0.1):
    """Estimate ``c`` and ``alpha`` in ``phi ~ c + alpha/mu`` from the outer |zeta| band.

    ``c`` is the plain average over the band; ``alpha`` is the average of
    ``mu (phi - c)`` over the same band.
    """
    zeta = np.asarray(zeta, dtype=float)
    values = np.atleast_2d(values)
    cut = np.quantile(np.abs(zeta), 1.0 - fraction)
    band = np.abs(zeta) >= cut
    mu = zeta[band] + 1j * eta
    c = values[:, band].mean(axis=1)
    alpha = (mu * (values[:, band] - c[:, None])).mean(axis=1)
    return c, alpha


def _zeta_weights(zeta: np.ndarray) -> np.ndarray:
    dz = np.diff(zeta)
    if zeta.size < 4 or np.any(dz <= 0) or np.ptp(dz) > 1e-9 * abs(dz[0]) * zeta.size:
        raise ValidationError("zeta grid must be uniform and increasing")
    w = np.full(zeta.size, dz[0])
    w[0] = w[-1] = dz[0] / 2
    return w


def synth_columns(zeta, eta: float, values, grid: GridSpec, c=None, alpha=None,
                  first_order: bool = True) -> ColumnSamples:
    """Invert ``phi(mu) = -Phi(0) - int_0^inf exp(-2 i mu u) Phi'(u) du`` on the grid.

    With ``nu = zeta + i eta`` the data line, the transform reads
    ``Phi(x) = (i/2pi) int exp(2 i nu x) phi(nu) / nu dzeta``.  The constant
    ``c`` and (when ``first_order``) the ``alpha / nu`` term are inverted in
    closed form, giving ``-c - 2 i alpha x``; only the remainder is summed.
    The result vanishes for ``x < 0``.
    """
    zeta = np.asarray(zeta, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=complex))
    if not eta < 0:
        raise ValidationError("the data line must lie in the lower half-plane")
    c_est, a_est = asymptotic_constants(zeta, eta, values)
    c = c_est if c is None else np.atleast_1d(np.asarray(c, dtype=complex))
    if alpha is None:
        alpha = a_est if first_order else np.zeros_like(c)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    nu = zeta + 1j * eta
    wz = _zeta_weights(zeta)
    rem = values - c[:, None] - alpha[:, None] / nu
    x = grid.x
    growth = np.exp(-2.0 * eta * x)
    kernel = np.exp(2j * np.outer(x, zeta)) * wz
    vals = (1j / (2 * np.pi)) * growth[None, :] * ((rem / nu) @ kernel.T)
    vals += -c[:, None] - 2j * alpha[:, None] * x[None, :]
    ders = -(1.0 / np.pi) * growth[None, :] * (rem @ kernel.T)
    ders += -2j * alpha[:, None]
    edge = np.abs(rem[:, [0, -1]]).max() / abs(nu[-1])
    tail = float(edge * zeta.max() / np.pi * growth.max())
    return ColumnSamples(grid, vals, ders, c, alpha, tail)


def synth_phi2(weyl, grid: GridSpec, c=None, first_order: bool = True,
               tail_tol: float | None = None) -> ColumnSamples:
    """Second column of ``Phi`` from sampled Weyl data."""
    out = synth_columns(weyl.zeta, weyl.eta, weyl.phi, grid, c=c, first_order=first_order)
    if tail_tol is not None and out.tail > tail_tol:
        warnings.warn(f"zeta range too short: tail estimate {out.tail:.2e}",
                      TruncationWarning, stacklevel=2)
    return out


# ----------------------------------------------------------------- resolvent

def _phi_functions(z: np.ndarray):
    """``(e^z - 1)/z`` and ``(e^z - 1 - z)/z^2`` with a series near zero."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    zs = np.where(small, z, 1.0)
    ez = np.exp(zs)
    p1 = (ez - 1.0) / zs
    p2 = (ez - 1.0 - zs) / zs ** 2
    zz = np.where(small, z, 0.0)
    s2 = np.zeros_like(zz)
    term = np.full_like(zz, 0.5)
    for j in range(2, 16):
        s2 += term
        term = term * zz / (j + 1)
    s1 = 1.0 + zz * s2
    return np.where(small, s1, p1), np.where(small, s2, p2)


def resolvent_apply(k: int, lam, f, grid: GridSpec, poles: PoleSet) -> np.ndarray:
    """``((lam I - A_k)^-1 f)(x_i)`` where ``A_k = d_k + i b_k A0``.

    ``lam`` may be an array; the result then has a leading axis over ``lam``.
    ``f`` has the nodes on its first axis.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    if np.any(lam_arr == poles.d[k]):
        raise DomainError(f"lambda = {poles.d[k]} is a pole of A_{k}")
    f = np.asarray(f, dtype=complex)
    gap = lam_arr - poles.d[k]
    rate = 1j * poles.b[k] / gap
    h = grid.h
    p1, p2 = _phi_functions(rate * h)
    step = np.exp(rate * h)
    w_new = h * p2
    w_old = h * (p1 - p2)
    extra = (slice(None),) + (None,) * (f.ndim - 1)
    step, w_new, w_old = step[extra], w_new[extra], w_old[extra]
    acc = np.zeros((lam_arr.size,) + f.shape, dtype=complex)
    for i in range(grid.n):
        acc[:, i + 1] = step * acc[:, i] + w_old * f[i] + w_new * f[i + 1]
    g1 = (1.0 / gap)[extra]
    g2 = (1j * poles.b[k] / gap ** 2)[extra]
    out = g1[:, None] * f[None] + g2[:, None] * acc
    return out[0] if np.ndim(lam) == 0 else out


def integration_matrix(grid: GridSpec, reverse: bool = False) -> np.ndarray:
    """Trapezoid matrix of ``int_0^x`` (or ``int_x^l`` when ``reverse``)."""
    n = grid.n
    A0 = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        A0[i, : i + 1] = grid.weights(i)
    if reverse:
        A0 = A0[::-1, ::-1]
    return A0


# ------------------------------------------------------------------- kernels

def kernel_diag(b: int, dphi, grid: GridSpec, phi0=None) -> np.ndarray:
    """Diagonal-block kernel samples ``s_kk(x_i, x_j)``.

    After the substitution ``t = (v + u - x)/2`` the defining integral becomes
    ``b int_0^min(x,u) Phi'(t + |x-u|) Phi'(t)^* dt`` (for ``x >= u``), which
    lands on grid nodes, so the trapezoid rule runs along each diagonal.

    When ``phi0`` (the row ``Phi_k(0)``) is given, the term
    ``b Phi'(x - u) Phi(0)^*`` (``x >= u``, Hermitian mirror otherwise) is
    added.  Without it the kernel only satisfies the operator identity when
    the varying column vanishes at the origin.  The term jumps across the
    diagonal, so diagonal samples hold the mean of the one-sided limits.
    ``dphi`` may be a scalar column (nodes,) or rows (nodes, 2).
    """
    dphi = np.asarray(dphi, dtype=complex)
    if dphi.ndim == 1:
        dphi = dphi[:, None]
    n = grid.n
    h = grid.h
    edge = np.zeros(n + 1, dtype=complex)
    if phi0 is not None:
        phi0 = np.atleast_1d(np.asarray(phi0, dtype=complex))
        edge = dphi @ phi0.conj()
    s = np.zeros((n + 1, n + 1), dtype=complex)
    idx = np.arange(n + 1)
    for off in range(n + 1):
        g = np.einsum("tc,tc->t", dphi[off:], dphi[: n + 1 - off].conj())
        cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (g[1:] + g[:-1]))])
        rows = idx[off:]
        cols = idx[: n + 1 - off]
        if off:
            s[rows, cols] = b * (cum + edge[off])
            s[cols, rows] = np.conj(b * (cum + edge[off]))
        else:
            # the kernel jumps across x = u; the quadrature wants the mean
            s[rows, cols] = b * (cum.real + edge[0].real)
    return s


def kernel_offdiag(k: int, p: int, phi_k, phi_p, poles: PoleSet, grid: GridSpec,
                   radius: float | None = None, points: int = CONTOUR_POINTS) -> np.ndarray:
    """Off-diagonal kernel samples ``s_kp(x_i, x_j)`` from the contour integral.

    The anticlockwise circle of ``radius`` around ``d_k`` is sampled at
    ``points`` equally spaced nodes; both resolvent factors go through
    :func:`resolvent_apply`.  ``phi_k`` and ``phi_p`` are row samples (nodes, 2).
    """
    if k == p:
        raise ValidationError("off-diagonal kernel needs distinct pole indices")
    gap = abs(poles.d[k] - poles.d[p])
    radius = gap / 2 if radius is None else float(radius)
    if not 0 < radius < gap:
        raise ContourError(f"contour radius {radius} must lie in (0, {gap})")
    theta = 2 * np.pi * np.arange(points) / points
    ring = radius * np.exp(1j * theta)
    lam = poles.d[k] + ring
    left = resolvent_apply(k, lam, phi_k, grid, poles)
    right = resolvent_apply(p, lam.conj(), phi_p, grid, poles)
    weights = 1j * ring / points
    return np.einsum("q,qxc,quc->xu", weights, left, right.conj())


# -------------------------------------------------------------------- S-node

@dataclass(frozen=True)
class SNode:
    poles: PoleSet
    grid: GridSpec
    phi: np.ndarray
    dphi: np.ndarray
    Dtilde: np.ndarray
    kernel: np.ndarray
    Smat: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.poles.m

    @property
    def BD(self) -> np.ndarray:
        return np.array(self.poles.b) * self.Dtilde

    def kernel_matrix(self, r: int | None = None) -> np.ndarray:
        """Node-major kernel samples restricted to nodes ``0..r``."""
        r = self.grid.n if r is None else r
        K = self.kernel[: r + 1, : r + 1]
        return K.transpose(0, 2, 1, 3).reshape((r + 1) * self.m, (r + 1) * self.m)

    def H(self, r: int) -> np.ndarray:
        """``W_r^-1 (x) B Dtilde + K_r``; ``r >= 1``."""
        w = self.grid.weights(r)
        diag = (1.0 / w)[:, None] * self.BD[None, :]
        return self.kernel_matrix(r) + np.diag(diag.ravel())

    def phi_stack(self, r: int | None = None) -> np.ndarray:
        """``Phi`` rows, node-major, shape ``((r+1) m, 2)``."""
        r = self.grid.n if r is None else r
        return self.phi[:, : r + 1].transpose(1, 0, 2).reshape(-1, 2)


def _rows_from_columns(phi2) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(phi2, ColumnSamples):
        vals, ders = phi2.values, phi2.deriv
    else:
        vals, ders = phi2
    vals = np.atleast_2d(vals)
    ders = np.atleast_2d(ders)
    phi = np.stack([np.ones_like(vals), vals], axis=-1)
    dphi = np.stack([np.zeros_like(ders), ders], axis=-1)
    return phi, dphi


def assemble_S(phi2, poles: PoleSet, grid: GridSpec, phi_rows=None, dphi_rows=None,
               radius: float | None = None, points: int = CONTOUR_POINTS) -> SNode:
    """Assemble the node from ``Phi_2`` (values, derivative) samples.

    For the Weyl-set variant pass full ``phi_rows``/``dphi_rows`` of shape
    ``(m, n+1, 2)`` with one constant column per pole; ``Dtilde`` is then the
    squared norm of ``Phi_k(0)``, which reduces to ``1 + |Phi_k2(0)|^2`` in
    the standard case.
    """
    if phi_rows is None:
        phi, dphi = _rows_from_columns(phi2)
    else:
        phi = np.asarray(phi_rows, dtype=complex)
        dphi = np.asarray(dphi_rows, dtype=complex)
    m = poles.m
    if phi.shape != (m, grid.n + 1, 2):
        raise ValidationError(f"Phi samples must have shape {(m, grid.n + 1, 2)}, got {phi.shape}")
    Dtilde = np.linalg.norm(phi[:, 0, :], axis=-1) ** 2
    kern = np.zeros((grid.n + 1, grid.n + 1, m, m), dtype=complex)
    for k in range(m):
        kern[:, :, k, k] = kernel_diag(poles.b[k], dphi[k], grid, phi[k, 0])
        for p in range(k + 1, m):
            skp = kernel_offdiag(k, p, phi[k], phi[p], poles, grid, radius, points)
            kern[:, :, k, p] = skp
            kern[:, :, p, k] = skp.conj().T
    sw = np.sqrt(grid.weights())
    K = kern.transpose(0, 2, 1, 3).reshape((grid.n + 1) * m, (grid.n + 1) * m)
    scale = np.repeat(sw, m)
    BD = np.array(poles.b) * Dtilde
    Smat = scale[:, None] * K * scale[None, :] + np.diag(np.tile(BD, grid.n + 1))
    # imaginary part of b Phi'(0) Phi(0)^*: half the jump of s_kk across x = u
    jump = np.array(poles.b) * np.einsum("kc,kc->k", dphi[:, 0], phi[:, 0].conj()).imag
    return SNode(poles, grid, phi, dphi, Dtilde, kern, Smat, {"diag_jump": jump})


def identity_residual(node: SNode, norm: str = "sup") -> float:
    """Relative discrete norm of ``A S - S A^* - i Pi Pi^*``.

    Operators act on node samples.  The diagonal kernel jumps across
    ``x = u``; interior diagonal samples carry the mean, but at the corners
    ``(0, 0)`` and ``(l, l)`` only one side lies inside the square, so the
    matching one-sided limit is used there (``Smat`` itself keeps the mean to
    stay Hermitian).

    ``norm="sup"`` is the operator norm on ``C[0, l]`` (max absolute row
    sum), ``norm="l2"`` the spectral norm in the trapezoid-weighted inner
    product.  The latter sees the boundary rows and columns and converges
    only like ``h^1.5``.
    """
    g, m = node.grid, node.m
    w = g.weights()
    I_n = np.eye(g.n + 1)
    D = np.diag(node.poles.d)
    B = np.diag(np.array(node.poles.b, dtype=float))
    A0 = integration_matrix(g)
    A0r = integration_matrix(g, reverse=True)
    A = np.kron(I_n, D) + 1j * np.kron(A0, B)
    A_adj = np.kron(I_n, D) - 1j * np.kron(A0r, B)
    wm = np.repeat(w, m)
    K = node.kernel_matrix().copy()
    jump = node.meta.get("diag_jump", np.zeros(m))
    last = g.n * m
    K[np.arange(m), np.arange(m)] -= 1j * jump
    K[last + np.arange(m), last + np.arange(m)] += 1j * jump
    S = K * wm[None, :] + np.diag(np.tile(node.BD, g.n + 1))
    P = node.phi_stack()
    PP = (P @ P.conj().T) * wm[None, :]
    R = A @ S - S @ A_adj - 1j * PP
    if norm == "sup":
        return float(np.abs(R).sum(axis=1).max() / np.abs(S).sum(axis=1).max())
    if norm == "l2":
        sw = np.sqrt(wm)
        Rs = sw[:, None] * R / sw[None, :]
        return float(np.linalg.norm(Rs, 2) / np.linalg.norm(node.Smat, 2))
    raise ValueError(f"unknown norm {norm!r}")


# ---------------------------------------------------------------- the sweep

@dataclass(frozen=True)
class InverseSweep:
    """Kernel rows ``T_r(x_r, x_j)`` for ``j <= r``; ``rows[r, j]`` is ``m x m``."""

    rows: np.ndarray
    diag_part: np.ndarray
    cond: np.ndarray
    method: str


def _cond_estimate(Hinv: np.ndarray, H: np.ndarray | None, w: np.ndarray, m: int) -> float:
    sw = np.repeat(np.sqrt(w), m)
    Sinv = Hinv / sw[:, None] / sw[None, :]
    if H is None:
        H = np.linalg.inv(Hinv)
    S = H * sw[:, None] * sw[None, :]
    return float(np.linalg.norm(S, 1) * np.linalg.norm(Sinv, 1))


def _t_row(node: SNode, r: int, Hinv: np.ndarray) -> np.ndarray:
    m = node.m
    w = node.grid.weights(r)
    last = Hinv[r * m:(r + 1) * m, :].reshape(m, r + 1, m).transpose(1, 0, 2)
    T = last / (w[r] * w)[:, None, None]
    T[r] -= np.diag(node.poles.b / node.Dtilde) / w[r]
    return T


def _t_origin(node: SNode) -> np.ndarray:
    BDi = np.diag(np.array(node.poles.b) / node.Dtilde)
    return -BDi @ node.kernel[0, 0] @ BDi


def bordered_inverses(node: SNode):
    """Yield ``(r, H_r^-1)`` for ``r = 1..n`` by bordering updates.

    Moving from ``r`` to ``r+1`` first lowers the weight of node ``r`` from
    ``h/2`` to ``h`` (a rank-``m`` Woodbury correction), then borders with
    node ``r+1`` through its Schur complement.
    """
    m, h = node.m, node.grid.h
    BD = node.BD
    Hinv = np.linalg.inv(node.H(1))
    yield 1, Hinv
    K = node.kernel_matrix()
    for r in range(1, node.grid.n):
        sl = slice(r * m, (r + 1) * m)
        U = Hinv[:, sl]
        small = np.diag(-h / BD) + Hinv[sl, sl]
        Hinv = Hinv - U @ np.linalg.solve(small, Hinv[sl, :])
        new = slice((r + 1) * m, (r + 2) * m)
        c = K[: (r + 1) * m, new]
        e = K[new, new] + np.diag(2.0 * BD / h)
        X = Hinv @ c
        schur = e - c.conj().T @ X
        sinv = np.linalg.inv(schur)
        top = Hinv + X @ sinv @ X.conj().T
        side = -X @ sinv
        Hinv = np.block([[top, side], [side.conj().T, sinv]])
        yield r + 1, Hinv


def direct_inverses(node: SNode):
    """Yield ``(r, H_r^-1)`` by independent inversion of every block."""
    for r in range(1, node.grid.n + 1):
        yield r, np.linalg.inv(node.H(r))


def inverse_sweep(node: SNode, method: str = "bordering", cond_every: int = 1) -> InverseSweep:
    """Kernel rows of ``S(r)^-1`` for every ``r`` on the grid."""
    source = {"bordering": bordered_inverses, "direct": direct_inverses}.get(method)
    if source is None:
        raise ValidationError(f"unknown sweep method {method!r}")
    n, m = node.grid.n, node.m
    rows = np.zeros((n + 1, n + 1, m, m), dtype=complex)
    rows[0, 0] = _t_origin(node)
    conds = np.zeros(n + 1)
    conds[0] = 1.0
    for r, Hinv in source(node):
        if not np.all(np.isfinite(Hinv)):
            raise ConditioningError(f"non-finite inverse at r index {r}")
        if r % cond_every == 0 or r == n:
            conds[r] = _cond_estimate(Hinv, node.H(r), node.grid.weights(r), m)
            if conds[r] > COND_LIMIT:
                raise ConditioningError(f"condition estimate {conds[r]:.2e} at r index {r}")
        rows[r, : r + 1] = _t_row(node, r, Hinv)
    return InverseSweep(rows, np.diag(np.array(node.poles.b) / node.Dtilde), conds, method)


# ------------------------------------------------------------ the potential

def recover_beta(node: SNode, sweep: InverseSweep, renormalize: bool = True,
                 reject: float = 1e-2, rescale: float = 1e-4) -> PotentialField:
    """``beta(r) = Dtilde^-1/2 Phi(r) + B Dtilde^1/2 int_0^r T_r(r,u) Phi(u) du``."""
    g, m = node.grid, node.m
    half = np.sqrt(node.Dtilde)
    B = np.array(node.poles.b, dtype=float)
    beta = np.empty((m, g.n + 1, 2), dtype=complex)
    for r in range(g.n + 1):
        w = g.weights(r)
        integral = np.einsum("j,jkp,pjc->kc", w, sweep.rows[r, : r + 1], node.phi[:, : r + 1])
        beta[:, r] = node.phi[:, r] / half[:, None] + (B * half)[:, None] * integral
    drift = float(np.abs(np.linalg.norm(beta, axis=-1) - 1.0).max())
    if drift > reject:
        raise QualityError(f"recovered row norms drift by {drift:.3e} (> {reject:g})")
    if renormalize and drift <= rescale:
        beta = beta / np.linalg.norm(beta, axis=-1, keepdims=True)
    return PotentialField(g, beta, renormalize=False, meta={"row_drift": drift})


def _apply_Sinv(node: SNode, r: int, Hinv: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``S(r)^-1`` on node-major samples ``f`` of shape ``((r+1) m, cols)``."""
    w = np.repeat(node.grid.weights(r), node.m)
    return (Hinv @ f) / w[:, None]


def _kernel_column(node: SNode, r: int, deriv: bool) -> np.ndarray:
    """``s(x_i, u)`` (or its ``u``-derivative) at ``u = x_r`` for ``i <= r``, node-major ``((r+1)m, m)``.

    Only the branch ``x < u`` is wanted.  Off-diagonal blocks are smooth and
    are differenced along the column; the diagonal blocks jump and kink
    across ``x = u``, so their values at ``i = r`` take the one-sided limit
    and their derivative is evaluated from ``Phi''`` directly.
    """
    m, n, h = node.m, node.grid.n, node.grid.h
    K = node.kernel
    if not deriv:
        col = K[: r + 1, r].copy()
        col[r] -= 1j * np.diag(node.meta.get("diag_jump", np.zeros(m)))
        return col.reshape((r + 1) * m, m)
    if r + 2 <= n:
        col = (-3 * K[: r + 1, r] + 4 * K[: r + 1, r + 1] - K[: r + 1, r + 2]) / (2 * h)
    else:
        col = (3 * K[: r + 1, r] - 4 * K[: r + 1, r - 1] + K[: r + 1, r - 2]) / (2 * h)
    ddphi = np.gradient(node.dphi, h, axis=1, edge_order=2)
    B = node.poles.b
    for k in range(m):
        # b int_0^x Phi'(t) Phi''(t + r - x)^* dt + b Phi(0) Phi''(r - x)^*
        for i in range(r + 1):
            g = np.einsum("tc,tc->t", node.dphi[k, : i + 1], ddphi[k, r - i: r + 1].conj())
            edge = ddphi[k, r - i] @ node.phi[k, 0].conj()
            col[i, k, k] = B[k] * (np.trapezoid(g, dx=h) + np.conj(edge))
    return col.reshape((r + 1) * m, m)


def beta_derivative(node: SNode, sweep: InverseSweep, r: int) -> np.ndarray:
    """``beta'(x_r)`` from the kernel rows, shape ``(m, 2)``.

    Accurate to ``O(h)``: the sweep stores the diagonal mean of ``T_r``, and
    the one-sided correction is exact only in the limit.
    """
    m = node.m
    half = np.sqrt(node.Dtilde)
    B = np.array(node.poles.b, dtype=float)
    # T_r jumps across x = u with s; both Y_1 and Y_2 want the limit from u < r
    C = B * node.Dtilde
    jump = node.meta.get("diag_jump", np.zeros(m))
    Trr = sweep.rows[r, r] - 1j * np.diag(jump / C ** 2)
    Phi_r = node.phi[:, r]
    Y = Trr @ Phi_r
    if r > 0:
        Hinv = np.linalg.inv(node.H(r))
        w = node.grid.weights(r)
        P = node.phi_stack(r).reshape(r + 1, m, 2)
        for deriv, lead in ((False, -Trr), (True, -np.diag(B / node.Dtilde))):
            Z = _apply_Sinv(node, r, Hinv, _kernel_column(node, r, deriv)).reshape(r + 1, m, m)
            Y = Y + lead @ np.einsum("j,jpk,jpc->kc", w, Z.conj(), P)
    return node.dphi[:, r] / half[:, None] + (B * half)[:, None] * Y


# ----------------------------------------------------------- transfer matrix

@dataclass(frozen=True)
class TransferSample:
    r: float
    lam: complex
    w: np.ndarray


def _shifted_resolvent(node: SNode, lam: complex) -> np.ndarray:
    """``(A - lam)^-1 Pi`` on all nodes, node-major ``((n+1) m, 2)``."""
    g, m = node.grid, node.m
    out = np.empty((g.n + 1, m, 2), dtype=complex)
    for k in range(m):
        out[:, k] = -resolvent_apply(k, lam, node.phi[k], g, node.poles)
    return out.reshape(-1, 2)


def transfer_matrix(node: SNode, r: int, lam: complex) -> TransferSample:
    """``w_A(x_r, lam) = I - i Pi(r)^* S(r)^-1 (A(r) - lam)^-1 Pi(r)``."""
    lam = complex(lam)
    if lam in node.poles.d:
        raise DomainError(f"lambda = {lam} is a pole")
    if r == 0:
        return TransferSample(0.0, lam, np.eye(2, dtype=complex))
    m = node.m
    G = _shifted_resolvent(node, lam)[: (r + 1) * m]
    P = node.phi_stack(r)
    w = np.eye(2) - 1j * P.conj().T @ np.linalg.solve(node.H(r), G)
    return TransferSample(float(node.grid.x[r]), lam, w)


def transfer_path(node: SNode, lam: complex) -> np.ndarray:
    """``w_A(x_r, lam)`` for every node via the bordering sweep, shape ``(n+1, 2, 2)``."""
    lam = complex(lam)
    if lam in node.poles.d:
        raise DomainError(f"lambda = {lam} is a pole")
    m = node.m
    G = _shifted_resolvent(node, lam)
    P = node.phi_stack()
    out = np.empty((node.grid.n + 1, 2, 2), dtype=complex)
    out[0] = np.eye(2)
    for r, Hinv in bordered_inverses(node):
        size = (r + 1) * m
        out[r] = np.eye(2) - 1j * P[:size].conj().T @ (Hinv @ G[:size])
    return out


def transfer_ode_residual(node: SNode, beta: PotentialField, lam: complex,
                          path: np.ndarray | None = None) -> float:
    """Max relative central-difference residual of ``w_A' = i beta^* B (lam - D)^-1 beta w_A``."""
    wA = transfer_path(node, lam) if path is None else path
    h = node.grid.h
    coef = np.array(node.poles.b) / (lam - np.array(node.poles.d))
    rows = beta.rows
    gen = 1j * np.einsum("k,kxa,kxb->xab", coef, rows.conj(), rows)
    fd = (wA[2:] - wA[:-2]) / (2 * h)
    res = fd - gen[1:-1] @ wA[1:-1]
    num = np.linalg.norm(res, 2, axis=(1, 2))
    den = np.linalg.norm(wA[1:-1], 2, axis=(1, 2))
    return float((num / den).max())


# ------------------------------------------------------------ factorization

def factor_V(node: SNode, sweep: InverseSweep) -> np.ndarray:
    """Lower-triangular ``V`` acting on node-major samples (function representation)."""
    g, m = node.grid, node.m
    half = np.sqrt(node.Dtilde)
    B = np.array(node.poles.b, dtype=float)
    V = np.zeros(((g.n + 1) * m, (g.n + 1) * m), dtype=complex)
    for r in range(g.n + 1):
        w = g.weights(r)
        blocks = (B * half)[None, :, None] * sweep.rows[r, : r + 1] * w[:, None, None]
        blocks[r] += np.diag(1.0 / half)
        V[r * m:(r + 1) * m, : (r + 1) * m] = blocks.transpose(1, 0, 2).reshape(m, -1)
    return V


def factorization_residual(node: SNode, sweep: InverseSweep) -> float:
    """``||V^* B V S - I|| / ||S||`` in the weighted inner product."""
    g, m = node.grid, node.m
    wm = np.repeat(g.weights(), m)
    sw = np.sqrt(wm)
    V = factor_V(node, sweep)
    Vs = sw[:, None] * V / sw[None, :]
    Bfull = np.diag(np.tile(np.array(node.poles.b, dtype=float), g.n + 1))
    prod = Vs.conj().T @ Bfull @ Vs @ node.Smat
    return float(np.linalg.norm(prod - np.eye(prod.shape[0]), 2) / np.linalg.norm(node.Smat, 2))
