"""Reconstruction pipelines: Weyl function, Weyl set, and the local-uniqueness harness."""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import direct, snode
from .core import (
    GridSpec,
    PoleSet,
    PotentialField,
    ValidationError,
    WeylError,
)


class PartitionError(ValidationError):
    """Pole indices are not split into two disjoint covering sets."""


class DegenerateFitError(WeylError, ArithmeticError):
    """Weyl-function differences sit at the noise floor; no rate can be fitted."""


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except WeylError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = name
            exc.args = (f"[{name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    finally:
        timings[name] = time.perf_counter() - start


def projector_error(a: PotentialField, b: PotentialField) -> float:
    """``max_{k,x} ||a_k^* a_k - b_k^* b_k||`` (spectral norm)."""
    if a.rows.shape != b.rows.shape:
        raise ValidationError(f"shape mismatch {a.rows.shape} vs {b.rows.shape}")
    diff = a.projectors() - b.projectors()
    return float(np.linalg.norm(diff, ord=2, axis=(-2, -1)).max())


@dataclass(frozen=True)
class ReconstructionReport:
    potential: PotentialField
    identity_residual: float
    row_drift: float
    truncation_bound: float
    synthesis_tail: float
    c_estimate: np.ndarray
    projector_error: float | None = None
    timings: dict = field(default_factory=dict, compare=False)
    node: snode.SNode | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("identity_residual", "row_drift", "truncation_bound", "synthesis_tail"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"report field {name} = {v} is not a finite nonnegative number")

    def to_dict(self) -> dict:
        out = {
            "identity_residual": self.identity_residual,
            "row_drift": self.row_drift,
            "truncation_bound": self.truncation_bound,
            "synthesis_tail": self.synthesis_tail,
            "grid_n": self.potential.grid.n,
            "grid_l": self.potential.grid.l,
        }
        if self.projector_error is not None:
            out["projector_error"] = self.projector_error
        for k, c in enumerate(np.atleast_1d(self.c_estimate)):
            out[f"c{k + 1}_re"] = float(np.real(c))
            out[f"c{k + 1}_im"] = float(np.imag(c))
        for name, t in self.timings.items():
            out[f"seconds_{name}"] = t
        return out


def _finish(node, grid, truth, timings, truncation, tail, c) -> ReconstructionReport:
    with _stage("inverse_sweep", timings):
        sweep = snode.inverse_sweep(node)
    with _stage("recover_beta", timings):
        beta = snode.recover_beta(node, sweep)
    with _stage("diagnostics", timings):
        resid = snode.identity_residual(node)
    err = projector_error(beta, truth) if truth is not None else None
    return ReconstructionReport(beta, resid, beta.meta["row_drift"], float(truncation),
                                float(tail), np.asarray(c), err, timings, node)


def recover_from_weyl_function(weyl: direct.WeylData, poles: PoleSet, grid: GridSpec,
                               truth: PotentialField | None = None,
                               first_order: bool = True) -> ReconstructionReport:
    """Sampled Weyl function -> Phi_2 -> S-node -> sweep -> rows ``beta_k``."""
    if weyl.m != poles.m:
        raise ValidationError(f"Weyl data has {weyl.m} columns for {poles.m} poles")
    if grid.l > weyl.l + 1e-12:
        raise ValidationError(f"grid length {grid.l} exceeds the data window {weyl.l}")
    timings: dict = {}
    with _stage("synth_phi2", timings):
        cols = snode.synth_phi2(weyl, grid, first_order=first_order)
    with _stage("assemble_S", timings):
        node = snode.assemble_S(cols, poles, grid)
    return _finish(node, grid, truth, timings, weyl.truncation_bound, cols.tail, cols.c)


# ------------------------------------------------------------------ Weyl set

@dataclass(frozen=True)
class WeylSetData:
    """Boundary rows ``beta_k(0)`` and Weyl points ``psi_k`` sampled on ``Im mu = eta``.

    ``first`` lists the pole indices whose boundary row has a usable first
    entry; every other index must have a usable second entry.  When omitted
    each index goes to whichever entry is larger in modulus.
    """

    zeta: np.ndarray
    eta: float
    beta0: np.ndarray
    psi: np.ndarray
    M: float
    l: float
    first: tuple[int, ...] | None = None
    truncation_bound: float = 0.0

    def __post_init__(self):
        beta0 = np.atleast_2d(np.asarray(self.beta0, dtype=complex))
        psi = np.atleast_2d(np.asarray(self.psi, dtype=complex))
        if beta0.shape[1] != 2 or psi.shape != (beta0.shape[0], np.size(self.zeta)):
            raise ValidationError(f"inconsistent shapes beta0 {beta0.shape}, psi {psi.shape}")
        if not np.all(np.abs(np.linalg.norm(beta0, axis=-1) - 1) <= 1e-4):
            raise ValidationError("boundary rows must be unit rows")
        beta0 = beta0 / np.linalg.norm(beta0, axis=-1, keepdims=True)
        if self.first is None:
            first = tuple(int(k) for k in np.flatnonzero(np.abs(beta0[:, 0]) >= np.abs(beta0[:, 1])))
        else:
            first = tuple(sorted(int(k) for k in self.first))
        m = beta0.shape[0]
        if len(set(first)) != len(first) or any(k < 0 or k >= m for k in first):
            raise PartitionError(f"invalid first-entry index set {first} for m={m}")
        for k in range(m):
            entry = 0 if k in first else 1
            if abs(beta0[k, entry]) < 1e-8:
                raise PartitionError(f"pole {k} assigned to entry {entry + 1}, which vanishes")
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float))

    @property
    def m(self) -> int:
        return self.beta0.shape[0]

    @property
    def second(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.m) if k not in self.first)

    def with_phases(self, phases) -> "WeylSetData":
        """Multiply each boundary row by a unimodular factor and each ``psi_k`` by its square.

        This is how a constant gauge ``beta_k -> c_k beta_k`` acts on the data.
        """
        c = np.asarray(phases, dtype=complex)
        if not np.allclose(np.abs(c), 1.0, atol=1e-12):
            raise ValidationError("phases must be unimodular")
        return WeylSetData(self.zeta, self.eta, self.beta0 * c[:, None], self.psi * (c ** 2)[:, None],
                           self.M, self.l, self.first, self.truncation_bound)


def weyl_set_functions(ws: WeylSetData) -> np.ndarray:
    """Moebius images of ``psi_k``: the WT-function on the first-entry set, its reciprocal form elsewhere."""
    out = np.empty_like(ws.psi)
    for k in range(ws.m):
        b1, b2 = ws.beta0[k]
        num = np.conj(b1) * ws.psi[k] - b2
        den = np.conj(b2) * ws.psi[k] + b1
        out[k] = num / den if k in ws.first else den / num
    return out


def weyl_set_from_potential(potential: PotentialField, poles: PoleSet, eta: float,
                            zeta=None, M: float | None = None, first=None) -> WeylSetData:
    """Weyl set of a sampled potential (oracle helper; works when a first entry vanishes)."""
    M = direct.bound_M(potential, poles) if M is None else float(M)
    if not eta < -M / 4:
        raise ValidationError(f"eta={eta} must lie below -M/4 = {-M / 4:.4g}")
    zeta = direct.default_zeta(M) if zeta is None else np.asarray(zeta, dtype=float)
    mus = zeta + 1j * eta
    psi = np.array([direct.weyl_point(potential, poles, k, mus) for k in range(poles.m)])
    l = potential.grid.l
    return WeylSetData(zeta, eta, potential.at_origin(), psi, M, l, first,
                       direct.truncation_bound(eta, M, l))


def recover_from_weyl_set(ws: WeylSetData, poles: PoleSet, grid: GridSpec,
                          truth: PotentialField | None = None,
                          first_order: bool = True) -> ReconstructionReport:
    """Weyl set -> Phi columns (constant column chosen per index) -> S-node -> rows."""
    if ws.m != poles.m:
        raise PartitionError(f"Weyl set has {ws.m} entries for {poles.m} poles")
    timings: dict = {}
    with _stage("synth_phi", timings):
        funcs = weyl_set_functions(ws)
        cols = snode.synth_columns(ws.zeta, ws.eta, funcs, grid, first_order=first_order)
        phi = np.ones((ws.m, grid.n + 1, 2), dtype=complex)
        dphi = np.zeros_like(phi)
        for k in range(ws.m):
            varying = 1 if k in ws.first else 0
            phi[k, :, varying] = cols.values[k]
            dphi[k, :, varying] = cols.deriv[k]
    with _stage("assemble_S", timings):
        node = snode.assemble_S(None, poles, grid, phi_rows=phi, dphi_rows=dphi)
    return _finish(node, grid, truth, timings, ws.truncation_bound, cols.tail, cols.c)


# ---------------------------------------------------------- local uniqueness

@dataclass(frozen=True)
class GapFit:
    rate: float
    intercept: float
    scale: np.ndarray
    gap: np.ndarray


def borg_marchenko_gap(potA: PotentialField, potB: PotentialField, poles: PoleSet,
                       l0: float, ray_slope: float = 0.0, depths=None,
                       floor: float = 1e-6, M: float | None = None) -> GapFit:
    """Fit the exponential rate at which the two Weyl functions approach each other.

    Samples ``mu`` on the ray ``Re mu = ray_slope * Im mu`` at the given
    ``depths`` ``s = -2 Im mu`` and fits ``log ||phi_A - phi_B||`` linearly in
    ``s``; the rate is minus the slope, which should be close to ``l0``.
    Pass ``M`` when a potential jumps: the finite-difference slope bound is
    meaningless there.
    """
    if potA.grid != potB.grid:
        raise ValidationError("both potentials must live on the same grid")
    if not 0 < l0 < potA.grid.l:
        raise ValidationError(f"split point {l0} must lie inside (0, {potA.grid.l})")
    if M is None:
        M = max(direct.bound_M(potA, poles), direct.bound_M(potB, poles))
    if depths is None:
        lo = 0.6 * M
        hi = max(lo + 2.0 / l0, min(lo + 16.0 / l0, 24.0 / l0))
        depths = np.linspace(lo, hi, 12)
    s = np.asarray(depths, dtype=float)
    if np.any(s <= M / 2):
        raise ValidationError(f"depths must exceed M/2 = {M / 2:.4g}")
    im = -s / 2
    mus = ray_slope * im + 1j * im
    gaps = np.empty(s.size)
    for j, mu in enumerate(mus):
        phA = [direct.wt_function(direct.weyl_point(potA, poles, k, [mu]), potA.rows[k, 0])
               for k in range(poles.m)]
        phB = [direct.wt_function(direct.weyl_point(potB, poles, k, [mu]), potB.rows[k, 0])
               for k in range(poles.m)]
        gaps[j] = np.linalg.norm(np.ravel(phA) - np.ravel(phB))
    if gaps.max() < floor:
        raise DegenerateFitError(f"Weyl functions differ by at most {gaps.max():.2e} (< {floor:g})")
    keep = gaps > 1e3 * np.finfo(float).eps
    if keep.sum() < 3:
        raise DegenerateFitError("fewer than three usable gap samples")
    slope, intercept = np.polyfit(s[keep], np.log(gaps[keep]), 1)
    return GapFit(float(-slope), float(intercept), s, gaps)


__all__ = [
    "PartitionError", "DegenerateFitError", "ReconstructionReport", "WeylSetData", "GapFit",
    "projector_error", "recover_from_weyl_function", "recover_from_weyl_set",
    "weyl_set_functions", "weyl_set_from_potential", "borg_marchenko_gap",
]
