"""Estimator-style wrapper around the reconstruction pipelines."""
from __future__ import annotations

import numpy as np

from . import direct, inverse
from .core import GridSpec, PoleSet, PotentialField, ValidationError, normalize_rows


class NotFittedError(ValidationError):
    """The estimator was used before ``fit``."""


class WeylReconstructor:
    """Recover the rows ``beta_k`` on ``[0, l]`` from Weyl data.

    ``fit`` accepts either a sampled Weyl function (:class:`direct.WeylData`)
    or a Weyl set (:class:`inverse.WeylSetData`).  After fitting,
    ``potential_`` holds the recovered field and ``report_`` the diagnostics.
    """

    def __init__(self, poles: PoleSet, l: float = 1.0, n: int = 256, first_order: bool = True):
        self.poles = poles
        self.l = l
        self.n = n
        self.first_order = first_order

    def get_params(self, deep: bool = True) -> dict:
        return {"poles": self.poles, "l": self.l, "n": self.n, "first_order": self.first_order}

    def set_params(self, **params) -> "WeylReconstructor":
        valid = self.get_params()
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for WeylReconstructor")
            setattr(self, key, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"WeylReconstructor({args})"

    def _run(self, data, truth=None) -> inverse.ReconstructionReport:
        grid = GridSpec(self.l, self.n)
        if isinstance(data, direct.WeylData):
            return inverse.recover_from_weyl_function(data, self.poles, grid, truth, self.first_order)
        if isinstance(data, inverse.WeylSetData):
            return inverse.recover_from_weyl_set(data, self.poles, grid, truth, self.first_order)
        raise ValidationError(f"expected WeylData or WeylSetData, got {type(data).__name__}")

    def fit(self, data, truth: PotentialField | None = None) -> "WeylReconstructor":
        self.report_ = self._run(data, truth)
        self.potential_ = self.report_.potential
        return self

    def transform(self, data=None) -> PotentialField:
        """Recovered field for ``data``, or the fitted one when ``data`` is omitted."""
        if data is not None:
            return self._run(data).potential
        self._check_fitted()
        return self.potential_

    def fit_transform(self, data, truth: PotentialField | None = None) -> PotentialField:
        return self.fit(data, truth).potential_

    def predict(self, x=None) -> np.ndarray:
        """Rows at positions ``x`` (grid nodes when omitted), shape ``(m, len(x), 2)``.

        Off-node values are linear interpolants renormalized to unit length.
        """
        self._check_fitted()
        rows = self.potential_.rows
        if x is None:
            return np.array(rows)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nodes = self.potential_.x
        if x.min() < 0 or x.max() > nodes[-1] + 1e-12:
            raise ValidationError(f"positions must lie in [0, {nodes[-1]:g}]")
        out = np.empty((rows.shape[0], x.size, 2), dtype=complex)
        for k in range(rows.shape[0]):
            for c in range(2):
                out[k, :, c] = (np.interp(x, nodes, rows[k, :, c].real)
                                + 1j * np.interp(x, nodes, rows[k, :, c].imag))
        return normalize_rows(out, tol=0.0, renorm_tol=np.inf)

    def score(self, truth: PotentialField) -> float:
        """Negative projector error against ``truth`` (higher is better)."""
        self._check_fitted()
        return -inverse.projector_error(self.potential_, truth)

    def _check_fitted(self):
        if not hasattr(self, "potential_"):
            raise NotFittedError("call fit before using the reconstructor")


__all__ = ["WeylReconstructor", "NotFittedError"]
