"""Curve panels and their lift to covariance-tensor coefficients.

A curve ``Y_i`` with coefficients ``y_i`` in an orthonormal basis gives the rank-one
surface ``X_i(t, s) = Y_i(t) Y_i(s)``. In the symmetric tensor basis its coefficients
are ``y_a * y_b`` on the pair ``(a, b)``, for ``a <= b``. The lift is exact, so no
truncation of the tensor basis is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, DegenerateCurveError
from .fbasis import BasisSpec, SymTensorBasis, build_sym_basis

__all__ = [
    "CurvePanel",
    "CovCoeffSeq",
    "lift_to_cov",
    "rescale_unit_norm",
    "demean_curves",
    "preprocess",
]


@dataclass(frozen=True, eq=False)
class CurvePanel:
    """``N`` curves stored as rows of basis coefficients."""

    coeffs: np.ndarray = field(repr=False)
    basis: BasisSpec
    demeaned: bool = False
    rescaled: bool = False

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim != 2:
            raise ArgumentError("coeffs must be a 2-D array (N curves x p coefficients)")
        if coeffs.shape[0] < 2:
            raise ArgumentError(f"a panel needs at least 2 curves, got {coeffs.shape[0]}")
        if coeffs.shape[1] != self.basis.p:
            raise ArgumentError(
                f"coeffs have {coeffs.shape[1]} columns but the basis has p={self.basis.p}"
            )
        bad = np.argwhere(~np.isfinite(coeffs))
        if bad.size:
            raise ArgumentError(f"non-finite coefficient at row {bad[0][0]}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @property
    def p(self) -> int:
        return self.coeffs.shape[1]

    def segment(self, start: int, stop: int) -> "CurvePanel":
        """Sub-panel of curves ``start .. stop-1``."""
        return replace(self, coeffs=self.coeffs[start:stop])


@dataclass(frozen=True, eq=False)
class CovCoeffSeq:
    """Coefficients ``C`` (``N x J``) of the lifted sequence and their column mean."""

    C: np.ndarray = field(repr=False)
    sym_basis: SymTensorBasis
    xbar: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def J(self) -> int:
        return self.C.shape[1]


def _column_mean(C: np.ndarray) -> np.ndarray:
    # shifting by the first row first keeps constant columns exactly constant
    ref = C[0]
    return ref + (C - ref).mean(axis=0)


def lift_to_cov(panel: CurvePanel) -> CovCoeffSeq:
    sym = build_sym_basis(panel.basis)
    Y = panel.coeffs
    C = Y[:, sym.pairs[:, 0]] * Y[:, sym.pairs[:, 1]]
    C.setflags(write=False)
    xbar = _column_mean(C)
    xbar.setflags(write=False)
    return CovCoeffSeq(C=C, sym_basis=sym, xbar=xbar)


def rescale_unit_norm(panel: CurvePanel) -> CurvePanel:
    """Divide every curve by its L2 norm (its Euclidean coefficient norm)."""
    norms = np.linalg.norm(panel.coeffs, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateCurveError(int(zero[0]))
    return replace(panel, coeffs=panel.coeffs / norms[:, None], rescaled=True)


def demean_curves(panel: CurvePanel) -> CurvePanel:
    """Subtract the sample mean curve from every curve."""
    centred = panel.coeffs - _column_mean(panel.coeffs)
    return replace(panel, coeffs=centred, demeaned=True)


def preprocess(panel: CurvePanel, demean: bool = False, rescale: bool = False) -> CurvePanel:
    """Apply the optional preprocessing steps: demean first, then rescale."""
    if demean:
        panel = demean_curves(panel)
    if rescale:
        panel = rescale_unit_norm(panel)
    return panel
