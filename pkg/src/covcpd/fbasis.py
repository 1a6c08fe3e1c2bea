"""Fourier basis on [0, 1], curve projection and the symmetric tensor basis.

Basis functions follow the usual numbering

    F_1(t) = 1,  F_{2k}(t) = sqrt(2) cos(2 pi k t),  F_{2k+1}(t) = sqrt(2) sin(2 pi k t),

and a :class:`BasisSpec` selects the contiguous block ``F_start, ..., F_{start+p-1}``.
The default ``start=1`` gives the first ``p`` functions; ``BasisSpec(p=8, start=2)``
is the delta-band block used by the simulation settings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, IllPosedProjectionError

__all__ = [
    "BasisSpec",
    "SymTensorBasis",
    "fourier_eval",
    "evaluate_basis",
    "project_curve",
    "project_curves",
    "build_sym_basis",
    "sym_basis_eval",
]

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class BasisSpec:
    """A contiguous block of ``p`` Fourier functions starting at ``F_start``."""

    p: int
    start: int = 1

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ArgumentError(f"p must be a positive integer, got {self.p!r}")
        if int(self.start) != self.start or self.start < 1:
            raise ArgumentError(f"start must be a positive integer, got {self.start!r}")

    @property
    def fourier_indices(self) -> np.ndarray:
        """Global Fourier indices ``start .. start+p-1`` of the selected functions."""
        return np.arange(self.start, self.start + self.p)

    @classmethod
    def band(cls, text: str) -> "BasisSpec":
        """Parse ``"START:LEN"`` (as used on the command line)."""
        try:
            start, length = (int(v) for v in text.split(":"))
        except ValueError:
            raise ArgumentError(f"band must look like START:LEN, got {text!r}") from None
        return cls(p=length, start=start)


def _fourier_global(f: int, t: np.ndarray) -> np.ndarray:
    if f == 1:
        return np.ones_like(t)
    k = f // 2
    if f % 2 == 0:
        return SQRT2 * np.cos(2.0 * np.pi * k * t)
    return SQRT2 * np.sin(2.0 * np.pi * k * t)


def _check_points(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ArgumentError("evaluation points must lie in [0, 1]")
    return t


def fourier_eval(spec: BasisSpec, i: int, t):
    """Evaluate the ``i``-th function (1-based, within ``spec``) at ``t``."""
    if int(i) != i or not 1 <= i <= spec.p:
        raise ArgumentError(f"basis index {i!r} outside 1..{spec.p}")
    t_arr = _check_points(t)
    out = _fourier_global(spec.start + int(i) - 1, t_arr)
    return float(out) if out.ndim == 0 else out


def evaluate_basis(spec: BasisSpec, t) -> np.ndarray:
    """Design matrix of shape ``(len(t), p)``."""
    t = np.atleast_1d(_check_points(t))
    return np.column_stack([_fourier_global(int(f), t) for f in spec.fourier_indices])


def project_curves(t, values, spec: BasisSpec) -> np.ndarray:
    """Least-squares coefficients for many curves sampled on a common grid.

    Parameters
    ----------
    t : array_like, shape (n_points,)
        Sampling points in [0, 1]. Need not be uniform.
    values : array_like, shape (n_curves, n_points) or (n_points,)
        Observed curve values, one curve per row.
    spec : BasisSpec

    Returns
    -------
    numpy.ndarray
        Coefficients of shape ``(n_curves, p)`` (or ``(p,)`` for a single curve).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    values = np.asarray(values, dtype=float)
    single = values.ndim == 1
    Y = values[None, :] if single else values
    if Y.shape[1] != t.size:
        raise ArgumentError(f"{Y.shape[1]} values per curve but {t.size} sample points")
    n_distinct = np.unique(t).size
    if n_distinct < spec.p:
        raise IllPosedProjectionError(
            f"{n_distinct} distinct sample points cannot determine {spec.p} coefficients"
        )
    design = evaluate_basis(spec, t)
    coef, _, rank, _ = np.linalg.lstsq(design, Y.T, rcond=None)
    if rank < spec.p:
        raise IllPosedProjectionError(
            f"design matrix has rank {rank} < p={spec.p} on this grid"
        )
    coef = coef.T
    return coef[0] if single else coef


def project_curve(t, y, spec: BasisSpec) -> np.ndarray:
    """Coefficient vector of one sampled curve; see :func:`project_curves`."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ArgumentError("project_curve expects a single curve")
    return project_curves(t, y, spec)


@dataclass(frozen=True, eq=False)
class SymTensorBasis:
    """Basis of symmetric two-way functions built from an orthonormal basis.

    Element ``j`` corresponds to the unordered pair ``(d1, d2)`` with ``d1 <= d2``:
    ``phi_d1(t) phi_d2(s) + phi_d2(t) phi_d1(s)`` when ``d1 < d2`` and
    ``phi_d(t) phi_d(s)`` on the diagonal. Pairs are ordered row-major over the
    upper triangle, i.e. ``(1,1), (1,2), ..., (1,p), (2,2), ...``.
    """

    p: int
    pairs: np.ndarray = field(repr=False)  # (J, 2), zero-based
    gram: np.ndarray = field(repr=False)  # (J, J)

    @property
    def J(self) -> int:
        return self.pairs.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        """Boolean mask of the pairs with ``d1 == d2``."""
        return self.pairs[:, 0] == self.pairs[:, 1]

    @property
    def index_map(self) -> list[tuple[int, int]]:
        """One-based ``(d1, d2)`` pairs in basis order."""
        return [(int(a) + 1, int(b) + 1) for a, b in self.pairs]

    def pair_index(self, d1: int, d2: int) -> int:
        """Zero-based position of the one-based unordered pair ``{d1, d2}``."""
        a, b = sorted((d1, d2))
        if not 1 <= a <= b <= self.p:
            raise ArgumentError(f"pair ({d1}, {d2}) outside 1..{self.p}")
        a -= 1
        b -= 1
        # row-major upper triangle offset
        return a * self.p - a * (a - 1) // 2 + (b - a)


def build_sym_basis(spec: BasisSpec) -> SymTensorBasis:
    rows, cols = np.triu_indices(spec.p)
    pairs = np.column_stack([rows, cols])
    weights = np.where(rows == cols, 1.0, 2.0)
    pairs.setflags(write=False)
    gram = np.diag(weights)
    gram.setflags(write=False)
    return SymTensorBasis(p=spec.p, pairs=pairs, gram=gram)


def sym_basis_eval(sym: SymTensorBasis, spec: BasisSpec, t, s) -> np.ndarray:
    """Values of every tensor basis element on the grid ``t x s``: shape ``(J, nt, ns)``."""
    Ft = evaluate_basis(spec, t)
    Fs = evaluate_basis(spec, s)
    a, b = sym.pairs[:, 0], sym.pairs[:, 1]
    out = np.einsum("ja,jb->jab", Ft[:, a].T, Fs[:, b].T)
    off = a != b
    out[off] += np.einsum("ja,jb->jab", Ft[:, b[off]].T, Fs[:, a[off]].T)
    return out
