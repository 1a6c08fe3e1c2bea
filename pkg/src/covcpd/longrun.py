"""Lag-window long-run covariance of the lifted sequence and its eigenvalues.

Everything is computed in coefficient space. With ``Z`` the centred coefficient
matrix, the lag-``h`` covariance is ``Z[h:]' Z[:N-h] / (N-h)`` and the long-run
matrix is the kernel-weighted sum over ``|h| <= bandwidth``. Its eigenvalues as an
operator on symmetric two-way functions are those of ``W^1/2 Sigma W^1/2``, where
``W`` is the Gram matrix of the tensor basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .covtensor import CovCoeffSeq
from .errors import ArgumentError, BasisError, NumericalError
from .fbasis import SymTensorBasis

__all__ = [
    "KERNELS",
    "LongRunSpec",
    "TruncationRule",
    "EigenSpectrum",
    "default_bandwidth",
    "lag_cov_matrix",
    "longrun_matrix",
    "eigenvalues",
    "estimate_spectrum",
]


def _bartlett(u):
    u = np.abs(u)
    return np.where(u <= 1.0, 1.0 - u, 0.0)


def _parzen(u):
    u = np.abs(u)
    inner = 1.0 - 6.0 * u**2 + 6.0 * u**3
    outer = 2.0 * (1.0 - u) ** 3
    return np.where(u <= 0.5, inner, np.where(u <= 1.0, outer, 0.0))


def _truncated_flat(u):
    return np.where(np.abs(u) <= 1.0, 1.0, 0.0)


KERNELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "bartlett": _bartlett,
    "parzen": _parzen,
    "truncated-flat": _truncated_flat,
}


def default_bandwidth(n: int) -> int:
    """Smallest integer ``l`` with ``l**3 >= n``, i.e. ``ceil(n ** (1/3))``."""
    ell = max(int(round(n ** (1.0 / 3.0))) - 1, 0)
    while ell**3 < n:
        ell += 1
    return ell


@dataclass(frozen=True)
class LongRunSpec:
    """Kernel, bandwidth (``None`` = cube-root default) and the independent-data switch."""

    kernel: str = "bartlett"
    bandwidth: int | None = None
    iid_mode: bool = False

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ArgumentError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        if self.bandwidth is not None and (int(self.bandwidth) != self.bandwidth or self.bandwidth < 0):
            raise ArgumentError(f"bandwidth must be a nonnegative integer, got {self.bandwidth!r}")

    def weight(self, u):
        return KERNELS[self.kernel](np.asarray(u, dtype=float))

    def resolve_bandwidth(self, n: int) -> int:
        if self.iid_mode:
            return 0
        ell = default_bandwidth(n) if self.bandwidth is None else int(self.bandwidth)
        if ell >= n:
            raise ArgumentError(f"bandwidth {ell} must be smaller than the sequence length {n}")
        return ell


@dataclass(frozen=True)
class TruncationRule:
    """Keep leading eigenvalues above ``rel_floor * rho_1`` until ``mass`` is reached."""

    rel_floor: float = 1e-6
    mass: float = 0.9999

    def __post_init__(self):
        if not 0.0 <= self.rel_floor < 1.0:
            raise ArgumentError("rel_floor must lie in [0, 1)")
        if not 0.0 < self.mass <= 1.0:
            raise ArgumentError("mass must lie in (0, 1]")

    def count(self, rho: np.ndarray) -> int:
        """Number of leading entries of the sorted, clipped spectrum to keep."""
        if rho.size == 0 or rho[0] <= 0.0:
            return 0
        n_floor = int(np.count_nonzero(rho >= self.rel_floor * rho[0]))
        frac = np.cumsum(rho) / rho.sum()
        n_mass = int(np.searchsorted(frac, self.mass * (1.0 - 1e-12))) + 1
        return min(n_floor, n_mass, rho.size)


@dataclass(frozen=True, eq=False)
class EigenSpectrum:
    """Estimated spectrum of the long-run covariance operator.

    ``rho`` holds all ``J`` clipped eigenvalues in nonincreasing order; the first
    ``D_kept`` of them (:attr:`kept`) enter the null distribution. ``rho_raw`` keeps
    the values before clipping.
    """

    rho: np.ndarray = field(repr=False)
    D_kept: int
    rule: TruncationRule
    rho_raw: np.ndarray = field(repr=False)
    eigvecs_b: np.ndarray | None = field(default=None, repr=False)

    @property
    def kept(self) -> np.ndarray:
        return self.rho[: self.D_kept]

    def to_dict(self) -> dict:
        return {
            "rho": [float(v) for v in self.kept],
            "D_kept": int(self.D_kept),
            "J": int(self.rho.size),
            "truncation_rule": {"rel_floor": self.rule.rel_floor, "mass": self.rule.mass},
        }


def _centred(seq: CovCoeffSeq) -> np.ndarray:
    return seq.C - seq.xbar


def _lag(Z: np.ndarray, h: int) -> np.ndarray:
    n = Z.shape[0]
    return Z[h:].T @ Z[: n - h] / (n - h)


def lag_cov_matrix(seq: CovCoeffSeq, h: int) -> np.ndarray:
    """Coefficient-space lag-``h`` autocovariance; negative lags are transposes."""
    h = int(h)
    if abs(h) >= seq.n:
        raise ArgumentError(f"lag {h} needs |h| < N = {seq.n}")
    G = _lag(_centred(seq), abs(h))
    return G.T.copy() if h < 0 else G


def longrun_matrix(seq: CovCoeffSeq, spec: LongRunSpec = LongRunSpec()) -> np.ndarray:
    Z = _centred(seq)
    sigma = _lag(Z, 0)
    ell = spec.resolve_bandwidth(seq.n)
    for h in range(1, ell + 1):
        w = float(spec.weight(h / ell))
        if w == 0.0:
            continue
        G = _lag(Z, h)
        sigma = sigma + w * (G + G.T)
    return sigma


def _gram_sqrt(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gram = np.asarray(gram, dtype=float)
    offdiag = gram - np.diag(np.diagonal(gram))
    if not np.any(offdiag):
        d = np.diagonal(gram)
        if np.any(d <= 0.0):
            raise BasisError("Gram matrix is not positive definite")
        return np.diag(np.sqrt(d)), np.diag(1.0 / np.sqrt(d))
    lam, Q = np.linalg.eigh((gram + gram.T) / 2.0)
    if lam[0] <= 0.0:
        raise BasisError("Gram matrix is not positive definite")
    return (Q * np.sqrt(lam)) @ Q.T, (Q / np.sqrt(lam)) @ Q.T


def eigenvalues(
    sigma_c: np.ndarray,
    sym_basis: SymTensorBasis | np.ndarray,
    rule: TruncationRule = TruncationRule(),
    vectors: bool = False,
) -> EigenSpectrum:
    """Solve ``W^1/2 Sigma W^1/2 u = rho u`` and truncate the spectrum.

    ``sym_basis`` may also be a bare Gram matrix. With ``vectors=True`` the
    eigenfunction coefficients ``b = W^-1/2 u`` of the kept components are returned;
    they are ``W``-orthonormal.
    """
    sigma_c = np.asarray(sigma_c, dtype=float)
    if not np.all(np.isfinite(sigma_c)):
        raise NumericalError("long-run covariance matrix has non-finite entries")
    gram = sym_basis.gram if isinstance(sym_basis, SymTensorBasis) else sym_basis
    half, half_inv = _gram_sqrt(gram)
    sym = (sigma_c + sigma_c.T) / 2.0
    M = half @ sym @ half
    M = (M + M.T) / 2.0
    if vectors:
        vals, U = np.linalg.eigh(M)
    else:
        vals, U = np.linalg.eigvalsh(M), None
    order = np.argsort(vals, kind="stable")[::-1]
    raw = vals[order]
    rho = np.clip(raw, 0.0, None)
    D = rule.count(rho)
    b = None
    if vectors:
        b = half_inv @ U[:, order[:D]]
    return EigenSpectrum(rho=rho, D_kept=D, rule=rule, rho_raw=raw, eigvecs_b=b)


def estimate_spectrum(
    seq: CovCoeffSeq,
    spec: LongRunSpec = LongRunSpec(),
    rule: TruncationRule = TruncationRule(),
    vectors: bool = False,
) -> EigenSpectrum:
    """Long-run matrix of the whole sequence followed by :func:`eigenvalues`."""
    return eigenvalues(longrun_matrix(seq, spec), seq.sym_basis, rule, vectors=vectors)
