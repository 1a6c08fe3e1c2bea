"""Weighted CUSUM scan of the lifted covariance sequence.

For a split after curve ``k`` the weighted difference of the two sample covariances is

    Delta_k = sum_{i<=k} X_i - (k/N) sum_{i<=N} X_i,

and the scan statistic is ``T_N(k/N) = ||Delta_k||^2 / N``. In coefficient space
``Delta_k`` has coefficients ``v_k`` and its squared norm is ``v_k' W v_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .covtensor import CovCoeffSeq
from .errors import ArgumentError

__all__ = ["CusumCurve", "cusum_curve", "candidate", "KAHAN_THRESHOLD"]

# sequences longer than this use compensated cumulative sums
KAHAN_THRESHOLD = 10_000


@dataclass(frozen=True, eq=False)
class CusumCurve:
    """``values[k-1] = T_N(k/N)`` for ``k = 1 .. N-1``."""

    values: np.ndarray = field(repr=False)
    n: int
    argmax_k: int
    theta_hat: float

    @property
    def t_max(self) -> float:
        return float(self.values[self.argmax_k - 1])

    @property
    def theta(self) -> np.ndarray:
        return np.arange(1, self.n) / self.n


@njit(cache=True)
def _kahan_cumsum(Z):
    n, m = Z.shape
    out = np.empty((n, m))
    for j in range(m):
        s = 0.0
        c = 0.0
        for i in range(n):
            y = Z[i, j] - c
            t = s + y
            c = (t - s) - y
            s = t
            out[i, j] = s
    return out


def _partial_sums(Z: np.ndarray) -> np.ndarray:
    if Z.shape[0] > KAHAN_THRESHOLD:
        return _kahan_cumsum(np.ascontiguousarray(Z))
    return np.cumsum(Z, axis=0)


def _quad_form_rows(V: np.ndarray, gram: np.ndarray) -> np.ndarray:
    if np.count_nonzero(gram - np.diag(np.diagonal(gram))) == 0:
        return (V * V) @ np.diagonal(gram)
    return np.einsum("kj,jl,kl->k", V, gram, V)


def cusum_curve(seq: CovCoeffSeq) -> CusumCurve:
    n = seq.n
    if n < 2:
        raise ArgumentError("the CUSUM scan needs at least 2 observations")
    # centring does not change Delta_k and limits cancellation in the partial sums
    Z = seq.C - seq.xbar
    S = _partial_sums(Z)
    k = np.arange(1, n, dtype=float)[:, None]
    V = S[:-1] - (k / n) * S[-1]
    values = _quad_form_rows(V, seq.sym_basis.gram) / n
    np.maximum(values, 0.0, out=values)
    values.setflags(write=False)
    k_hat = int(np.argmax(values)) + 1
    return CusumCurve(values=values, n=n, argmax_k=k_hat, theta_hat=k_hat / n)


def candidate(curve: CusumCurve | np.ndarray) -> tuple[int, float, float]:
    """Smallest maximising split ``k_hat``, its fraction ``k_hat/N`` and ``T_N`` there.

    Accepts a :class:`CusumCurve` or a bare vector of scan values (``N = len + 1``).
    """
    if isinstance(curve, CusumCurve):
        values, n = curve.values, curve.n
    else:
        values = np.asarray(curve, dtype=float)
        n = values.size + 1
    if values.size == 0:
        raise ArgumentError("empty CUSUM curve")
    k_hat = int(np.argmax(values)) + 1  # first maximiser, i.e. the infimum rule
    return k_hat, k_hat / n, float(values[k_hat - 1])
