"""Simulation settings and experiments.

Two groups of ``n_per_group`` independent curves are drawn in the delta-band block
``F_2 .. F_9`` with independent normal scores of standard deviations ``sigma1`` and
``sigma2``. Every curve also gets independent error scores with standard deviation
``sigma / d`` on the ``d``-th function, where ``sigma_sq_noise = sigma**2``. The
break is after curve ``n_per_group``, so ``theta* = 1/2``.

Seeds: replicate ``r`` of a configuration draws its data from
``SeedSequence(seed, spawn_key=(setting, noise, n_per_group, r))``. The null-law
seed is derived once per configuration, so all replicates of a configuration share
their Brownian bridges (and the bridge cache).
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .covtensor import CurvePanel, lift_to_cov
from .cusum import cusum_curve
from .detector import DetectorConfig, detect_and_test
from .errors import ArgumentError
from .fbasis import BasisSpec, evaluate_basis
from .longrun import LongRunSpec

__all__ = [
    "DELTA_BAND",
    "SIM_CONFIG",
    "SimSetting",
    "ExperimentReport",
    "LocalizationReport",
    "builtin_setting",
    "null_setting",
    "generate_panel",
    "generate_regimes",
    "synthetic_lfp",
    "discrepancy_norm2",
    "drift_curve",
    "replicate_seed",
    "null_seed_for",
    "power_study",
    "localization_study",
]

DELTA_BAND = BasisSpec(p=8, start=2)

# independent curves: lag-0 long-run estimator; lighter null resolution for batch runs
SIM_CONFIG = DetectorConfig(longrun=LongRunSpec(iid_mode=True), mc_reps=2000, grid_r=1000)

_ONE4 = np.ones(4)
_ONE2 = np.ones(2)
_BUILTIN = {
    1: (np.r_[_ONE4, 0.5 * _ONE4], np.r_[0.5 * _ONE4, _ONE4]),
    2: (np.r_[_ONE2, 0.5 * _ONE2, _ONE2, 0.5 * _ONE2], np.r_[0.5 * _ONE2, _ONE2, 0.5 * _ONE2, _ONE2]),
    # alternates within each (cos, sin) pair: same power per frequency, different phase
    3: (np.tile([1.0, 0.5], 4), np.tile([0.5, 1.0], 4)),
}


@dataclass(frozen=True, eq=False)
class SimSetting:
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma_sq_noise: float = 0.0
    n_per_group: int = 150
    basis: BasisSpec = DELTA_BAND
    setting_id: int = 0

    def __post_init__(self):
        s1 = np.asarray(self.sigma1, dtype=float)
        s2 = np.asarray(self.sigma2, dtype=float)
        if s1.shape != (self.basis.p,) or s2.shape != (self.basis.p,):
            raise ArgumentError(f"sigma vectors must have length {self.basis.p}")
        if np.any(s1 <= 0) or np.any(s2 <= 0):
            raise ArgumentError("standard deviations must be positive")
        if self.sigma_sq_noise < 0:
            raise ArgumentError("noise variance must be nonnegative")
        if self.n_per_group < 2:
            raise ArgumentError("need at least 2 curves per group")
        object.__setattr__(self, "sigma1", s1)
        object.__setattr__(self, "sigma2", s2)

    @property
    def n_total(self) -> int:
        return 2 * self.n_per_group

    @property
    def k_star(self) -> int:
        return self.n_per_group

    @property
    def noise_sd(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq_noise) / np.arange(1, self.basis.p + 1)

    def with_(self, **changes) -> "SimSetting":
        return replace(self, **changes)


def builtin_setting(setting_id: int, sigma_sq_noise: float = 0.0, n_per_group: int = 150) -> SimSetting:
    if setting_id not in _BUILTIN:
        raise ArgumentError(f"setting must be 1, 2 or 3, got {setting_id!r}")
    s1, s2 = _BUILTIN[setting_id]
    return SimSetting(s1.copy(), s2.copy(), sigma_sq_noise, n_per_group, setting_id=setting_id)


def null_setting(setting: SimSetting) -> SimSetting:
    """Same setting without a break (both groups use ``sigma1``)."""
    return setting.with_(sigma2=setting.sigma1.copy())


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_panel(setting: SimSetting, seed=0) -> CurvePanel:
    """Draw one two-group panel; the break sits after ``setting.k_star`` curves."""
    rng = _rng(seed)
    n, p = setting.n_per_group, setting.basis.p
    scores = rng.standard_normal((2 * n, p))
    scores[:n] *= setting.sigma1
    scores[n:] *= setting.sigma2
    # always drawn so the signal part does not depend on the noise level
    noise = rng.standard_normal((2 * n, p)) * setting.noise_sd
    return CurvePanel(scores + noise, setting.basis)


def generate_regimes(sigmas, lengths, sigma_sq_noise: float = 0.0,
                     basis: BasisSpec = DELTA_BAND, seed=0) -> tuple[CurvePanel, list[int]]:
    """Concatenate regimes with score sds ``sigmas[i]`` and lengths ``lengths[i]``.

    Returns the panel and the true change points (cumulative lengths).
    """
    if len(sigmas) != len(lengths) or not lengths:
        raise ArgumentError("need one length per regime")
    rng = _rng(seed)
    total = int(sum(lengths))
    scores = rng.standard_normal((total, basis.p))
    bounds = np.cumsum([0, *lengths])
    for sd, lo, hi in zip(sigmas, bounds[:-1], bounds[1:]):
        scores[lo:hi] *= np.asarray(sd, dtype=float)
    noise_sd = np.sqrt(sigma_sq_noise) / np.arange(1, basis.p + 1)
    scores += rng.standard_normal((total, basis.p)) * noise_sd
    return CurvePanel(scores, basis), [int(b) for b in bounds[1:-1]]


def synthetic_lfp(n_epochs: int = 600, n_points: int = 1000, break_at: int = 300,
                  seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Epoch-by-sample matrix mimicking delta-band field potentials around a break.

    Before ``break_at`` the 1-2 Hz components dominate; afterwards power moves to
    3-4 Hz and each epoch's amplitude fluctuates strongly (lognormal gain). This
    makes the raw epochs non-stationary in amplitude, while unit-norm rescaling
    leaves only the spectral-shape change. Faster (8-12 Hz) activity and white
    measurement noise are added on top.

    Returns
    -------
    t : ndarray, shape (n_points,)
    values : ndarray, shape (n_epochs, n_points)
    """
    rng = _rng(seed)
    t = np.arange(n_points) / n_points
    band = evaluate_basis(DELTA_BAND, t)
    pre = np.array([1.0, 1.0, 0.8, 0.8, 0.4, 0.4, 0.3, 0.3])
    post = np.array([0.4, 0.4, 0.6, 0.6, 1.0, 1.0, 0.8, 0.8])
    sd = np.where(np.arange(n_epochs)[:, None] < break_at, pre, post)
    scores = rng.standard_normal((n_epochs, 8)) * sd
    gain = np.where(np.arange(n_epochs) < break_at, 1.0, rng.lognormal(0.0, 0.6, n_epochs))
    fast = evaluate_basis(BasisSpec(p=10, start=16), t)
    values = (scores @ band.T) * gain[:, None]
    values += 0.3 * rng.standard_normal((n_epochs, 10)) @ fast.T
    values += 0.2 * rng.standard_normal((n_epochs, n_points))
    return t, values


def discrepancy_norm2(setting: SimSetting) -> float:
    """Squared L2 norm of the difference of the two group covariance kernels.

    With independent scores the covariances are diagonal in the tensor basis, with
    coefficient ``sigma_d**2`` on the pair ``(d, d)`` and Gram weight 1 there. The
    noise covariance is common to both groups and cancels.
    """
    return float(np.sum((setting.sigma1**2 - setting.sigma2**2) ** 2))


def drift_curve(setting: SimSetting, theta, theta_star: float = 0.5) -> np.ndarray:
    """Large-sample limit of ``T_N(theta) / N`` under the break model."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or np.any(theta >= 1):
        raise ArgumentError("theta must lie in (0, 1)")
    d2 = discrepancy_norm2(setting)
    left = theta * (1.0 - theta_star)
    right = (1.0 - theta) * theta_star
    return d2 * np.where(theta <= theta_star, left, right) ** 2


def _noise_key(sigma_sq: float) -> int:
    return int(round(sigma_sq * 1_000_000))


def replicate_seed(seed: int, setting: SimSetting, rep: int) -> np.random.SeedSequence:
    """Data seed of replicate ``rep`` of the configuration ``setting``."""
    key = (setting.setting_id, _noise_key(setting.sigma_sq_noise), setting.n_per_group, rep)
    return np.random.SeedSequence(seed, spawn_key=key)


def null_seed_for(seed: int, setting: SimSetting) -> int:
    """Null-law seed shared by every replicate of the configuration ``setting``."""
    key = (setting.setting_id, _noise_key(setting.sigma_sq_noise), setting.n_per_group, 2**32 - 1)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def _candidate_only(panel: CurvePanel) -> dict:
    curve = cusum_curve(lift_to_cov(panel))
    return {"k_hat": curve.argmax_k, "theta_hat": curve.theta_hat, "t_max": curve.t_max}


@dataclass
class ExperimentReport:
    """Per-configuration summaries plus tidy per-replicate records."""

    rows: list[dict]
    replicates: list[dict] = field(repr=False)
    seed: int
    alpha: float
    config: dict = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "alpha": self.alpha,
            "config": self.config,
            "rows": self.rows,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.replicates:
            writer = csv.DictWriter(buf, fieldnames=list(self.replicates[0]))
            writer.writeheader()
            writer.writerows(self.replicates)
        return buf.getvalue()

    def row(self, setting_id: int, sigma_sq: float, n_per_group: int) -> dict:
        for r in self.rows:
            if (r["setting"], r["sigma_sq"], r["n_per_group"]) == (setting_id, sigma_sq, n_per_group):
                return r
        raise KeyError((setting_id, sigma_sq, n_per_group))


def _as_settings(settings) -> list[SimSetting]:
    if isinstance(settings, (SimSetting, int)):
        settings = [settings]
    return [builtin_setting(s) if isinstance(s, int) else s for s in settings]


def power_study(
    settings,
    sigma_grid=(0.0, 3.0, 6.0, 9.0),
    n_grid=(150, 300),
    reps: int = 500,
    alpha: float = 0.05,
    seed: int = 0,
    config: DetectorConfig | None = None,
    run_test: bool = True,
    workers: int = 1,
) -> ExperimentReport:
    """Rejection rates and candidate quantiles over a grid of configurations.

    Parameters
    ----------
    settings : int, SimSetting or sequence of them
        Built-in setting ids or explicit settings; noise level and group size are
        overridden from ``sigma_grid`` and ``n_grid``.
    n_grid : sequence of int
        Curves per group (the sequence length is twice this).
    run_test : bool
        When false only the change-point candidate is computed (no calibration),
        and ``rejection_rate`` is reported as ``None``.
    """
    if reps < 1:
        raise ArgumentError("reps must be at least 1")
    base = replace(config or SIM_CONFIG, alpha=alpha)
    rows, records = [], []
    for setting in _as_settings(settings):
        for n in n_grid:
            for s2 in sigma_grid:
                cfg_setting = setting.with_(sigma_sq_noise=float(s2), n_per_group=int(n))
                cfg = replace(base, seed=null_seed_for(seed, cfg_setting))

                def one(rep, cfg_setting=cfg_setting, cfg=cfg):
                    panel = generate_panel(cfg_setting, replicate_seed(seed, cfg_setting, rep))
                    if not run_test:
                        return {**_candidate_only(panel), "crit": None, "p": None, "reject": None}
                    res = detect_and_test(panel, cfg)
                    return {"k_hat": res.k_hat, "theta_hat": res.theta_hat, "t_max": res.t_max,
                            "crit": res.crit, "p": res.p, "reject": res.reject}

                t0 = time.perf_counter()
                if workers > 1:
                    with ThreadPoolExecutor(workers) as pool:
                        outs = list(pool.map(one, range(reps)))
                else:
                    outs = [one(r) for r in range(reps)]
                elapsed = time.perf_counter() - t0
                theta = np.array([o["theta_hat"] for o in outs])
                q05, q50, q95 = np.quantile(theta, [0.05, 0.5, 0.95])
                rows.append({
                    "setting": cfg_setting.setting_id,
                    "sigma_sq": float(s2),
                    "n_per_group": int(n),
                    "n_total": cfg_setting.n_total,
                    "reps": reps,
                    "rejection_rate": float(np.mean([o["reject"] for o in outs])) if run_test else None,
                    "theta_q05": float(q05),
                    "theta_q50": float(q50),
                    "theta_q95": float(q95),
                    "null_seed": cfg.seed,
                    "runtime_s": elapsed,
                })
                for rep, o in enumerate(outs):
                    records.append({"setting": cfg_setting.setting_id, "sigma_sq": float(s2),
                                    "n_per_group": int(n), "rep": rep, **o})
    return ExperimentReport(rows=rows, replicates=records, seed=seed, alpha=alpha,
                            config=base.to_dict())


@dataclass
class LocalizationReport:
    """Signed localisation errors ``k_hat - k*`` for each total length."""

    errors: dict[int, np.ndarray] = field(repr=False)

    def iqr(self, n_total: int) -> float:
        q25, q75 = np.percentile(self.errors[n_total], [25, 75])
        return float(q75 - q25)

    def median(self, n_total: int) -> float:
        return float(np.median(self.errors[n_total]))

    def mean_abs_scaled(self, n_total: int) -> float:
        return float(np.mean(np.abs(self.errors[n_total])) / n_total)

    def summary(self) -> list[dict]:
        return [{"n_total": n, "iqr": self.iqr(n), "median": self.median(n),
                 "mean_abs_scaled_error": self.mean_abs_scaled(n)} for n in sorted(self.errors)]


def localization_study(setting: SimSetting | int, n_grid=(150, 300, 600), reps: int = 300,
                       seed: int = 0) -> LocalizationReport:
    """Distribution of ``k_hat - k*`` for each group size in ``n_grid``."""
    if reps < 1:
        raise ArgumentError("reps must be at least 1")
    (setting,) = _as_settings(setting)
    errors = {}
    for n in n_grid:
        s = setting.with_(n_per_group=int(n))
        errs = np.empty(reps, dtype=int)
        for rep in range(reps):
            panel = generate_panel(s, replicate_seed(seed, s, rep))
            errs[rep] = _candidate_only(panel)["k_hat"] - s.k_star
        errors[s.n_total] = errs
    return LocalizationReport(errors=errors)
