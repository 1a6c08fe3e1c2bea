"""Single change-point test and binary segmentation.

:func:`detect_and_test` runs the whole pipeline on one sequence: optional
preprocessing, the tensor lift, the CUSUM scan and its candidate, the long-run
spectrum of the whole sequence, the simulated null law and the decision.
:func:`binary_segment` applies it recursively, re-estimating everything on each
segment. Tests at different levels use the raw ``alpha``; no multiplicity
correction is applied.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .covtensor import CurvePanel, lift_to_cov, preprocess
from .cusum import CusumCurve, candidate, cusum_curve
from .errors import ArgumentError, SegmentTooShortError
from .longrun import EigenSpectrum, LongRunSpec, TruncationRule, estimate_spectrum
from .nulldist import critical_value, p_value, simulate_null

__all__ = [
    "DetectorConfig",
    "TestResult",
    "SegmentNode",
    "SegmentTree",
    "detect_and_test",
    "binary_segment",
]

STOP_NOT_SIGNIFICANT = "not significant"
STOP_TOO_SHORT = "too short"
STOP_DEPTH_CAP = "depth cap"


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = 0.05
    longrun: LongRunSpec = LongRunSpec()
    truncation: TruncationRule = TruncationRule()
    mc_reps: int = 5000
    grid_r: int = 1000
    seed: int = 0
    demean: bool = False
    rescale: bool = False
    min_segment: int = 30
    max_depth: int = 8
    workers: int = 1
    correction: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ArgumentError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.max_depth < 1:
            raise ArgumentError("max_depth must be at least 1")
        if self.mc_reps < 1 or self.grid_r < 2:
            raise ArgumentError("need mc_reps >= 1 and grid_r >= 2")
        if self.workers < 1:
            raise ArgumentError("workers must be at least 1")

    def check_basis(self, p: int) -> None:
        if self.min_segment < 2 * (p + 1):
            raise ArgumentError(
                f"min_segment={self.min_segment} is below 2*(p+1)={2 * (p + 1)} for p={p}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class TestResult:
    __test__ = False  # not a pytest class

    t_max: float
    k_hat: int
    theta_hat: float
    crit: float
    p: float
    reject: bool
    spectrum: EigenSpectrum = field(repr=False)
    n: int
    alpha: float
    bandwidth: int
    curve: CusumCurve | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "t_max": float(self.t_max),
            "k_hat": int(self.k_hat),
            "theta_hat": float(self.theta_hat),
            "crit": float(self.crit),
            "p": float(self.p),
            "reject": bool(self.reject),
            "alpha": float(self.alpha),
            "n": int(self.n),
            "bandwidth": int(self.bandwidth),
            "spectrum": self.spectrum.to_dict(),
        }


def detect_and_test(panel: CurvePanel, config: DetectorConfig = DetectorConfig()) -> TestResult:
    """Locate the most pronounced covariance break and test it.

    Raises
    ------
    SegmentTooShortError
        If the panel has fewer than ``config.min_segment`` curves.
    """
    config.check_basis(panel.p)
    if panel.n < config.min_segment:
        raise SegmentTooShortError(
            f"{panel.n} curves is below the minimum segment length {config.min_segment}"
        )
    panel = preprocess(panel, demean=config.demean, rescale=config.rescale)
    seq = lift_to_cov(panel)
    curve = cusum_curve(seq)
    k_hat, theta_hat, t_max = candidate(curve)

    spectrum = estimate_spectrum(seq, config.longrun, config.truncation)
    null = simulate_null(
        spectrum.kept,
        M=config.mc_reps,
        R=config.grid_r,
        seed=config.seed,
        workers=config.workers,
        correction=config.correction,
    )
    crit = critical_value(null, config.alpha)
    return TestResult(
        t_max=t_max,
        k_hat=k_hat,
        theta_hat=theta_hat,
        crit=crit,
        p=p_value(t_max, null),
        reject=bool(t_max > crit),
        spectrum=spectrum,
        n=panel.n,
        alpha=config.alpha,
        bandwidth=config.longrun.resolve_bandwidth(panel.n),
        curve=curve,
    )


@dataclass(frozen=True, eq=False)
class SegmentNode:
    """One tested (or skipped) segment ``[start, stop)`` in absolute indices."""

    start: int
    stop: int
    depth: int
    result: TestResult | None
    stop_reason: str | None
    split: int | None = None

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "stop": self.stop,
            "depth": self.depth,
            "split": self.split,
            "stop_reason": self.stop_reason,
            "result": None if self.result is None else self.result.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class SegmentTree:
    """Accepted change points plus every node in pre-order (left before right).

    A change point ``c`` means curves ``c-1`` and ``c`` (zero-based) lie on different
    sides of the break, i.e. ``c`` curves precede it.
    """

    change_points: list[int]
    nodes: list[SegmentNode]
    n: int
    alpha: float

    def to_dict(self) -> dict:
        return {
            "change_points": list(self.change_points),
            "n": self.n,
            "alpha": self.alpha,
            "multiplicity_correction": "none; every test uses the raw alpha",
            "nodes": [node.to_dict() for node in self.nodes],
        }


def binary_segment(panel: CurvePanel, config: DetectorConfig = DetectorConfig()) -> SegmentTree:
    config.check_basis(panel.p)
    nodes: list[SegmentNode] = []
    points: list[int] = []

    def visit(start: int, stop: int, depth: int) -> None:
        length = stop - start
        if length < config.min_segment:
            nodes.append(SegmentNode(start, stop, depth, None, STOP_TOO_SHORT))
            return
        if depth >= config.max_depth:
            nodes.append(SegmentNode(start, stop, depth, None, STOP_DEPTH_CAP))
            return
        result = detect_and_test(panel.segment(start, stop), config)
        if not result.reject:
            nodes.append(SegmentNode(start, stop, depth, result, STOP_NOT_SIGNIFICANT))
            return
        k = result.k_hat
        if k < config.min_segment or length - k < config.min_segment:
            # significant, but the split would leave a piece below min_segment
            nodes.append(SegmentNode(start, stop, depth, result, STOP_TOO_SHORT))
            return
        nodes.append(SegmentNode(start, stop, depth, result, None, split=start + k))
        points.append(start + k)
        visit(start, start + k, depth + 1)
        visit(start + k, stop, depth + 1)

    visit(0, panel.n, 0)
    return SegmentTree(change_points=sorted(points), nodes=nodes, n=panel.n, alpha=config.alpha)
