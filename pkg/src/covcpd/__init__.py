"""Change-point detection for the covariance of zero-mean functional data."""

__version__ = "0.1.0"

from .covtensor import CovCoeffSeq, CurvePanel, demean_curves, lift_to_cov, preprocess, rescale_unit_norm
from .cusum import CusumCurve, candidate, cusum_curve
from .detector import DetectorConfig, SegmentTree, TestResult, binary_segment, detect_and_test
from .fbasis import BasisSpec, SymTensorBasis, build_sym_basis, fourier_eval, project_curve, project_curves
from .io import ingest, write_coefficients
from .longrun import EigenSpectrum, LongRunSpec, TruncationRule, eigenvalues, estimate_spectrum, lag_cov_matrix, longrun_matrix
from .nulldist import NullDistribution, critical_value, p_value, simulate_null
from .simlab import SimSetting, builtin_setting, drift_curve, generate_panel, localization_study, power_study
