"""Error exponents for linear constant-composition coding under
mismatched additive decoding metrics, the compensating-metric fixed
point that closes the gap, and a Monte-Carlo validator for the random
linear code ensemble.
"""

from .channel import (ConditionalDist, DecodingMetric, Dmc, InputDist,
                      TiltedMetric, entropy, load_channel_spec, map_metric,
                      ml_metric, mutual_information, posterior, tilt_metric,
                      weighted_kl)
from .errors import (AllZeroScoreError, ChannelSpecError, CodeMismatchError,
                     CompositionError, ConfigError, DegenerateMetricError,
                     DimensionTooLargeError, MetricSupportError,
                     NonConvergentError, NonPositiveIterateError,
                     SaturationError, SizeCapError)
from .exponents import (ExponentCurve, ExponentResult, RatePoint, er_cc_dual,
                        er_cc_primal, er_mismatch_dual,
                        er_mismatch_primal_oracle, map_capacity_gap,
                        sweep_curve)
from .optimal_metric import (FixedPoint, OptimalMetric, SaturationReport,
                             build_metric, optimize_metric, solve_fixed_point,
                             verify_saturation)
from .simulation import (CodeParams, IndependenceReport, Labeling,
                         LinearCodeInstance, SubcodeSelection, TrialReport,
                         UnionBoundReport, composition_counts, decode,
                         independence_probe, run_trials, sample_code,
                         select_subcode, union_bound_probe)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # channel
    "Dmc", "InputDist", "DecodingMetric", "TiltedMetric", "ConditionalDist",
    "entropy", "mutual_information", "weighted_kl", "map_metric", "ml_metric",
    "tilt_metric", "posterior", "load_channel_spec",
    # exponents
    "RatePoint", "ExponentResult", "ExponentCurve", "er_mismatch_dual",
    "er_cc_dual", "er_cc_primal", "er_mismatch_primal_oracle",
    "map_capacity_gap", "sweep_curve",
    # optimal metric
    "FixedPoint", "OptimalMetric", "SaturationReport", "solve_fixed_point",
    "build_metric", "optimize_metric", "verify_saturation",
    # simulation
    "CodeParams", "Labeling", "LinearCodeInstance", "SubcodeSelection",
    "TrialReport", "IndependenceReport", "UnionBoundReport", "sample_code",
    "composition_counts", "select_subcode", "decode", "run_trials",
    "independence_probe",
    "union_bound_probe",
    # errors
    "CodeMismatchError", "ConfigError", "ChannelSpecError",
    "DegenerateMetricError", "MetricSupportError", "CompositionError",
    "DimensionTooLargeError", "SizeCapError", "NonConvergentError",
    "NonPositiveIterateError", "SaturationError", "AllZeroScoreError",
]
