"""First-order variation of drift and entropy along a metric curve."""

from .fields import CurveSum, upsilon, y_field, contraction_rate, curve_support, ray_hits_ball
from .formulas import (GreatTerms, EntropyDerivative, Window, window, default_window,
                       formula_great_terms, scaling_volume_term, entropy_derivative_symmetric,
                       c1_norm)
from .lambda_frame import (LambdaDerivative, frame_lambda_derivative, crn_endpoint_difference,
                           accumulator_check, ZField, z_field_binned)
from .flow import (CubicScaling, LinearScaling, VariationFlowState, picard_flow_F_s,
                   flow_girsanov_density, flow_start, reverse_path, half_plane_fields,
                   PicardDivergence)
from .ibp import GaussianWindow, Translated, IBPResult, ibp_check

__all__ = [n for n in dir() if not n.startswith("_")]
