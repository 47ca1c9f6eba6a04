"""Brownian motion on hyperbolic space and its metric perturbations.

Simulation of horizontal Brownian motion on the frame bundle, closed-form
hyperbolic oracles, estimators of linear drift and stochastic entropy, and
first-order variation formulas along metric curves.
"""

from . import estimators, frames, geometry, girsanov, hyperbolic, parallel, riccati, rng
from .estimators import EstimateReport
from .frames import PathBundle, develop, simulate_paths, tangent_flow
from .geometry import (ConformalCurve, AdditiveCurve, HyperbolicSpace, Euclidean, RadialBump,
                       scaling_curve, zero_mean_bump)
from .riccati import stable_tensor, div_geodesic_spray
from .rng import rng_stream

__version__ = "0.1.0"

__all__ = ["estimators", "frames", "geometry", "girsanov", "hyperbolic", "parallel", "riccati",
           "rng", "EstimateReport", "PathBundle", "develop", "simulate_paths", "tangent_flow",
           "ConformalCurve", "AdditiveCurve", "HyperbolicSpace", "Euclidean", "RadialBump",
           "scaling_curve", "zero_mean_bump", "stable_tensor", "div_geodesic_spray",
           "rng_stream"]
