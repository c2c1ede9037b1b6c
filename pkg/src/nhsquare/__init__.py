"""Square functions on non-homogeneous atomic measures: grids, martingales, quadrature, checks."""

from .measure import DiscreteMeasure, PowerLaw, Symmetrized, ball_mass, cantor, lebesgue_surrogate, point_cloud
from .dyadic import Cube, DyadicGrid, GridParams, ShiftSequence, TrackedGrid, goodness_probability
from .kernel import KernelSpec
from .martingale import AccretiveSystem, Decomposition, decompose
from .sqfn import QuadratureSpec, global_norm, region_integral
from .config import RunConfig, build_setup
from .verify import ExperimentReport, Setup, run_experiment

__version__ = "0.1.0"
