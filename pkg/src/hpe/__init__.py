"""Incompressible Euler vorticity in the half plane.

Method-of-images Biot-Savart summation (direct and treecode), semi-Lagrangian
transport, the Picard construction of solutions on short windows, and
runtime monitors for the a-priori estimates.
"""
from __future__ import annotations

from types import ModuleType as _ModuleType

__version__ = "0.1.0"

from .errors import (
    CalibrationFailure,
    ConfigError,
    DegenerateStencil,
    EmptyField,
    ExponentMismatch,
    HPEError,
    InsufficientResolution,
    InvalidConstant,
    NonConvergence,
    NumericAbort,
    SingularPair,
    TreeDepthExceeded,
    VelocityEvaluationFailure,
    ZeroDenominator,
)
from .kernel import (
    NO_REG,
    BlobRegularization,
    HalfPlanePoint,
    biot_savart_kernel,
    gradient_kernel,
    greens_function,
)
from .field import BlobSet, GridField, PlaneField, VortexBlob, lp_norm, sobolev_norm, holder_seminorm
from .summation import SummationConfig, build_tree, velocity_at, velocity_gradient_at
from .transport import (
    FlowMapState,
    TimeStepper,
    advance_flow,
    evolve_self_consistent,
    jacobian_determinant,
    solve_linear_transport,
)
from .picard import PicardConfig, PicardState, calibrate_C, choose_window, picard_iterate
from .diagnostics import DiagnosticsRecord, KatoBoundInputs, double_exp_bound_check, snapshot
from .config import ScenarioConfig, load_config, parse_config

__all__ = sorted(
    name for name, obj in list(globals().items())
    if not name.startswith("_") and not isinstance(obj, _ModuleType) and name != "annotations"
)
