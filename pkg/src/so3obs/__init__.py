"""Attitude and gyro-bias estimation on SO(3) from weighted direction measurements."""

from .certificate import (
    GainCertificate,
    ProblemConstants,
    auto_gains,
    build_certificate,
    envelope,
    roa_check,
)
from .errors import So3ObsError
from .observer import MeasurementFrame, ObserverGains, ObserverState, integrate, step
from .refset import ReferenceDirection, ReferenceSet, SpectralBounds, g_matrix, spectral_bounds
from .scenario import ScenarioConfig, load_replay, paper_example, run, run_replay
from .so3 import exp_so3, hat, log_so3, project_to_so3, vee

__version__ = "0.1.0"
