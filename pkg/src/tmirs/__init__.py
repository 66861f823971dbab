"""Time-modulated IRS simulator with a trajectory-balance GFlowNet designer."""

from .config import Scenario, SystemConfig, TmIrsConfig, desk_config, random_config
from .errors import (ConfigError, CorruptCheckpoint, IllegalTransition, IncompleteState, InvalidArgument,
                     InvalidState, InvalidTrajectory, NoValidActions, NumericalAbort)
from .geometry import build_scenario, reference_scenario

__version__ = "0.1.0"

__all__ = ["Scenario", "SystemConfig", "TmIrsConfig", "desk_config", "random_config", "ConfigError",
           "CorruptCheckpoint", "IllegalTransition", "IncompleteState", "InvalidArgument", "InvalidState",
           "InvalidTrajectory", "NoValidActions", "NumericalAbort", "build_scenario", "reference_scenario"]
