"""Agent activation laboratory: activation regimes and modes for agent-based models."""
from .engine import (
    ConfigurationError,
    ContractViolation,
    ModeSpec,
    Regime,
    RegimeSpec,
    Schedule,
    build_step_schedule,
    step,
    synchronous_step,
)
from .rng import RngStream

__version__ = "0.1.0"
