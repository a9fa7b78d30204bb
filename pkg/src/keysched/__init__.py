"""Key-budgeted message scheduling simulator for aggregator-terminal fleets.

A deterministic slotted simulator in which encrypted message service is
gated by a stochastic key supply. Ships the key-aware quota/priority
scheduler, three baselines, a dispatch-execution power loop, and the
batch/report tooling around them.
"""

from .config import RunConfig, ScanSpec, build_config, load_config
from .core import (
    CLASS_ORDER,
    CRITICAL_CLASSES,
    ClassSpec,
    ClockConfig,
    ConfigError,
    InvariantViolation,
    KeyPool,
    SlotLedger,
    TrafficClass,
    derive_tau,
    step_inventory,
    step_queue,
)
from .engine import RunResult, SimulationRun, run_batch, run_scenario
from .metrics import RunSummary
from .scheduler import Method, MethodKind

__version__ = "0.1.0"

__all__ = [
    "CLASS_ORDER",
    "CRITICAL_CLASSES",
    "ClassSpec",
    "ClockConfig",
    "ConfigError",
    "InvariantViolation",
    "KeyPool",
    "Method",
    "MethodKind",
    "RunConfig",
    "RunResult",
    "RunSummary",
    "ScanSpec",
    "SimulationRun",
    "SlotLedger",
    "TrafficClass",
    "build_config",
    "derive_tau",
    "load_config",
    "run_batch",
    "run_scenario",
    "step_inventory",
    "step_queue",
]
