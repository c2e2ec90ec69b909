"""Noisy quantum program simulation and control-system timing."""

from .control import (PRESETS, ControlConfig, ExecutionStats, channel_sweep, load_control_config,
                      simulate, utilization_report)
from .cosim import cosimulate
from .montecarlo import (OutputDistribution, TraceSet, exact_noisy_oracle, fidelity, generate_traces,
                         run_bruteforce, run_optimized, savings)
from .noise import DeviceErrorModel, ErrorOperator, load_device_model, yorktown
from .qasm import Program, build_layers, decode_program, encode_program, load_program, parse_program
from .state import StateVector

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "ControlConfig", "DeviceErrorModel", "ErrorOperator", "ExecutionStats",
    "OutputDistribution", "Program", "StateVector", "TraceSet", "build_layers", "channel_sweep",
    "cosimulate", "decode_program", "encode_program", "exact_noisy_oracle", "fidelity",
    "generate_traces", "load_control_config", "load_device_model", "load_program",
    "parse_program", "run_bruteforce", "run_optimized", "savings", "simulate",
    "utilization_report", "yorktown",
]
