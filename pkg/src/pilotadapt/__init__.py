"""Adaptive pilot spacing and power for CA-OFDM link-level simulation."""

from .adapt import (
    ChannelProfileCodebook,
    SearchSpace,
    default_codebook,
    load_codebook,
    match_codebook,
    optimize_config,
)
from .channel import PowerDelayProfile, ScenarioTimeline, generate_channel, jakes_correlation
from .grid import OfdmNumerology, PilotConfig, build_pattern, power_allocation, spectrum_utilization
from .kernels import BACKEND
from .mse import MseContext, mse_breakdown, mse_data
from .sim import SimulationRun, Strategy, run_ca, run_closed_loop, run_mse_validation

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChannelProfileCodebook",
    "MseContext",
    "OfdmNumerology",
    "PilotConfig",
    "PowerDelayProfile",
    "ScenarioTimeline",
    "SearchSpace",
    "SimulationRun",
    "Strategy",
    "build_pattern",
    "default_codebook",
    "generate_channel",
    "jakes_correlation",
    "load_codebook",
    "match_codebook",
    "mse_breakdown",
    "mse_data",
    "optimize_config",
    "power_allocation",
    "run_ca",
    "run_closed_loop",
    "run_mse_validation",
    "spectrum_utilization",
]
