"""Discrete-event simulator for MIH-driven vertical handover.

The package models a heterogeneous wireless environment (GSM, UMTS, WiFi,
WiMAX, LTE points of attachment), the MIH event/information/command services
that observe it, a handover decision stage with admission control and a
priority queue, and an execution stage with home-agent buffering.  Two modes
share everything except the buffering: `iam4vho` retains packets for the user
while its old link is unusable, `baseline` drops them until the new binding
is in place.
"""

from .engine import (
    MODES,
    MetricsReport,
    Simulator,
    collect_metrics,
    dump_trace,
    run_scenario,
)
from .errors import SimulationError, ValidationError
from .scenario import Scenario, StimulusSpec, TrafficSpec, load_scenario, scenario_from_dict

__version__ = "0.1.0"

__all__ = [
    "MODES",
    "MetricsReport",
    "Scenario",
    "SimulationError",
    "Simulator",
    "StimulusSpec",
    "TrafficSpec",
    "ValidationError",
    "__version__",
    "collect_metrics",
    "dump_trace",
    "load_scenario",
    "run_scenario",
    "scenario_from_dict",
]
