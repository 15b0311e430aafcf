"""Rydberg gate simulation with two-channel (Foerster) pair interactions."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ImperfectFoerster,
    ModelError,
    OneEigenstate,
    PreRWA,
    TwoEigenstate,
    condense_channels,
    imperfect_model,
    two_pi_mhz,
)
from .pulses import Schedule, arp_schedule, pi_2pi_pi_schedule, rank_two_schedule, to_schedule  # noqa: E402
from .propagate import PropagationOptions, propagate  # noqa: E402
from .metrics import GateReport, evaluate_gate, fidelity_upper_bound, gate_fidelity  # noqa: E402

__all__ = [
    "ImperfectFoerster",
    "ModelError",
    "OneEigenstate",
    "PreRWA",
    "TwoEigenstate",
    "condense_channels",
    "imperfect_model",
    "two_pi_mhz",
    "Schedule",
    "arp_schedule",
    "pi_2pi_pi_schedule",
    "rank_two_schedule",
    "to_schedule",
    "PropagationOptions",
    "propagate",
    "GateReport",
    "evaluate_gate",
    "fidelity_upper_bound",
    "gate_fidelity",
]
