"""Tracking a moving Hamming ball with single-trajectory and population EAs."""

__version__ = "0.1.0"

from .bits import Bitstring, hamming, in_ball, sample_at_distance
from .dynamics import MhbInstance, MhbParams, mhb_new, evaluate, target_at, is_optimal_at
from .operators import MutationOp, SelectionSpec, mutate, select, beta_closed_form, pressure_satisfied
from .algorithms import Trace, run_single, run_population
from .analysis import tracking_score, loss_events
from .stats import RngStream

__all__ = [
    "Bitstring",
    "hamming",
    "in_ball",
    "sample_at_distance",
    "MhbInstance",
    "MhbParams",
    "mhb_new",
    "evaluate",
    "target_at",
    "is_optimal_at",
    "MutationOp",
    "SelectionSpec",
    "mutate",
    "select",
    "beta_closed_form",
    "pressure_satisfied",
    "Trace",
    "run_single",
    "run_population",
    "tracking_score",
    "loss_events",
    "RngStream",
]
