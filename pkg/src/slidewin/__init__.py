"""Sliding-window adversarial channels: capacity bounds, zero-error codes and
bounded-error state estimation."""

from .capacity import capacity_report, closed_form_c0f, dp_capacity, gain_graph, min_mean_cycle
from .channel import NSE, NSS, ChannelRuntime, ChannelSpec, ResourceCapError, enumerate_states
from .entropy import c0_lower_bound, count_outputs, output_counts, perron_frobenius
from .estimation import PlantSpec, classify_feasibility, necessity_certificate, run_estimation
from .oracle import Codebook, best_codebook, build_confusability, max_codebook, verify_zero_error

__version__ = "0.1.0"

__all__ = [
    "NSE",
    "NSS",
    "ChannelRuntime",
    "ChannelSpec",
    "Codebook",
    "PlantSpec",
    "ResourceCapError",
    "best_codebook",
    "build_confusability",
    "c0_lower_bound",
    "capacity_report",
    "classify_feasibility",
    "closed_form_c0f",
    "count_outputs",
    "dp_capacity",
    "enumerate_states",
    "gain_graph",
    "max_codebook",
    "min_mean_cycle",
    "necessity_certificate",
    "output_counts",
    "perron_frobenius",
    "run_estimation",
    "verify_zero_error",
]
