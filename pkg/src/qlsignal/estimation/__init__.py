"""Probe-vehicle queue length estimators, overflow models and their evaluation."""

from .estimators import (
    IN_ARRIVALS, IN_OVERFLOW, NO_PROBE, OVERFLOW_MODELS, VARIANTS, EstimationConfig,
    OverflowInputs, ProbeSnapshot, RedQueue, estimate_lambda1, estimate_lambda2, estimate_p1,
    estimate_p2, estimate_queue, estimate_queue_no_overflow, estimate_queue_with_overflow,
    estimator_variance, expected_overflow, hyperparameters, overflow_inputs, overflow_terms,
    overflow_variance, probe_snapshot,
)
from .overflow import akcelik_overflow, rho_onset, steady_overflow, viti_overflow
