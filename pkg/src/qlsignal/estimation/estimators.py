"""Probe-based end-of-red queue length estimators.

A snapshot carries what the connected vehicles reveal at the end of red:
the queue position ``l`` of the last probe, its join time ``t`` measured
from red onset, the number of probes ``m`` in the queue and the red
duration ``R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from ..errors import UndefinedInputError
from .overflow import akcelik_overflow, rho_onset, steady_overflow, viti_overflow

VARIANTS = ("est1", "est2", "est3")
OVERFLOW_MODELS = ("none", "akcelik", "viti")

IN_OVERFLOW = "last_probe_in_overflow"
IN_ARRIVALS = "last_probe_in_arrivals"
NO_PROBE = "no_probe"


@dataclass(frozen=True)
class ProbeSnapshot:
    """Probe observation at the end of one red interval.

    When the last probe was already waiting before red began (a residual
    vehicle), ``probe_in_residual`` is set, ``t`` is 0 and ``pre_red_wait``
    holds how long before red onset it joined.
    """

    l: int
    t: float
    m: int
    R: float
    cycle_index: int = 1
    true_n: Optional[int] = None
    approach: Optional[str] = None
    residual: int = 0
    probe_in_residual: bool = False
    pre_red_wait: float = 0.0

    def __post_init__(self):
        if not 0 <= self.m <= self.l:
            raise ValueError(f"need 0 <= m <= l, got m={self.m}, l={self.l}")
        if (self.l == 0) != (self.m == 0):
            raise ValueError("l == 0 exactly when m == 0")
        if self.l > 0 and not -1e-9 <= self.t <= self.R + 1e-9:
            raise ValueError(f"need 0 <= t <= R, got t={self.t}, R={self.R}")

    @property
    def membership(self) -> str:
        if self.l == 0:
            return NO_PROBE
        return IN_OVERFLOW if self.probe_in_residual else IN_ARRIVALS


@dataclass(frozen=True)
class RedQueue:
    """Queue contents at one end of red, for re-tagging at other penetrations.

    ``join_offsets`` are arrival times relative to red onset, in queue order
    (negative for residual vehicles).
    """

    cycle: int
    approach: str
    R: float
    vehicle_ids: tuple
    join_offsets: tuple

    @property
    def true_n(self) -> int:
        return len(self.vehicle_ids)


def probe_snapshot(queue_times, queue_probe, red_onset: float, R: float, cycle: int,
                   approach: Optional[str] = None, residual: int = 0) -> ProbeSnapshot:
    """Snapshot of a queue given arrival times and probe flags in queue order."""
    l = m = 0
    join = 0.0
    for pos, (a, is_probe) in enumerate(zip(queue_times, queue_probe), start=1):
        if is_probe:
            l, m, join = pos, m + 1, float(a)
    offset = join - red_onset
    in_residual = l > 0 and offset < 0
    return ProbeSnapshot(
        l=l, t=0.0 if (l == 0 or in_residual) else min(offset, R), m=m, R=R,
        cycle_index=cycle, true_n=len(queue_times), approach=approach, residual=residual,
        probe_in_residual=in_residual, pre_red_wait=-offset if in_residual else 0.0,
    )



@dataclass(frozen=True)
class EstimationConfig:
    """Estimator settings.

    ``p`` and ``lam`` (vehicles/s) are the known penetration and arrival
    rate for est1; for est2/est3 they act as prior values used only when
    the snapshot cannot identify its own hyper-parameters (no probe seen).
    ``X`` is capacity in vehicles per cycle and ``C`` the cycle length (s).
    """

    p: Optional[float] = None
    lam: Optional[float] = None
    X: float = 24.0
    C: float = 93.0
    variant: str = "est2"
    overflow_model: str = "none"
    viti_beta: float = 0.1
    cycle_index: Optional[int] = None
    akcelik_as_printed: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.overflow_model not in OVERFLOW_MODELS:
            raise ValueError(f"overflow_model must be one of {OVERFLOW_MODELS}")
        if not self.X > 0 or not self.C > 0:
            raise ValueError("X and C must be positive")
        if self.variant == "est1" and (self.p is None or self.lam is None):
            raise ValueError("est1 needs known p and lam")

    def with_prior(self, p, lam) -> "EstimationConfig":
        return replace(self, p=p, lam=lam)


@dataclass(frozen=True)
class OverflowInputs:
    membership: str
    t_prime: float = 0.0
    delta: float = 0.0
    theta_hat: float = 0.0
    p_hat: float = 0.0
    lambda_hat: float = 0.0


# -- hyper-parameters ------------------------------------------------------

def estimate_p1(m, l) -> float:
    if l <= 0:
        raise UndefinedInputError("p1 needs l > 0 (no probe observed)")
    return m / l


def estimate_p2(m, l, t, R) -> float:
    den = m * t + (l - m) * R
    if den <= 0:
        raise UndefinedInputError("p2 denominator m*t + (l-m)*R vanishes")
    return m * t / den


def estimate_lambda1(l, R) -> float:
    if R <= 0:
        raise UndefinedInputError("lambda1 needs R > 0")
    return l / R


def estimate_lambda2(m, l, t, R) -> float:
    if R <= 0:
        raise UndefinedInputError("lambda2 needs R > 0")
    if l > m:
        if t <= 0:
            raise UndefinedInputError("lambda2 needs t > 0 when l > m")
        return (l - m) / t + m / R
    return m / R


def hyperparameters(snapshot: ProbeSnapshot, config: EstimationConfig) -> tuple[float, float]:
    """(p_hat, lambda_hat) for the configured variant, falling back to the prior."""
    if config.variant == "est1":
        return config.p, config.lam
    try:
        if config.variant == "est2":
            return (estimate_p1(snapshot.m, snapshot.l),
                    estimate_lambda1(snapshot.l, snapshot.R))
        return (estimate_p2(snapshot.m, snapshot.l, snapshot.t, snapshot.R),
                estimate_lambda2(snapshot.m, snapshot.l, snapshot.t, snapshot.R))
    except UndefinedInputError:
        if config.p is None or config.lam is None:
            raise
        return config.p, config.lam


# -- no overflow -------------------------------------------------------------

def estimate_queue_no_overflow(snapshot: ProbeSnapshot, config: EstimationConfig) -> float:
    """Expected end-of-red queue when no residual queue is carried over.

    est1: l + (1-p) lam (R-t) with known p, lam
    est2: l + (l-m)(1 - t/R)
    est3: l + (1 - p2) lam2 (R - t)
    With no probe in the queue the unseen mean (1-p) lam R is returned,
    using the prior p and lam.
    """
    l, m, t, R = snapshot.l, snapshot.m, snapshot.t, snapshot.R
    if l == 0:
        if config.p is None or config.lam is None:
            raise UndefinedInputError("no probe in queue and no prior p, lam configured")
        return (1.0 - config.p) * config.lam * R
    if config.variant == "est1":
        return l + (1.0 - config.p) * config.lam * (R - t)
    if config.variant == "est2":
        if R <= 0:
            raise UndefinedInputError("est2 needs R > 0")
        return l + (l - m) * (1.0 - t / R)
    p2 = estimate_p2(m, l, t, R)
    lam2 = estimate_lambda2(m, l, t, R)
    return l + (1.0 - p2) * lam2 * (R - t)


# -- with overflow ------------------------------------------------------------

def expected_overflow(i: int, rho_hat: float, config: EstimationConfig) -> float:
    if config.overflow_model == "akcelik":
        return akcelik_overflow(i, rho_hat, config.X, config.C,
                                as_printed=config.akcelik_as_printed)
    if config.overflow_model == "viti":
        if rho_hat >= 1.0:
            # closed form diverges; the time-dependent form stays finite
            return akcelik_overflow(i, rho_hat, config.X, config.C)
        return viti_overflow(i, rho_hat, config.X, config.C, config.viti_beta)
    return 0.0


def overflow_inputs(snapshot: ProbeSnapshot, config: EstimationConfig) -> OverflowInputs:
    """Membership case and rates for the overflow estimator.

    The post-probe arrival rate is the unseen rate (1 - p_hat) * lambda_hat.
    ``delta`` is the time from the last probe joining to the end of red and
    ``t_prime`` places the residual probe's join time within the previous
    cycle, so that ``C - t_prime`` is its wait before red began.
    """
    membership = snapshot.membership
    if membership == NO_PROBE:
        if config.p is None or config.lam is None:
            raise UndefinedInputError("no probe in queue and no prior p, lam configured")
        p_hat, lam_hat = config.p, config.lam
    else:
        p_hat, lam_hat = hyperparameters(snapshot, config)
    theta = (1.0 - p_hat) * lam_hat
    if membership == IN_OVERFLOW:
        return OverflowInputs(membership, t_prime=config.C - snapshot.pre_red_wait,
                              theta_hat=theta, p_hat=p_hat, lambda_hat=lam_hat)
    if membership == IN_ARRIVALS:
        return OverflowInputs(membership, delta=snapshot.R - snapshot.t,
                              theta_hat=theta, p_hat=p_hat, lambda_hat=lam_hat)
    return OverflowInputs(membership, theta_hat=theta, p_hat=p_hat, lambda_hat=lam_hat)


def overflow_terms(snapshot: ProbeSnapshot, inputs: OverflowInputs,
                   config: EstimationConfig) -> tuple[float, float, float]:
    """The three indicator-weighted terms; exactly one can be nonzero."""
    l, R, theta = snapshot.l, snapshot.R, inputs.theta_hat
    in_q = inputs.membership == IN_OVERFLOW
    in_a = inputs.membership == IN_ARRIVALS
    none = inputs.membership == NO_PROBE
    term_q = l + theta * (config.C - inputs.t_prime) + theta * R if in_q else 0.0
    term_a = l + theta * inputs.delta if in_a else 0.0
    term_0 = 0.0
    if none:
        i = config.cycle_index if config.cycle_index is not None else max(snapshot.cycle_index, 1)
        rho_hat = inputs.lambda_hat * config.C / config.X
        term_0 = (1.0 - inputs.p_hat) * (expected_overflow(i, rho_hat, config) + theta * R)
    return term_q, term_a, term_0


def estimate_queue_with_overflow(snapshot: ProbeSnapshot, inputs: Optional[OverflowInputs],
                                 config: EstimationConfig) -> float:
    """Queue estimate that accounts for a residual queue from the previous green."""
    if inputs is None:
        inputs = overflow_inputs(snapshot, config)
    if inputs.membership != snapshot.membership:
        raise ValueError(f"inputs are for {inputs.membership}, snapshot is {snapshot.membership}")
    return max(0.0, sum(overflow_terms(snapshot, inputs, config)))


def estimate_queue(snapshot: ProbeSnapshot, config: EstimationConfig) -> float:
    """Dispatch on ``config.overflow_model``."""
    if config.overflow_model == "none":
        if snapshot.probe_in_residual:
            # join time precedes red; treat it as joining at red onset
            return estimate_queue_no_overflow(replace(snapshot, t=0.0), config)
        return estimate_queue_no_overflow(snapshot, config)
    return estimate_queue_with_overflow(snapshot, None, config)


# -- variance -------------------------------------------------------------------

def estimator_variance(probabilities, config: EstimationConfig, i: int, *, p_hat: float,
                       lambda_hat: float, R: float, mean_t_prime: float,
                       p_true: Optional[float] = None) -> float:
    """Cycle-to-cycle variance of the overflow estimator.

    ``probabilities`` are (P(last probe in overflow), P(last probe in new
    arrivals), P(no probe)). ``mean_t_prime`` stands in for E(T').
    """
    prob_q, prob_a, prob_0 = (float(x) for x in probabilities)
    if min(prob_q, prob_a, prob_0) < 0 or not math.isclose(prob_q + prob_a + prob_0, 1.0, abs_tol=1e-9):
        raise ValueError("membership probabilities must lie on the simplex")
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError("p_hat must lie in [0, 1]")
    theta = (1.0 - p_hat) * lambda_hat
    p = p_hat if p_true is None else p_true

    term_q = theta * (config.C - mean_t_prime) + theta * R
    if p_hat == 0.0:
        term_a = lambda_hat * R if p == 0.0 else math.inf
    else:
        term_a = (1.0 - p_hat) * (1.0 - math.exp(-p * lambda_hat * R)) / p_hat
    term_0 = 0.0
    if prob_0 > 0:
        term_0 = (1.0 - p_hat) * (overflow_variance(i, lambda_hat * config.C / config.X, p_hat, config)
                                  + theta * R)
    return prob_q * term_q + prob_a * term_a + prob_0 * term_0


def overflow_variance(i: int, rho_hat: float, p_hat: float, config: EstimationConfig) -> float:
    """Variance of the cycle-``i`` overflow queue.

    Uses the steady overflow mean E(Q) = 3(rho - rho_o) / (2(1 - rho)),
    zero at or below the onset threshold.
    """
    eq = steady_overflow(rho_hat, config.X) if rho_hat > rho_onset(config.X) else 0.0
    sigma_qe = eq * (rho_hat + (1.0 - rho_hat) / 0.15)
    decay = math.exp(-config.viti_beta * i)
    return (eq * (rho_hat + (1.0 - p_hat) / 0.15)
            + (math.sqrt(rho_hat * config.X * i) - sigma_qe) * decay) ** 2
