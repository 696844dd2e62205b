"""Cycle-by-cycle expected overflow (residual) queue models."""

import math


def rho_onset(X: float) -> float:
    """Degree of saturation below which no overflow is expected; X in veh/cycle."""
    return 0.67 + X / 600.0


def steady_overflow(rho_hat: float, X: float) -> float:
    """Steady-state mean overflow 3(rho - rho_o) / (2(1 - rho)), for rho < 1."""
    if rho_hat >= 1.0:
        raise ValueError(f"steady overflow diverges for rho_hat >= 1 (got {rho_hat})")
    rho_o = rho_onset(X)
    if rho_hat <= rho_o:
        return 0.0
    return 3.0 * (rho_hat - rho_o) / (2.0 * (1.0 - rho_hat))


def akcelik_overflow(i: int, rho_hat: float, X: float, C: float = None,
                     as_printed: bool = False) -> float:
    """Expected overflow after ``i`` cycles, time-dependent form.

    (X i / 4) [(rho - 1) + sqrt((rho - 1)^2 + 12 (rho - rho_o) / (X i))],
    zero at or below rho_o. ``as_printed`` evaluates the variant without the
    additive (rho - 1) term and without clamping, which goes negative below
    saturation; it exists only to compare against that expression. ``C`` is
    accepted for signature symmetry and does not enter the formula.
    """
    if i < 1:
        raise ValueError("cycle index must be >= 1")
    if X <= 0:
        raise ValueError("X must be positive")
    if rho_hat < 0:
        raise ValueError("rho_hat must be non-negative")
    rho_o = rho_onset(X)
    xi = X * i
    root = math.sqrt(max(0.0, (rho_hat - 1.0) ** 2 + 12.0 * (rho_hat - rho_o) / xi))
    if as_printed:
        return xi * (rho_hat - 1.0) / 4.0 * root
    if rho_hat <= rho_o:
        return 0.0
    return max(0.0, xi / 4.0 * ((rho_hat - 1.0) + root))


def viti_overflow(i: int, rho_hat: float, X: float, C: float = None,
                  viti_beta: float = 0.1) -> float:
    """E(Q) (1 - exp(-beta i)), converging to the steady overflow as i grows."""
    if i < 0:
        raise ValueError("cycle index must be >= 0")
    if not 0.0 <= rho_hat < 1.0:
        raise ValueError(f"viti form needs 0 <= rho_hat < 1 (got {rho_hat}); use akcelik")
    return steady_overflow(rho_hat, X) * (1.0 - math.exp(-viti_beta * i))
