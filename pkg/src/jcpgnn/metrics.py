"""SINR, per-link rates, and the weighted sum-rate objective.

Rates are in bits/s/Hz (log base 2, no bandwidth scaling). The channel
matrix may be soft (row-stochastic, used while training) or hard one-hot;
soft entries scale both the useful signal and the interference a
transmitter causes, which keeps the objective differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netgen import NetworkInstance

ROW_SUM_TOL = 1e-9
POWER_TOL = 1e-9


class AllocationError(ValueError):
    """An allocation violates the problem constraints."""


@dataclass
class Allocation:
    """Channel matrix C (D x M) and power vector P (D); hard marks one-hot C."""

    channel: np.ndarray
    power: np.ndarray
    hard: bool = True


def validate_allocation(inst: NetworkInstance, alloc: Allocation) -> None:
    D, M = inst.d_pairs, inst.m_channels
    c, p = alloc.channel, alloc.power
    if c.shape != (D, M):
        raise AllocationError(f"channel shape {c.shape}, expected {(D, M)}")
    if p.shape != (D,):
        raise AllocationError(f"power shape {p.shape}, expected {(D,)}")
    if np.any(c < -ROW_SUM_TOL) or np.any(c > 1 + ROW_SUM_TOL):
        raise AllocationError("channel entries outside [0, 1]")
    row_sums = c.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
        bad = int(np.argmax(np.abs(row_sums - 1.0)))
        raise AllocationError(f"channel row {bad} sums to {row_sums[bad]!r}, expected 1")
    if alloc.hard and not np.all((c == 0.0) | (c == 1.0)):
        raise AllocationError("hard allocation must have exactly one-hot {0,1} rows")
    if np.any(p < -POWER_TOL) or np.any(p > inst.p_max * (1 + POWER_TOL)):
        raise AllocationError(f"power outside [0, p_max={inst.p_max}]")


def sinr(inst: NetworkInstance, alloc: Allocation, i: int, m: int) -> float:
    """Signal-to-interference-plus-noise ratio of receiver i on channel m."""
    g = inst.gains[:, :, m]
    q = alloc.power * alloc.channel[:, m]  # per-pair power on channel m
    signal = g[i, i] * q[i]
    interference = float(g[i, :] @ q) - signal
    return signal / (interference + inst.noise_power)


def rate(inst: NetworkInstance, alloc: Allocation, i: int, m: int) -> float:
    """Achievable rate log2(1 + SINR) of receiver i on channel m."""
    return float(np.log2(1.0 + sinr(inst, alloc, i, m)))


def rate_matrix(inst: NetworkInstance, alloc: Allocation) -> np.ndarray:
    """All D x M rates at once (vectorized form of `rate`)."""
    g = inst.gains
    D = inst.d_pairs
    q = alloc.channel * alloc.power[:, None]              # (D, M)
    total = np.einsum("ijm,jm->im", g, q)                 # received power incl. signal
    signal = g[np.arange(D), np.arange(D), :] * q
    interference = total - signal
    return np.log2(1.0 + signal / (interference + inst.noise_power))


def objective(inst: NetworkInstance, alloc: Allocation) -> float:
    """Weighted sum rate sum_m sum_i w_i R_i^m; validates the allocation."""
    validate_allocation(inst, alloc)
    return float(np.sum(inst.weights[:, None] * rate_matrix(inst, alloc)))
