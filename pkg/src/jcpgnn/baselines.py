"""Classical solvers: WMMSE power control, exhaustive channel search,
round-robin, closest-split, and a random lower bound.

WMMSE runs the scalar weighted-MMSE iterations per channel, independently
over the pairs assigned to that channel (channels are orthogonal, so the
problems decouple). With amplitudes h = sqrt(gain):

    u_i = h_ii v_i / (sigma^2 + sum_j h_ij^2 v_j^2)
    t_i = 1 / (1 - u_i h_ii v_i)
    v_i = clamp( w_i t_i u_i h_ii / sum_j w_j t_j u_j^2 h_ji^2, 0, sqrt(p_max) )

until the relative objective change drops below tol. Each block update is
the exact coordinate-separable minimizer, so the weighted sum rate is
nondecreasing across iterations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .metrics import Allocation, objective
from .netgen import NetworkInstance


class ExhaustiveGuardError(ValueError):
    """The assignment count exceeds the enumeration guard."""


@dataclass(frozen=True)
class WmmseConfig:
    max_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1 or self.tol <= 0:
            raise ValueError("max_iters must be >= 1 and tol > 0")


def _wmmse_group(g, w, sigma2, p_max, cfg):
    """Solve one channel group; returns (powers, per-iteration objectives).

    With u and t freshly updated for the current v, the MSE of pair i is
    1/(1 + SINR_i), so t_i = 1 + SINR_i and the weighted sum rate is
    w @ log2(t) -- no separate objective pass needed."""
    h = np.sqrt(g)
    hd = np.diag(h).copy()
    sp = np.sqrt(p_max)
    v = np.full(len(w), sp)
    u = hd * v / (g @ (v * v) + sigma2)
    t = 1.0 / (1.0 - u * hd * v)
    hist = [float(w @ np.log2(t))]
    for _ in range(cfg.max_iters):
        denom = (w * t * u * u) @ g  # sum_j w_j t_j u_j^2 h_ji^2
        v = np.minimum(np.maximum(w * t * u * hd / denom, 0.0), sp)
        u = hd * v / (g @ (v * v) + sigma2)
        t = 1.0 / (1.0 - u * hd * v)
        obj = float(w @ np.log2(t))
        hist.append(obj)
        if abs(obj - hist[-2]) <= cfg.tol * max(abs(hist[-2]), 1e-12):
            break
    return v * v, hist


def _channel_members(fixed_c: np.ndarray):
    fixed_c = np.asarray(fixed_c, dtype=np.float64)
    if not np.all((fixed_c == 0.0) | (fixed_c == 1.0)) or not np.all(fixed_c.sum(axis=1) == 1.0):
        raise ValueError("fixed_c must be a one-hot channel matrix")
    return [np.flatnonzero(fixed_c[:, m] == 1.0) for m in range(fixed_c.shape[1])]


def wmmse_power(inst: NetworkInstance, fixed_c: np.ndarray, cfg: WmmseConfig | None = None,
                return_history: bool = False):
    """WMMSE powers for a fixed one-hot channel assignment.

    With return_history, also returns the per-channel objective
    trajectories (one list per nonempty channel group)."""
    cfg = cfg or WmmseConfig()
    members = _channel_members(fixed_c)
    p = np.zeros(inst.d_pairs)
    histories = []
    for m, mem in enumerate(members):
        if mem.size == 0:
            continue
        g = inst.gains[np.ix_(mem, mem, [m])][:, :, 0]
        p_m, hist = _wmmse_group(g, inst.weights[mem], inst.noise_power, inst.p_max, cfg)
        p[mem] = p_m
        histories.append(hist)
    if return_history:
        return p, histories
    return p


def exhaustive(inst: NetworkInstance, cfg: WmmseConfig | None = None,
               guard_max_assignments: int = 2 ** 20) -> Allocation:
    """Enumerate every one-hot channel matrix, run WMMSE on each, keep the
    best objective. Ties resolve to the earliest assignment enumerated
    (pair 0 most significant, channel indices ascending)."""
    cfg = cfg or WmmseConfig()
    D, M = inst.d_pairs, inst.m_channels
    n_assignments = M ** D
    if n_assignments > guard_max_assignments:
        raise ExhaustiveGuardError(
            f"M^D = {n_assignments} assignments exceed the guard of {guard_max_assignments}"
        )

    gains_by_channel = [inst.gains[:, :, m] for m in range(M)]
    group_cache: dict[tuple[int, tuple[int, ...]], tuple[np.ndarray, float]] = {}

    best_obj = -np.inf
    best_assign = None
    best_p = None
    for assign in itertools.product(range(M), repeat=D):
        p = np.zeros(D)
        for m in range(M):
            mem = tuple(i for i in range(D) if assign[i] == m)
            if not mem:
                continue
            key = (m, mem)
            cached = group_cache.get(key)
            if cached is None:
                idx = np.array(mem)
                g = gains_by_channel[m][np.ix_(idx, idx)]
                p_m, hist = _wmmse_group(g, inst.weights[idx], inst.noise_power, inst.p_max, cfg)
                cached = (p_m, hist[-1])
                group_cache[key] = cached
            p[list(mem)] = cached[0]
        c = np.zeros((D, M))
        c[np.arange(D), assign] = 1.0
        obj = objective(inst, Allocation(channel=c, power=p, hard=True))
        if obj > best_obj:
            best_obj = obj
            best_assign = assign
            best_p = p
    c = np.zeros((D, M))
    c[np.arange(D), best_assign] = 1.0
    return Allocation(channel=c, power=best_p, hard=True)


def round_robin(d_pairs: int, m_channels: int) -> np.ndarray:
    """Pair i -> channel i mod M, as a one-hot matrix."""
    c = np.zeros((d_pairs, m_channels))
    c[np.arange(d_pairs), np.arange(d_pairs) % m_channels] = 1.0
    return c


def closest_split(inst: NetworkInstance, m_channels: int) -> np.ndarray:
    """Spread mutually close pairs across channels.

    Farthest-first greedy on pair midpoints: pairs are processed from the
    most crowded (smallest distance to any other pair) outward, and each
    joins the channel maximizing its minimum distance to the pairs already
    there (empty channels count as infinitely far). Deterministic; ties
    resolve to the lowest channel index."""
    D = inst.d_pairs
    mid = (inst.tx_pos + inst.rx_pos) / 2.0
    c = np.zeros((D, m_channels))
    if D == 1:
        c[0, 0] = 1.0
        return c
    dist = np.linalg.norm(mid[:, None, :] - mid[None, :, :], axis=2)
    np.fill_diagonal(dist, np.inf)
    nn_dist = dist.min(axis=1)
    order = np.lexsort((np.arange(D), nn_dist))  # crowded first, index breaks ties
    channel_members: list[list[int]] = [[] for _ in range(m_channels)]
    for i in order:
        scores = np.array([
            min(dist[i, j] for j in mem) if mem else np.inf
            for mem in channel_members
        ])
        ch = int(np.argmax(scores))
        channel_members[ch].append(int(i))
        c[i, ch] = 1.0
    return c


def random_alloc(d_pairs: int, m_channels: int, seed: int, p_max: float = 1.0) -> Allocation:
    """Uniform random channel per pair at full power (sanity lower bound)."""
    rng = np.random.default_rng(seed)
    c = np.zeros((d_pairs, m_channels))
    c[np.arange(d_pairs), rng.integers(0, m_channels, size=d_pairs)] = 1.0
    return Allocation(channel=c, power=np.full(d_pairs, p_max), hard=True)
