"""Random interference-network instances: geometry, fading, datasets on disk.

A network instance is D transmitter-receiver pairs dropped in a square area,
sharing M orthogonal channels. The quantity downstream code consumes is the
D x D x M tensor of linear power gains ``gains[i, j, m] = |h_ij^m|^2``
(receiver i, transmitter j, channel m), drawn from a log-distance path loss
with optional Rayleigh (unit-mean exponential) power fading, i.i.d. across
channels.

Everything is a pure function of (configs, seed): repeated calls are
bit-identical. Datasets serialize to JSON Lines (gzipped when the path ends
in ``.gz``) and round-trip exactly, since floats are written with full repr
precision.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

DATASET_FORMAT_VERSION = 1

# Receiver placement re-draws (distance, angle) until the receiver lands
# inside the area; give up after this many attempts.
PLACEMENT_RETRIES = 100

# Cross-link tx->rx distances can get arbitrarily small; clamp so the
# path-loss law stays finite.
MIN_LINK_DISTANCE_M = 1e-3


class PlacementError(RuntimeError):
    """Receiver placement exceeded its retry budget (degenerate geometry)."""


class DatasetFormatError(ValueError):
    """A dataset file is malformed; the message names the offending line."""


@dataclass(frozen=True)
class GeometryConfig:
    """Pair count, channel count, and placement bounds."""

    d_pairs: int
    m_channels: int
    area_side: float = 100.0
    rx_dist_min: float = 2.0
    rx_dist_max: float = 10.0

    def __post_init__(self):
        if self.d_pairs < 1 or self.m_channels < 1:
            raise ValueError(f"d_pairs and m_channels must be >= 1, got {self.d_pairs}, {self.m_channels}")
        if not (0 < self.rx_dist_min <= self.rx_dist_max < self.area_side):
            raise ValueError(
                f"need 0 < rx_dist_min <= rx_dist_max < area_side, got "
                f"{self.rx_dist_min}, {self.rx_dist_max}, {self.area_side}"
            )


@dataclass(frozen=True)
class FadingConfig:
    """Path-loss law PL(d)[dB] = intercept + slope * log10(d[m]), plus noise
    power, power budget, and the Rayleigh toggle."""

    pathloss_intercept_db: float = 38.46
    pathloss_exponent_db_per_decade: float = 20.0
    noise_power: float = 1e-10
    p_max: float = 1.0
    rayleigh: bool = True

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError(f"noise_power must be > 0, got {self.noise_power}")
        if self.p_max <= 0:
            raise ValueError(f"p_max must be > 0, got {self.p_max}")


def pathloss_gain(fading: FadingConfig, dist):
    """Linear power gain 10^(-PL(d)/10) of the deterministic path loss."""
    d = np.maximum(np.asarray(dist, dtype=np.float64), MIN_LINK_DISTANCE_M)
    pl_db = fading.pathloss_intercept_db + fading.pathloss_exponent_db_per_decade * np.log10(d)
    return 10.0 ** (-pl_db / 10.0)


@dataclass
class NetworkInstance:
    """One channel realization of a D-pair, M-channel network.

    ``gains[i, j, m]`` is the linear power gain from transmitter j to
    receiver i on channel m. Noise power and the power budget are copied
    from the fading config so metric evaluation needs no extra context.
    """

    d_pairs: int
    m_channels: int
    tx_pos: np.ndarray  # (D, 2) meters
    rx_pos: np.ndarray  # (D, 2) meters
    gains: np.ndarray   # (D, D, M) linear watts/watt
    weights: np.ndarray  # (D,) positive
    noise_power: float
    p_max: float
    seed: int

    def validate(self) -> None:
        D, M = self.d_pairs, self.m_channels
        if self.gains.shape != (D, D, M):
            raise ValueError(f"gains shape {self.gains.shape}, expected {(D, D, M)}")
        if self.tx_pos.shape != (D, 2) or self.rx_pos.shape != (D, 2):
            raise ValueError("tx_pos/rx_pos must be (D, 2)")
        if self.weights.shape != (D,) or np.any(self.weights <= 0):
            raise ValueError("weights must be (D,) and positive")
        if np.any(self.gains < 0):
            raise ValueError("gains must be nonnegative")


def derive_seed(*parts) -> int:
    """Portable stream derivation: a 64-bit seed from hashed parts.

    Used for per-instance seeds (master_seed, index) and any other derived
    random stream, so regenerating never depends on Python's hash()."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sample_instance(geometry: GeometryConfig, fading: FadingConfig, seed: int) -> NetworkInstance:
    """Draw one network instance.

    Transmitters are uniform in the square. Each receiver sits at a uniform
    distance U[rx_dist_min, rx_dist_max] and uniform angle from its
    transmitter; out-of-area draws are rejected and re-drawn. Gains combine
    the path loss with unit-mean exponential fading per (i, j, m) when
    ``rayleigh`` is set.
    """
    rng = np.random.default_rng(seed)
    D, M = geometry.d_pairs, geometry.m_channels
    side = geometry.area_side

    tx = rng.uniform(0.0, side, size=(D, 2))
    rx = np.empty((D, 2))
    for i in range(D):
        for _ in range(PLACEMENT_RETRIES):
            dist = rng.uniform(geometry.rx_dist_min, geometry.rx_dist_max)
            ang = rng.uniform(0.0, 2.0 * math.pi)
            cand = tx[i] + dist * np.array([math.cos(ang), math.sin(ang)])
            if 0.0 <= cand[0] <= side and 0.0 <= cand[1] <= side:
                rx[i] = cand
                break
        else:
            raise PlacementError(
                f"receiver {i} not placed after {PLACEMENT_RETRIES} attempts "
                f"(tx at {tx[i]}, area side {side})"
            )

    # dist[i, j] = distance from transmitter j to receiver i
    dist = np.linalg.norm(rx[:, None, :] - tx[None, :, :], axis=2)
    pl = pathloss_gain(fading, dist)[:, :, None]
    if fading.rayleigh:
        fade = rng.exponential(1.0, size=(D, D, M))
    else:
        fade = np.ones((D, D, M))
    gains = pl * fade

    return NetworkInstance(
        d_pairs=D,
        m_channels=M,
        tx_pos=tx,
        rx_pos=rx,
        gains=gains,
        weights=np.ones(D),
        noise_power=fading.noise_power,
        p_max=fading.p_max,
        seed=int(seed),
    )


@dataclass
class Dataset:
    """An ordered list of instances sharing one (geometry, fading) config."""

    instances: list[NetworkInstance]
    geometry: GeometryConfig
    fading: FadingConfig
    master_seed: int

    def __len__(self) -> int:
        return len(self.instances)


def generate_dataset(geometry: GeometryConfig, fading: FadingConfig, n: int, master_seed: int) -> Dataset:
    """n instances with per-instance seeds derived from (master_seed, index)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    instances = [
        sample_instance(geometry, fading, derive_seed(master_seed, k)) for k in range(n)
    ]
    return Dataset(instances=instances, geometry=geometry, fading=fading, master_seed=int(master_seed))


def _open_text(path: str, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_dataset(ds: Dataset, path: str) -> None:
    """JSON Lines: header object on line 1, one instance object per line after."""
    header = {
        "version": DATASET_FORMAT_VERSION,
        "geometry": asdict(ds.geometry),
        "fading": asdict(ds.fading),
        "master_seed": ds.master_seed,
        "n": len(ds.instances),
    }
    with _open_text(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for inst in ds.instances:
            rec = {
                "seed": inst.seed,
                "tx": inst.tx_pos.tolist(),
                "rx": inst.rx_pos.tolist(),
                "gains": inst.gains.tolist(),
                "weights": inst.weights.tolist(),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_dataset(path: str) -> Dataset:
    """Inverse of save_dataset; raises DatasetFormatError naming the bad line."""
    with _open_text(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")

    def parse(line_no: int, text: str) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}: line {line_no}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DatasetFormatError(f"{path}: line {line_no}: expected an object")
        return obj

    header = parse(1, lines[0])
    for key in ("version", "geometry", "fading", "master_seed", "n"):
        if key not in header:
            raise DatasetFormatError(f"{path}: line 1: missing header field '{key}'")
    if header["version"] != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: line 1: unsupported version {header['version']}")
    geometry = GeometryConfig(**header["geometry"])
    fading = FadingConfig(**header["fading"])
    n = int(header["n"])
    if len(lines) - 1 < n:
        raise DatasetFormatError(f"{path}: truncated: header says n={n}, found {len(lines) - 1} instance lines")

    D, M = geometry.d_pairs, geometry.m_channels
    instances = []
    for k in range(n):
        line_no = k + 2
        rec = parse(line_no, lines[k + 1])
        for key in ("seed", "tx", "rx", "gains", "weights"):
            if key not in rec:
                raise DatasetFormatError(f"{path}: line {line_no}: missing field '{key}'")
        inst = NetworkInstance(
            d_pairs=D,
            m_channels=M,
            tx_pos=np.asarray(rec["tx"], dtype=np.float64),
            rx_pos=np.asarray(rec["rx"], dtype=np.float64),
            gains=np.asarray(rec["gains"], dtype=np.float64),
            weights=np.asarray(rec["weights"], dtype=np.float64),
            noise_power=fading.noise_power,
            p_max=fading.p_max,
            seed=int(rec["seed"]),
        )
        try:
            inst.validate()
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: line {line_no}: {exc}") from exc
        instances.append(inst)
    return Dataset(instances=instances, geometry=geometry, fading=fading, master_seed=int(header["master_seed"]))
