"""Heterogeneous pair-channel graphs with normalized link features.

One vertex per (pair i, channel m). Directed interference edges connect
(j, m) -> (i, m) for j != i (same-channel interference, destination is the
message receiver); potential interference edges connect (j, n) -> (i, m)
for j != i, m != n (interference that would appear if assignments changed).

Features (before the transform):
  vertex (i, m):            [ |h_ii^m|, w_i ]
  interference (j,m)->(i,m): [ |h_ij^m|, |h_ji^m| ]
  potential   (j,n)->(i,m): [ |h_ij^m|, |h_ij^n| ]

Raw amplitudes span several orders of magnitude under a realistic path
loss, which stalls MLP training, so amplitudes are standardized on a dB
scale with statistics fitted on the training set (weights pass through
untouched). The transform is invertible and can be toggled to identity.
Amplitudes below 40 dB under the training minimum (including exact zeros
from corrupted inputs) clamp to that floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netgen import Dataset, NetworkInstance

FLOOR_MARGIN_DB = 40.0
MIN_STD_DB = 1e-12


@dataclass(frozen=True)
class AmpStats:
    mean_db: float
    std_db: float
    floor_db: float


@dataclass(frozen=True)
class FeatureTransform:
    """dB-scale standardization of link amplitudes; identity when disabled.

    `direct` covers the desired-link amplitudes that appear in vertex
    features; `cross` covers the interference amplitudes in every edge
    feature position.
    """

    identity: bool
    direct: AmpStats | None = None
    cross: AmpStats | None = None

    @classmethod
    def identity_transform(cls) -> "FeatureTransform":
        return cls(identity=True)

    def _encode(self, amps: np.ndarray, st: AmpStats) -> np.ndarray:
        if self.identity:
            return np.asarray(amps, dtype=np.float64)
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(np.asarray(amps, dtype=np.float64))
        db = np.maximum(db, st.floor_db)
        return (db - st.mean_db) / st.std_db

    def _decode(self, feats: np.ndarray, st: AmpStats) -> np.ndarray:
        if self.identity:
            return np.asarray(feats, dtype=np.float64)
        db = np.asarray(feats, dtype=np.float64) * st.std_db + st.mean_db
        return 10.0 ** (db / 20.0)

    def encode_direct(self, amps):
        return self._encode(amps, self.direct)

    def encode_cross(self, amps):
        return self._encode(amps, self.cross)

    def decode_direct(self, feats):
        return self._decode(feats, self.direct)

    def decode_cross(self, feats):
        return self._decode(feats, self.cross)

    def to_dict(self) -> dict:
        if self.identity:
            return {"identity": True, "direct": None, "cross": None}
        return {
            "identity": False,
            "direct": {"mean_db": self.direct.mean_db, "std_db": self.direct.std_db,
                       "floor_db": self.direct.floor_db},
            "cross": {"mean_db": self.cross.mean_db, "std_db": self.cross.std_db,
                      "floor_db": self.cross.floor_db},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureTransform":
        if d["identity"]:
            return cls.identity_transform()
        return cls(identity=False, direct=AmpStats(**d["direct"]), cross=AmpStats(**d["cross"]))


def _pool_stats(db_values: np.ndarray) -> AmpStats:
    mean = float(db_values.mean())
    std = float(db_values.std())
    if std < MIN_STD_DB:
        std = 1.0
    return AmpStats(mean_db=mean, std_db=std, floor_db=float(db_values.min()) - FLOOR_MARGIN_DB)


def fit_transform(train: Dataset) -> FeatureTransform:
    """Fit dB-scale standardization on a training set.

    Every edge-feature position holds a cross-link amplitude and the vertex
    amplitude position holds a desired-link amplitude, so per-position
    statistics reduce to these two pools (10*log10(gain) = 20*log10(amp)).
    Zero variance clamps the stddev to 1.
    """
    if not train.instances:
        raise ValueError("cannot fit a feature transform on an empty dataset")
    diag_db, cross_db = [], []
    for inst in train.instances:
        D = inst.d_pairs
        idx = np.arange(D)
        diag_db.append(10.0 * np.log10(inst.gains[idx, idx, :]).ravel())
        off_mask = ~np.eye(D, dtype=bool)
        if D > 1:
            cross_db.append(10.0 * np.log10(inst.gains[off_mask]).ravel())
    direct = _pool_stats(np.concatenate(diag_db))
    # single-pair networks have no cross links; fall back to the direct pool
    cross = _pool_stats(np.concatenate(cross_db)) if cross_db else direct
    return FeatureTransform(identity=False, direct=direct, cross=cross)


@dataclass
class HeteroGraph:
    """Immutable graph view of one instance; structure depends only on (D, M).

    Vertex (i, m) has index i*M + m. Edge lists are ordered
    lexicographically by (dst vertex, src vertex).
    """

    d_pairs: int
    m_channels: int
    node_feat: np.ndarray  # (D*M, 2)
    intf_src: np.ndarray   # (M*D*(D-1),) vertex indices
    intf_dst: np.ndarray
    intf_feat: np.ndarray  # (M*D*(D-1), 2)
    pot_src: np.ndarray    # (D*M*(D-1)*(M-1),)
    pot_dst: np.ndarray
    pot_feat: np.ndarray
    transform: FeatureTransform

    @property
    def n_vertices(self) -> int:
        return self.d_pairs * self.m_channels

    @property
    def vertex_pair(self) -> np.ndarray:
        return np.arange(self.n_vertices) // self.m_channels


def build_graph(inst: NetworkInstance, transform: FeatureTransform) -> HeteroGraph:
    D, M = inst.d_pairs, inst.m_channels
    amp = np.sqrt(inst.gains)  # (D, D, M)
    idx = np.arange(D)

    node_feat = np.empty((D * M, 2))
    node_feat[:, 0] = transform.encode_direct(amp[idx, idx, :]).ravel()
    node_feat[:, 1] = np.repeat(inst.weights, M)

    if D > 1:
        others = np.array([[j for j in range(D) if j != i] for i in range(D)])  # (D, D-1)

        # interference edges, ordered by (i, m, j)
        i3 = np.broadcast_to(np.arange(D)[:, None, None], (D, M, D - 1))
        m3 = np.broadcast_to(np.arange(M)[None, :, None], (D, M, D - 1))
        j3 = np.broadcast_to(others[:, None, :], (D, M, D - 1))
        intf_dst = (i3 * M + m3).ravel()
        intf_src = (j3 * M + m3).ravel()
        intf_feat = np.stack(
            [amp[i3, j3, m3].ravel(), amp[j3, i3, m3].ravel()], axis=1
        )
        intf_feat = transform.encode_cross(intf_feat)

        # potential interference edges, ordered by (i, m, j, n)
        if M > 1:
            ch_others = np.array([[n for n in range(M) if n != m] for m in range(M)])  # (M, M-1)
            shape = (D, M, D - 1, M - 1)
            i4 = np.broadcast_to(np.arange(D)[:, None, None, None], shape)
            m4 = np.broadcast_to(np.arange(M)[None, :, None, None], shape)
            j4 = np.broadcast_to(others[:, None, :, None], shape)
            n4 = np.broadcast_to(ch_others[None, :, None, :], shape)
            pot_dst = (i4 * M + m4).ravel()
            pot_src = (j4 * M + n4).ravel()
            pot_feat = np.stack(
                [amp[i4, j4, m4].ravel(), amp[i4, j4, n4].ravel()], axis=1
            )
            pot_feat = transform.encode_cross(pot_feat)
        else:
            pot_dst = np.empty(0, dtype=np.intp)
            pot_src = np.empty(0, dtype=np.intp)
            pot_feat = np.empty((0, 2))
    else:
        intf_dst = np.empty(0, dtype=np.intp)
        intf_src = np.empty(0, dtype=np.intp)
        intf_feat = np.empty((0, 2))
        pot_dst = np.empty(0, dtype=np.intp)
        pot_src = np.empty(0, dtype=np.intp)
        pot_feat = np.empty((0, 2))

    return HeteroGraph(
        d_pairs=D,
        m_channels=M,
        node_feat=node_feat,
        intf_src=intf_src.astype(np.intp),
        intf_dst=intf_dst.astype(np.intp),
        intf_feat=intf_feat,
        pot_src=pot_src.astype(np.intp),
        pot_dst=pot_dst.astype(np.intp),
        pot_feat=pot_feat,
        transform=transform,
    )
