"""Joint channel and power allocation GNN.

S stacked rounds of message passing over the pair-channel graph. Each round
shares one message MLP across both edge types and then applies two
task-specific heads per pair: a channel head emitting the softmax channel
distribution and a sigmoid power head emitting the normalized power.

Round s, with x_i the per-pair state [c_i (M values), p_i/p_max]:

  message on edge (j,.) -> (i,m):  phi1([x_j, node_feat(j,.), edge_feat])
  n_(i,m) = sum of incoming messages (both edge types)
  c_i     = softmax over m of alpha1([x_i, n_(i,m)])   (scalar logit per vertex)
  rho_i   = sigmoid( sum_m c_i^m * alpha2([x_i, n_(i,m)]) )
  x_i    <- [c_i, rho_i]

Hidden sizes: phi1 (M+5)->16->32, alpha1/alpha2 (M+33)->16->8->1. The
parameter count depends only on (M, S), so one trained model runs on any
number of pairs. Training is unsupervised: minimize the negative mean
weighted sum rate of the soft allocation; evaluation takes the argmax
channel (lowest index on ties) and the emitted power.

Both task heads read each vertex aggregate n_(i,m) separately because the
pair-level sum n_i is provably blind to which channel carries less
interference: swapping the channel labels of every cross amplitude permutes
the messages within the sum without changing it, so a head fed only
[x_i, n_i] can neither rank channels nor see the interference on the
pair's own channel. Per-vertex channel logits softmaxed across the pair's
M vertices restore that signal for the assignment, and weighting the
per-vertex power logits by the channel distribution gives the power head
the interference context of the channel it will actually use. The summed
variants remain available for ablation (`channel_head="summed"`,
`power_head="summed"`), as does the literal receiver-state message variant
(`message_features="receiver"`, which feeds phi1 the destination pair's
state and vertex features instead of the sender's).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .hetgraph import FeatureTransform, HeteroGraph, build_graph, fit_transform
from .metrics import Allocation, objective
from .netgen import Dataset, FadingConfig, GeometryConfig

CHECKPOINT_FORMAT_VERSION = 1

PHI1_HIDDEN = (16, 32)
ALPHA_HIDDEN = (16, 8)
MESSAGE_DIM = PHI1_HIDDEN[-1]


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size must be >= 1 and lr > 0")


@dataclass
class JcpgnnParams:
    m_channels: int
    s_layers: int
    phi1: list   # MlpParams per layer
    alpha1: list
    alpha2: list
    transform: FeatureTransform
    p_max: float
    noise_power: float
    seed: int
    train_config: dict | None = None
    channel_head: str = "per_vertex"     # per_vertex | summed (ablation)
    power_head: str = "weighted"         # weighted | summed (ablation)
    message_features: str = "sender"     # sender | receiver (ablation)

    def all_tensors(self):
        out = []
        for s in range(self.s_layers):
            out.extend(self.phi1[s].tensors())
            out.extend(self.alpha1[s].tensors())
            out.extend(self.alpha2[s].tensors())
        return out


def init_params(m_channels: int, s_layers: int = 3, seed: int = 0,
                transform: FeatureTransform | None = None,
                p_max: float = 1.0, noise_power: float = 1e-10,
                train_config: dict | None = None,
                channel_head: str = "per_vertex",
                power_head: str = "weighted",
                message_features: str = "sender") -> JcpgnnParams:
    """Glorot-uniform weights, zero biases, deterministic given the seed."""
    if m_channels < 1:
        raise ValueError(f"m_channels must be >= 1, got {m_channels}")
    if channel_head not in ("per_vertex", "summed"):
        raise ValueError(f"unknown channel_head {channel_head!r}")
    if power_head not in ("weighted", "summed"):
        raise ValueError(f"unknown power_head {power_head!r}")
    if message_features not in ("sender", "receiver"):
        raise ValueError(f"unknown message_features {message_features!r}")
    rng = np.random.default_rng(seed)
    M = m_channels
    phi1, alpha1, alpha2 = [], [], []
    for _ in range(s_layers):
        phi1.append(ad.mlp_init((M + 5, *PHI1_HIDDEN), "identity", rng))
        if channel_head == "per_vertex":
            alpha1.append(ad.mlp_init((M + 1 + MESSAGE_DIM, *ALPHA_HIDDEN, 1), "identity", rng))
        else:
            alpha1.append(ad.mlp_init((M + 1 + MESSAGE_DIM, *ALPHA_HIDDEN, M), "softmax", rng))
        # weighted power head emits pre-activations; the sigmoid comes after
        # the channel-weighted combination
        alpha2.append(ad.mlp_init(
            (M + 1 + MESSAGE_DIM, *ALPHA_HIDDEN, 1),
            "identity" if power_head == "weighted" else "sigmoid", rng))
    return JcpgnnParams(
        m_channels=M,
        s_layers=s_layers,
        phi1=phi1,
        alpha1=alpha1,
        alpha2=alpha2,
        transform=transform if transform is not None else FeatureTransform.identity_transform(),
        p_max=p_max,
        noise_power=noise_power,
        seed=int(seed),
        train_config=train_config,
        channel_head=channel_head,
        power_head=power_head,
        message_features=message_features,
    )


def _forward_states(tape, graph: HeteroGraph, params: JcpgnnParams, fixed_channel=None):
    """Run the S rounds; returns (channel tensor (D,M), rho tensor (D,1)).

    With fixed_channel set, the channel part of the state is overwritten
    with the given one-hot rows after every round and the channel head is
    skipped (the initial all-ones state is kept either way).
    """
    D, M = graph.d_pairs, graph.m_channels
    if M != params.m_channels:
        raise ValueError(f"graph has {M} channels, model expects {params.m_channels}")

    src = np.concatenate([graph.intf_src, graph.pot_src])
    dst = np.concatenate([graph.intf_dst, graph.pot_dst])
    efeat = np.vstack([graph.intf_feat, graph.pot_feat])
    # sort the combined edge list by destination (stable, so interference
    # edges keep preceding potential edges within a vertex): message
    # aggregation then takes segment_sum's vectorized sorted path
    order = np.argsort(dst, kind="stable")
    src, dst, efeat = src[order], dst[order], efeat[order]
    # state/vertex features feeding phi1: sender's by default, literal
    # receiver-state reading as ablation
    feat_vertex = src if params.message_features == "sender" else dst
    state_pair = feat_vertex // M
    # vertex features and edge features never change across rounds
    edge_const = ad.Tensor(np.hstack([graph.node_feat[feat_vertex], efeat]))
    vertex_pair = graph.vertex_pair
    fixed_t = ad.Tensor(fixed_channel) if fixed_channel is not None else None
    per_vertex_channel = params.channel_head == "per_vertex"
    weighted_power = params.power_head == "weighted"
    ones_col = ad.Tensor(np.ones((M, 1)))

    x = ad.Tensor(np.ones((D, M + 1)))
    c_t = rho_t = None
    for s in range(params.s_layers):
        xs = ad.gather_rows(tape, x, state_pair)
        phi_in = ad.concat(tape, [xs, edge_const], axis=1)
        msg = ad.mlp_forward(tape, params.phi1[s], phi_in)
        n_vertex = ad.segment_sum(tape, msg, dst, D * M)

        vert_in = None
        if weighted_power or (per_vertex_channel and fixed_t is None):
            x_v = ad.gather_rows(tape, x, vertex_pair)
            vert_in = ad.concat(tape, [x_v, n_vertex], axis=1)
        head_in = None
        if not weighted_power or (not per_vertex_channel and fixed_t is None):
            n_pair = ad.segment_sum(tape, n_vertex, vertex_pair, D)
            head_in = ad.concat(tape, [x, n_pair], axis=1)

        if fixed_t is not None:
            c_t = fixed_t
        elif per_vertex_channel:
            logits = ad.reshape(tape, ad.mlp_forward(tape, params.alpha1[s], vert_in), (D, M))
            c_t = ad.softmax(tape, logits)
        else:
            c_t = ad.mlp_forward(tape, params.alpha1[s], head_in)

        if weighted_power:
            power_logits = ad.reshape(tape, ad.mlp_forward(tape, params.alpha2[s], vert_in), (D, M))
            rho_t = ad.sigmoid(tape, ad.matmul(tape, ad.mul(tape, c_t, power_logits), ones_col))
        else:
            rho_t = ad.mlp_forward(tape, params.alpha2[s], head_in)
        x = ad.concat(tape, [c_t, rho_t], axis=1)
    return c_t, rho_t


def _harden(channel_soft: np.ndarray) -> np.ndarray:
    """One-hot rows at the argmax; ties resolve to the lowest channel index."""
    hard = np.zeros_like(channel_soft)
    hard[np.arange(channel_soft.shape[0]), np.argmax(channel_soft, axis=1)] = 1.0
    return hard


def forward(graph: HeteroGraph, params: JcpgnnParams, mode: str = "hard") -> Allocation:
    if mode not in ("soft", "hard"):
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
    c_t, rho_t = _forward_states(None, graph, params)
    power = (rho_t.values * params.p_max).ravel()
    if mode == "hard":
        return Allocation(channel=_harden(c_t.values), power=power, hard=True)
    return Allocation(channel=c_t.values.copy(), power=power, hard=False)


def forward_fixed_channel(graph: HeteroGraph, params: JcpgnnParams, fixed_c: np.ndarray) -> Allocation:
    """Power allocation for an externally fixed one-hot channel matrix."""
    fixed_c = np.asarray(fixed_c, dtype=np.float64)
    D, M = graph.d_pairs, graph.m_channels
    if fixed_c.shape != (D, M) or not np.all((fixed_c == 0.0) | (fixed_c == 1.0)) \
            or not np.all(fixed_c.sum(axis=1) == 1.0):
        raise ValueError(f"fixed_c must be a one-hot {(D, M)} matrix")
    _, rho_t = _forward_states(None, graph, params, fixed_channel=fixed_c)
    power = (rho_t.values * params.p_max).ravel()
    return Allocation(channel=fixed_c.copy(), power=power, hard=True)


def _soft_objective(tape, inst, c_t, p_t):
    """Weighted sum rate of the soft allocation, built from tape ops."""
    w_scaled = (inst.weights / math.log(2.0))[:, None]
    total = None
    for m in range(inst.m_channels):
        gm = inst.gains[:, :, m]
        diag = np.diag(gm).copy()
        off = gm.copy()
        np.fill_diagonal(off, 0.0)
        cm = ad.slice_cols(tape, c_t, m, m + 1)
        q = ad.mul(tape, cm, p_t)                            # power on channel m
        sig = ad.mul(tape, q, ad.Tensor(diag[:, None]))
        intf = ad.matmul(tape, ad.Tensor(off), q)
        den = ad.add(tape, intf, ad.Tensor(inst.noise_power))
        snr = ad.div(tape, sig, den)
        lg = ad.log(tape, ad.add(tape, snr, ad.Tensor(1.0)))
        part = ad.sum_all(tape, ad.mul(tape, lg, ad.Tensor(w_scaled)))
        total = part if total is None else ad.add(tape, total, part)
    return total


def loss(batch, params: JcpgnnParams, tape: ad.Tape | None = None) -> ad.Tensor:
    """Negative mean weighted sum rate over (graph, instance) pairs."""
    if not batch:
        raise ValueError("loss needs a nonempty batch")
    total = None
    for graph, inst in batch:
        c_t, rho_t = _forward_states(tape, graph, params)
        p_t = ad.scale(tape, rho_t, params.p_max)
        obj = _soft_objective(tape, inst, c_t, p_t)
        total = obj if total is None else ad.add(tape, total, obj)
    return ad.scale(tape, total, -1.0 / len(batch))


def copy_params(params: JcpgnnParams) -> JcpgnnParams:
    dup = init_params(params.m_channels, params.s_layers, params.seed,
                      transform=params.transform, p_max=params.p_max,
                      noise_power=params.noise_power,
                      train_config=copy.deepcopy(params.train_config),
                      channel_head=params.channel_head,
                      power_head=params.power_head,
                      message_features=params.message_features)
    for dst_t, src_t in zip(dup.all_tensors(), params.all_tensors()):
        dst_t.values = src_t.values.copy()
    return dup


def evaluate_mean_objective(graphs, instances, params: JcpgnnParams) -> float:
    vals = [objective(inst, forward(g, params, "hard")) for g, inst in zip(graphs, instances)]
    return float(np.mean(vals))


def train(train_ds: Dataset, val_ds: Dataset, cfg: TrainConfig, s_layers: int = 3,
          geometry: GeometryConfig | None = None, fading: FadingConfig | None = None,
          channel_head: str = "per_vertex", power_head: str = "weighted",
          message_features: str = "sender"):
    """Fit the feature transform, minimize the loss with Adam over shuffled
    mini-batches, and return (best-validation params, history).

    History holds per-epoch mean training loss and validation hard-mode
    objective. Everything is deterministic given the config seeds.
    """
    geometry = geometry or train_ds.geometry
    fading = fading or train_ds.fading
    if (train_ds.geometry.d_pairs, train_ds.geometry.m_channels) != \
            (val_ds.geometry.d_pairs, val_ds.geometry.m_channels):
        raise ValueError("train and validation datasets must share (D, M)")

    transform = fit_transform(train_ds)
    params = init_params(
        geometry.m_channels, s_layers, cfg.seed, transform=transform,
        p_max=fading.p_max, noise_power=fading.noise_power, train_config=asdict(cfg),
        channel_head=channel_head, power_head=power_head,
        message_features=message_features,
    )
    graphs_train = [build_graph(inst, transform) for inst in train_ds.instances]
    graphs_val = [build_graph(inst, transform) for inst in val_ds.instances]

    tensors = params.all_tensors()
    state = ad.adam_init(tensors)
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5487])

    history = {"train_loss": [], "val_objective": []}
    best_obj = -math.inf
    best_params = copy_params(params)
    since_best = 0
    n = len(train_ds.instances)

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            batch = [(graphs_train[k], train_ds.instances[k]) for k in idx]
            tape = ad.Tape()
            ad.zero_grads(tensors)
            l = loss(batch, params, tape)
            lv = float(l.values)
            if not math.isfinite(lv):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch offset {lo}")
            ad.backward(tape, l)
            ad.adam_step(tensors, state, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
            epoch_loss += lv * len(idx)
        history["train_loss"].append(epoch_loss / n)

        val_obj = evaluate_mean_objective(graphs_val, val_ds.instances, params)
        history["val_objective"].append(val_obj)
        if val_obj > best_obj:
            best_obj = val_obj
            best_params = copy_params(params)
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best > cfg.patience:
                break

    return best_params, history


# ---------------------------------------------------------------------------
# Checkpoints


def _mlp_to_dict(mlp) -> dict:
    return {
        "weights": [w.values.tolist() for w in mlp.weights],
        "biases": [b.values.tolist() for b in mlp.biases],
    }


def _mlp_from_dict(d: dict, out_activation: str):
    from .autodiff import MlpParams, Tensor

    return MlpParams(
        weights=[Tensor(np.asarray(w), requires_grad=True) for w in d["weights"]],
        biases=[Tensor(np.asarray(b), requires_grad=True) for b in d["biases"]],
        out_activation=out_activation,
    )


def save_checkpoint(params: JcpgnnParams, path: str) -> None:
    doc = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "meta": {
            "M": params.m_channels,
            "S": params.s_layers,
            "p_max": params.p_max,
            "sigma2": params.noise_power,
            "transform_stats": params.transform.to_dict(),
            "seed": params.seed,
            "train_config": params.train_config,
            "channel_head": params.channel_head,
            "power_head": params.power_head,
            "message_features": params.message_features,
        },
        "layers": [
            {
                "phi1": _mlp_to_dict(params.phi1[s]),
                "alpha1": _mlp_to_dict(params.alpha1[s]),
                "alpha2": _mlp_to_dict(params.alpha2[s]),
            }
            for s in range(params.s_layers)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path: str) -> JcpgnnParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    meta = doc["meta"]
    layers = doc["layers"]
    channel_head = meta.get("channel_head", "per_vertex")
    power_head = meta.get("power_head", "weighted")
    alpha1_act = "identity" if channel_head == "per_vertex" else "softmax"
    alpha2_act = "identity" if power_head == "weighted" else "sigmoid"
    params = JcpgnnParams(
        m_channels=int(meta["M"]),
        s_layers=int(meta["S"]),
        phi1=[_mlp_from_dict(l["phi1"], "identity") for l in layers],
        alpha1=[_mlp_from_dict(l["alpha1"], alpha1_act) for l in layers],
        alpha2=[_mlp_from_dict(l["alpha2"], alpha2_act) for l in layers],
        transform=FeatureTransform.from_dict(meta["transform_stats"]),
        p_max=float(meta["p_max"]),
        noise_power=float(meta["sigma2"]),
        seed=int(meta["seed"]),
        train_config=meta.get("train_config"),
        channel_head=channel_head,
        power_head=power_head,
        message_features=meta.get("message_features", "sender"),
    )
    return params
