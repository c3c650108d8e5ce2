"""Joint channel and power allocation in interference-limited networks.

A self-contained research stack: random network generation, a
heterogeneous-graph neural allocator trained unsupervised on the weighted
sum rate, classical baselines (WMMSE power control, exhaustive channel
search, round-robin, closest-split), and a benchmark CLI.
"""

from .baselines import (
    ExhaustiveGuardError,
    WmmseConfig,
    closest_split,
    exhaustive,
    random_alloc,
    round_robin,
    wmmse_power,
)
from .hetgraph import FeatureTransform, HeteroGraph, build_graph, fit_transform
from .metrics import Allocation, AllocationError, objective, rate, rate_matrix, sinr
from .model import (
    JcpgnnParams,
    TrainConfig,
    TrainingDivergedError,
    forward,
    forward_fixed_channel,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)
from .netgen import (
    Dataset,
    DatasetFormatError,
    FadingConfig,
    GeometryConfig,
    NetworkInstance,
    PlacementError,
    derive_seed,
    generate_dataset,
    load_dataset,
    pathloss_gain,
    sample_instance,
    save_dataset,
)

__version__ = "0.1.0"
