"""Exact reachability verification and vertex-guided repair of ReLU networks."""

from .model import (
    IDENTITY,
    RELU,
    LabeledDataset,
    Layer,
    Network,
    NNetFormatError,
    TrainConfig,
    TrainingDivergedError,
    accuracy,
    forward,
    forward_batch,
    load_nnet,
    save_nnet,
    train,
)
from .fvim import (
    TrackedSet,
    affine_map,
    box_polytope,
    dim_bounds,
    facet_halfspaces,
    split_by_neuron,
)
from .vzono import VZono, constraint_min, from_tracked, is_provably_safe, relu_layer, relu_relax
from .reach import (
    MaxSetsExceeded,
    ReachOptions,
    ReachStats,
    SafetyProperty,
    UnsafeDomain,
    UnsafeRegion,
    backtrack,
    exact_output_domain,
    layer_output,
    output_overapprox,
    reach_unsafe,
    reach_unsafe_all,
)
from .repair import (
    EXHAUSTED,
    REPAIRED,
    RepairAborted,
    RepairConfig,
    RepairReport,
    correct,
    repair,
    representative_pairs,
    unsafe_volume_ratio,
)

__version__ = "0.1.0"
