"""Event-driven spiking networks over time and location recurrences.

The same neuron recurrences run along two axes of a binary spike grid:
time-stepped neurons integrate spatial profiles bin by bin, and
location-stepped neurons integrate whole spike trains taxel by taxel.
Two hybrid classifiers pair one branch of each kind, fuse their read-outs,
and support anytime streaming inference and event-driven operation counts.
"""

from .energy import LayerOps, OpCount, count_dense_ops, count_snn_ops, energy_ratio
from .errors import ConfigError, DataError, MalformedRecordError
from .estimators import HybridLifGnnClassifier, HybridSrmFcClassifier
from .events import (
    DatasetMeta,
    EventStream,
    LateBurstSpec,
    SynthSpec,
    TransposedStream,
    gen_late_burst,
    gen_synthetic,
    load_dataset,
    read_event_file,
    read_manifest,
    transpose,
    write_dataset,
    write_event_file,
    write_manifest,
)
from .layers import LifFcLayer, LifGraphLayer, SrmFcLayer
from .models import (
    HybridLifGnn,
    HybridSrmFc,
    concat_predict,
    fuse,
    load_model,
    save_model,
    spike_counts,
)
from .neurons import (
    LifParams,
    SrmParams,
    SurrogateSpec,
    lif_grid_scan,
    llif_step,
    refractory_kernel,
    spike_response_kernel,
    srm_forward,
    surrogate_grad,
    surrogate_primitive,
    tlif_step,
)
from .streaming import (
    CountStep,
    LabelStep,
    sigmoid_weight,
    stream,
    stream_counts,
    stream_labels,
)
from .topology import (
    ARCH_ORDER,
    LOOP_ORDER,
    WHORL_ORDER,
    LocationOrder,
    SpatialGraph,
    TemporalGraph,
    build_spatial_graph,
    build_temporal_graph,
    default_taxel_coords,
    graph_propagate,
    make_order,
    normalized_adjacency,
)
from .training import (
    Adam,
    EpochStats,
    ProtocolResult,
    RmsProp,
    SpikeCountTargets,
    TrainConfig,
    default_targets,
    evaluate,
    loss_location_counts,
    loss_mse,
    loss_weighted_counts,
    run_protocol,
    split_stratified,
    train_model,
    write_metrics_csv,
)
from .validation import as_batch, check_labels, check_spike_grid

__version__ = "0.1.0"

__all__ = [
    "ARCH_ORDER", "Adam", "ConfigError", "CountStep", "DataError", "DatasetMeta",
    "EpochStats", "EventStream", "HybridLifGnn", "HybridLifGnnClassifier",
    "HybridSrmFc", "HybridSrmFcClassifier", "LabelStep", "LateBurstSpec",
    "LayerOps", "LifFcLayer", "LifGraphLayer", "LifParams", "LocationOrder",
    "LOOP_ORDER", "MalformedRecordError", "OpCount", "ProtocolResult", "RmsProp",
    "SpatialGraph", "SpikeCountTargets", "SrmFcLayer", "SrmParams", "SurrogateSpec",
    "SynthSpec", "TemporalGraph", "TrainConfig", "TransposedStream", "WHORL_ORDER",
    "as_batch", "build_spatial_graph", "build_temporal_graph", "check_labels",
    "check_spike_grid", "concat_predict", "count_dense_ops", "count_snn_ops",
    "default_targets", "default_taxel_coords", "energy_ratio", "evaluate", "fuse",
    "gen_late_burst", "gen_synthetic", "graph_propagate", "lif_grid_scan",
    "llif_step", "load_dataset", "load_model", "loss_location_counts", "loss_mse",
    "loss_weighted_counts", "make_order", "normalized_adjacency", "read_event_file",
    "read_manifest", "refractory_kernel", "run_protocol", "save_model",
    "sigmoid_weight", "spike_counts", "spike_response_kernel", "split_stratified",
    "srm_forward", "stream", "stream_counts", "stream_labels", "surrogate_grad",
    "surrogate_primitive", "tlif_step", "train_model", "transpose",
    "write_dataset", "write_event_file", "write_manifest", "write_metrics_csv",
]
