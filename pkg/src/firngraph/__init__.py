"""Temporal graph toolkit for predicting shallow firn-layer thickness.

Pipeline: labeled echogram segments -> thickness records -> normalized
temporal graphs -> graph-convolutional LSTM (plus GCN and LSTM baselines)
trained with Adam on MSE -> five-trial RMSE reports.
"""

__version__ = "0.1.0"

from .graphs import (
    NormalizationStats,
    StaticGraphSample,
    TemporalGraphSample,
    apply_normalization,
    build_adjacency,
    build_static_sample,
    build_temporal_sample,
    fit_normalization,
    haversine_distance,
)
from .ingest import (
    SegmentRecord,
    SplitPlan,
    ThicknessRecord,
    compute_thicknesses,
    extract_layer_tops,
    filter_usable,
    make_splits,
)
from .network import (
    backward,
    forward_gcn_baseline,
    forward_gcn_lstm,
    forward_lstm_baseline,
    init_params,
    mse_loss,
)
from .optim import AdamState, adam_step, init_adam
from .spectral import cheb_conv, scaled_laplacian
from .synth import SynthParams, generate_segment, persistence_baseline
from .train import TrainConfig, evaluate_rmse, run_experiment, run_trial

__all__ = [name for name in dir() if not name.startswith("_")]
