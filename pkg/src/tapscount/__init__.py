"""Identify the number of multipath channel taps from tx/rx signal pairs.

A from-scratch feed-forward classifier (dense + batch norm + hard shrinkage
+ dropout blocks, softmax head, Adam, plateau scheduler) learns the tap
count from received-signal features, benchmarked against iterative hard
thresholding and the SWISS weighted-DFT baseline on a synthetic clustered
channel generator.
"""

from .channel import ChannelClassSpec, ChannelRealization, Tap, discretize_cir, sample_channel
from .dataset import (
    Dataset,
    GenerationConfig,
    Split,
    build_dataset,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .harness import (
    CompareReport,
    EvalReport,
    MethodResult,
    RunConfig,
    TrainResult,
    cmd_compare,
    cmd_eval,
    cmd_generate,
    cmd_train,
    config_from_dict,
    load_config,
)
from .network import (
    AdamState,
    BatchNormLayer,
    DenseLayer,
    DropoutLayer,
    Network,
    PlateauScheduler,
    ShrinkageLayer,
    adam_step,
    build_network,
    cross_entropy,
    load_checkpoint,
    save_checkpoint,
    softmax,
    softmax_ce_backward,
    train_epoch,
)
from .signals import SignalFrame, convolve, defeaturize, featurize, generate_tx
from .sparse import (
    SparseProblem,
    SparseSolution,
    hard_threshold,
    iht_count_taps,
    iht_solve,
)
from .swiss import SwissConfig, SwissResult, build_pilot_frame, pilot_channel_estimate, solve_weights, swiss_identify

__version__ = "0.1.0"
