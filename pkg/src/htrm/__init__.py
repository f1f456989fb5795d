"""Repetitive action counting from bi-modal temporal self-similarity.

A small numpy-backed tensor engine with reverse-mode differentiation plus
the counting model built on it: per-scale similarity stacks, random matrix
dropping, local temporal context, multi-scale fusion, and density-map
regression. See the CLI (`htrm --help`) for the end-to-end workflows.
"""

from .config import RunConfig, load_config
from .context import ContextParams, inject_context, local_temporal_context
from .errors import DataFormatError, HtrmError, NumericError, UsageError
from .features import (
    FeatureSequence,
    ScaleSet,
    SyntheticSpec,
    build_scales,
    generate_synthetic,
    load_features,
    sample_or_pad,
    save_features,
)
from .fusion import FusionParams, multiscale_fuse
from .metrics import CountPair, CycleAnnotation, annotations_to_density, count_from_density, mae, obo
from .model import (
    DensityHeadParams,
    EncoderLayerParams,
    ModelConfig,
    ModelParams,
    decode,
    forward_full,
    init_model,
    load_checkpoint,
    mse_loss,
    predict_density,
    predict_from_features,
    save_checkpoint,
)
from .optim import AdamState, adam_step
from .tensor import Tensor, backward, conv_same, matmul, softmax
from .tssm import ProjectionHeads, RmdPolicy, dual_softmax_tssm, joint, random_matrix_drop, self_attention_tssm

__version__ = "0.1.0"
