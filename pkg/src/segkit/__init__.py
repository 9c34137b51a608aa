"""Semantic segmentation toolkit.

Run-length mask codec, class-imbalance-aware losses with analytic
gradients, SegNet- and U-Net-style encoder-decoder models on a pure
NumPy engine, staged training, and evaluation metrics.
"""

from .data import (
    AnnotationRecord,
    ClassHistogram,
    DatasetIndex,
    ImageEntry,
    SizeStats,
    class_histogram,
    class_pixel_frequencies,
    diverse_subset,
    load_annotations,
    save_annotations,
    size_histogram,
    split,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    EmptyInputError,
    FeasibilityWarning,
    InvalidClassError,
    InvalidRunError,
    MalformedDescriptorError,
    MaskShapeError,
    NumericError,
    OutOfBoundsError,
    PairingError,
    RowError,
    SchemaError,
    SegkitError,
)
from .losses import (
    GRADCHECK_TOLERANCE,
    ClassWeights,
    class_weights_from_frequencies,
    finite_difference_report,
    focal_loss,
    gdl_grad_multiclass,
    gdl_grad_two_class,
    gdl_value,
    softmax,
    wce_loss,
    wce_loss_binary,
)
from .metrics import MetricsReport, binary_iou, evaluate_pair_set, pixel_accuracy
from .models import (
    BlockSpec,
    ModelSpec,
    Network,
    ParamCountReport,
    build_segnet,
    build_unet,
    compile_model,
    load_checkpoint,
    param_count,
    save_checkpoint,
    shape_chain,
)
from .palette import (
    PALETTE_HEX,
    colorize,
    load_classmap_png,
    overlay,
    palette_rgb,
    save_classmap_png,
)
from .rle import (
    NUM_CLASSES,
    PixelOrder,
    condense,
    format_rle,
    one_hot,
    parse_rle,
    resize_classmap,
    rle_decode,
    rle_encode,
)
from .toy import ToyDataset, ToySpec, generate_toy, load_toy_dataset, save_toy_dataset
from .train import (
    AdamState,
    RunLog,
    TrainConfig,
    adam_step,
    evaluate,
    fit,
    load_config,
    lr_schedule,
    overfit_single,
    predict,
    save_config,
    sgd_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AnnotationRecord",
    "BlockSpec",
    "CheckpointError",
    "ClassHistogram",
    "ClassWeights",
    "ConfigError",
    "DatasetIndex",
    "DivergenceError",
    "EmptyInputError",
    "FeasibilityWarning",
    "GRADCHECK_TOLERANCE",
    "ImageEntry",
    "InvalidClassError",
    "InvalidRunError",
    "MalformedDescriptorError",
    "MaskShapeError",
    "MetricsReport",
    "ModelSpec",
    "NUM_CLASSES",
    "Network",
    "NumericError",
    "OutOfBoundsError",
    "PALETTE_HEX",
    "PairingError",
    "ParamCountReport",
    "PixelOrder",
    "RowError",
    "RunLog",
    "SchemaError",
    "SegkitError",
    "SizeStats",
    "ToyDataset",
    "ToySpec",
    "TrainConfig",
    "adam_step",
    "binary_iou",
    "build_segnet",
    "build_unet",
    "class_histogram",
    "class_pixel_frequencies",
    "class_weights_from_frequencies",
    "colorize",
    "compile_model",
    "condense",
    "diverse_subset",
    "evaluate",
    "evaluate_pair_set",
    "finite_difference_report",
    "fit",
    "focal_loss",
    "format_rle",
    "gdl_grad_multiclass",
    "gdl_grad_two_class",
    "gdl_value",
    "generate_toy",
    "load_annotations",
    "load_checkpoint",
    "load_classmap_png",
    "load_config",
    "load_toy_dataset",
    "lr_schedule",
    "one_hot",
    "overfit_single",
    "overlay",
    "palette_rgb",
    "param_count",
    "parse_rle",
    "pixel_accuracy",
    "predict",
    "resize_classmap",
    "rle_decode",
    "rle_encode",
    "save_annotations",
    "save_checkpoint",
    "save_classmap_png",
    "save_config",
    "save_toy_dataset",
    "sgd_step",
    "shape_chain",
    "size_histogram",
    "softmax",
    "split",
    "wce_loss",
    "wce_loss_binary",
]
