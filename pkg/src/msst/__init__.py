"""MSST-GCN: two-stream self-attention graph convolution for skeleton action recognition.

Built on a small float64 tensor library with a reverse-mode tape
(:mod:`msst.tensor`, :mod:`msst.ops`). Hot kernels run under numba when it is
available; set ``MSST_DISABLE_NUMBA=1`` to force the pure-numpy path.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, DataError, DimensionError, GraphError, MSSTError,  # noqa: E402
                     NonFiniteError, OracleInvalidError)
from .tensor import Tape, Tensor, backward  # noqa: E402
from . import ops  # noqa: E402
from .gradcheck import finite_difference_check  # noqa: E402
from .graph import GraphSpec, build_graph, load_graph, matrix_power, normalize_adjacency  # noqa: E402
from .modality import (SkeletonSequence, generalized_bone, motion_diff,  # noqa: E402
                       resize_temporal)
from .network import ModelConfig, forward, init_params  # noqa: E402
from .training import TrainConfig, evaluate, lr_at, sgd_step, train  # noqa: E402

__all__ = [
    "ConfigError", "DataError", "DimensionError", "GraphError", "MSSTError", "NonFiniteError",
    "OracleInvalidError", "Tape", "Tensor", "backward", "ops", "finite_difference_check",
    "GraphSpec", "build_graph", "load_graph", "matrix_power", "normalize_adjacency",
    "SkeletonSequence", "generalized_bone", "motion_diff", "resize_temporal",
    "ModelConfig", "forward", "init_params", "TrainConfig", "evaluate", "lr_at", "sgd_step",
    "train",
]
