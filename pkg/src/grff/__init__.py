"""End-to-end kernel learning with generative random Fourier features.

Small generator networks turn Gaussian noise into the spectral weights of
random Fourier feature maps; stacking such maps and training everything
with a linear classifier learns the kernel and the classifier jointly.
Everything, including the autodiff engine, is written on numpy/scipy.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    DataError,
    GRFFError,
    LabelError,
    NumericalError,
    ShapeError,
)
from .features import RBFKernelSpec, rff_map, rff_map_np  # noqa: E402
from .model import (  # noqa: E402
    GRFFNetwork,
    build_image_network,
    build_vector_network,
    evaluate,
    freeze_noise,
    predict,
    predict_resampled,
)
from .training import TrainConfig, train_progressive  # noqa: E402

__all__ = [
    "ConfigError", "DataError", "GRFFError", "LabelError", "NumericalError", "ShapeError",
    "RBFKernelSpec", "rff_map", "rff_map_np", "GRFFNetwork", "build_image_network",
    "build_vector_network", "evaluate", "freeze_noise", "predict", "predict_resampled",
    "TrainConfig", "train_progressive",
]
