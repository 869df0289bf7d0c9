"""Missing-modality-robust multimodal mmWave beam prediction, end to end:
a numpy autodiff core, sensor preprocessing, the masked-attention fusion
network, synthetic V2I scene generation with a brute-force beam oracle,
and CLI tooling for training and evaluation sweeps."""

from .tensor import Tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "__version__"]
