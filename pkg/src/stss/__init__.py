"""Space-time supersampling sandbox.

Synthetic G-buffer clip generation, motion-vector warping with SF/EF
scheduling, random reshading masking, masked windowed ReLU linear attention,
a small U-Net assembly, and a CPU training/evaluation harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    InsufficientHistoryError,
    NonFiniteError,
    STSSError,
)
from .tensor import Tensor

__all__ = [
    "Tensor",
    "STSSError",
    "ContractError",
    "NonFiniteError",
    "InsufficientHistoryError",
    "ConfigError",
    "__version__",
]
