"""Off-the-shelf ML baselines for plaintext-vs-protected comparisons."""

from .containers import Container, ContainerError, read_container, read_idx_images, read_idx_labels
from .models import BaselineResult, compare_runtime, run_mlp, run_rf_twostep

__version__ = "0.1.0"

__all__ = [
    "BaselineResult",
    "Container",
    "ContainerError",
    "compare_runtime",
    "read_container",
    "read_idx_images",
    "read_idx_labels",
    "run_mlp",
    "run_rf_twostep",
]
