"""cubecc: a self-contained, desk-scale color constancy toolkit.

Submodules
----------
metrics    reproduction angular error and aggregation statistics
imageio    16-bit PPM I/O, manifests, ISO -> saturation model, clip rule, ROI
analysis   chromaticity scatter, channel-max histograms, saturation clusters
augment    saturation-aware element-wise color augmentation
patches    patch sampling, exact local-mean downscale, .ccpt tensor files
nncore     numpy layer library with hand-derived gradients, .ccnn checkpoints
train      trimmed-MAE training loop, L2, optimizers, model selection
baselines  gray-world and the constant-chromaticity estimator
inference  whole-image prediction and dataset evaluation
synthetic  clip-free synthetic scenes for demos and self-tests
cli        the `cubecc` command
"""

from .metrics import Chromaticity, ErrorStats, aggregate, reproduction_error

__all__ = ["Chromaticity", "ErrorStats", "aggregate", "reproduction_error"]

__version__ = "0.1.0"
