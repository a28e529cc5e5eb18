"""Label-distribution learning of facial attractiveness scores.

The package trains residual convolutional networks to predict the full
distribution of rater scores for a face, decodes scalar scores as the
distribution's weighted mean, and evaluates with Pearson correlation.
Everything runs on a self-contained numpy autodiff tape.

The LDL_THREADS environment variable (default 1, the reference mode) caps
the numeric library's internal thread pools; it must be decided before numpy
first loads, which is why it is applied here at import time.
"""

import os as _os

_threads = _os.environ.setdefault("LDL_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _threads)
del _os, _threads, _var

from .autodiff import Tensor, no_grad
from .distributions import (
    ScoreScale,
    chebyshev,
    distribution_from_ratings,
    euclidean_loss,
    kl_logit_gradient,
    kl_loss,
    pearson,
    weighted_mean,
)
from .network import Network, NetworkSpec, init_weights, full_scale_spec

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "ScoreScale",
    "chebyshev",
    "distribution_from_ratings",
    "euclidean_loss",
    "kl_logit_gradient",
    "kl_loss",
    "pearson",
    "weighted_mean",
    "Network",
    "NetworkSpec",
    "init_weights",
    "full_scale_spec",
    "__version__",
]
