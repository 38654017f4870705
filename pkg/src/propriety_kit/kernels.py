"""Backend selection for the quadrature kernel.

The compiled extension is used when it imports; setting
``PROPRIETY_KIT_PURE=1`` forces the numpy implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py

FAMILY_CODES = {"binomial": 0, "bernoulli": 0, "poisson": 1}
LINK_CODES = {"logit": 0, "probit": 1, "log": 2}

python_log_marginal_batch = _kernels_py.log_marginal_batch

try:
    from ._kernels_c import log_marginal_batch as compiled_log_marginal_batch
except ImportError:  # extension not built
    compiled_log_marginal_batch = None

if compiled_log_marginal_batch is not None and os.environ.get("PROPRIETY_KIT_PURE") != "1":
    BACKEND = "cython"
    log_marginal_batch = compiled_log_marginal_batch
else:
    BACKEND = "python"
    log_marginal_batch = python_log_marginal_batch
