"""Backend selection for the numerical hot kernels.

The compiled extension ``pombo._ckernels`` is used when it imports cleanly;
otherwise the numpy implementations in ``pombo._pykernels`` are used.  Set
``POMBO_PURE_PYTHON=1`` to force the fallback.
"""

import os

from pombo import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from pombo import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and os.environ.get("POMBO_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
    _impl = _ckernels
else:
    BACKEND = "python"
    _impl = _pykernels

v = _impl.v
v_inv = _impl.v_inv
sm_update = _impl.sm_update
posterior_moments = _impl.posterior_moments
vbos_kappa = _impl.vbos_kappa
rloo_standardize = _impl.rloo_standardize
ar_sample = _impl.ar_sample

__all__ = [
    "BACKEND",
    "BACKENDS",
    "v",
    "v_inv",
    "sm_update",
    "posterior_moments",
    "vbos_kappa",
    "rloo_standardize",
    "ar_sample",
]
