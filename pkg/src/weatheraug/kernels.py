"""Hot sprite kernels, compiled when available.

Set ``WEATHERAUG_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("WEATHERAUG_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _active

    BACKEND = "cython"
except ImportError:
    _active = _pykernels
    BACKEND = "python"

warp_bilinear = _active.warp_bilinear
blend_into = _active.blend_into
project_drops = _active.project_drops


def backend_module(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
