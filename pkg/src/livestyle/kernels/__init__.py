"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The Cython extension ``_native`` is used when it was built; otherwise the
im2col-based ``_numpy`` backend takes over. Both expose the same five
functions with identical semantics. Select explicitly with
``use_backend("native"|"numpy")`` or the ``LIVESTYLE_KERNELS`` environment
variable; the choice is process-wide.

Everything else in the engine (activations, normalization, resampling)
is cheap vectorized numpy and lives outside the backend switch.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

try:
    from . import _native
except ImportError:
    _native = None

_BACKENDS = {"numpy": _numpy}
if _native is not None:
    _BACKENDS["native"] = _native

_active = _BACKENDS.get(os.environ.get("LIVESTYLE_KERNELS", ""), None)
if _active is None:
    _active = _BACKENDS.get("native", _numpy)


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend_name() -> str:
    return _active.NAME


def use_backend(name: str) -> None:
    """Switch the process-wide kernel backend ("native" or "numpy")."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {available_backends()}")
    _active = _BACKENDS[name]


def _prep(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x)


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """3x3 convolution, padding 1, stride 1 or 2. x: (Cin,H,W), w: (Cout,Cin,3,3)."""
    return _active.conv3x3_forward(_prep(x), _prep(w), _prep(b), stride)


def conv3x3_input_grad(
    gy: np.ndarray, w: np.ndarray, stride: int, height: int, width: int
) -> np.ndarray:
    return _active.conv3x3_input_grad(_prep(gy), _prep(w), stride, height, width)


def conv3x3_weight_grad(gy: np.ndarray, x: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    return _active.conv3x3_weight_grad(_prep(gy), _prep(x), stride)


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _active.maxpool2x2_forward(_prep(x))


def maxpool2x2_backward(gy: np.ndarray, idx: np.ndarray, height: int, width: int) -> np.ndarray:
    return _active.maxpool2x2_backward(_prep(gy), _prep(idx), height, width)
