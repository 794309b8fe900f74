"""Pure-numpy kernel backend (im2col + BLAS).

Reference implementation for the compiled extension and the fallback when
it is not built. Feature maps are channels-first ``(C, H, W)``; conv
weights are ``(out_ch, in_ch, 3, 3)``. All convolutions pad by 1, so
stride 1 preserves the spatial size and stride 2 emits ``ceil(side / 2)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _im2col(x: np.ndarray, stride: int) -> tuple[np.ndarray, int, int]:
    # (Cin, H, W) -> (Ho*Wo, Cin*9) patch matrix
    cin = x.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    return win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * 9), ho, wo


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    cols, ho, wo = _im2col(x, stride)
    cout = w.shape[0]
    y = cols @ w.reshape(cout, -1).T
    return np.ascontiguousarray(y.T.reshape(cout, ho, wo) + b[:, None, None])


def conv3x3_input_grad(
    gy: np.ndarray, w: np.ndarray, stride: int, height: int, width: int
) -> np.ndarray:
    cout, ho, wo = gy.shape
    cin = w.shape[1]
    gcols = w.reshape(cout, -1).T @ gy.reshape(cout, ho * wo)
    gcols = gcols.reshape(cin, 3, 3, ho, wo)
    gx = np.zeros((cin, height + 2, width + 2), dtype=gy.dtype)
    oy = stride * np.arange(ho)
    ox = stride * np.arange(wo)
    for ky in range(3):
        for kx in range(3):
            gx[:, ky + oy[:, None], kx + ox[None, :]] += gcols[:, ky, kx]
    return np.ascontiguousarray(gx[:, 1 : 1 + height, 1 : 1 + width])


def conv3x3_weight_grad(
    gy: np.ndarray, x: np.ndarray, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    cols, ho, wo = _im2col(x, stride)
    cout = gy.shape[0]
    gw = (gy.reshape(cout, ho * wo) @ cols).reshape(cout, x.shape[0], 3, 3)
    gb = gy.sum(axis=(1, 2))
    return np.ascontiguousarray(gw), np.ascontiguousarray(gb)


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pool; odd trailing rows/cols are dropped.

    Returns the pooled map and the int8 argmax index (0..3, row-major
    within each window; first max wins on ties) used by the backward pass.
    """
    c, h, w = x.shape
    he, we = (h // 2) * 2, (w // 2) * 2
    blocks = (
        x[:, :he, :we]
        .reshape(c, he // 2, 2, we // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, he // 2, we // 2, 4)
    )
    idx = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx.astype(np.int8)


def maxpool2x2_backward(
    gy: np.ndarray, idx: np.ndarray, height: int, width: int
) -> np.ndarray:
    c, ho, wo = gy.shape
    gx = np.zeros((c, height, width), dtype=gy.dtype)
    ci = np.arange(c)[:, None, None]
    iy = 2 * np.arange(ho)[None, :, None] + (idx >> 1)
    ix = 2 * np.arange(wo)[None, None, :] + (idx & 1)
    gx[ci, iy, ix] = gy
    return gx
