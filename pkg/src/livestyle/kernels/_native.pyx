# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend: direct C loops for the conv/pool hot paths.

Semantics match ``_numpy`` exactly (same shapes, padding and tie-breaking);
parity is enforced by tests. Loops are arranged row-wise so the innermost
loop runs contiguously over output columns and auto-vectorizes. Supports
float32 and float64 maps.
"""

import numpy as np

cimport cython

NAME = "native"

ctypedef fused real_t:
    float
    double


cdef inline Py_ssize_t _ox_lo(Py_ssize_t kx, Py_ssize_t stride) noexcept nogil:
    # smallest ox with ox*stride + kx - 1 >= 0
    if kx >= 1:
        return 0
    return (stride - kx) // stride  # kx = 0 -> ceil(1/stride)


cdef inline Py_ssize_t _ox_hi(Py_ssize_t kx, Py_ssize_t stride, Py_ssize_t wd,
                              Py_ssize_t wo) noexcept nogil:
    # largest ox with ox*stride + kx - 1 <= wd - 1
    cdef Py_ssize_t hi = (wd - kx) // stride
    if hi > wo - 1:
        hi = wo - 1
    return hi


def conv3x3_forward(const real_t[:, :, ::1] x, const real_t[:, :, :, ::1] w,
                    const real_t[::1] b, int stride=1):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0]
    cdef Py_ssize_t ho = (h - 1) // stride + 1
    cdef Py_ssize_t wo = (wd - 1) // stride + 1
    if real_t is float:
        y_arr = np.empty((cout, ho, wo), dtype=np.float32)
    else:
        y_arr = np.empty((cout, ho, wo), dtype=np.float64)
    cdef real_t[:, :, ::1] y = y_arr
    cdef Py_ssize_t oc, oy, ox, ic, ky, kx, iy, lo, hi, base
    cdef real_t wv, bv
    with nogil:
        for oc in range(cout):
            bv = b[oc]
            for oy in range(ho):
                for ox in range(wo):
                    y[oc, oy, ox] = bv
                for ic in range(cin):
                    for ky in range(3):
                        iy = oy * stride - 1 + ky
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(3):
                            wv = w[oc, ic, ky, kx]
                            lo = _ox_lo(kx, stride)
                            hi = _ox_hi(kx, stride, wd, wo)
                            base = kx - 1
                            for ox in range(lo, hi + 1):
                                y[oc, oy, ox] += wv * x[ic, iy, ox * stride + base]
    return y_arr


def conv3x3_input_grad(const real_t[:, :, ::1] gy, const real_t[:, :, :, ::1] w,
                       int stride, Py_ssize_t height, Py_ssize_t width):
    cdef Py_ssize_t cout = gy.shape[0], ho = gy.shape[1], wo = gy.shape[2]
    cdef Py_ssize_t cin = w.shape[1]
    if real_t is float:
        gx_arr = np.zeros((cin, height, width), dtype=np.float32)
    else:
        gx_arr = np.zeros((cin, height, width), dtype=np.float64)
    cdef real_t[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t oc, oy, ox, ic, ky, kx, iy, lo, hi, base
    cdef real_t wv
    with nogil:
        for oc in range(cout):
            for oy in range(ho):
                for ic in range(cin):
                    for ky in range(3):
                        iy = oy * stride - 1 + ky
                        if iy < 0 or iy >= height:
                            continue
                        for kx in range(3):
                            wv = w[oc, ic, ky, kx]
                            lo = _ox_lo(kx, stride)
                            hi = _ox_hi(kx, stride, width, wo)
                            base = kx - 1
                            for ox in range(lo, hi + 1):
                                gx[ic, iy, ox * stride + base] += wv * gy[oc, oy, ox]
    return gx_arr


def conv3x3_weight_grad(const real_t[:, :, ::1] gy, const real_t[:, :, ::1] x, int stride):
    cdef Py_ssize_t cout = gy.shape[0], ho = gy.shape[1], wo = gy.shape[2]
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2]
    if real_t is float:
        gw_arr = np.zeros((cout, cin, 3, 3), dtype=np.float32)
        gb_arr = np.zeros(cout, dtype=np.float32)
    else:
        gw_arr = np.zeros((cout, cin, 3, 3), dtype=np.float64)
        gb_arr = np.zeros(cout, dtype=np.float64)
    cdef real_t[:, :, :, ::1] gw = gw_arr
    cdef real_t[::1] gb = gb_arr
    cdef Py_ssize_t oc, oy, ox, ic, ky, kx, iy, lo, hi, base
    cdef real_t acc, gbacc
    with nogil:
        for oc in range(cout):
            gbacc = 0
            for oy in range(ho):
                for ox in range(wo):
                    gbacc += gy[oc, oy, ox]
            gb[oc] = gbacc
            for ic in range(cin):
                for ky in range(3):
                    for kx in range(3):
                        acc = 0
                        lo = _ox_lo(kx, stride)
                        hi = _ox_hi(kx, stride, wd, wo)
                        base = kx - 1
                        for oy in range(ho):
                            iy = oy * stride - 1 + ky
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(lo, hi + 1):
                                acc += gy[oc, oy, ox] * x[ic, iy, ox * stride + base]
                        gw[oc, ic, ky, kx] = acc
    return gw_arr, gb_arr


def maxpool2x2_forward(const real_t[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = h // 2, wo = w // 2
    if real_t is float:
        y_arr = np.empty((c, ho, wo), dtype=np.float32)
    else:
        y_arr = np.empty((c, ho, wo), dtype=np.float64)
    idx_arr = np.empty((c, ho, wo), dtype=np.int8)
    cdef real_t[:, :, ::1] y = y_arr
    cdef signed char[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t ci, oy, ox, k
    cdef real_t best, v
    cdef signed char best_k
    with nogil:
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[ci, 2 * oy, 2 * ox]
                    best_k = 0
                    for k in range(1, 4):
                        v = x[ci, 2 * oy + (k >> 1), 2 * ox + (k & 1)]
                        if v > best:
                            best = v
                            best_k = <signed char>k
                    y[ci, oy, ox] = best
                    idx[ci, oy, ox] = best_k
    return y_arr, idx_arr


def maxpool2x2_backward(const real_t[:, :, ::1] gy, const signed char[:, :, ::1] idx,
                        Py_ssize_t height, Py_ssize_t width):
    cdef Py_ssize_t c = gy.shape[0], ho = gy.shape[1], wo = gy.shape[2]
    if real_t is float:
        gx_arr = np.zeros((c, height, width), dtype=np.float32)
    else:
        gx_arr = np.zeros((c, height, width), dtype=np.float64)
    cdef real_t[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t ci, oy, ox
    cdef signed char k
    with nogil:
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    k = idx[ci, oy, ox]
                    gx[ci, 2 * oy + (k >> 1), 2 * ox + (k & 1)] = gy[ci, oy, ox]
    return gx_arr
