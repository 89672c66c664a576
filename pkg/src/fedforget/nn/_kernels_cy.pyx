# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution/pooling kernels.

Mirrors _kernels_py: float32/float64 in, float64 accumulation, input dtype
out. Loops are ordered so the innermost index walks contiguous memory in
both the input and the accumulator.
"""

import numpy as np

cimport cython


ctypedef fused floating:
    float
    double


def conv2d_forward(x, w, bias):
    return _conv2d_forward(np.ascontiguousarray(x), np.ascontiguousarray(w),
                           np.ascontiguousarray(bias))


def _conv2d_forward(const floating[:, :, :, ::1] x, const floating[:, :, :, ::1] w,
                    const floating[::1] bias):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cout = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Ho = H - K + 1, Wo = W - K + 1
    cdef Py_ssize_t b, oc, ic, oh, ow, kh, kw
    cdef double wv, bv

    if floating is float:
        out_np = np.empty((B, Cout, Ho, Wo), dtype=np.float32)
    else:
        out_np = np.empty((B, Cout, Ho, Wo), dtype=np.float64)
    cdef floating[:, :, :, ::1] out = out_np
    acc_np = np.empty((Ho, Wo), dtype=np.float64)
    cdef double[:, ::1] acc = acc_np

    with nogil:
        for b in range(B):
            for oc in range(Cout):
                bv = <double> bias[oc]
                for oh in range(Ho):
                    for ow in range(Wo):
                        acc[oh, ow] = bv
                for ic in range(Cin):
                    for kh in range(K):
                        for kw in range(K):
                            wv = <double> w[oc, ic, kh, kw]
                            for oh in range(Ho):
                                for ow in range(Wo):
                                    acc[oh, ow] = acc[oh, ow] + wv * (<double> x[b, ic, oh + kh, ow + kw])
                for oh in range(Ho):
                    for ow in range(Wo):
                        out[b, oc, oh, ow] = <floating> acc[oh, ow]
    return out_np


def conv2d_backward(x, w, dout):
    return _conv2d_backward(np.ascontiguousarray(x), np.ascontiguousarray(w),
                            np.ascontiguousarray(dout))


def _conv2d_backward(const floating[:, :, :, ::1] x, const floating[:, :, :, ::1] w,
                     const floating[:, :, :, ::1] dout):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Cout = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Ho = H - K + 1, Wo = W - K + 1
    cdef Py_ssize_t b, oc, ic, oh, ow, kh, kw
    cdef double g, wv, s

    dx_np = np.zeros((B, Cin, H, W), dtype=np.float64)
    dw_np = np.zeros((Cout, Cin, K, K), dtype=np.float64)
    db_np = np.zeros(Cout, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_np
    cdef double[:, :, :, ::1] dw = dw_np
    cdef double[::1] db = db_np

    with nogil:
        for b in range(B):
            for oc in range(Cout):
                s = 0.0
                for oh in range(Ho):
                    for ow in range(Wo):
                        s = s + <double> dout[b, oc, oh, ow]
                db[oc] = db[oc] + s
                for ic in range(Cin):
                    for kh in range(K):
                        for kw in range(K):
                            wv = <double> w[oc, ic, kh, kw]
                            s = 0.0
                            for oh in range(Ho):
                                for ow in range(Wo):
                                    g = <double> dout[b, oc, oh, ow]
                                    s = s + g * (<double> x[b, ic, oh + kh, ow + kw])
                                    dx[b, ic, oh + kh, ow + kw] = dx[b, ic, oh + kh, ow + kw] + wv * g
                            dw[oc, ic, kh, kw] = dw[oc, ic, kh, kw] + s

    if floating is float:
        return dx_np.astype(np.float32), dw_np.astype(np.float32), db_np.astype(np.float32)
    return dx_np, dw_np, db_np


def maxpool2_forward(x):
    return _maxpool2_forward(np.ascontiguousarray(x))


def _maxpool2_forward(const floating[:, :, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = H // 2, Wo = W // 2
    cdef Py_ssize_t b, c, oh, ow, r, cc
    cdef floating v, best
    cdef unsigned char besti

    if floating is float:
        out_np = np.empty((B, C, Ho, Wo), dtype=np.float32)
    else:
        out_np = np.empty((B, C, Ho, Wo), dtype=np.float64)
    arg_np = np.empty((B, C, Ho, Wo), dtype=np.uint8)
    cdef floating[:, :, :, ::1] out = out_np
    cdef unsigned char[:, :, :, ::1] arg = arg_np

    with nogil:
        for b in range(B):
            for c in range(C):
                for oh in range(Ho):
                    for ow in range(Wo):
                        best = x[b, c, 2 * oh, 2 * ow]
                        besti = 0
                        for r in range(2):
                            for cc in range(2):
                                v = x[b, c, 2 * oh + r, 2 * ow + cc]
                                if v > best:
                                    best = v
                                    besti = <unsigned char> (2 * r + cc)
                        out[b, c, oh, ow] = best
                        arg[b, c, oh, ow] = besti
    return out_np, arg_np


def maxpool2_backward(x_shape, arg, dout):
    return _maxpool2_backward(x_shape, np.ascontiguousarray(arg),
                              np.ascontiguousarray(dout))


def _maxpool2_backward(x_shape, const unsigned char[:, :, :, ::1] arg,
                       const floating[:, :, :, ::1] dout):
    cdef Py_ssize_t B = x_shape[0], C = x_shape[1], H = x_shape[2], W = x_shape[3]
    cdef Py_ssize_t Ho = H // 2, Wo = W // 2
    cdef Py_ssize_t b, c, oh, ow
    cdef unsigned char a

    if floating is float:
        dx_np = np.zeros((B, C, H, W), dtype=np.float32)
    else:
        dx_np = np.zeros((B, C, H, W), dtype=np.float64)
    cdef floating[:, :, :, ::1] dx = dx_np

    with nogil:
        for b in range(B):
            for c in range(C):
                for oh in range(Ho):
                    for ow in range(Wo):
                        a = arg[b, c, oh, ow]
                        dx[b, c, 2 * oh + (a >> 1), 2 * ow + (a & 1)] = dout[b, c, oh, ow]
    return dx_np
