# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels (hot path of the training harness).

Same contracts as the numpy fallback: valid correlation over already-padded
inputs, float64 throughout. Inner loops run over the output-channel axis so
both the kernel slice and the output row are contiguous.
"""

import numpy as np


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t b = x.shape[0], h = x.shape[1], wd = x.shape[2], ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], co = w.shape[3]
    if ci != w.shape[2]:
        raise ValueError(f"input has {ci} channels but kernel expects {w.shape[2]}")
    cdef Py_ssize_t oh = (h - kh) // stride + 1
    cdef Py_ssize_t ow = (wd - kw) // stride + 1
    out_arr = np.zeros((b, oh, ow, co), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, i, j, p, q, c, o
    cdef double xv
    for n in range(b):
        for i in range(oh):
            for j in range(ow):
                for p in range(kh):
                    for q in range(kw):
                        for c in range(ci):
                            xv = x[n, i * stride + p, j * stride + q, c]
                            for o in range(co):
                                out[n, i, j, o] += xv * w[p, q, c, o]
    return out_arr


def conv2d_backward_input(double[:, :, :, ::1] grad_out,
                          double[:, :, :, ::1] w, x_shape, int stride):
    cdef Py_ssize_t b = grad_out.shape[0], oh = grad_out.shape[1]
    cdef Py_ssize_t ow = grad_out.shape[2], co = grad_out.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2]
    if co != w.shape[3]:
        raise ValueError(f"grad has {co} channels but kernel produces {w.shape[3]}")
    dx_arr = np.zeros(tuple(x_shape), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t n, i, j, p, q, c, o
    cdef double acc
    for n in range(b):
        for i in range(oh):
            for j in range(ow):
                for p in range(kh):
                    for q in range(kw):
                        for c in range(ci):
                            acc = 0.0
                            for o in range(co):
                                acc += grad_out[n, i, j, o] * w[p, q, c, o]
                            dx[n, i * stride + p, j * stride + q, c] += acc
    return dx_arr


def conv2d_backward_weights(double[:, :, :, ::1] grad_out,
                            double[:, :, :, ::1] x, kernel_hw, int stride):
    cdef Py_ssize_t b = grad_out.shape[0], oh = grad_out.shape[1]
    cdef Py_ssize_t ow = grad_out.shape[2], co = grad_out.shape[3]
    cdef Py_ssize_t kh = kernel_hw[0], kw = kernel_hw[1]
    cdef Py_ssize_t ci = x.shape[3]
    dw_arr = np.zeros((kh, kw, ci, co), dtype=np.float64)
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t n, i, j, p, q, c, o
    cdef double xv
    for n in range(b):
        for i in range(oh):
            for j in range(ow):
                for p in range(kh):
                    for q in range(kw):
                        for c in range(ci):
                            xv = x[n, i * stride + p, j * stride + q, c]
                            for o in range(co):
                                dw[p, q, c, o] += xv * grad_out[n, i, j, o]
    return dw_arr
