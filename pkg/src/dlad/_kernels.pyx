# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row kernels.

Each function mirrors one in ``dlad._fallback`` and fuses the passes numpy
would otherwise make over the array. Inputs are float64, C-contiguous.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs
from libc.stdint cimport uint64_t

cnp.import_array()


def softmax_rows(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], i, j
    cdef double m, s
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        m = z[i, 0]
        for j in range(1, k):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(k):
            o[i, j] = exp(z[i, j] - m)
            s += o[i, j]
        for j in range(k):
            o[i, j] /= s
    return out


def temperature_softmax_rows(const double[:, ::1] c, double temperature):
    cdef Py_ssize_t n = c.shape[0], k = c.shape[1], i, j
    cdef double m, s
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        m = c[i, 0]
        for j in range(1, k):
            if c[i, j] > m:
                m = c[i, j]
        s = 0.0
        for j in range(k):
            o[i, j] = exp((c[i, j] - m) / temperature)
            s += o[i, j]
        for j in range(k):
            o[i, j] /= s
    return out


def sigmoid(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], i, j
    cdef double e, v
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(k):
            v = z[i, j]
            if v >= 0:
                o[i, j] = 1.0 / (1.0 + exp(-v))
            else:
                e = exp(v)
                o[i, j] = e / (1.0 + e)
    return out


def relu(const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], i, j
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(k):
            o[i, j] = z[i, j] if z[i, j] > 0.0 else 0.0
    return out


def relu_backward(const double[:, ::1] grad, const double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], k = z.shape[1], t
    if grad.shape[0] != n or grad.shape[1] != k:
        raise ValueError("grad and z shapes differ")
    out = np.zeros((n, k), dtype=np.float64)
    if n * k == 0:
        return out
    cdef double[:, ::1] o = out
    # Bit mask instead of a select: gcc keeps the select as a branch here, and
    # random activation signs make that branch mispredict about half the time.
    cdef const uint64_t* g = <const uint64_t*> &grad[0, 0]
    cdef const double* zp = &z[0, 0]
    cdef uint64_t* op = <uint64_t*> &o[0, 0]
    for t in range(n * k):
        op[t] = g[t] & (-<uint64_t>(zp[t] > 0.0))
    return out


def soft_cross_entropy(const double[:, ::1] target, const double[:, ::1] pred, double eps):
    cdef Py_ssize_t n = pred.shape[0], k = pred.shape[1], i, j
    cdef double total = 0.0, row, p
    for i in range(n):
        row = 0.0
        for j in range(k):
            p = pred[i, j]
            if p < eps:
                p = eps
            elif p > 1.0:
                p = 1.0
            row -= target[i, j] * log(p)
        total += row
    return total / n


def weighted_bce(const double[::1] pred, const double[::1] label,
                 const double[::1] weight, double eps):
    cdef Py_ssize_t n = pred.shape[0], i
    cdef double total = 0.0, wsum = 0.0, p
    for i in range(n):
        p = pred[i]
        if p < eps:
            p = eps
        elif p > 1.0 - eps:
            p = 1.0 - eps
        total -= weight[i] * (label[i] * log(p) + (1.0 - label[i]) * log(1.0 - p))
        wsum += weight[i]
    return total / wsum


def mix_rows(const double[:, ::1] weights, const double[:, :, ::1] outputs):
    """weights (m, N), outputs (N, m, L) -> (m, L) with row i = sum_k w[i,k] out[k,i]."""
    cdef Py_ssize_t m = weights.shape[0], nc = weights.shape[1], L = outputs.shape[2]
    cdef Py_ssize_t i, k, j
    cdef double w
    out = np.zeros((m, L), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(m):
        for k in range(nc):
            w = weights[i, k]
            for j in range(L):
                o[i, j] += w * outputs[k, i, j]
    return out
