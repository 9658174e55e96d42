# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernel: fused forward, backward and Adam per mini-batch.

Works directly on the network's flat parameter buffer and the flat Adam
moment buffers. Arithmetic follows the numpy kernel step for step; only the
summation order inside dot products differs.
"""

import numpy as np
from libc.math cimport exp, log, sqrt, fabs, pow

NAME = "c"


def train_epoch(net, adam, double[::1] m, double[::1] v, x, y, order, Py_ssize_t batch_size):
    cdef double[::1] theta = net.theta
    cdef double[:, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t[::1] Y = np.ascontiguousarray(y, dtype=np.intp)
    cdef Py_ssize_t[::1] O = np.ascontiguousarray(order, dtype=np.intp)
    cdef Py_ssize_t[:, ::1] L = np.ascontiguousarray(net.layout, dtype=np.intp)
    cdef int fusion = net.spec.fusion.code
    cdef Py_ssize_t n = net.spec.n
    cdef Py_ssize_t h0 = net.spec.hidden_sizes[0]
    cdef Py_ssize_t n_layers = L.shape[0]
    cdef Py_ssize_t n_out = L[n_layers - 1, 2]
    cdef double lr = adam.lr, b1 = adam.beta1, b2 = adam.beta2, eps = adam.eps
    cdef long t = adam.t
    cdef Py_ssize_t N = O.shape[0], P = theta.shape[0]
    cdef Py_ssize_t start, stop, s, i, j, k, row, w_off, b_off, rows, cols, base, nxt
    cdef double acc, zmax, lse, total = 0.0, inv_b, g, bc1, bc2, d

    # layer k reads its input from act[in_off[k] : in_off[k] + L[k, 3]]
    in_off_np = np.zeros(n_layers + 1, dtype=np.intp)
    for k in range(n_layers):
        in_off_np[k + 1] = in_off_np[k] + L[k, 3]
    cdef Py_ssize_t[::1] in_off = in_off_np
    width = int(net.layout[:, 2].max() + net.layout[:, 3].max())
    cdef double[::1] act = np.zeros(in_off_np[n_layers])
    cdef double[::1] logits = np.zeros(n_out)
    cdef double[::1] delta = np.zeros(width)
    cdef double[::1] delta_prev = np.zeros(width)
    cdef double[::1] grad = np.zeros(theta.shape[0])


    start = 0
    while start < N:
        stop = start + batch_size
        if stop > N:
            stop = N
        inv_b = stop - start
        for i in range(P):
            grad[i] = 0.0
        for s in range(start, stop):
            row = O[s]
            # inputs (plus DR outputs for early fusion)
            for i in range(2 * n):
                act[i] = X[row, i]
            if fusion == 1:
                for i in range(n):
                    act[2 * n + i] = fabs(X[row, i] - X[row, n + i])
            # forward
            for k in range(n_layers):
                w_off = L[k, 0]
                b_off = L[k, 1]
                rows = L[k, 2]
                cols = L[k, 3]
                base = in_off[k]
                if k == n_layers - 1:
                    for i in range(rows):
                        acc = 0.0
                        for j in range(cols):
                            acc = acc + theta[w_off + i * cols + j] * act[base + j]
                        logits[i] = acc + theta[b_off + i]
                else:
                    nxt = in_off[k + 1]
                    for i in range(rows):
                        acc = 0.0
                        for j in range(cols):
                            acc = acc + theta[w_off + i * cols + j] * act[base + j]
                        acc = acc + theta[b_off + i]
                        act[nxt + i] = acc if acc > 0.0 else 0.0
                    if k == 0 and fusion == 2:
                        for i in range(n):
                            act[nxt + h0 + i] = fabs(X[row, i] - X[row, n + i])
            # softmax cross-entropy
            zmax = logits[0]
            for i in range(1, n_out):
                if logits[i] > zmax:
                    zmax = logits[i]
            lse = 0.0
            for i in range(n_out):
                lse = lse + exp(logits[i] - zmax)
            lse = log(lse)
            total = total - (logits[Y[row]] - zmax - lse)
            for i in range(n_out):
                d = exp(logits[i] - zmax - lse)
                if i == Y[row]:
                    d = d - 1.0
                delta[i] = d / inv_b
            # backward
            for k in range(n_layers - 1, -1, -1):
                w_off = L[k, 0]
                b_off = L[k, 1]
                rows = L[k, 2]
                cols = L[k, 3]
                base = in_off[k]
                for i in range(rows):
                    d = delta[i]
                    grad[b_off + i] += d
                    for j in range(cols):
                        grad[w_off + i * cols + j] += d * act[base + j]
                if k == 0:
                    break
                # only the learned hidden units upstream carry parameters
                cols = L[k - 1, 2]
                for j in range(cols):
                    if act[base + j] > 0.0:
                        acc = 0.0
                        for i in range(rows):
                            acc = acc + theta[w_off + i * L[k, 3] + j] * delta[i]
                        delta_prev[j] = acc
                    else:
                        delta_prev[j] = 0.0
                for j in range(cols):
                    delta[j] = delta_prev[j]
        # Adam
        t += 1
        bc1 = 1.0 - pow(b1, <double>t)
        bc2 = 1.0 - pow(b2, <double>t)
        for i in range(P):
            g = grad[i]
            m[i] = m[i] * b1 + (1.0 - b1) * g
            v[i] = v[i] * b2 + (1.0 - b2) * (g * g)
            theta[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
        start = stop
    adam.t = t
    return total
