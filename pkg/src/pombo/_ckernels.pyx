# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; mirrors ``_pykernels`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh, fabs

cnp.import_array()


cdef inline double _v(double c) nogil:
    cdef double root = sqrt(c * c + 4.0)
    cdef double gap
    if c > 0.0:
        gap = 4.0 / (root + c)
    else:
        gap = root - c
    return exp(-gap * gap / 8.0)


def v(c):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(c, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty(flat.shape[0])
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _v(flat[i])
    return out.reshape(np.shape(c))


def v_inv(u):
    cdef cnp.ndarray[double, ndim=1] flat = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty(flat.shape[0])
    cdef Py_ssize_t i
    cdef double a
    for i in range(flat.shape[0]):
        a = sqrt(-2.0 * log(flat[i]))
        out[i] = 1.0 / a - a
    return out.reshape(np.shape(u))


def sm_update(double[:, ::1] psi_inv, phi_in):
    cdef double[::1] phi = np.ascontiguousarray(phi_in, dtype=np.float64)
    cdef Py_ssize_t d = psi_inv.shape[0]
    cdef double[::1] u = np.empty(d)
    cdef Py_ssize_t i, j
    cdef double acc, denom = 1.0
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += psi_inv[i, j] * phi[j]
        u[i] = acc
    for i in range(d):
        denom += phi[i] * u[i]
    for i in range(d):
        for j in range(d):
            psi_inv[i, j] -= u[i] * u[j] / denom


def posterior_moments(double[:, ::1] psi_inv, centered_in, double nu, double scale, features_in):
    cdef double[::1] centered = np.ascontiguousarray(centered_in, dtype=np.float64)
    cdef double[:, ::1] feats = np.ascontiguousarray(features_in, dtype=np.float64)
    cdef Py_ssize_t n = feats.shape[0], d = feats.shape[1]
    mu_arr = np.empty(n)
    sigma_arr = np.empty(n)
    cdef double[::1] mu = mu_arr
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] w = np.empty(d)
    cdef Py_ssize_t r, i, j
    cdef double m, q, row
    # psi_inv is symmetric, so both products read it row by row
    for i in range(d):
        row = 0.0
        for j in range(d):
            row += psi_inv[i, j] * centered[j]
        w[i] = row
    for r in range(n):
        m = 0.0
        q = 0.0
        for i in range(d):
            row = 0.0
            for j in range(d):
                row += psi_inv[i, j] * feats[r, j]
            m += feats[r, i] * w[i]
            q += feats[r, i] * row
        mu[r] = nu + m
        if q < 0.0:
            q = 0.0
        sigma[r] = scale * sqrt(q)
    return mu_arr, sigma_arr


def vbos_kappa(mu_in, sigma_in, double lo, double hi, double tol, int maxiter):
    cdef double[::1] mu = np.ascontiguousarray(mu_in, dtype=np.float64)
    cdef double[::1] sigma = np.ascontiguousarray(sigma_in, dtype=np.float64)
    cdef Py_ssize_t n = mu.shape[0], i
    cdef int it
    cdef double mid = 0.5 * (lo + hi), g
    for it in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = -1.0
        for i in range(n):
            g += _v((mu[i] - mid) / sigma[i])
        if fabs(g) < tol:
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
    return mid


def rloo_standardize(pseudo_in, double eps):
    cdef double[::1] pseudo = np.ascontiguousarray(pseudo_in, dtype=np.float64)
    cdef Py_ssize_t n = pseudo.shape[0], i
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double total = 0.0, sq = 0.0, scale
    for i in range(n):
        total += pseudo[i]
    for i in range(n):
        out[i] = pseudo[i] - (total - pseudo[i]) / (n - 1)
        sq += out[i] * out[i]
    scale = sqrt(sq / n)
    if scale < eps:
        return np.zeros(n)
    for i in range(n):
        out[i] /= scale
    return out_arr


def ar_sample(double[:, ::1] w1, double[::1] b1, double[:, ::1] w2, double[:, ::1] b2,
              int length, int vocab, double[:, ::1] uniforms):
    cdef Py_ssize_t count = uniforms.shape[0], hidden = b1.shape[0]
    tokens_arr = np.empty((count, length), dtype=np.int64)
    cdef long long[:, ::1] tokens = tokens_arr
    cdef double[::1] pre = np.empty(hidden)
    cdef double[::1] h = np.empty(hidden)
    cdef double[::1] logits = np.empty(vocab)
    cdef Py_ssize_t s, t, i, k, col
    cdef double top, total, cum, u
    for s in range(count):
        for i in range(hidden):
            pre[i] = b1[i]
        for t in range(length):
            for i in range(hidden):
                h[i] = tanh(pre[i] + w1[i, length * vocab + t])
            top = -1e308
            for k in range(vocab):
                cum = b2[t, k]
                for i in range(hidden):
                    cum += w2[k, i] * h[i]
                logits[k] = cum
                if cum > top:
                    top = cum
            total = 0.0
            for k in range(vocab):
                logits[k] = exp(logits[k] - top)
                total += logits[k]
            u = uniforms[s, t]
            cum = 0.0
            col = vocab - 1
            for k in range(vocab):
                cum += logits[k] / total
                if u < cum:
                    col = k
                    break
            tokens[s, t] = col
            for i in range(hidden):
                pre[i] += w1[i, t * vocab + col]
    return tokens_arr
