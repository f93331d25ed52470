# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: xoshiro256** stream, SEG epoch loop, Phi sampler.

Semantics are identical to ``seglab._fallback``; integer draws match
bit-for-bit, floating results agree up to summation order in the matvec.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t seglab_mul128(uint64_t a, uint64_t b, uint64_t *lo) {
        unsigned __int128 m = (unsigned __int128)a * (unsigned __int128)b;
        *lo = (uint64_t)m;
        return (uint64_t)(m >> 64);
    }
    """
    uint64_t seglab_mul128(uint64_t a, uint64_t b, uint64_t *lo) nogil

NAME = "cython"

cdef enum:
    US = 0
    RR = 1
    FF = 2
    DSEG = 3


cdef inline uint64_t rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t next_word(uint64_t* s) noexcept nogil:
    cdef uint64_t result = rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


cdef inline uint64_t bounded(uint64_t* s, uint64_t m) noexcept nogil:
    cdef uint64_t lo
    cdef uint64_t hi = seglab_mul128(next_word(s), m, &lo)
    cdef uint64_t threshold
    if lo < m:
        threshold = (0 - m) % m
        while lo < threshold:
            hi = seglab_mul128(next_word(s), m, &lo)
    return hi


cdef inline void shuffle(uint64_t* s, int64_t* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef int64_t tmp
    for i in range(n - 1, 0, -1):
        j = <Py_ssize_t>bounded(s, <uint64_t>(i + 1))
        tmp = a[i]
        a[i] = a[j]
        a[j] = tmp


cdef inline void fill_order(uint64_t* s, int sampling, Py_ssize_t n, int64_t* order) noexcept nogil:
    cdef Py_ssize_t i
    if sampling == US:
        for i in range(n):
            order[i] = <int64_t>bounded(s, <uint64_t>n)
    elif sampling == DSEG:
        for i in range(2 * n):
            order[i] = <int64_t>bounded(s, <uint64_t>n)
    else:
        for i in range(n):
            order[i] = i
        shuffle(s, order, n)
        if sampling == FF:
            for i in range(n):
                order[n + i] = order[n - 1 - i]


def raw_words(uint64_t[::1] state, Py_ssize_t count):
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            view[i] = next_word(&state[0])
    return out


def permutation(uint64_t[::1] state, Py_ssize_t n):
    out = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] view = out
    if n > 1:
        shuffle(&state[0], &view[0], n)
    return out


def steps_per_epoch(int sampling, Py_ssize_t n):
    return 2 * n if sampling == FF else n


def epoch_indices(uint64_t[::1] state, int sampling, Py_ssize_t n):
    """Component order of one epoch; DSEG returns (extrapolation, update) pairs."""
    cdef Py_ssize_t size = 2 * n if sampling in (FF, DSEG) else n
    out = np.empty(size, dtype=np.int64)
    cdef int64_t[::1] view = out
    fill_order(&state[0], sampling, n, &view[0])
    if sampling == DSEG:
        return out.reshape(n, 2)
    return out


cdef inline void affine_step(const double* G, const double* c, const double* src,
                             double* out, const double* base, double h,
                             Py_ssize_t d) noexcept nogil:
    # out = base - h * (G @ src + c)
    cdef Py_ssize_t r, q
    cdef double acc
    for r in range(d):
        acc = 0.0
        for q in range(d):
            acc += G[r * d + q] * src[q]
        out[r] = base[r] - h * (acc + c[r])


def seg_epochs(const double[:, :, ::1] G, const double[:, ::1] c, double[::1] z,
               uint64_t[::1] state, int sampling, bint anchor,
               const double[::1] alphas, const double[::1] betas,
               Py_ssize_t n_epochs):
    """Run ``n_epochs`` SEG epochs in place on ``z``.

    Returns ``(epochs_completed, diverged)``. On divergence ``z`` holds the
    first non-finite iterate and the interrupted epoch is not counted.
    """
    cdef Py_ssize_t n = G.shape[0]
    cdef Py_ssize_t d = G.shape[1]
    cdef Py_ssize_t steps = 2 * n if sampling == FF else n
    if G.shape[2] != d or c.shape[0] != n or c.shape[1] != d or z.shape[0] != d:
        raise ValueError("shape mismatch between G, c and z")
    if alphas.shape[0] < n_epochs * steps or betas.shape[0] < n_epochs * steps:
        raise ValueError("stepsize arrays shorter than n_epochs * steps_per_epoch")
    if sampling < US or sampling > DSEG:
        raise ValueError("unknown sampling code")

    cdef double* w = <double*>malloc(d * sizeof(double))
    cdef double* nxt = <double*>malloc(d * sizeof(double))
    cdef double* start = <double*>malloc(d * sizeof(double))
    cdef int64_t* order = <int64_t*>malloc(2 * n * sizeof(int64_t))
    if w == NULL or nxt == NULL or start == NULL or order == NULL:
        free(w); free(nxt); free(start); free(order)
        raise MemoryError()

    cdef const double* Gp = &G[0, 0, 0]
    cdef const double* cp = &c[0, 0]
    cdef double* zp = &z[0]
    cdef uint64_t* sp = &state[0]
    cdef Py_ssize_t k, s, r, i, j, done = 0
    cdef double a, b
    cdef bint diverged = False

    with nogil:
        for k in range(n_epochs):
            fill_order(sp, sampling, n, order)
            if anchor:
                for r in range(d):
                    start[r] = zp[r]
            for s in range(steps):
                if sampling == DSEG:
                    i = order[2 * s]
                    j = order[2 * s + 1]
                else:
                    i = order[s]
                    j = i
                a = alphas[k * steps + s]
                b = betas[k * steps + s]
                affine_step(Gp + i * d * d, cp + i * d, zp, w, zp, a, d)
                affine_step(Gp + j * d * d, cp + j * d, w, nxt, zp, b, d)
                for r in range(d):
                    zp[r] = nxt[r]
                    if not isfinite(nxt[r]):
                        diverged = True
                if diverged:
                    break
            if diverged:
                break
            if anchor:
                for r in range(d):
                    zp[r] = 0.5 * (zp[r] + start[r])
            done += 1

    free(w); free(nxt); free(start); free(order)
    return done, bool(diverged)


def phi_samples(uint64_t[::1] state, Py_ssize_t n, double nu, Py_ssize_t trials):
    out = np.empty(trials, dtype=np.float64)
    cdef double[::1] view = out
    cdef double q = 1.0 - nu
    cdef Py_ssize_t half = n // 2
    cdef Py_ssize_t t, i
    cdef double acc
    cdef int64_t* signs = <int64_t*>malloc(n * sizeof(int64_t))
    if signs == NULL:
        raise MemoryError()
    with nogil:
        for t in range(trials):
            for i in range(n):
                signs[i] = 1 if i < half else -1
            shuffle(&state[0], signs, n)
            acc = 0.0
            for i in range(n):
                acc = acc * q + <double>signs[i]
            view[t] = acc
    free(signs)
    return out
