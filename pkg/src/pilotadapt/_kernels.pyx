# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Results agree with ``_kernels_py`` to rounding."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, M_PI
from scipy.linalg.cython_blas cimport zdotc

cnp.import_array()

# exact phasor refresh interval for the rotation recurrence
cdef enum:
    RESYNC = 256


def sos_taps(double[:, ::1] doppler_hz, double[:, ::1] phases,
             Py_ssize_t n_samples, double sample_period, double t0=0.0):
    """Sum-of-sinusoids fading, one row per tap, unit average power."""
    cdef Py_ssize_t n_taps = doppler_hz.shape[0]
    cdef Py_ssize_t n_sin = doppler_hz.shape[1]
    out = np.zeros((n_taps, n_samples), dtype=np.complex128)
    cdef double[:, ::1] o = out.view(np.float64)
    cdef Py_ssize_t l, m, n, stop
    cdef double ph, zr, zi, rr, ri, tmp, w
    cdef double scale = 1.0 / sqrt(<double>n_sin)
    for l in range(n_taps):
        for m in range(n_sin):
            w = 2.0 * M_PI * doppler_hz[l, m]
            rr = cos(w * sample_period)
            ri = sin(w * sample_period)
            n = 0
            while n < n_samples:
                ph = w * (t0 + n * sample_period) + phases[l, m]
                zr = cos(ph)
                zi = sin(ph)
                stop = min(n + RESYNC, n_samples)
                while n < stop:
                    o[l, 2 * n] += zr
                    o[l, 2 * n + 1] += zi
                    tmp = zr * rr - zi * ri
                    zi = zr * ri + zi * rr
                    zr = tmp
                    n += 1
    out *= scale
    return out


def lagged_row_products(const double complex[:, ::1] a, Py_ssize_t max_lag):
    """r[j] = mean over rows f of sum_c a[f, c] * conj(a[f + j, c])."""
    cdef Py_ssize_t rows = a.shape[0]
    cdef Py_ssize_t cols = a.shape[1]
    out = np.zeros(max_lag + 1, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef double complex* x = <double complex*>&a[0, 0]
    cdef Py_ssize_t j
    cdef int n, inc = 1
    for j in range(max_lag + 1):
        # flattened rows f and f + j are contiguous runs offset by j * cols
        n = <int>((rows - j) * cols)
        # zdotc conjugates its first argument
        o[j] = zdotc(&n, x + j * cols, &inc, x, &inc) / (rows - j)
    return out
