"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def sos_taps(doppler_hz, phases, n_samples, sample_period, t0=0.0):
    doppler_hz = np.ascontiguousarray(doppler_hz, dtype=np.float64)
    phases = np.ascontiguousarray(phases, dtype=np.float64)
    out = np.empty((doppler_hz.shape[0], n_samples), dtype=np.complex128)
    chunk = 2048
    for start in range(0, n_samples, chunk):
        n = np.arange(start, min(start + chunk, n_samples))
        t = t0 + n * sample_period
        # (taps, samples, sinusoids)
        arg = 2.0 * np.pi * doppler_hz[:, None, :] * t[None, :, None] + phases[:, None, :]
        out[:, n] = np.exp(1j * arg).sum(axis=2)
    return out / np.sqrt(doppler_hz.shape[1])


def lagged_row_products(a, max_lag):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    rows = a.shape[0]
    out = np.empty(max_lag + 1, dtype=np.complex128)
    for j in range(max_lag + 1):
        # vdot conjugates its first argument
        out[j] = np.vdot(a[j:], a[: rows - j]) / (rows - j)
    return out
