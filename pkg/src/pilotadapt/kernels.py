"""Kernel dispatch: compiled extension when built, numpy otherwise.

Set ``PILOTADAPT_PURE_PYTHON=1`` to force the numpy path.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PILOTADAPT_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def sos_taps(doppler_hz, phases, n_samples, sample_period, t0=0.0):
    """Sum-of-sinusoids fading for several taps.

    Parameters
    ----------
    doppler_hz : ndarray, shape (n_taps, n_sinusoids)
        Doppler shift of every scatterer.
    phases : ndarray, shape (n_taps, n_sinusoids)
        Initial phase of every scatterer.
    n_samples : int
    sample_period : float
        Seconds between samples.
    t0 : float

    Returns
    -------
    ndarray, shape (n_taps, n_samples), complex
    """
    return _impl.sos_taps(doppler_hz, phases, int(n_samples), float(sample_period), float(t0))


def lagged_row_products(a, max_lag):
    """Average lagged inner products between rows of ``a``.

    ``r[j] = mean_f sum_c a[f, c] * conj(a[f + j, c])`` for ``j = 0..max_lag``.
    """
    import numpy as np

    return _impl.lagged_row_products(np.ascontiguousarray(a, dtype=np.complex128), int(max_lag))


def get_backend(name):
    """Return the kernel module for ``name`` ("python" or "cython")."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
