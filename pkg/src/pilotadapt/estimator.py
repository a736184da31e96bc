"""Receiver channel estimation: LS at pilots, 2-D linear interpolation,
empirical MSE and second-order statistics estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import PilotPattern

PILOT, TYPE_A, SUB1, SUB2, EDGE, NULL = range(6)
CLASS_NAMES = {"pilot": PILOT, "type_a": TYPE_A, "sub1": SUB1, "sub2": SUB2, "edge": EDGE, "null": NULL}
CLASS_GROUPS = {
    "data": (TYPE_A, SUB1, SUB2, EDGE),
    "interior": (TYPE_A, SUB1, SUB2),
    "subregions": (SUB1, SUB2),
}

N_LAGS_F = 62
N_LAGS_T = 40


@dataclass
class ReceivedGrid:
    """Received REs ``Y[rx, k, n]`` and the transmitted pilot symbols ``P[tx, k, n]``."""

    Y: np.ndarray
    P: np.ndarray
    noise_power: float
    ici_power: float = 0.0


@dataclass
class ChannelEstimate:
    """``H_hat[rx, tx, k, n]`` plus RE class tags ``classes[tx, k, n]``."""

    H_hat: np.ndarray
    classes: np.ndarray


@dataclass
class CorrelationEstimate:
    """Normalised correlation vectors laid out over lags ``-n/2 .. n/2 - 1``."""

    r_f: np.ndarray
    r_t: np.ndarray

    @staticmethod
    def lags(n: int) -> np.ndarray:
        return np.arange(-n // 2, n // 2)


def ls_estimate(received: ReceivedGrid, pattern: PilotPattern) -> np.ndarray:
    """Per-pilot LS estimates ``Y / P``; NaN where antenna ``tx`` has no pilot.

    Returns
    -------
    ndarray, shape (n_rx, n_tx, N, T)
    """
    n_rx, N, T = received.Y.shape
    out = np.full((n_rx, pattern.n_tx, N, T), np.nan + 1j * np.nan)
    for a in range(pattern.n_tx):
        mask = pattern.pilot_mask(T, a)
        p = received.P[a][mask]
        if np.any(p == 0):
            raise ValueError("zero pilot symbol")
        out[:, a][:, mask] = received.Y[:, mask] / p
    return out


def _freq_weights(pos: np.ndarray, n_sub: int):
    """Segment index and weight for linear inter/extrapolation along frequency."""
    k = np.arange(n_sub)
    if len(pos) == 1:
        return np.zeros(n_sub, dtype=int), np.zeros(n_sub), np.zeros(n_sub, dtype=bool)
    i = np.clip(np.searchsorted(pos, k, side="right") - 1, 0, len(pos) - 2)
    w = (k - pos[i]) / (pos[i + 1] - pos[i])
    outside = (k < pos[0]) | (k > pos[-1])
    return i, w, outside


def _interp_plan(pattern: PilotPattern, T: int, antenna: int) -> dict:
    """Index and weight arrays for one antenna's interpolation, cached on the pattern."""
    key = ("interp_plan", T, antenna)
    if key in pattern._cache:
        return pattern._cache[key]
    N = pattern.n_subcarriers
    rows = pattern.pilot_rows(T, antenna)
    if len(rows) < 2:
        raise ValueError("need at least two pilot-bearing symbols to interpolate")
    syms = np.array([n for n, _ in rows])
    # rows sharing a position set are frequency-interpolated together
    groups, extrap = {}, np.empty((len(rows), N), dtype=bool)
    for r, (n, pos) in enumerate(rows):
        g = groups.setdefault(id(pos), {"pos": pos, "rows": [], "syms": []})
        g["rows"].append(r)
        g["syms"].append(n)
    plan_groups = []
    for g in groups.values():
        pos = g["pos"]
        i, w, outside = _freq_weights(pos, N)
        extrap[g["rows"]] = outside
        plan_groups.append(
            (pos, np.array(g["rows"]), np.array(g["syms"]), i, np.minimum(i + 1, len(pos) - 1), w)
        )

    n = np.arange(T)
    r0 = np.clip(np.searchsorted(syms, n, side="right") - 1, 0, len(rows) - 1)
    r1 = np.minimum(r0 + 1, len(rows) - 1)
    gap = syms[r1] - syms[r0]
    eta = np.where(gap > 0, (n - syms[r0]) / np.where(gap > 0, gap, 1), 0.0)
    eta = np.clip(eta, 0.0, 1.0)  # hold the nearest row outside the first/last row

    classes = np.empty((N, T), dtype=np.uint8)
    fshift = pattern.antenna_shifts[antenna][0]
    u = (np.arange(N) - pattern.row_offsets[0] - fshift) % pattern.df
    sub = np.where(u <= pattern.df // 2, SUB1, SUB2).astype(np.uint8)
    on_row = np.isin(n, syms)
    outside_time = (n < syms[0]) | (n > syms[-1])
    ex = (extrap[r0] | (extrap[r1] & (eta > 0)[:, None])).T  # (N, T)
    classes[:] = sub[:, None]
    classes[:, on_row] = TYPE_A
    classes[ex] = EDGE
    classes[:, outside_time] = EDGE
    pilots, nulls = pattern.masks(T)
    classes[nulls[antenna]] = NULL
    classes[pilots[antenna]] = PILOT
    classes.flags.writeable = False
    plan = {"groups": plan_groups, "n_rows": len(rows), "r0": r0, "r1": r1, "eta": eta, "classes": classes}
    pattern._cache[key] = plan
    return plan


def _antenna_interp(ls: np.ndarray, pattern: PilotPattern, antenna: int):
    """Interpolate one transmit antenna's LS estimates for all rx at once.

    ``ls`` has shape (n_rx, N, T). Returns (H_hat (n_rx, N, T), classes (N, T)).
    """
    n_rx, N, T = ls.shape
    plan = _interp_plan(pattern, T, antenna)
    F = np.empty((n_rx, plan["n_rows"], N), dtype=complex)
    for pos, rows, syms, i, i1, w in plan["groups"]:
        v = ls[:, pos[:, None], syms[None, :]]  # (n_rx, n_pos, n_rows)
        F[:, rows, :] = ((1 - w)[:, None] * v[:, i, :] + w[:, None] * v[:, i1, :]).transpose(0, 2, 1)
    eta = plan["eta"]
    H = (1 - eta) * F[:, plan["r0"]].transpose(0, 2, 1) + eta * F[:, plan["r1"]].transpose(0, 2, 1)
    return H, plan["classes"]


def interpolate_2d(pilot_estimates: np.ndarray, pattern: PilotPattern, numerology=None) -> ChannelEstimate:
    """Linear interpolation in frequency on every pilot row, then linearly in time.

    REs outside the outermost pilots of a row are linearly extrapolated from
    the two nearest pilots; symbols outside the first/last pilot row reuse
    the nearest row.
    """
    n_rx, n_tx, N, T = pilot_estimates.shape
    H = np.empty(pilot_estimates.shape, dtype=complex)
    classes = np.empty((n_tx, N, T), dtype=np.uint8)
    for a in range(n_tx):
        H[:, a], classes[a] = _antenna_interp(pilot_estimates[:, a], pattern, a)
    return ChannelEstimate(H, classes)


def _class_codes(class_filter):
    if class_filter is None:
        return CLASS_GROUPS["data"]
    if isinstance(class_filter, str):
        if class_filter in CLASS_GROUPS:
            return CLASS_GROUPS[class_filter]
        return (CLASS_NAMES[class_filter],)
    return tuple(CLASS_NAMES[c] if isinstance(c, str) else int(c) for c in class_filter)


def empirical_mse(estimate: ChannelEstimate, truth, class_filter="data") -> float:
    """Mean ``|H - H_hat|^2`` over the selected RE classes and all antenna pairs."""
    H = truth.H if hasattr(truth, "H") else np.asarray(truth)
    if H.shape != estimate.H_hat.shape:
        raise ValueError(f"shape mismatch {H.shape} vs {estimate.H_hat.shape}")
    codes = _class_codes(class_filter)
    sel = np.isin(estimate.classes, codes)  # (n_tx, N, T)
    if not sel.any():
        return float("nan")
    err = np.abs(H - estimate.H_hat) ** 2
    return float(err[:, sel].mean())


def mse_by_class(estimate: ChannelEstimate, truth):
    """``{class_name: (sum_sq_err, count)}`` for accumulation over trials."""
    H = truth.H if hasattr(truth, "H") else np.asarray(truth)
    err = np.abs(H - estimate.H_hat) ** 2
    out = {}
    for name, code in CLASS_NAMES.items():
        sel = estimate.classes == code
        out[name] = (float(err[:, sel].sum()), int(sel.sum()) * err.shape[0])
    return out


def estimate_correlations(H_hat: np.ndarray, n_lags_f: int = N_LAGS_F, n_lags_t: int = N_LAGS_T) -> CorrelationEstimate:
    """Temporal and spectral correlation vectors from an ``N x T`` estimate.

    The i-th super-diagonal of ``H^H H`` (resp. ``H H^H``), averaged over its
    length, gives the value at lag ``-i``; positive lags follow by Hermitian
    symmetry. Both vectors are normalised to 1 at lag 0.
    """
    H_hat = np.asarray(H_hat)
    N, T = H_hat.shape
    if T < n_lags_t or N < n_lags_f:
        raise ValueError(f"need at least {n_lags_f} subcarriers and {n_lags_t} symbols, got {H_hat.shape}")
    if not np.any(H_hat):
        raise ValueError("all-zero channel estimate")
    # super-diagonal j of H H^H: mean_f sum_t H[f, t] conj(H[f + j, t])
    neg_f = kernels.lagged_row_products(H_hat, n_lags_f // 2)
    # super-diagonal i of H^H H: mean_s sum_k conj(H[k, s]) H[k, s + i]
    neg_t = np.conj(kernels.lagged_row_products(H_hat.T, n_lags_t // 2))
    return CorrelationEstimate(_layout(neg_f, n_lags_f), _layout(neg_t, n_lags_t))


def _layout(neg: np.ndarray, n: int) -> np.ndarray:
    """Arrange ``neg[i] = R(-i)`` into the ``[-n/2 .. n/2-1]`` layout, normalised."""
    half = n // 2
    out = np.empty(n, dtype=complex)
    out[: half + 1] = neg[::-1][: half + 1]  # lags -half .. 0
    out[half + 1 :] = np.conj(neg[1:half])  # lags 1 .. half-1
    r0 = out[half].real
    if r0 <= 0:
        raise ValueError("lag-0 power is zero")
    out /= r0
    out[half] = 1.0
    return out
