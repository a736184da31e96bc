"""Closed-form channel-estimation MSE for diamond pilot patterns with LS
estimation and 2-D linear interpolation.

The analysis region is ``L`` subcarriers by ``T`` symbols. Pilot rows sit at
``t = 0`` (pilots at 0, L) and ``t = t_p`` (pilots at -L/2, L/2, 3L/2).
Subregion 1 covers ``0 <= k <= L/2`` and subregion 2 ``L/2 < k < L`` on the
symbols strictly between the rows. Correlation handles take lags in OFDM
symbols (temporal) and subcarriers (spectral).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_NEG_TOL = 1e-12


class NegativeMseError(ArithmeticError):
    """A closed-form MSE evaluated below zero."""


@dataclass(frozen=True)
class MseContext:
    L: int
    t_p: int
    sigma_p2: float
    sigma_w2: float
    sigma_ici2: float
    r_t: Callable
    r_f: Callable
    T: int | None = None

    def __post_init__(self):
        if self.L < 2 or self.L % 2:
            raise ValueError("L must be even and >= 2")
        if self.t_p < 1:
            raise ValueError("t_p must be >= 1")
        if self.T is None:
            object.__setattr__(self, "T", 2 * self.t_p)
        if self.T <= self.t_p:
            raise ValueError("T must exceed t_p")

    @property
    def noise_ratio(self) -> float:
        if self.sigma_p2 <= 0:
            raise ValueError("pilot power must be positive")
        return (self.sigma_w2 + self.sigma_ici2) / self.sigma_p2


@dataclass(frozen=True)
class MseBreakdown:
    delta_p: float
    delta_fA: float
    delta_1l: float
    delta_2l: float
    delta_1r: float
    delta_2r: float
    delta_avg: float
    delta_d: float


def _checked(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NegativeMseError(f"{what} is not finite: {value}")
    if value < 0:
        if value < -_NEG_TOL:
            raise NegativeMseError(f"{what} evaluated negative: {value:.3e}")
        return 0.0
    return float(value)


def _re_rf(ctx, lag):
    return np.real(ctx.r_f(lag))


def mse_pilot(ctx: MseContext) -> float:
    return _checked(ctx.noise_ratio, "pilot MSE")


def _type_a_coefficients(L: int):
    """Weights of ``R_f(0)``, the pilot noise ratio and ``R_f(L)`` for type-A REs."""
    return (5 * L - 1) / (3 * L), (2 * L - 1) / (3 * L), (L + 1) / (3 * L)


def mse_type_a(ctx: MseContext) -> float:
    """MSE of REs between two pilots on a pilot-bearing symbol."""
    L = ctx.L
    c0, c_noise, c_L = _type_a_coefficients(L)
    i = np.arange(1, L)
    gamma = -2.0 / (L - 1) * np.sum((L - i) / L * _re_rf(ctx, i) + i / L * _re_rf(ctx, i - L))
    value = c0 * np.real(ctx.r_f(0)) + c_noise * ctx.noise_ratio + c_L * _re_rf(ctx, L) + gamma
    return _checked(value, "type-A MSE")


def _lambda(t_p):
    return (2 * t_p - 1) / (6 * t_p)


def _subregion_1(ctx: MseContext, t_p: int) -> float | None:
    L = ctx.L
    if t_p < 2:
        return None
    lam = _lambda(t_p)
    omega = (4 * L + 1) / (3 * L)
    omega_p = (23 * L + 2) / (24 * L)
    rt0 = np.real(ctx.r_t(0))
    rf0 = np.real(ctx.r_f(0))
    rtp = np.real(ctx.r_t(t_p))
    k = np.arange(0, L // 2 + 1)[:, None]
    t = np.arange(1, t_p)[None, :]
    eta = t / t_p
    zeta = k / L
    c1 = 1.0 / ((L // 2 + 1) * (t_p - 1))
    cross = (1 - eta) * np.real(ctx.r_t(t)) * ((1 - zeta) * _re_rf(ctx, k) + zeta * _re_rf(ctx, L - k)) + eta * np.real(
        ctx.r_t(t - t_p)
    ) * ((0.5 - zeta) * _re_rf(ctx, L // 2 + k) + (0.5 + zeta) * _re_rf(ctx, k - L // 2))
    eps = 2 * c1 * np.sum(cross)
    value = (
        (1 + lam * omega) * rf0 * rt0
        + lam * (2 - omega) * rt0 * _re_rf(ctx, L)
        + (1 - 2 * lam) * rtp * (omega_p * _re_rf(ctx, L // 2) + (1 - omega_p) * _re_rf(ctx, 3 * L // 2))
        + lam * omega * ctx.noise_ratio
        - eps
    )
    return _checked(value, "subregion-1 MSE")


def _subregion_2(ctx: MseContext, t_p: int) -> float | None:
    # Same expansion as subregion 1 with the offset-row pilots at L/2 and 3L/2;
    # averaging zeta over L/2 < k < L gives the constants below.
    L = ctx.L
    if t_p < 2 or L < 4:
        return None
    lam = _lambda(t_p)
    omega = (4 * L - 1) / (3 * L)
    omega_p = (23 * L - 2) / (24 * L)
    rt0 = np.real(ctx.r_t(0))
    rf0 = np.real(ctx.r_f(0))
    rtp = np.real(ctx.r_t(t_p))
    k = np.arange(L // 2 + 1, L)[:, None]
    t = np.arange(1, t_p)[None, :]
    eta = t / t_p
    zeta = k / L
    c2 = 1.0 / ((L // 2 - 1) * (t_p - 1))
    cross = (1 - eta) * np.real(ctx.r_t(t)) * ((1 - zeta) * _re_rf(ctx, k) + zeta * _re_rf(ctx, L - k)) + eta * np.real(
        ctx.r_t(t - t_p)
    ) * ((1.5 - zeta) * _re_rf(ctx, k - L // 2) + (zeta - 0.5) * _re_rf(ctx, k - 3 * L // 2))
    eps = 2 * c2 * np.sum(cross)
    value = (
        (1 + lam * omega) * rf0 * rt0
        + lam * (2 - omega) * rt0 * _re_rf(ctx, L)
        + (1 - 2 * lam) * rtp * (omega_p * _re_rf(ctx, L // 2) + (1 - omega_p) * _re_rf(ctx, 3 * L // 2))
        + lam * omega * ctx.noise_ratio
        - eps
    )
    return _checked(value, "subregion-2 MSE")


def mse_subregion_1_left(ctx: MseContext) -> float | None:
    """Average MSE of subregion 1 before the offset pilot row; ``None`` when empty."""
    return _subregion_1(ctx, ctx.t_p)


def mse_subregion_2_left(ctx: MseContext) -> float | None:
    return _subregion_2(ctx, ctx.t_p)


def mse_subregion_right(ctx: MseContext, which: int) -> float | None:
    """Right part of subregion ``which`` (1 or 2): ``t -> -t``, ``t_p -> T - t_p``."""
    t_right = ctx.T - ctx.t_p
    if which == 1:
        return _subregion_1(ctx, t_right)
    if which == 2:
        return _subregion_2(ctx, t_right)
    raise ValueError("which must be 1 or 2")


def region_populations(L: int, t_p: int, T: int | None = None) -> dict:
    """RE counts per class in one ``L x T`` analysis region."""
    T = 2 * t_p if T is None else T
    return {
        "pilot": 2,
        "type_a": 2 * (L - 1),
        "1l": (L // 2 + 1) * (t_p - 1),
        "2l": (L // 2 - 1) * (t_p - 1),
        "1r": (L // 2 + 1) * (T - t_p - 1),
        "2r": (L // 2 - 1) * (T - t_p - 1),
    }


def mse_breakdown(ctx: MseContext) -> MseBreakdown:
    pop = region_populations(ctx.L, ctx.t_p, ctx.T)
    d_p = mse_pilot(ctx)
    d_a = mse_type_a(ctx)
    parts = {
        "1l": mse_subregion_1_left(ctx),
        "2l": mse_subregion_2_left(ctx),
        "1r": mse_subregion_right(ctx, 1),
        "2r": mse_subregion_right(ctx, 2),
    }
    parts = {k: (0.0 if v is None else v) for k, v in parts.items()}
    # delta / C_i equals delta times its population
    data_sum = sum(parts[k] * pop[k] for k in parts) + pop["type_a"] * d_a
    n_region = ctx.L * ctx.T
    d_avg = (data_sum + pop["pilot"] * d_p) / n_region
    d_d = data_sum / (n_region - pop["pilot"])
    return MseBreakdown(d_p, d_a, parts["1l"], parts["2l"], parts["1r"], parts["2r"], float(d_avg), float(d_d))


def mse_data(ctx: MseContext) -> float:
    """Average MSE over the data REs of the analysis region."""
    if ctx.L * ctx.T <= 2:
        raise ValueError("analysis region has no data REs")
    return mse_breakdown(ctx).delta_d


def jakes_handle(f_d: float, T_s: float):
    """Temporal correlation handle with lags in OFDM symbols."""
    from .channel import jakes_correlation

    return lambda lag: jakes_correlation(f_d, np.asarray(lag, dtype=float) * T_s)


def pdp_handle(pdp, f_sub: float):
    """Spectral correlation handle with lags in subcarriers."""
    from .channel import pdp_to_spectral_correlation

    return lambda lag: pdp_to_spectral_correlation(pdp, f_sub, lag)
