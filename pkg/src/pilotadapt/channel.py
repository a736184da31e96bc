"""WSSUS doubly selective channel model.

Temporal fading follows the Jakes (Clarke) spectrum, frequency selectivity
a tapped delay line. The channel is sampled once per OFDM symbol; ICI is
modelled as an extra additive noise term at the receiver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import j0

from . import kernels
from .grid import OfdmNumerology

SPEED_OF_LIGHT = 3.0e8  # rounded value reproduces the tabulated Doppler frequencies
DEFAULT_TAP_SPACING = 1.0 / (128 * 15e3)  # 520.833 ns


def jakes_correlation(f_d, dt):
    """Temporal correlation ``J0(2 pi f_d dt)`` (``dt`` in seconds)."""
    return j0(2.0 * np.pi * np.asarray(f_d, dtype=float) * np.abs(np.asarray(dt, dtype=float)))


@dataclass(frozen=True)
class DopplerSpec:
    f_d: float

    def __post_init__(self):
        if self.f_d < 0:
            raise ValueError("f_d must be non-negative")

    @classmethod
    def from_speed(cls, speed_kmh: float, fc: float) -> DopplerSpec:
        return cls(speed_kmh / 3.6 * fc / SPEED_OF_LIGHT)


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tap powers (normalised to sum 1) at integer multiples of ``tap_spacing``."""

    tap_powers: tuple
    tap_delays: tuple
    tap_spacing: float = DEFAULT_TAP_SPACING

    def __post_init__(self):
        p = np.asarray(self.tap_powers, dtype=float)
        d = np.asarray(self.tap_delays, dtype=int)
        if p.shape != d.shape or p.ndim != 1 or p.size == 0:
            raise ValueError("tap_powers and tap_delays must be equal-length 1-D sequences")
        if np.any(p < 0) or p.sum() <= 0:
            raise ValueError("tap powers must be non-negative with positive sum")
        if d[0] != 0 or np.any(np.diff(d) <= 0):
            raise ValueError("tap delays must start at 0 and increase strictly")
        object.__setattr__(self, "tap_powers", tuple((p / p.sum()).tolist()))
        object.__setattr__(self, "tap_delays", tuple(int(x) for x in d))

    @classmethod
    def from_amplitudes(cls, amplitudes, delays, tap_spacing=DEFAULT_TAP_SPACING):
        a = np.asarray(amplitudes, dtype=float)
        return cls(tuple(a**2), tuple(delays), tap_spacing)

    @property
    def powers(self) -> np.ndarray:
        return np.asarray(self.tap_powers)

    @property
    def delays_s(self) -> np.ndarray:
        return np.asarray(self.tap_delays) * self.tap_spacing

    @property
    def mean_delay(self) -> float:
        return float(np.dot(self.powers, self.delays_s))

    @property
    def tau_rms(self) -> float:
        second = float(np.dot(self.powers, self.delays_s**2))
        return float(np.sqrt(max(second - self.mean_delay**2, 0.0)))

    @property
    def tau_max(self) -> float:
        return float(self.delays_s[-1])


FLAT_PDP = PowerDelayProfile((1.0,), (0,))


def pdp_to_spectral_correlation(pdp: PowerDelayProfile, f_sub: float, lag):
    """``R_f(lag) = sum_k p_k exp(-j 2 pi lag f_sub tau_k)``; ``lag`` in subcarriers."""
    lag = np.asarray(lag, dtype=float)
    phase = -2j * np.pi * f_sub * np.multiply.outer(lag, pdp.delays_s)
    return np.exp(phase) @ pdp.powers


def _rms_of_decay(beta, k):
    w = np.exp(-beta * k)
    w /= w.sum()
    m = np.dot(w, k)
    return np.sqrt(max(np.dot(w, k * k) - m * m, 0.0))


def exponential_pdp(tau_rms: float, tap_spacing: float = DEFAULT_TAP_SPACING, num_taps: int | None = None):
    """Exponentially decaying PDP on a uniform tap grid with the requested rms delay spread.

    The decay rate is solved numerically so the discrete profile has the
    requested spread; when the grid is too short for that spread the flattest
    achievable profile is returned.
    """
    if tau_rms < 0:
        raise ValueError("tau_rms must be non-negative")
    if num_taps is None:
        num_taps = max(1, int(np.ceil(6.0 * tau_rms / tap_spacing)) + 1)
    target = tau_rms / tap_spacing
    if num_taps == 1 or target < 1e-9:
        return PowerDelayProfile((1.0,), (0,), tap_spacing)
    k = np.arange(num_taps, dtype=float)
    max_spread = _rms_of_decay(0.0, k)
    if target >= max_spread:
        beta = 0.0
    else:
        # spread falls monotonically as the decay rate grows
        beta = brentq(lambda b: _rms_of_decay(b, k) - target, 0.0, 60.0, xtol=1e-14)
    p = np.exp(-beta * k)
    keep = p / p.sum() > 1e-12
    keep[0] = True
    return PowerDelayProfile(tuple(p[keep]), tuple(int(x) for x in k[keep]), tap_spacing)


@dataclass
class ChannelRealization:
    """Frequency response ``H[rx, tx, subcarrier, symbol]`` (unit average power)."""

    H: np.ndarray
    sigma_h2: float = 1.0

    @property
    def n_rx(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]

    def pair(self, rx: int = 0, tx: int = 0) -> np.ndarray:
        return self.H[rx, tx]


def generate_channel(
    pdp: PowerDelayProfile,
    doppler: DopplerSpec,
    numerology: OfdmNumerology,
    n_symbols: int,
    seed=None,
    n_tx: int = 1,
    n_rx: int = 1,
    n_sinusoids: int = 64,
    t0: float = 0.0,
) -> ChannelRealization:
    """Draw one channel realization per antenna pair.

    Each tap's in-phase and quadrature parts are sums of ``n_sinusoids / 2``
    cosines with Doppler shifts ``f_d cos(alpha_m)`` and ``f_d sin(alpha_m)``,
    ``alpha_m = (2 pi m - pi + theta) / (2 n_sinusoids)`` over one quarter
    circle, a random rotation ``theta`` and random phases. The ensemble
    autocorrelation is exactly Jakes and, since all Doppler shifts are
    distinct, time averages of one long realization converge to it as well.
    Antenna pairs are independent.
    """
    if n_symbols < 2:
        raise ValueError("need at least 2 OFDM symbols")
    if n_sinusoids < 2 or n_sinusoids % 2:
        raise ValueError("n_sinusoids must be even and >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_taps = len(pdp.tap_powers)
    n_rows = n_rx * n_tx * n_taps
    half = n_sinusoids // 2
    m = np.arange(1, half + 1)
    theta = rng.uniform(-np.pi, np.pi, size=(n_rows, 1))
    alpha = (2.0 * np.pi * m[None, :] - np.pi + theta) / (4 * half)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(2 * n_rows, half))
    nu = doppler.f_d * np.concatenate([np.cos(alpha), np.sin(alpha)])
    # kernel rows carry 1/sqrt(half) scaling, so each quadrature has power 1/2
    branches = kernels.sos_taps(nu, phases, n_symbols, numerology.symbol_duration, t0).real
    taps = branches[:n_rows] + 1j * branches[n_rows:]
    n_pairs = n_rx * n_tx
    taps = taps.reshape(n_pairs, n_taps, n_symbols) * np.sqrt(pdp.powers)[None, :, None]
    k = np.arange(numerology.num_subcarriers)
    steer = np.exp(-2j * np.pi * numerology.subcarrier_spacing * np.outer(k, pdp.delays_s))
    H = np.einsum("kl,pln->pkn", steer, taps, optimize=True)
    return ChannelRealization(H.reshape(n_rx, n_tx, numerology.num_subcarriers, n_symbols))


def ici_power_bounds(f_d: float, T_s: float, sigma_d2: float = 1.0):
    """Lower and upper bounds on ICI power from Doppler spread.

    Returns
    -------
    (lower, upper)
    """
    x = np.pi * f_d * T_s
    if x >= 0.5 * np.pi:
        raise ValueError("f_d * T_s must be below 0.5")
    upper = sigma_d2 * x**2 / 3.0
    lower = sigma_d2 * (x**2 / 3.0 - x**4 / 90.0)
    return lower, upper


@dataclass(frozen=True)
class Segment:
    t_start: float
    tau_rms: float | None = None  # seconds
    speed_kmh: float = 0.0
    pdp: PowerDelayProfile | None = None


@dataclass(frozen=True)
class ScenarioTimeline:
    """Piecewise-linear trajectory of delay spread and speed, shared by all bands.

    Between breakpoints ``tau_rms`` and speed are interpolated linearly; a
    segment carrying an explicit PDP holds it until the next breakpoint.
    """

    segments: tuple
    bands: tuple = (2.0e9,)
    name: str = "scenario"
    tap_spacing: float = DEFAULT_TAP_SPACING
    _pdp_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("scenario needs at least one segment")
        starts = [s.t_start for s in self.segments]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("segments must be time-ordered")
        if not self.bands:
            raise ValueError("scenario needs at least one band")

    def _bracket(self, t):
        segs = self.segments
        i = 0
        while i + 1 < len(segs) and segs[i + 1].t_start <= t:
            i += 1
        if i + 1 == len(segs):
            return segs[i], segs[i], 0.0
        a, b = segs[i], segs[i + 1]
        span = b.t_start - a.t_start
        return a, b, (t - a.t_start) / span if span > 0 else 0.0

    def speed_at(self, t: float) -> float:
        a, b, w = self._bracket(t)
        return (1 - w) * a.speed_kmh + w * b.speed_kmh

    def tau_rms_at(self, t: float) -> float:
        return self.pdp_at(t).tau_rms

    def doppler_at(self, t: float, fc: float) -> float:
        if fc not in self.bands:
            raise ValueError(f"unknown band {fc}")
        return DopplerSpec.from_speed(self.speed_at(t), fc).f_d

    def pdp_at(self, t: float) -> PowerDelayProfile:
        a, b, w = self._bracket(t)
        if a.pdp is not None:
            return a.pdp
        if b.pdp is not None or b is a:
            tau = a.tau_rms
        else:
            tau = (1 - w) * a.tau_rms + w * b.tau_rms
        key = round(tau * 1e15)
        if key not in self._pdp_cache:
            self._pdp_cache[key] = exponential_pdp(tau, self.tap_spacing)
        return self._pdp_cache[key]

    @classmethod
    def from_dict(cls, d: dict, name: str = "scenario") -> ScenarioTimeline:
        bands = tuple(float(b["f_c_hz"]) for b in d["bands"])
        segs = []
        for s in d["segments"]:
            pdp = None
            if "pdp" in s:
                pdp = PowerDelayProfile(tuple(s["pdp"]["powers"]), tuple(s["pdp"]["delays"]))
            tau = s.get("tau_rms_ns")
            if tau is None and pdp is None:
                raise ValueError("segment needs tau_rms_ns or pdp")
            segs.append(
                Segment(
                    t_start=float(s["t_start_s"]),
                    tau_rms=None if tau is None else float(tau) * 1e-9,
                    speed_kmh=float(s.get("speed_kmh", 0.0)),
                    pdp=pdp,
                )
            )
        return cls(tuple(segs), bands, d.get("name", name))

    def to_dict(self) -> dict:
        segs = []
        for s in self.segments:
            e = {"t_start_s": s.t_start, "speed_kmh": s.speed_kmh}
            if s.tau_rms is not None:
                e["tau_rms_ns"] = s.tau_rms * 1e9
            if s.pdp is not None:
                e["pdp"] = {"powers": list(s.pdp.tap_powers), "delays": list(s.pdp.tap_delays)}
            segs.append(e)
        return {"name": self.name, "bands": [{"f_c_hz": b} for b in self.bands], "segments": segs}

    @classmethod
    def stationary(cls, tau_rms: float, speed_kmh: float, bands=(2.0e9,), pdp=None) -> ScenarioTimeline:
        return cls((Segment(0.0, tau_rms, speed_kmh, pdp),), tuple(bands), "stationary")
