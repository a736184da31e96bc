"""Codebook-based pilot adaptation.

The receiver maps estimated correlation vectors to the nearest codebook
profiles and feeds back their indices; the transmitter searches a finite
set of pilot configurations for the one maximising the achievable-rate
bound ``S * log2(1 + SINR)`` under those profiles. Codebook indices are
1-based throughout.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .channel import PowerDelayProfile, ici_power_bounds, jakes_correlation, pdp_to_spectral_correlation
from .estimator import N_LAGS_F, N_LAGS_T, CorrelationEstimate
from .grid import OfdmNumerology, PilotConfig, build_pattern, power_allocation, spectrum_utilization
from .mse import MseContext, mse_data

DEFAULT_T_OFDM = 1500


@dataclass(frozen=True)
class ChannelProfileCodebook:
    """Temporal (Doppler) and spectral (delay-profile) correlation profiles.

    Parameters
    ----------
    doppler_hz : tuple of float
        Maximum Doppler frequency of each temporal entry.
    pdps : tuple of PowerDelayProfile
        Delay profile of each spectral entry.
    tau_rms_nominal : tuple of float or None
        Quoted rms delay spread per spectral entry (metadata only).
    """

    doppler_hz: tuple
    pdps: tuple
    tau_rms_nominal: tuple | None = None
    numerology: OfdmNumerology = OfdmNumerology()
    n_lags_f: int = N_LAGS_F
    n_lags_t: int = N_LAGS_T
    name: str = "codebook"

    def __post_init__(self):
        if not self.doppler_hz or not self.pdps:
            raise ValueError("codebook needs at least one temporal and one spectral entry")
        if any(f < 0 for f in self.doppler_hz):
            raise ValueError("Doppler entries must be non-negative")

    @property
    def m_t(self) -> int:
        return len(self.doppler_hz)

    @property
    def m_f(self) -> int:
        return len(self.pdps)

    @cached_property
    def temporal_profiles(self) -> np.ndarray:
        lags = CorrelationEstimate.lags(self.n_lags_t) * self.numerology.symbol_duration
        return np.array([jakes_correlation(f, lags) for f in self.doppler_hz], dtype=complex)

    @cached_property
    def spectral_profiles(self) -> np.ndarray:
        lags = CorrelationEstimate.lags(self.n_lags_f)
        f_sub = self.numerology.subcarrier_spacing
        return np.array([pdp_to_spectral_correlation(p, f_sub, lags) for p in self.pdps])

    def r_t(self, m: int):
        """Temporal correlation handle of entry ``m`` (lag in symbols)."""
        f_d, T_s = self.doppler_hz[m - 1], self.numerology.symbol_duration
        return lambda lag: jakes_correlation(f_d, np.asarray(lag, dtype=float) * T_s)

    def r_f(self, l: int):
        """Spectral correlation handle of entry ``l`` (lag in subcarriers)."""
        pdp, f_sub = self.pdps[l - 1], self.numerology.subcarrier_spacing
        return lambda lag: pdp_to_spectral_correlation(pdp, f_sub, lag)

    def validate(self) -> list:
        """Return a list of problems; empty when the codebook is well formed."""
        problems = []
        t, f = self.temporal_profiles, self.spectral_profiles
        if t.shape[1] != N_LAGS_T:
            problems.append(f"temporal layout length {t.shape[1]} != {N_LAGS_T}")
        if f.shape[1] != N_LAGS_F:
            problems.append(f"spectral layout length {f.shape[1]} != {N_LAGS_F}")
        for name, arr, n in (("temporal", t, self.n_lags_t), ("spectral", f, self.n_lags_f)):
            for i, row in enumerate(arr, start=1):
                if abs(row[n // 2] - 1.0) > 1e-12:
                    problems.append(f"{name} entry {i}: lag-0 value {row[n // 2]:.6g} != 1")
                if not np.all(np.isfinite(row)):
                    problems.append(f"{name} entry {i}: non-finite values")
        return problems

    @classmethod
    def from_dict(cls, d: dict, numerology: OfdmNumerology | None = None) -> ChannelProfileCodebook:
        numerology = numerology or OfdmNumerology()
        try:
            doppler = tuple(float(e["f_d_hz"]) for e in d["temporal"])
            pdps, taus = [], []
            for e in d["spectral"]:
                pdps.append(PowerDelayProfile.from_amplitudes(e["amplitudes"], e["delay_taps"]))
                taus.append(e.get("tau_rms_ns"))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed codebook: missing or invalid field {exc}") from exc
        nominal = None if any(t is None for t in taus) else tuple(float(t) * 1e-9 for t in taus)
        return cls(doppler, tuple(pdps), nominal, numerology, name=d.get("name", "codebook"))

    def to_dict(self) -> dict:
        spectral = []
        for i, p in enumerate(self.pdps):
            e = {"amplitudes": [float(math.sqrt(x)) for x in p.tap_powers], "delay_taps": list(p.tap_delays)}
            if self.tau_rms_nominal is not None:
                e["tau_rms_ns"] = self.tau_rms_nominal[i] * 1e9
            spectral.append(e)
        return {"name": self.name, "temporal": [{"f_d_hz": f} for f in self.doppler_hz], "spectral": spectral}


def load_codebook(path, numerology: OfdmNumerology | None = None) -> ChannelProfileCodebook:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"codebook file not found: {path}")
    try:
        d = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    return ChannelProfileCodebook.from_dict(d, numerology)


def save_codebook(book: ChannelProfileCodebook, path) -> None:
    Path(path).write_text(yaml.safe_dump(book.to_dict(), sort_keys=False))


def default_codebook(numerology: OfdmNumerology | None = None) -> ChannelProfileCodebook:
    """The shipped 6 x 4 codebook."""
    text = resources.files("pilotadapt").joinpath("data/codebook_default.yaml").read_text()
    return ChannelProfileCodebook.from_dict(yaml.safe_load(text), numerology)


@dataclass(frozen=True)
class SearchSpace:
    """Allowed data-to-pilot power ratios (dB) and pilot spacings."""

    rho_db: tuple = tuple(range(-9, 1))
    df: tuple = (2, 4, 6, 8, 10, 12)
    dt: tuple = tuple(range(2, 11))

    def __post_init__(self):
        if not (self.rho_db and self.df and self.dt):
            raise ValueError("search space must be non-empty")
        for df in self.df:
            if df % 2 or df < 2:
                raise ValueError(f"df={df} must be even and >= 2")
        if any(dt < 1 for dt in self.dt):
            raise ValueError("dt must be >= 1")
        if any(r > 0 for r in self.rho_db):
            raise ValueError("rho must not exceed 0 dB")

    @property
    def size(self) -> int:
        return len(self.rho_db) * len(self.df) * len(self.dt)

    def configs(self, avg_power: float = 1.0):
        t_max, f_max = max(self.dt), max(self.df)
        for r, df, dt in itertools.product(self.rho_db, self.df, self.dt):
            yield PilotConfig.from_db(dt, df, r, avg_power=avg_power, t_max=t_max, f_max=f_max)


@dataclass(frozen=True)
class AdaptationDecision:
    l: int
    m: int
    config: PilotConfig
    objective: float
    evaluations: int = 0

    def as_dict(self) -> dict:
        return {
            "l": self.l,
            "m": self.m,
            "rho_db": round(self.config.rho_db, 9),
            "dpf": self.config.df,
            "dpt": self.config.dt,
            "objective": self.objective,
        }


@dataclass(frozen=True)
class SinrContext:
    sigma_d2: float
    sigma_w2: float
    sigma_ici2: float
    delta_d: float
    n_tx: int = 1
    n_rx: int = 1
    sigma_zf: float | None = None

    def __post_init__(self):
        if self.sigma_zf is None:
            if self.n_tx > self.n_rx:
                raise ValueError("zero-forcing needs n_rx >= n_tx")
            object.__setattr__(self, "sigma_zf", float(self.n_rx - self.n_tx + 1))


def posteq_sinr(ctx: SinrContext) -> float:
    """Post-equalisation SINR with imperfect channel knowledge."""
    den = ctx.sigma_w2 + ctx.sigma_ici2 + ctx.sigma_d2 * ctx.delta_d
    if not den > 0:
        raise ValueError("SINR denominator must be positive")
    return ctx.sigma_d2 * ctx.sigma_zf / den


def rate_bound(utilization: float, sinr: float) -> float:
    return utilization * math.log2(1.0 + sinr)


@dataclass(frozen=True)
class LinkContext:
    """What the transmitter knows when choosing a configuration."""

    book: ChannelProfileCodebook
    sigma_w2: float
    n_tx: int = 1
    n_rx: int = 1
    avg_power: float = 1.0
    l: int = 1
    m: int = 1

    @property
    def numerology(self) -> OfdmNumerology:
        return self.book.numerology


@lru_cache(maxsize=65536)
def _mse_affine(book: ChannelProfileCodebook, l: int, m: int, L: int, t_p: int):
    # delta_d is affine in the pilot noise ratio; cache both coefficients
    base = dict(L=L, t_p=t_p, sigma_p2=1.0, sigma_ici2=0.0, r_t=book.r_t(m), r_f=book.r_f(l))
    a = mse_data(MseContext(sigma_w2=0.0, **base))
    b = mse_data(MseContext(sigma_w2=1.0, **base)) - a
    return a, b


def data_mse(book: ChannelProfileCodebook, l: int, m: int, L: int, t_p: int, noise_ratio: float) -> float:
    a, b = _mse_affine(book, l, m, L, t_p)
    return a + b * noise_ratio


@lru_cache(maxsize=4096)
def _pattern(numerology: OfdmNumerology, layout: PilotConfig, n_tx: int):
    return build_pattern(numerology, layout, n_tx)


def objective(config: PilotConfig, ctx: LinkContext) -> float:
    """Achievable-rate bound of ``config`` under codebook profiles ``(ctx.l, ctx.m)``."""
    num = ctx.numerology
    # the layout does not depend on the power split
    pattern = _pattern(num, replace(config, rho=min(1.0, config.rho_max), avg_power=1.0), ctx.n_tx)
    s = spectrum_utilization(pattern)
    sigma_d2, sigma_p2 = power_allocation(pattern, config)
    f_d = ctx.book.doppler_hz[ctx.m - 1]
    ici = ici_power_bounds(f_d, num.symbol_duration, sigma_d2)[0]
    delta_d = data_mse(ctx.book, ctx.l, ctx.m, config.df, config.dt, (ctx.sigma_w2 + ici) / sigma_p2)
    sinr = posteq_sinr(SinrContext(sigma_d2, ctx.sigma_w2, ici, delta_d, ctx.n_tx, ctx.n_rx))
    return rate_bound(s, sinr)


def _tie_key(config: PilotConfig):
    return (config.dt, config.df, config.rho)


def optimize_config(space: SearchSpace, l: int, m: int, ctx: LinkContext) -> AdaptationDecision:
    """Exhaustive search; ties go to larger dt, then larger df, then larger rho."""
    ctx = replace(ctx, l=l, m=m)
    best, best_val, n = None, -math.inf, 0
    for cfg in space.configs(ctx.avg_power):
        try:
            val = objective(cfg, ctx)
        except ValueError:
            # configurations the grid cannot host (e.g. too dense for MIMO)
            continue
        n += 1
        if val > best_val or (val == best_val and _tie_key(cfg) > _tie_key(best)):
            best, best_val = cfg, val
    if best is None:
        raise ValueError("no feasible configuration in the search space")
    return AdaptationDecision(l, m, best, float(best_val), n)


def _nearest(est_vec: np.ndarray, profiles: np.ndarray) -> int:
    d = np.linalg.norm(profiles - est_vec[None, :], axis=1)
    return int(np.argmin(d)) + 1  # argmin keeps the smallest index on ties


def _mode(values) -> int:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def match_codebook(est, book: ChannelProfileCodebook):
    """Nearest spectral and temporal entries ``(l, m)``.

    ``est`` is one CorrelationEstimate or a sequence of them (one per antenna
    pair); in the latter case each index is the mode over pairs.
    """
    ests = [est] if isinstance(est, CorrelationEstimate) else list(est)
    if not ests:
        raise ValueError("no correlation estimates")
    ls, ms = [], []
    for e in ests:
        if len(e.r_f) != book.spectral_profiles.shape[1] or len(e.r_t) != book.temporal_profiles.shape[1]:
            raise ValueError("estimate layout does not match the codebook")
        ls.append(_nearest(np.asarray(e.r_f), book.spectral_profiles))
        ms.append(_nearest(np.asarray(e.r_t), book.temporal_profiles))
    return _mode(ls), _mode(ms)


def feedback_bits(m_t: int, m_f: int) -> int:
    if m_t < 1 or m_f < 1:
        raise ValueError("codebook sizes must be >= 1")
    return math.ceil(math.log2(m_t * m_f))


def ca_feedback_bits(m_t: int, m_f: int, n_b: int) -> int:
    """Bits per update when one temporal index serves all ``n_b`` bands."""
    if min(m_t, m_f, n_b) < 1:
        raise ValueError("arguments must be >= 1")
    return math.ceil(math.log2(m_t * m_f + (n_b - 1) * m_f))


def naive_ca_feedback_bits(m_t: int, m_f: int, n_b: int) -> int:
    if min(m_t, m_f, n_b) < 1:
        raise ValueError("arguments must be >= 1")
    return math.ceil(math.log2(n_b * m_t * m_f))


def feedback_bit_rate(bits: int, t_ofdm: int = DEFAULT_T_OFDM, symbol_duration: float = 71.875e-6) -> float:
    """Feedback rate in bit/s for one update every ``t_ofdm`` symbols."""
    return bits / (t_ofdm * symbol_duration)


def ca_propagate_doppler(m_ref: int, fc_ref: float, fc_target: float, book: ChannelProfileCodebook, bands=None) -> int:
    """Temporal index for ``fc_target`` inferred from the reference band's index."""
    if bands is not None and (fc_ref not in bands or fc_target not in bands):
        raise ValueError(f"unknown band: {fc_ref if fc_ref not in bands else fc_target}")
    if fc_ref <= 0 or fc_target <= 0:
        raise ValueError("carrier frequencies must be positive")
    if fc_target == fc_ref:
        return m_ref
    f_d = book.doppler_hz[m_ref - 1] * fc_target / fc_ref
    return int(np.argmin(np.abs(np.asarray(book.doppler_hz) - f_d))) + 1


def base_config(avg_power: float = 1.0) -> PilotConfig:
    """Configuration used before the first feedback arrives."""
    return PilotConfig.from_db(4, 6, -3.0, avg_power=avg_power)


__all__ = [
    "ChannelProfileCodebook",
    "SearchSpace",
    "AdaptationDecision",
    "SinrContext",
    "LinkContext",
    "default_codebook",
    "load_codebook",
    "save_codebook",
    "match_codebook",
    "posteq_sinr",
    "objective",
    "optimize_config",
    "feedback_bits",
    "ca_feedback_bits",
    "naive_ca_feedback_bits",
    "feedback_bit_rate",
    "ca_propagate_doppler",
    "data_mse",
    "base_config",
]
