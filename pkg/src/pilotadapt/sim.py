"""Closed-loop link-level Monte Carlo.

Each trial runs a sequence of epochs of ``t_ofdm`` OFDM symbols. Per epoch the
true channel is drawn from the scenario's statistics at the epoch start, the
receiver estimates it (LS plus 2-D linear interpolation) and the achievable
rate is evaluated with the measured data-RE MSE. Adaptive strategies then
estimate the correlation vectors, feed back codebook indices and the
transmitter applies the optimised configuration from the next epoch on.
All strategies and SNR points of one trial see the same channel and noise
draws.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import adapt
from .adapt import ChannelProfileCodebook, LinkContext, SearchSpace
from .channel import DopplerSpec, ScenarioTimeline, generate_channel, ici_power_bounds
from .estimator import (
    CLASS_GROUPS,
    ReceivedGrid,
    estimate_correlations,
    interpolate_2d,
    ls_estimate,
)
from .grid import (
    OfdmNumerology,
    PilotConfig,
    build_pattern,
    db2lin,
    lte_normal_cp_pattern,
    power_allocation,
    spectrum_utilization,
)
from .mse import MseContext, jakes_handle, mse_breakdown

MODES = {"siso": (1, 1), "mimo4x4": (4, 4)}
CSV_COLUMNS = (
    "run_id",
    "band_hz",
    "mode",
    "strategy",
    "snr_db",
    "epoch",
    "rate_bps_hz",
    "rate_ci",
    "dpf",
    "dpt",
    "rho_db",
    "l",
    "m",
)
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class Strategy:
    """``kind`` is ``"adaptive"``, ``"fixed"`` (diamond ``config``) or ``"lte"``."""

    name: str
    kind: str
    config: PilotConfig | None = None

    def __post_init__(self):
        if self.kind not in ("adaptive", "fixed", "lte"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "fixed" and self.config is None:
            raise ValueError("fixed strategy needs a config")

    @classmethod
    def adaptive(cls) -> Strategy:
        return cls("adaptive", "adaptive")

    @classmethod
    def lte(cls) -> Strategy:
        return cls("lte", "lte", PilotConfig(dt=4, df=6, rho=float(db2lin(-3.0))))

    @classmethod
    def fixed(cls, dt: int, df: int, rho_db: float, name: str | None = None) -> Strategy:
        return cls(name or f"fixed({df},{dt},{rho_db:g})", "fixed", PilotConfig.from_db(dt, df, rho_db))


@dataclass(frozen=True)
class SimulationRun:
    scenario: ScenarioTimeline
    bands: tuple = (2.0e9,)
    mode: str = "siso"
    strategies: tuple = (Strategy.adaptive(), Strategy.lte())
    snr_db: tuple = tuple(range(-3, 34, 3))
    trials: int = 20
    epochs: int = 10
    seed: int = 0
    t_ofdm: int = adapt.DEFAULT_T_OFDM
    numerology: OfdmNumerology = OfdmNumerology()
    codebook: ChannelProfileCodebook | None = None
    space: SearchSpace = SearchSpace()
    baseline: str = "lte"
    run_id: str = "run"
    n_sinusoids: int = 64

    def __post_init__(self):
        if self.trials < 1 or self.epochs < 1:
            raise ValueError("trials and epochs must be >= 1")
        if not self.snr_db:
            raise ValueError("snr grid must be non-empty")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {sorted(MODES)}")
        for b in self.bands:
            if b not in self.scenario.bands:
                raise ValueError(f"band {b} not in scenario bands {self.scenario.bands}")
        if self.codebook is None:
            object.__setattr__(self, "codebook", adapt.default_codebook(self.numerology))
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ValueError("strategy names must be unique")

    @property
    def n_tx(self) -> int:
        return MODES[self.mode][0]

    @property
    def n_rx(self) -> int:
        return MODES[self.mode][1]

    @property
    def epoch_duration(self) -> float:
        return self.t_ofdm * self.numerology.symbol_duration


@dataclass
class ThroughputReport:
    """Per-trial rates ``rates[band][trial, strategy, snr, epoch]`` and derived summaries."""

    run: SimulationRun
    rates: dict
    configs: dict
    indices: dict
    decisions: list
    energy_error: float
    feedback_bits: int
    feedback_bps: float
    naive_feedback_bits: int | None = None
    aggregate: np.ndarray | None = None

    def _agg(self):
        if self.aggregate is not None:
            return self.aggregate
        return np.mean([self.rates[b] for b in self.run.bands], axis=0)

    def mean_rate(self, strategy: str, band=None) -> np.ndarray:
        """Mean rate per SNR point (over trials and epochs)."""
        arr = self._agg() if band is None else self.rates[band]
        i = self._strategy_index(strategy)
        return arr[:, i].mean(axis=(0, 2))

    def rate_ci(self, strategy: str, band=None) -> np.ndarray:
        arr = self._agg() if band is None else self.rates[band]
        per_trial = arr[:, self._strategy_index(strategy)].mean(axis=2)
        return _half_width(per_trial)

    def _strategy_index(self, name):
        for i, s in enumerate(self.run.strategies):
            if s.name == name:
                return i
        raise KeyError(name)

    def gain_per_snr(self, strategy: str = "adaptive", baseline: str | None = None, band=None) -> np.ndarray:
        """Percent gain of ``strategy`` over ``baseline`` at each SNR point."""
        base = self.mean_rate(baseline or self.run.baseline, band)
        return 100.0 * (self.mean_rate(strategy, band) / base - 1.0)

    def gain(self, strategy: str = "adaptive", baseline: str | None = None, band=None) -> float:
        """SNR-averaged percent gain."""
        return float(np.mean(self.gain_per_snr(strategy, baseline, band)))

    def csv_rows(self) -> list:
        run = self.run
        rows = []
        groups = [(b, self.rates[b]) for b in run.bands]
        if len(run.bands) > 1:
            groups.append((0.0, self._agg()))
        for band, arr in groups:
            for si, s in enumerate(run.strategies):
                for qi, snr in enumerate(run.snr_db):
                    for e in range(run.epochs):
                        vals = arr[:, si, qi, e]
                        cfg = self.configs.get(band, {}).get((s.name, qi, e))
                        idx = self.indices.get(band, {}).get((s.name, qi, e))
                        rows.append(
                            {
                                "run_id": run.run_id,
                                "band_hz": band,
                                "mode": run.mode,
                                "strategy": s.name,
                                "snr_db": snr,
                                "epoch": e,
                                "rate_bps_hz": float(vals.mean()),
                                "rate_ci": float(_half_width(vals)),
                                "dpf": "" if cfg is None else cfg[0],
                                "dpt": "" if cfg is None else cfg[1],
                                "rho_db": "" if cfg is None else cfg[2],
                                "l": "" if idx is None else idx[0],
                                "m": "" if idx is None else idx[1],
                            }
                        )
        return rows

    def summary(self) -> dict:
        run = self.run
        out = {
            "run_id": run.run_id,
            "scenario": run.scenario.name,
            "mode": run.mode,
            "bands_hz": list(run.bands),
            "snr_db": list(run.snr_db),
            "trials": run.trials,
            "epochs": run.epochs,
            "seed": run.seed,
            "mean_rate_bps_hz": {s.name: self.mean_rate(s.name).tolist() for s in run.strategies},
            "rate_ci": {s.name: self.rate_ci(s.name).tolist() for s in run.strategies},
            "feedback_bits": self.feedback_bits,
            "feedback_bps": self.feedback_bps,
            "energy_audit_max_rel_error": self.energy_error,
        }
        if self.naive_feedback_bits is not None:
            out["naive_feedback_bits"] = self.naive_feedback_bits
        names = [s.name for s in run.strategies]
        if "adaptive" in names and run.baseline in names:
            out["gain_vs_lte_pct"] = self.gain("adaptive", run.baseline)
            out["gain_vs_lte_pct_per_snr"] = self.gain_per_snr("adaptive", run.baseline).tolist()
            if len(run.bands) > 1:
                out["gain_vs_lte_pct_per_band"] = {str(b): self.gain("adaptive", run.baseline, b) for b in run.bands}
            out["gain_vs_baselines_pct"] = {
                s.name: self.gain("adaptive", s.name) for s in run.strategies if s.kind != "adaptive"
            }
        return out


def _half_width(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1:]) if samples.ndim > 1 else 0.0
    return _Z95 * samples.std(axis=0, ddof=1) / math.sqrt(n)


class _PatternCache:
    """Patterns, masks and powers per (strategy kind, config), built lazily."""

    def __init__(self, numerology, n_tx, n_symbols):
        self.numerology, self.n_tx, self.n_symbols = numerology, n_tx, n_symbols
        self._store = {}

    def get(self, kind, config):
        key = (kind, config)
        if key not in self._store:
            if kind == "lte":
                pattern = lte_normal_cp_pattern(self.numerology, self.n_tx)
            else:
                pattern = build_pattern(self.numerology, config, self.n_tx)
            pilots, nulls = pattern.masks(self.n_symbols)
            sigma_d2, sigma_p2 = power_allocation(pattern, config)
            tx_power = np.where(pilots, sigma_p2, np.where(nulls, 0.0, sigma_d2))
            self._store[key] = {
                "pattern": pattern,
                "pilots": pilots,
                "sigma_d2": sigma_d2,
                "sigma_p2": sigma_p2,
                "symbol_power": tx_power.mean(axis=(0, 1)),
                "energy_error": _energy_error(tx_power, pattern, config),
                "S": spectrum_utilization(pattern),
            }
        return self._store[key]


def _energy_error(tx_power, pattern, config) -> float:
    """Worst relative deviation of per-antenna resource-block energy from budget."""
    budget = pattern.rb_size * config.avg_power
    n_full = tx_power.shape[2] // pattern.period
    if n_full == 0:
        return 0.0
    worst = 0.0
    for a in range(tx_power.shape[0]):
        blocks = tx_power[a, :, : n_full * pattern.period].reshape(tx_power.shape[1], n_full, pattern.period)
        worst = max(worst, float(np.max(np.abs(blocks.sum(axis=(0, 2)) - budget)) / budget))
    return worst


def transmit_and_estimate(H, entry, sigma_w2, ici_ratio, noise, ici_noise):
    """Received pilots through ``H`` and the interpolated estimate.

    ``noise`` and ``ici_noise`` are unit-power complex Gaussian arrays shaped
    like the received grid. ICI power on symbol ``n`` is ``ici_ratio`` times
    the mean transmitted RE power of that symbol.
    """
    P = np.sqrt(entry["sigma_p2"]) * entry["pilots"]
    Y = np.einsum("rakn,akn->rkn", H, P)
    Y += math.sqrt(sigma_w2) * noise
    ici_amp = np.sqrt(ici_ratio * entry["symbol_power"])
    Y += ici_amp[None, None, :] * ici_noise
    ici_mean = ici_ratio * float(entry["symbol_power"].mean())
    received = ReceivedGrid(Y, P.astype(complex), sigma_w2, ici_mean)
    return interpolate_2d(ls_estimate(received, entry["pattern"]), entry["pattern"])


def _data_mse(estimate, H, group="data") -> float:
    sel = np.isin(estimate.classes, CLASS_GROUPS[group])
    d = H - estimate.H_hat
    err = (d.real**2 + d.imag**2).sum(axis=0)  # summed over rx
    return float(err[sel].sum() / (sel.sum() * H.shape[0]))


def _unit_noise(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def _rng(run: SimulationRun, trial: int, band: float, epoch: int, stream: int):
    b = run.scenario.bands.index(band)
    return np.random.default_rng([run.seed, trial, b, epoch, stream])


def _epoch_channel(run: SimulationRun, trial, band, epoch):
    t = epoch * run.epoch_duration
    num = run.numerology.with_center_frequency(band)
    f_d = run.scenario.doppler_at(t, band)
    H = generate_channel(
        run.scenario.pdp_at(t),
        DopplerSpec(f_d),
        num,
        run.t_ofdm,
        seed=_rng(run, trial, band, epoch, 0),
        n_tx=run.n_tx,
        n_rx=run.n_rx,
        n_sinusoids=run.n_sinusoids,
    ).H
    nrng = _rng(run, trial, band, epoch, 1)
    shape = (run.n_rx, run.numerology.num_subcarriers, run.t_ofdm)
    return H, f_d, _unit_noise(nrng, shape), _unit_noise(nrng, shape)


def _rate(entry, sigma_w2, f_d, delta_d, run):
    sigma_d2 = entry["sigma_d2"]
    ici = ici_power_bounds(f_d, run.numerology.symbol_duration, sigma_d2)[0]
    ctx = adapt.SinrContext(sigma_d2, sigma_w2, ici, delta_d, run.n_tx, run.n_rx)
    return run.n_tx * adapt.rate_bound(entry["S"], adapt.posteq_sinr(ctx))


def _config_tuple(strategy, config):
    if strategy.kind == "lte":
        return (6, 3.5, -3.0)
    return (config.df, config.dt, round(config.rho_db, 6))


def _run_trial(run: SimulationRun, trial: int) -> dict:
    """One trial over all bands. The highest band is the feedback reference."""
    n_s, n_q, n_e = len(run.strategies), len(run.snr_db), run.epochs
    bands = sorted(run.bands)
    ref = bands[-1]
    caches = {b: _PatternCache(run.numerology.with_center_frequency(b), run.n_tx, run.t_ofdm) for b in bands}
    rates = {b: np.zeros((n_s, n_q, n_e)) for b in bands}
    configs = {b: {} for b in bands}
    indices = {b: {} for b in bands}
    decisions = []
    energy = 0.0
    base = adapt.base_config()
    current = {
        (b, si, qi): (s.config if s.kind != "adaptive" else base)
        for b in bands
        for si, s in enumerate(run.strategies)
        for qi in range(n_q)
    }
    last_idx = {}
    for e in range(n_e):
        draws = {b: _epoch_channel(run, trial, b, e) for b in bands}
        for si, s in enumerate(run.strategies):
            for qi, snr in enumerate(run.snr_db):
                sigma_w2 = 1.0 / float(db2lin(snr))
                est_ref = None
                for b in bands:
                    H, f_d, noise, ici_noise = draws[b]
                    cfg = current[(b, si, qi)]
                    entry = caches[b].get(s.kind, cfg)
                    energy = max(energy, entry["energy_error"])
                    ratio = ici_power_bounds(f_d, run.numerology.symbol_duration)[0]
                    est = transmit_and_estimate(H, entry, sigma_w2, ratio, noise, ici_noise)
                    delta_d = _data_mse(est, H)
                    rates[b][si, qi, e] = _rate(entry, sigma_w2, f_d, delta_d, run)
                    configs[b][(s.name, qi, e)] = _config_tuple(s, cfg)
                    if s.kind == "adaptive" and (b, si, qi) in last_idx:
                        indices[b][(s.name, qi, e)] = last_idx[(b, si, qi)]
                    if b == ref:
                        est_ref = est
                if s.kind != "adaptive":
                    continue
                # receiver: statistics from the reference band only
                n_rx, n_tx = est_ref.H_hat.shape[:2]
                corr = [estimate_correlations(est_ref.H_hat[r, a]) for r in range(n_rx) for a in range(n_tx)]
                l, m_ref = adapt.match_codebook(corr, run.codebook)
                # transmitter: per-band optimum from the fed-back indices
                for b in bands:
                    m = adapt.ca_propagate_doppler(m_ref, ref, b, run.codebook, run.bands)
                    link = LinkContext(run.codebook, sigma_w2, run.n_tx, run.n_rx)
                    d = adapt.optimize_config(run.space, l, m, link)
                    current[(b, si, qi)] = d.config
                    last_idx[(b, si, qi)] = (l, m)
                    decisions.append(
                        {
                            "time_s": (e + 1) * run.epoch_duration,
                            "band": b,
                            **d.as_dict(),
                            "trial": trial,
                            "snr_db": snr,
                        }
                    )
    return {"rates": rates, "configs": configs, "indices": indices, "decisions": decisions, "energy": energy}


def _map_trials(run, workers):
    trials = range(run.trials)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_trial, [run] * run.trials, trials))
    return [_run_trial(run, t) for t in trials]


def _mode_over_trials(per_trial, band):
    out = {}
    keys = per_trial[0]["configs"][band].keys() | per_trial[0]["indices"][band].keys()
    for kind in ("configs", "indices"):
        merged = {}
        for key in keys:
            vals = [r[kind][band][key] for r in per_trial if key in r[kind][band]]
            if vals:
                c = Counter(vals)
                top = max(c.values())
                merged[key] = min(v for v, n in c.items() if n == top)
        out[kind] = merged
    return out


def _merge(run, results) -> ThroughputReport:
    bands = sorted(run.bands)
    rates = {b: np.stack([r["rates"][b] for r in results]) for b in bands}
    configs, indices = {}, {}
    for b in bands:
        merged = _mode_over_trials(results, b)
        configs[b], indices[b] = merged["configs"], merged["indices"]
    decisions = [d for r in results for d in r["decisions"]]
    energy = max(r["energy"] for r in results)
    book = run.codebook
    n_b = len(bands)
    bits = adapt.ca_feedback_bits(book.m_t, book.m_f, n_b) if n_b > 1 else adapt.feedback_bits(book.m_t, book.m_f)
    naive = adapt.naive_ca_feedback_bits(book.m_t, book.m_f, n_b) if n_b > 1 else None
    bps = adapt.feedback_bit_rate(bits, run.t_ofdm, run.numerology.symbol_duration)
    report = ThroughputReport(run, rates, configs, indices, decisions, energy, bits, bps, naive)
    return report


def run_closed_loop(run: SimulationRun, workers: int = 1) -> ThroughputReport:
    """Single-band closed loop. Results do not depend on ``workers``."""
    if len(run.bands) != 1:
        raise ValueError("run_closed_loop takes exactly one band; use run_ca")
    return _merge(run, _map_trials(run, workers))


def run_ca(run: SimulationRun, workers: int = 1) -> ThroughputReport:
    """Carrier aggregation over ``run.bands`` with one shared temporal index.

    The spectral index and the temporal index of the highest band are fed
    back; other bands' temporal indices follow from Doppler scaling.
    """
    if len(run.bands) < 1:
        raise ValueError("need at least one band")
    return _merge(run, _map_trials(run, workers))


@dataclass(frozen=True)
class MseCase:
    f_d: float
    profile: int
    snr_db: float


@dataclass
class MseValidationRow:
    snr_db: float
    f_d_hz: float
    profile: int
    delta_analytic: float
    delta_empirical: float
    n_samples: int
    delta_empirical_all: float = field(default=float("nan"))

    @property
    def rel_error(self) -> float:
        return abs(self.delta_analytic - self.delta_empirical) / self.delta_empirical


def run_mse_validation(
    cases,
    L: int = 6,
    t_p: int = 4,
    rho_db: float = -3.0,
    n_samples: int = 100_000,
    seed: int = 0,
    codebook: ChannelProfileCodebook | None = None,
    numerology: OfdmNumerology | None = None,
    block_periods: int = 25,
    n_sinusoids: int = 64,
) -> list:
    """Closed-form versus simulated data-RE MSE.

    The empirical value averages interior data REs (those inside complete
    analysis regions) over at least ``n_samples`` REs drawn from independent
    blocks of ``block_periods`` pilot periods; ``delta_empirical_all`` also
    includes band-edge REs.
    """
    numerology = numerology or OfdmNumerology()
    book = codebook or adapt.default_codebook(numerology)
    config = PilotConfig.from_db(t_p, L, rho_db)
    n_symbols = block_periods * 2 * t_p + 1
    cache = _PatternCache(numerology, 1, n_symbols)
    entry = cache.get("fixed", config)
    sigma_d2, sigma_p2 = entry["sigma_d2"], entry["sigma_p2"]
    rows = []
    for ci, case in enumerate(cases):
        sigma_w2 = 1.0 / float(db2lin(case.snr_db))
        ratio = ici_power_bounds(case.f_d, numerology.symbol_duration)[0]
        r_t = jakes_handle(case.f_d, numerology.symbol_duration)
        ctx = MseContext(L, t_p, sigma_p2, sigma_w2, ratio * sigma_d2, r_t, book.r_f(case.profile))
        analytic = mse_breakdown(ctx).delta_d
        rng = np.random.default_rng([seed, ci])
        pdp = book.pdps[case.profile - 1]
        s_int = c_int = s_all = c_all = 0
        while c_int < n_samples:
            H = generate_channel(pdp, DopplerSpec(case.f_d), numerology, n_symbols, seed=rng, n_sinusoids=n_sinusoids).H
            shape = (1, numerology.num_subcarriers, n_symbols)
            est = transmit_and_estimate(H, entry, sigma_w2, ratio, _unit_noise(rng, shape), _unit_noise(rng, shape))
            err = np.abs(H - est.H_hat) ** 2
            sel = np.isin(est.classes, CLASS_GROUPS["interior"])
            s_int += err[:, sel].sum()
            c_int += int(sel.sum())
            sel = np.isin(est.classes, CLASS_GROUPS["data"])
            s_all += err[:, sel].sum()
            c_all += int(sel.sum())
        rows.append(MseValidationRow(case.snr_db, case.f_d, case.profile, analytic, s_int / c_int, c_int, s_all / c_all))
    return rows

