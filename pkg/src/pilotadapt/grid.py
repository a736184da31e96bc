"""OFDM resource grid, diamond pilot patterns and pilot/data power split."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class OfdmNumerology:
    """Waveform numerology. Defaults follow the 72-subcarrier, 15 kHz setup."""

    fft_length: int = 128
    num_subcarriers: int = 72
    subcarrier_spacing: float = 15e3
    symbol_duration: float = 71.875e-6  # CP included
    cp_duration: float = 5.21e-6
    center_frequency: float = 2.0e9

    def __post_init__(self):
        if self.num_subcarriers > self.fft_length:
            raise ValueError("num_subcarriers exceeds fft_length")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be positive")
        if self.symbol_duration <= 0 or self.subcarrier_spacing <= 0:
            raise ValueError("symbol duration and subcarrier spacing must be positive")

    @property
    def sample_duration(self) -> float:
        return 1.0 / (self.fft_length * self.subcarrier_spacing)

    def with_center_frequency(self, fc: float) -> OfdmNumerology:
        return replace(self, center_frequency=float(fc))


@dataclass(frozen=True)
class PilotConfig:
    """Pilot spacing in time ``dt`` (symbols), in frequency ``df`` (subcarriers)
    and data-to-pilot power ratio ``rho`` (linear)."""

    dt: int
    df: int
    rho: float
    avg_power: float = 1.0
    t_max: int = 10
    f_max: int = 12
    rho_max: float = 1.0

    def __post_init__(self):
        if not 1 <= self.dt <= self.t_max:
            raise ValueError(f"dt={self.dt} outside [1, {self.t_max}]")
        if self.df % 2:
            raise ValueError(f"df={self.df} must be even")
        if not 2 <= self.df <= self.f_max:
            raise ValueError(f"df={self.df} outside [2, {self.f_max}]")
        if self.rho > self.rho_max * (1 + 1e-12):
            raise ValueError(f"rho={self.rho} exceeds rho_max={self.rho_max}")
        if self.avg_power <= 0:
            raise ValueError("avg_power must be positive")

    @classmethod
    def from_db(cls, dt, df, rho_db, **kw) -> PilotConfig:
        return cls(int(dt), int(df), float(db2lin(rho_db)), **kw)

    @property
    def rho_db(self) -> float:
        return float(lin2db(self.rho))


_ANTENNA_SHIFTS = {
    1: ((0, 0),),
    2: ((0, 0), (1, 0)),
    4: ((0, 0), (1, 0), (0, 1), (1, 1)),
}


@dataclass(frozen=True)
class PilotPattern:
    """A periodic pilot layout.

    One period spans ``period`` OFDM symbols (the resource block). Pilot-bearing
    symbols sit at ``row_symbols`` within the period, each with its first pilot
    at ``row_offsets`` and spacing ``df``. Antenna ``a`` uses the same layout
    shifted by ``antenna_shifts[a] = (subcarriers, symbols)``; its pilot REs are
    nulled on every other antenna.
    """

    n_subcarriers: int
    period: int
    row_symbols: tuple
    row_offsets: tuple
    df: int
    n_tx: int = 1
    antenna_shifts: tuple = ((0, 0),)
    name: str = "diamond"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def row_positions(self, row: int, antenna: int = 0) -> np.ndarray:
        """Sorted pilot subcarriers of pilot row ``row`` (index within the period)."""
        key = (row, antenna)
        if key not in self._cache:
            base = np.arange(self.row_offsets[row], self.n_subcarriers, self.df)
            shift = self.antenna_shifts[antenna][0]
            pos = np.sort((base + shift) % self.n_subcarriers)
            pos.flags.writeable = False
            self._cache[key] = pos
        return self._cache[key]

    @property
    def n_f1(self) -> int:
        return len(self.row_positions(0))

    @property
    def n_f2(self) -> int:
        return len(self.row_positions(1)) if len(self.row_symbols) > 1 else 0

    @property
    def n_p(self) -> int:
        """Pilots per antenna per resource block."""
        return sum(len(self.row_positions(r)) for r in range(len(self.row_symbols)))

    @property
    def rb_size(self) -> int:
        return self.n_subcarriers * self.period

    @property
    def n_d(self) -> int:
        """Data REs per resource block."""
        return self.rb_size - self.n_tx * self.n_p

    def pilot_rows(self, n_symbols: int, antenna: int = 0):
        """``[(symbol, positions), ...]`` for a block of ``n_symbols`` symbols."""
        tshift = self.antenna_shifts[antenna][1]
        rows = []
        for start in range(0, n_symbols, self.period):
            for r, s in enumerate(self.row_symbols):
                n = start + s + tshift
                if n < n_symbols:
                    rows.append((n, self.row_positions(r, antenna)))
        rows.sort(key=lambda x: x[0])
        return rows

    def pilot_mask(self, n_symbols: int, antenna: int = 0) -> np.ndarray:
        mask = np.zeros((self.n_subcarriers, n_symbols), dtype=bool)
        for n, pos in self.pilot_rows(n_symbols, antenna):
            mask[pos, n] = True
        return mask

    def masks(self, n_symbols: int):
        """Pilot and null masks, each of shape ``(n_tx, N, n_symbols)``."""
        pilots = np.stack([self.pilot_mask(n_symbols, a) for a in range(self.n_tx)])
        any_pilot = pilots.any(axis=0)
        nulls = any_pilot[None] & ~pilots
        return pilots, nulls

    @cached_property
    def pilot_locations(self) -> dict:
        """Antenna -> frozenset of ``(subcarrier, symbol)`` in one resource block."""
        out = {}
        for a in range(self.n_tx):
            m = self.pilot_mask(self.period, a)
            out[a] = frozenset(zip(*map(lambda x: x.tolist(), np.nonzero(m))))
        return out

    @cached_property
    def null_locations(self) -> dict:
        locs = self.pilot_locations
        return {
            a: frozenset().union(*(locs[b] for b in range(self.n_tx) if b != a))
            for a in range(self.n_tx)
        }

    def to_json(self, n_symbols: int | None = None) -> str:
        """Pilot REs as ``[antenna, subcarrier, symbol]`` triples."""
        n_symbols = self.period if n_symbols is None else n_symbols
        triples = []
        for a in range(self.n_tx):
            k, n = np.nonzero(self.pilot_mask(n_symbols, a))
            order = np.lexsort((k, n))
            triples += [[a, int(k[i]), int(n[i])] for i in order]
        return json.dumps(
            {
                "name": self.name,
                "n_subcarriers": self.n_subcarriers,
                "n_symbols": n_symbols,
                "n_tx": self.n_tx,
                "pilots": triples,
            }
        )


def _check_disjoint(pattern: PilotPattern) -> None:
    seen = set()
    for a in range(pattern.n_tx):
        locs = pattern.pilot_locations[a]
        if seen & locs:
            raise ValueError("antenna pilot sets overlap for this configuration")
        seen |= locs


def _shifts(n_tx: int):
    if n_tx not in _ANTENNA_SHIFTS:
        raise ValueError(f"n_tx must be one of {sorted(_ANTENNA_SHIFTS)}, got {n_tx}")
    return _ANTENNA_SHIFTS[n_tx]


def build_pattern(numerology: OfdmNumerology, config: PilotConfig, n_tx: int = 1) -> PilotPattern:
    """Diamond pattern: pilot rows every ``dt`` symbols, alternate rows offset by ``df/2``."""
    shifts = _shifts(n_tx)
    if config.df % 2 or config.df > config.f_max or config.df < 2:
        raise ValueError(f"invalid df={config.df}")
    if n_tx > 2 and config.dt < 2:
        raise ValueError("4-antenna pilots need dt >= 2 (second antenna pair sits one symbol later)")
    pattern = PilotPattern(
        n_subcarriers=numerology.num_subcarriers,
        period=2 * config.dt,
        row_symbols=(0, config.dt),
        row_offsets=(0, config.df // 2),
        df=config.df,
        n_tx=n_tx,
        antenna_shifts=shifts,
        name=f"diamond(dt={config.dt},df={config.df})",
    )
    if pattern.n_d < 0:
        raise ValueError("pattern is denser than the grid (N_d < 0)")
    _check_disjoint(pattern)
    return pattern


def eq6_pilot_counts(n_subcarriers: int, df: int):
    """``(N_f1, N_f2)`` from the closed-form two-case rule."""
    n_f1 = math.ceil(n_subcarriers / df)
    if n_subcarriers % df > df / 2:
        n_f2 = math.ceil(n_subcarriers / df)
    else:
        n_f2 = n_subcarriers // df
    return n_f1, n_f2


def lte_normal_cp_pattern(numerology: OfdmNumerology, n_tx: int = 1) -> PilotPattern:
    """Fixed baseline with LTE normal-CP reference-signal density.

    Pilots on symbols 0 and 4 of every 7, six subcarriers apart, the second
    row shifted by three subcarriers.
    """
    pattern = PilotPattern(
        n_subcarriers=numerology.num_subcarriers,
        period=7,
        row_symbols=(0, 4),
        row_offsets=(0, 3),
        df=6,
        n_tx=n_tx,
        antenna_shifts=_shifts(n_tx),
        name="lte-normal-cp",
    )
    _check_disjoint(pattern)
    return pattern


def spectrum_utilization(pattern: PilotPattern, numerology=None, config=None) -> float:
    """Fraction of REs left for data: ``(RB - N_tx * N_p) / RB``."""
    return (pattern.rb_size - pattern.n_tx * pattern.n_p) / pattern.rb_size


def power_allocation(pattern: PilotPattern, config: PilotConfig):
    """Data and pilot power per RE keeping the average RE power at ``avg_power``.

    Returns
    -------
    (sigma_d2, sigma_p2)
    """
    rho = config.rho
    if rho <= 0:
        raise ValueError("rho must be positive")
    budget = pattern.rb_size * config.avg_power
    n_p, n_d = pattern.n_p, pattern.n_d
    sigma_d2 = budget / (n_p / rho + n_d)
    sigma_p2 = budget / (n_p + rho * n_d)
    return sigma_d2, sigma_p2
