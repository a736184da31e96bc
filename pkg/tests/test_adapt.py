import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotadapt.adapt import (
    ChannelProfileCodebook,
    LinkContext,
    SearchSpace,
    SinrContext,
    base_config,
    ca_feedback_bits,
    ca_propagate_doppler,
    feedback_bit_rate,
    feedback_bits,
    load_codebook,
    match_codebook,
    naive_ca_feedback_bits,
    objective,
    optimize_config,
    posteq_sinr,
    rate_bound,
    save_codebook,
)
from pilotadapt.channel import FLAT_PDP
from pilotadapt.estimator import CorrelationEstimate
from pilotadapt.grid import PilotConfig


def test_default_codebook_shape(book):
    assert (book.m_t, book.m_f) == (6, 4)
    assert book.doppler_hz == (5.6, 60.0, 222.22, 555.56, 750.0, 925.0)
    assert book.temporal_profiles.shape == (6, 40)
    assert book.spectral_profiles.shape == (4, 62)
    assert book.validate() == []
    assert np.all(book.temporal_profiles[:, 20] == 1.0)
    assert np.allclose(book.spectral_profiles[:, 31], 1.0, atol=1e-15)


def test_codebook_spread_ordering(book):
    taus = [p.tau_rms for p in book.pdps]
    assert taus == sorted(taus)
    assert book.tau_rms_nominal == pytest.approx((221.5e-9, 476.4e-9, 791.2e-9, 1440e-9))


def test_codebook_roundtrip(book, tmp_path):
    path = tmp_path / "cb.yaml"
    save_codebook(book, path)
    again = load_codebook(path)
    assert again.doppler_hz == book.doppler_hz
    assert np.allclose(again.spectral_profiles, book.spectral_profiles, atol=1e-14)


def test_missing_codebook_names_path(tmp_path):
    path = tmp_path / "nope.yaml"
    with pytest.raises(FileNotFoundError, match="nope.yaml"):
        load_codebook(path)


def test_malformed_codebook(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("temporal: [{f_d_hz: 5}]\n")
    with pytest.raises(ValueError):
        load_codebook(path)


def test_validate_reports_bad_layout():
    book = ChannelProfileCodebook((5.0,), (FLAT_PDP,), n_lags_t=30)
    assert any("temporal layout" in p for p in book.validate())


def test_codebook_rejects_empty_or_negative():
    with pytest.raises(ValueError):
        ChannelProfileCodebook((), (FLAT_PDP,))
    with pytest.raises(ValueError):
        ChannelProfileCodebook((-1.0,), (FLAT_PDP,))


def _entry(book, l, m):
    return CorrelationEstimate(book.spectral_profiles[l - 1].copy(), book.temporal_profiles[m - 1].copy())


def test_exact_entry_matches(book):
    assert match_codebook(_entry(book, 2, 4), book) == (2, 4)


def test_self_recovery_at_20db(book):
    """Profile (1, 1) perturbed by complex noise 20 dB below its energy."""
    rng = np.random.default_rng(7)
    n, hits = 1000, 0
    for _ in range(n):
        e = _entry(book, 1, 1)
        for v in (e.r_f, e.r_t):
            scale = math.sqrt(np.mean(np.abs(v) ** 2) / 100 / 2)
            v += scale * (rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape))
        hits += match_codebook(e, book) == (1, 1)
    assert hits / n >= 0.90


def test_mimo_mode_and_tie_break(book):
    ests = [_entry(book, l, 1) for l in (3, 3, 2, 3)]
    assert match_codebook(ests, book) == (3, 1)
    ests = [_entry(book, 4, 2), _entry(book, 2, 5)]
    assert match_codebook(ests, book) == (2, 2)


def test_match_rejects_wrong_layout(book):
    with pytest.raises(ValueError):
        match_codebook(CorrelationEstimate(np.ones(10), np.ones(40)), book)
    with pytest.raises(ValueError):
        match_codebook([], book)


def test_sinr_plain_snr():
    assert posteq_sinr(SinrContext(0.9, 0.1, 0.0, 0.0)) == pytest.approx(9.0)


def test_sinr_hand_value():
    assert posteq_sinr(SinrContext(0.96, 0.0417, 0.0, 0.01)) == pytest.approx(18.70, rel=1e-3)


def test_sinr_interference_floor():
    assert posteq_sinr(SinrContext(1.0, 0.1, 0.0, 1e12)) < 1e-11


def test_sinr_zf_diversity():
    assert SinrContext(1, 1, 0, 0, n_tx=2, n_rx=4).sigma_zf == 3
    assert SinrContext(1, 1, 0, 0, n_tx=4, n_rx=4).sigma_zf == 1
    with pytest.raises(ValueError):
        SinrContext(1, 1, 0, 0, n_tx=4, n_rx=2)
    with pytest.raises(ValueError):
        posteq_sinr(SinrContext(1.0, 0.0, 0.0, 0.0))


def test_rate_bound_values():
    assert rate_bound(0.9583, 18.70) == pytest.approx(0.9583 * math.log2(19.70))
    assert rate_bound(0.9583, 18.70) == pytest.approx(4.12, abs=0.005)
    assert rate_bound(1.0, 1.0) == 1.0


def test_denser_pilots_lower_objective_at_fixed_sinr():
    assert rate_bound(1 - 48 / 576, 10.0) < rate_bound(1 - 24 / 576, 10.0)


def test_search_space_size_and_evaluations(book):
    space = SearchSpace()
    assert space.size == 540
    d = optimize_config(space, 2, 3, LinkContext(book, 0.05))
    assert d.evaluations == 540


def test_search_space_validation():
    for kw in (dict(df=(3,)), dict(dt=(0,)), dict(rho_db=(1.0,)), dict(df=())):
        with pytest.raises(ValueError):
            SearchSpace(**kw)


def test_singleton_space(book):
    space = SearchSpace(rho_db=(-4.0,), df=(8,), dt=(5,))
    d = optimize_config(space, 3, 2, LinkContext(book, 0.1))
    assert (d.config.dt, d.config.df) == (5, 8)
    assert d.config.rho_db == pytest.approx(-4.0)


def test_static_flat_channel_picks_sparsest():
    from oracles import brute_force_optimum

    flat = ChannelProfileCodebook((0.0,), (FLAT_PDP,))
    space = SearchSpace()
    d = optimize_config(space, 1, 1, LinkContext(flat, 10 ** (-3.3)))
    assert (d.config.df, d.config.dt) == (12, 10)
    # pilot noise scales with the noise floor, so boosted pilots stay optimal at any SNR
    ref = brute_force_optimum(72, 71.875e-6, 15e3, (1.0,), (0.0,), 0.0, 10 ** (-3.3), 1.0, 1, 1,
                              space.rho_db, space.df, space.dt)
    assert (d.config.dt, d.config.df) == ref[:2]
    assert d.config.rho_db == pytest.approx(ref[2]) == min(space.rho_db)


def test_mimo_skips_infeasible(book):
    space = SearchSpace(dt=tuple(range(1, 11)))
    d = optimize_config(space, 1, 6, LinkContext(book, 0.01, n_tx=4, n_rx=4))
    assert d.config.dt >= 2
    assert d.evaluations == space.size - len(space.rho_db) * len(space.df)


@settings(max_examples=30, deadline=None)
@given(l=st.integers(1, 4), m=st.integers(1, 6), snr=st.floats(-3, 33), c=st.floats(0.01, 100))
def test_argmax_invariant_to_common_scaling(book, l, m, snr, c):
    w = 10 ** (-snr / 10)
    a = optimize_config(SearchSpace(), l, m, LinkContext(book, w))
    b = optimize_config(SearchSpace(), l, m, LinkContext(book, c * w, avg_power=c))
    assert (a.config.dt, a.config.df) == (b.config.dt, b.config.df)
    assert a.config.rho == pytest.approx(b.config.rho, rel=1e-12)
    assert a.objective == pytest.approx(b.objective, rel=1e-9)


def test_objective_matches_oracle_pointwise(book):
    from oracles import brute_force_optimum

    pdp = book.pdps[1]
    dt, df, rho_db, val, _ = brute_force_optimum(
        72, 71.875e-6, 15e3, pdp.tap_powers, pdp.delays_s, book.doppler_hz[2], 0.05, 1.0, 1, 1,
        (-5,), (8,), (3,),
    )
    assert objective(PilotConfig.from_db(3, 8, -5), LinkContext(book, 0.05, l=2, m=3)) == pytest.approx(val, rel=1e-12)


def test_feedback_accounting():
    assert feedback_bits(6, 4) == 5
    assert ca_feedback_bits(6, 4, 2) == 5
    assert naive_ca_feedback_bits(6, 4, 2) == 6
    assert ca_feedback_bits(6, 4, 1) == feedback_bits(6, 4)
    assert feedback_bit_rate(5, 1500, 71.875e-6) == pytest.approx(46.3768, abs=1e-4)
    with pytest.raises(ValueError):
        feedback_bits(0, 4)


def test_ca_doppler_propagation(book):
    assert ca_propagate_doppler(3, 2e9, 7e8, book) == 2
    assert 222.22 * 7 / 20 == pytest.approx(77.777, abs=1e-3)
    for m in range(1, 7):
        assert ca_propagate_doppler(m, 2e9, 2e9, book) == m
    with pytest.raises(ValueError):
        ca_propagate_doppler(3, 2e9, 1e9, book, bands=(7e8, 2e9))


def test_base_config():
    c = base_config()
    assert (c.dt, c.df) == (4, 6) and c.rho_db == pytest.approx(-3.0)


def test_decision_dict(book):
    d = optimize_config(SearchSpace(df=(6,), dt=(4,), rho_db=(-3.0,)), 1, 1, LinkContext(book, 0.1))
    out = d.as_dict()
    assert set(out) == {"l", "m", "rho_db", "dpf", "dpt", "objective"}
    assert out["rho_db"] == -3.0
