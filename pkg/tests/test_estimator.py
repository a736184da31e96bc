import numpy as np
import pytest

from oracles import region_weights
from pilotadapt.channel import DopplerSpec, generate_channel
from pilotadapt.estimator import (
    CLASS_NAMES,
    ChannelEstimate,
    CorrelationEstimate,
    ReceivedGrid,
    empirical_mse,
    estimate_correlations,
    interpolate_2d,
    ls_estimate,
    mse_by_class,
)
from pilotadapt.grid import OfdmNumerology, PilotConfig, build_pattern
from pilotadapt.sim import _PatternCache, transmit_and_estimate, _unit_noise

NUM = OfdmNumerology()


def _received(H, pattern, sigma_p2=1.0, noise=None, sigma_w2=0.0):
    T = H.shape[-1]
    pilots, _ = pattern.masks(T)
    P = np.sqrt(sigma_p2) * pilots.astype(complex)
    Y = np.einsum("rakn,akn->rkn", H, P)
    if noise is not None:
        Y = Y + np.sqrt(sigma_w2) * noise
    return ReceivedGrid(Y, P, sigma_w2)


def test_ls_exact_at_pilots_noiseless(book):
    pattern = build_pattern(NUM, PilotConfig(dt=3, df=4, rho=0.5), n_tx=2)
    H = generate_channel(book.pdps[2], DopplerSpec(300.0), NUM, 24, seed=1, n_tx=2, n_rx=2).H
    ls = ls_estimate(_received(H, pattern, 2.0), pattern)
    for a in range(2):
        m = pattern.pilot_mask(24, a)
        assert np.allclose(ls[:, a][:, m], H[:, a][:, m], atol=1e-13)
        assert np.all(np.isnan(ls[:, a][:, ~m]))


def test_zero_pilot_rejected():
    pattern = build_pattern(NUM, PilotConfig(dt=2, df=6, rho=0.5))
    rx = ReceivedGrid(np.ones((1, 72, 8), complex), np.zeros((1, 72, 8), complex), 0.1)
    with pytest.raises(ValueError):
        ls_estimate(rx, pattern)


def _pilot_mc(sigma_p2, sigma_w2, n_samples=100_000, seed=0):
    rng = np.random.default_rng(seed)
    pattern = build_pattern(NUM, PilotConfig(dt=2, df=2, rho=0.5))
    T = 40
    err, count = 0.0, 0
    while count < n_samples:
        H = _unit_noise(rng, (1, 1, 72, T))
        noise = _unit_noise(rng, (1, 72, T))
        ls = ls_estimate(_received(H, pattern, sigma_p2, noise, sigma_w2), pattern)
        m = pattern.pilot_mask(T)
        err += np.sum(np.abs(ls[0, 0][m] - H[0, 0][m]) ** 2)
        count += int(m.sum())
    return err / count


def test_pilot_mse_matches_noise_ratio():
    assert _pilot_mc(2.0, 0.1) == pytest.approx(0.05, rel=0.02)


def test_doubling_pilot_power_halves_pilot_mse():
    a = _pilot_mc(1.0, 0.1, seed=2)
    b = _pilot_mc(2.0, 0.1, seed=2)
    assert a / b == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("n_tx", [1, 2, 4])
def test_constant_channel_reproduced(n_tx):
    pattern = build_pattern(NUM, PilotConfig(dt=4, df=6, rho=0.5), n_tx=n_tx)
    H = np.broadcast_to((0.3 - 0.7j) * np.arange(1, n_tx + 1)[None, :, None, None], (2, n_tx, 72, 33)).copy()
    est = interpolate_2d(ls_estimate(_received(H, pattern), pattern), pattern)
    assert np.allclose(est.H_hat, H, atol=1e-12)


def test_affine_channel_reproduced_inside_hull():
    pattern = build_pattern(NUM, PilotConfig(dt=4, df=6, rho=0.5))
    k = np.arange(72)[:, None]
    n = np.arange(41)[None, :]
    H = ((0.2 + 0.1j) + (0.01 - 0.02j) * k + (0.03 + 0.005j) * n)[None, None]
    est = interpolate_2d(ls_estimate(_received(H, pattern), pattern), pattern)
    # linear interpolation and extrapolation are exact for affine functions
    assert np.allclose(est.H_hat, H, atol=1e-10)


def test_linear_in_frequency_exact_on_type_a():
    pattern = build_pattern(NUM, PilotConfig(dt=4, df=6, rho=0.5))
    H = np.broadcast_to((0.5 + 0.25j) * np.arange(72)[:, None], (1, 1, 72, 16)).astype(complex)
    est = interpolate_2d(ls_estimate(_received(H, pattern), pattern), pattern)
    sel = est.classes[0] == CLASS_NAMES["type_a"]
    assert sel.any()
    assert np.allclose(est.H_hat[0, 0][sel], H[0, 0][sel], atol=1e-12)


def _impulse_weights(pattern, k, t, T):
    """Interpolation weight of every pilot for the RE (k, t)."""
    mask = pattern.pilot_mask(T)
    out = {}
    for kp, tp in zip(*np.nonzero(mask)):
        ls = np.zeros((1, 1, 72, T), complex)
        ls[0, 0, kp, tp] = 1.0
        ls[0, 0][~mask] = np.nan
        w = interpolate_2d(ls, pattern).H_hat[0, 0, k, t].real
        if abs(w) > 1e-15:
            out[(int(kp), int(tp))] = w
    return out


def test_midpoint_weights():
    L, t_p = 6, 4
    pattern = build_pattern(NUM, PilotConfig(dt=t_p, df=L, rho=0.5))
    k0, T = 12, 3 * 2 * t_p
    w = _impulse_weights(pattern, k0 + L // 2, t_p // 2, T)
    # the offset row carries a pilot exactly at k = L/2
    assert w == pytest.approx({(k0, 0): 0.25, (k0 + L, 0): 0.25, (k0 + L // 2, t_p): 0.5})


@pytest.mark.parametrize("L,t_p", [(6, 4), (4, 3), (8, 2), (12, 5)])
def test_weights_match_oracle(L, t_p):
    pattern = build_pattern(NUM, PilotConfig(dt=t_p, df=L, rho=0.5))
    T = 4 * t_p + 1
    k0 = 2 * L  # interior region start
    for cls, k, t, pts in region_weights(L, t_p):
        w = _impulse_weights(pattern, k0 + k, t, T)
        expected = {}
        for kp, tp, wt in pts:
            key = (k0 + kp, tp)
            expected[key] = expected.get(key, 0.0) + wt
        expected = {k_: v for k_, v in expected.items() if abs(v) > 1e-15}
        assert w == pytest.approx(expected), (cls, k, t)


def test_classes_cover_grid():
    pattern = build_pattern(NUM, PilotConfig(dt=4, df=6, rho=0.5), n_tx=2)
    ls = np.zeros((1, 2, 72, 40), complex)
    est = interpolate_2d(ls, pattern)
    assert est.classes.shape == (2, 72, 40)
    for a in range(2):
        assert np.array_equal(est.classes[a] == CLASS_NAMES["pilot"], pattern.pilot_mask(40, a))
    assert set(np.unique(est.classes)) <= set(CLASS_NAMES.values())


def test_empirical_mse_basics():
    rng = np.random.default_rng(0)
    H = _unit_noise(rng, (1, 1, 72, 200))
    classes = np.full((1, 72, 200), CLASS_NAMES["sub1"], dtype=np.uint8)
    assert empirical_mse(ChannelEstimate(H.copy(), classes), H) == 0.0
    noisy = ChannelEstimate(H + _unit_noise(rng, H.shape), classes)
    assert empirical_mse(noisy, H) == pytest.approx(1.0, rel=0.02)
    with pytest.raises(ValueError):
        empirical_mse(noisy, H[..., :10])


def test_pilot_class_mse_matches_ratio(book):
    rng = np.random.default_rng(5)
    cfg = PilotConfig(dt=2, df=2, rho=0.5)
    cache = _PatternCache(NUM, 1, 60)
    entry = cache.get("fixed", cfg)
    sigma_w2 = 0.2
    s, c = 0.0, 0
    while c < 100_000:
        H = generate_channel(book.pdps[0], DopplerSpec(60.0), NUM, 60, seed=rng).H
        shape = (1, 72, 60)
        est = transmit_and_estimate(H, entry, sigma_w2, 0.0, _unit_noise(rng, shape), _unit_noise(rng, shape))
        e, n = mse_by_class(est, H)["pilot"]
        s, c = s + e, c + n
    assert s / c == pytest.approx(sigma_w2 / entry["sigma_p2"], rel=0.02)


def test_correlations_all_ones():
    c = estimate_correlations(np.ones((72, 100), complex))
    assert np.allclose(c.r_f, 1.0) and np.allclose(c.r_t, 1.0)
    assert len(c.r_f) == 62 and len(c.r_t) == 40


def test_correlations_hermitian_and_normalised(book):
    H = generate_channel(book.pdps[2], DopplerSpec(222.22), NUM, 300, seed=9).H[0, 0]
    c = estimate_correlations(H + 0.1 * _unit_noise(np.random.default_rng(1), H.shape))
    for vec, n in ((c.r_f, 62), (c.r_t, 40)):
        lags = CorrelationEstimate.lags(n)
        z = n // 2
        assert vec[z] == 1.0
        for i in range(1, n // 2):
            assert vec[z - i] == pytest.approx(np.conj(vec[z + i]), abs=1e-12)
        assert lags[0] == -n // 2 and lags[-1] == n // 2 - 1


def test_correlations_match_direct_sums(book):
    H = generate_channel(book.pdps[1], DopplerSpec(60.0), NUM, 80, seed=4).H[0, 0]
    c = estimate_correlations(H)
    N, T = H.shape
    G = H.conj().T @ H  # T x T
    r0 = np.trace(G).real / T
    for i in range(1, 5):
        # i-th super-diagonal of H^H H averaged over its length is the lag -i value
        assert c.r_t[20 - i] == pytest.approx(np.mean(np.diagonal(G, i)) / r0, abs=1e-12)
    F = H @ H.conj().T
    f0 = np.trace(F).real / N
    for i in range(1, 5):
        assert c.r_f[31 - i] == pytest.approx(np.mean(np.diagonal(F, i)) / f0, abs=1e-12)


def test_correlations_iid_columns_decorrelate():
    rng = np.random.default_rng(3)
    c = estimate_correlations(_unit_noise(rng, (72, 4000)))
    off = np.delete(np.abs(c.r_t), 20)
    assert np.max(off) < 0.02


def test_correlations_reject_bad_input():
    with pytest.raises(ValueError):
        estimate_correlations(np.ones((72, 10)))
    with pytest.raises(ValueError):
        estimate_correlations(np.zeros((72, 100)))


def test_estimated_profile_closest_to_truth(book):
    """Estimates from (l=2, m=3) at 30 dB sit nearest their own profile in >= 95% of 10^3 trials."""
    from pilotadapt.channel import ici_power_bounds

    rng = np.random.default_rng(2024)
    T = 1500
    entry = _PatternCache(NUM, 1, T).get("fixed", PilotConfig.from_db(4, 6, -3))
    f_d = book.doppler_hz[2]
    ratio = ici_power_bounds(f_d, NUM.symbol_duration)[0]
    shape = (1, 72, T)
    hits, n = 0, 1000
    for _ in range(n):
        H = generate_channel(book.pdps[1], DopplerSpec(f_d), NUM, T, seed=rng).H
        est = transmit_and_estimate(H, entry, 1e-3, ratio, _unit_noise(rng, shape), _unit_noise(rng, shape))
        c = estimate_correlations(est.H_hat[0, 0])
        df = np.linalg.norm(book.spectral_profiles - c.r_f, axis=1)
        dt = np.linalg.norm(book.temporal_profiles - c.r_t, axis=1)
        hits += int(np.argmin(df) == 1 and np.argmin(dt) == 2)
    assert hits / n >= 0.95
