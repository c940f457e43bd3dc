import numpy as np
import pytest

from pinchbeam.ao import (AoConfig, full_gradients, gradient_core,
                          position_line_search, reconstruct_beamformer,
                          run_alternating_optimization, select_segments,
                          surrogate_from_parts, update_tx_beamforming)
from pinchbeam.channel import build_channels
from pinchbeam.metrics import (initial_state, penalized_objective,
                               receive_filter_update, surrogate_coeffs,
                               surrogate_value, weight_update)
from pinchbeam.scenario import (ScenarioConfig, default_layout,
                                sample_placement, waveguide_axes)


@pytest.fixture
def setup(small_config, small_placement):
    cfg = small_config
    lay = default_layout(cfg)
    ch = build_channels(small_placement, lay, cfg)
    state = initial_state(ch, cfg)
    state = state.with_(V=receive_filter_update(state.W, ch, cfg))
    state = state.with_(Theta=weight_update(state.W, state.V, ch, cfg))
    return cfg, lay, ch, state


def test_tx_update_power_and_kkt(setup):
    cfg, lay, ch, state = setup
    res = update_tx_beamforming(state, ch, cfg, AoConfig())
    assert np.linalg.norm(res.W) ** 2 <= cfg.P_max + 1e-9
    assert res.kkt_residual < 1e-5
    assert res.comp_slackness < 1e-5
    # multipliers and powers are reported for every user
    assert res.beta.shape == res.p.shape == (cfg.K_c,)
    assert np.all(res.beta >= 0) and np.all(res.p >= 0)


def test_tx_update_reduces_surrogate(setup):
    cfg, lay, ch, state = setup
    ao = AoConfig()
    mu = ao.mu
    before = penalized_objective(state, ch, cfg, mu)
    res = update_tx_beamforming(state, ch, cfg, ao)
    cand = state.with_(W=res.W)
    cand = cand.with_(V=receive_filter_update(res.W, ch, cfg))
    cand = cand.with_(Theta=weight_update(res.W, cand.V, ch, cfg))
    after = penalized_objective(cand, ch, cfg, mu)
    assert after <= before + 1e-9


def test_reconstruction_round_trip(setup):
    cfg, lay, ch, state = setup
    res = update_tx_beamforming(state, ch, cfg, AoConfig())
    W2 = reconstruct_beamformer(res.p, res.beta, res.Xi, res.nu, ch,
                                state.V, state.Theta, cfg)
    assert np.max(np.abs(W2 - res.W)) < 1e-6


def test_gradients_match_finite_differences(setup, rng):
    cfg, lay, ch, state = setup
    mu = 10.0
    g_htar, g_G, g_huser = full_gradients(state, ch, cfg, mu)
    eps = 1e-7

    def value(hu, ht):
        return surrogate_from_parts(hu, ht, ch.G_t, ch.rho, state, cfg, mu)

    base_scale = max(np.abs(g_huser).max(), 1.0)
    for _ in range(5):
        k = rng.integers(cfg.K_c)
        i = rng.integers(ch.h_user.shape[1])
        hu = ch.h_user.copy()
        hu[k, i] += eps
        re = (value(hu, ch.h_tar_tx) - value(2 * ch.h_user - hu,
                                             ch.h_tar_tx)) / (2 * eps)
        hu = ch.h_user.copy()
        hu[k, i] += 1j * eps
        im = (value(hu, ch.h_tar_tx) - value(2 * ch.h_user - hu,
                                             ch.h_tar_tx)) / (2 * eps)
        fd = (re + 1j * im) / 2.0
        assert abs(g_huser[k, i] - fd) < 1e-4 * max(abs(fd), base_scale * 1e-4)


def test_segment_selection_prefers_strong_channel(small_config):
    cfg = small_config
    # users clustered above the left half of the region -> left segment wins
    users = np.array([[-8.0, 0.0, cfg.d], [-7.0, 1.0, cfg.d]])
    targets = np.array([[-8.5, -1.0, cfg.d], [-6.0, 0.5, cfg.d]])
    place = type(sample_placement(cfg, 0))(users=users, targets=targets)
    lay = default_layout(cfg)
    sel = select_segments(place, lay, cfg)
    assert np.all(sel == 0)


def test_position_line_search_improves(setup, small_placement):
    cfg, lay, ch, state = setup
    ao = AoConfig()
    lay2 = position_line_search(lay, state, small_placement, cfg, ao)
    assert lay2.is_feasible(cfg)
    coeffs = surrogate_coeffs(state, cfg, ao.mu)
    ch2 = build_channels(small_placement, lay2, cfg)
    before = surrogate_value(coeffs, ch.h_eff_user, ch.h_eff_sense, cfg)
    after = surrogate_value(coeffs, ch2.h_eff_user, ch2.h_eff_sense, cfg)
    assert after <= before + 1e-9


def test_ao_runs_and_traces(small_config, small_placement):
    cfg = small_config
    res = run_alternating_optimization(small_placement, cfg, AoConfig(T=3),
                                       seed=0)
    objs = res.trace.objectives
    assert len(objs) == 4  # initial point plus three iterations
    accepted = [row.w_accepted for row in res.trace.rows]
    for a, b, acc in zip(objs, objs[1:], accepted[1:]):
        if acc:
            assert b <= a + 1e-9
    csv = res.trace.to_csv()
    head = csv.splitlines()[0].split(",")
    assert head[:3] == ["iteration", "objective", "sr"]
    assert len(csv.splitlines()) == 5


def test_ao_deterministic(small_config, small_placement):
    a = run_alternating_optimization(small_placement, small_config,
                                     AoConfig(T=2), seed=1)
    b = run_alternating_optimization(small_placement, small_config,
                                     AoConfig(T=2), seed=1)
    assert np.array_equal(a.state.W, b.state.W)
    assert np.array_equal(a.layout.tx_x, b.layout.tx_x)


def test_qos_flag_matches_margins(small_config, small_placement):
    cfg = small_config
    res = run_alternating_optimization(small_placement, cfg, AoConfig(T=3),
                                       seed=0)
    from pinchbeam.metrics import penalty_terms
    ch = build_channels(small_placement, res.layout, cfg)
    pen = penalty_terms(res.state.W, ch.h_eff_user, cfg)
    assert res.qos_feasible == bool(pen.min() >= -1e-6)


def test_infeasible_qos_reported():
    # two users but nearly no transmit power: the rate floor cannot be met
    cfg = ScenarioConfig(N_t=4, N_r=1, K_c=2, K_s=1, S=2, M=2, P_max=1e-12)
    place = sample_placement(cfg, 0)
    res = run_alternating_optimization(place, cfg, AoConfig(T=2), seed=0)
    assert not res.qos_feasible
