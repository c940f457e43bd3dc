import numpy as np
import pytest

from pinchbeam.channel import build_channels
from pinchbeam.metrics import (all_rates, communication_rate, csr,
                               initial_state, mse_matrix, mui_matrix,
                               penalized_objective, penalty_terms,
                               receive_filter_update, sensing_rate,
                               soc_margins, surrogate_coeffs, surrogate_value,
                               weight_update, wmmse_objective)
from pinchbeam.scenario import default_layout


@pytest.fixture
def setup(small_config, small_placement):
    cfg = small_config
    ch = build_channels(small_placement, default_layout(cfg), cfg)
    state = initial_state(ch, cfg)
    return cfg, ch, state


def test_initial_state_power(setup):
    cfg, ch, state = setup
    assert np.linalg.norm(state.W) ** 2 <= cfg.P_max + 1e-9


def test_rates_positive_and_consistent(setup):
    cfg, ch, state = setup
    rates = all_rates(state.W, ch, cfg)
    assert rates.shape == (cfg.K_c,)
    assert np.all(rates > 0)
    for k in range(cfg.K_c):
        assert rates[k] == pytest.approx(
            communication_rate(k, state.W, ch, cfg))
    assert sensing_rate(state.W, ch, cfg) > 0


def test_sensing_rate_closed_form(setup):
    cfg, ch, state = setup
    # SR = sum_n log2(1 + ||h~_s,n^H W||^2 / sigma_s^2)
    expect = 0.0
    for n in range(ch.h_eff_sense.shape[0]):
        t = ch.h_eff_sense[n].conj() @ state.W
        expect += np.log2(1.0 + np.linalg.norm(t) ** 2 / cfg.sigma_s2)
    assert sensing_rate(state.W, ch, cfg) == pytest.approx(expect)


def test_wmmse_identity_after_updates(setup):
    cfg, ch, state = setup
    V = receive_filter_update(state.W, ch, cfg)
    state = state.with_(V=V)
    Theta = weight_update(state.W, V, ch, cfg)
    state = state.with_(Theta=Theta)
    for n in range(ch.h_eff_sense.shape[0]):
        E = mse_matrix(n, state.W, V[n], ch, cfg)
        sign, logdet = np.linalg.slogdet(E)
        t = ch.h_eff_sense[n].conj() @ state.W
        direct = np.log(1.0 + np.linalg.norm(t) ** 2 / cfg.sigma_s2)
        assert sign > 0
        assert -logdet == pytest.approx(direct, rel=1e-10)


def test_mmse_filter_is_optimal(setup, rng):
    cfg, ch, state = setup
    V = receive_filter_update(state.W, ch, cfg)
    Theta = weight_update(state.W, V, ch, cfg)
    base = wmmse_objective(state.with_(V=V, Theta=Theta), ch, cfg)
    for _ in range(10):
        pert = V + 1e-3 * (rng.standard_normal(V.shape)
                           + 1j * rng.standard_normal(V.shape))
        alt = wmmse_objective(state.with_(V=pert, Theta=Theta), ch, cfg)
        assert alt >= base - 1e-12


def test_penalty_terms_sign(setup):
    cfg, ch, state = setup
    pen = penalty_terms(state.W, ch.h_eff_user, cfg)
    marg = soc_margins(state.W, ch.h_eff_user, cfg)
    assert pen.shape == marg.shape == (cfg.K_c,)
    assert np.all(np.sign(pen) == np.sign(marg)) or np.allclose(pen, marg)
    obj = penalized_objective(state, ch, cfg, mu=10.0)
    assert np.isfinite(obj)


def test_mui_matrix_structure(setup):
    cfg, ch, state = setup
    B = mui_matrix(state.W, ch, cfg).B
    U = ch.h_eff_user.conj() @ state.W
    assert B.shape == (cfg.K_c, cfg.K_c)
    off = ~np.eye(cfg.K_c, dtype=bool)
    assert np.allclose(B[off], U[off])
    assert np.allclose(np.diag(B), -np.diag(U) / cfg.gamma)


def test_csr_counting():
    rates = np.array([10.0, 9.5, 12.0, 10.0 - 1e-12])
    assert csr(rates, 10.0) == pytest.approx(0.75)
    assert csr(np.array([1.0]), 10.0) == 0.0


def test_surrogate_batched_matches_objective(setup, rng):
    cfg, ch, state = setup
    V = receive_filter_update(state.W, ch, cfg)
    Theta = weight_update(state.W, V, ch, cfg)
    state = state.with_(V=V, Theta=Theta)
    mu = 10.0
    coeffs = surrogate_coeffs(state, cfg, mu)
    val = surrogate_value(coeffs, ch.h_eff_user[None], ch.h_eff_sense[None],
                          cfg)
    # at the expansion point the surrogate equals the penalized objective
    assert val[0] == pytest.approx(penalized_objective(state, ch, cfg, mu),
                                   rel=1e-9)


def test_surrogate_majorizes_nearby(setup, rng):
    cfg, ch, state = setup
    V = receive_filter_update(state.W, ch, cfg)
    Theta = weight_update(state.W, V, ch, cfg)
    state = state.with_(V=V, Theta=Theta)
    mu = 10.0
    coeffs = surrogate_coeffs(state, cfg, mu)
    for _ in range(5):
        Hu = ch.h_eff_user * np.exp(0.02 * rng.standard_normal(
            ch.h_eff_user.shape))
        Hs = ch.h_eff_sense * np.exp(0.02 * rng.standard_normal(
            ch.h_eff_sense.shape))
        sval = surrogate_value(coeffs, Hu[None], Hs[None], cfg)[0]
        # exact objective with fixed V/Theta at the perturbed channels
        ch2_obj = _objective_at(state, Hu, Hs, ch, cfg, mu)
        assert sval >= ch2_obj - 1e-12 or sval == pytest.approx(ch2_obj)


def _objective_at(state, Hu, Hs, ch, cfg, mu):
    from dataclasses import replace
    ch2 = replace(ch, h_eff_user=Hu, h_eff_sense=Hs)
    return penalized_objective(state, ch2, cfg, mu)
