import numpy as np
import pytest

from pinchbeam.channel import build_channels
from pinchbeam.gnn import (default_weights, fnn_forward, gnn_forward,
                           initial_graph_state, layer_forward)
from pinchbeam.metrics import penalty_terms
from pinchbeam.scenario import (Placement, ScenarioConfig, sample_placement,
                                waveguide_axes)
from pinchbeam.weights_io import FnnBundle, WeightDimensionError


@pytest.fixture
def weights(small_config):
    return default_weights(small_config, n_layers=2, seed=3)


def test_fnn_forward_shapes_and_activation():
    rng = np.random.default_rng(0)
    bundle = FnnBundle(
        weights=[rng.standard_normal((5, 3)), rng.standard_normal((1, 5))],
        biases=[np.zeros(5), np.zeros(1)],
        activations=["tanh", "sigmoid"])
    y = bundle and fnn_forward(bundle, rng.standard_normal((7, 3)))
    assert y.shape == (7, 1)
    assert np.all((y > 0) & (y < 1))


def test_fnn_forward_rejects_bad_width():
    bundle = FnnBundle(weights=[np.zeros((2, 3))], biases=[np.zeros(2)],
                       activations=["identity"])
    with pytest.raises(WeightDimensionError):
        fnn_forward(bundle, np.zeros((4, 5)))


def test_forward_produces_feasible_solution(weights, small_config,
                                            small_placement):
    cfg = small_config
    layout, state = gnn_forward(weights, small_placement, cfg)
    assert layout.is_feasible(cfg)
    assert np.linalg.norm(state.W) ** 2 <= cfg.P_max + 1e-9
    assert state.W.shape == (cfg.N_t, cfg.K_c)
    assert np.all(np.isfinite(state.W.view(float)))


def test_forward_deterministic(weights, small_config, small_placement):
    a = gnn_forward(weights, small_placement, small_config)
    b = gnn_forward(weights, small_placement, small_config)
    assert np.array_equal(a[0].tx_x, b[0].tx_x)
    assert np.array_equal(a[1].W, b[1].W)


def test_forward_rejects_mismatched_dimensions(weights):
    other = ScenarioConfig(N_t=8, N_r=2, K_c=2, K_s=2, S=2, M=2)
    place = sample_placement(other, 0)
    with pytest.raises(WeightDimensionError):
        gnn_forward(weights, place, other)


def test_layer_forward_advances_layer_counter(weights, small_config,
                                              small_placement):
    cfg = small_config
    state = initial_graph_state(small_placement, cfg)
    nxt = layer_forward(state, weights.layers[0], small_placement, cfg)
    assert nxt.layer == state.layer + 1
    assert nxt.layout.is_feasible(cfg)
    assert np.linalg.norm(nxt.W) ** 2 <= cfg.P_max + 1e-9


def test_user_permutation_equivariance(weights, small_config,
                                       small_placement):
    cfg = small_config
    perm = np.array([1, 0])
    swapped = Placement(users=small_placement.users[perm],
                        targets=small_placement.targets)
    lay_a, st_a = gnn_forward(weights, small_placement, cfg)
    lay_b, st_b = gnn_forward(weights, swapped, cfg)
    assert np.allclose(st_b.W, st_a.W[:, perm], atol=1e-12)
    assert np.allclose(lay_b.tx_x, lay_a.tx_x, atol=1e-12)


def test_depth_changes_output(small_config, small_placement):
    w1 = default_weights(small_config, n_layers=1, seed=3)
    w3 = default_weights(small_config, n_layers=3, seed=3)
    a = gnn_forward(w1, small_placement, small_config)[1].W
    b = gnn_forward(w3, small_placement, small_config)[1].W
    assert not np.allclose(a, b)


def test_forward_output_rate_metrics_finite(weights, small_config,
                                            small_placement):
    cfg = small_config
    layout, state = gnn_forward(weights, small_placement, cfg)
    ch = build_channels(small_placement, layout, cfg)
    pen = penalty_terms(state.W, ch.h_eff_user, cfg)
    assert np.all(np.isfinite(pen))
