"""End-to-end checks: training progress, cross-runtime parity, baseline win.

Each test prints one PASS/FAIL line with the measured numbers.
"""

import numpy as np
import torch

from pinchbeam.baselines import random_baseline
from pinchbeam.channel import build_channels, waveguide_axes
from pinchbeam.gnn import gnn_forward
from pinchbeam.metrics import all_rates, csr
from pinchbeam.scenario import Placement, ScenarioConfig
from pinchbeam.weights_io import load_weights

from pinchtrain import Scenario, TrainConfig, export_weights, train
from pinchtrain.forward import forward
from pinchtrain.scenario import sample_placements, scenario_to_dict


def _report(name, ok, detail):
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, detail


def _config_for(scen: Scenario) -> ScenarioConfig:
    return ScenarioConfig(**scenario_to_dict(scen))


def test_s1_training_smoke_loss_decreases():
    scen = Scenario(K_c=2, K_s=1, N_t=4, N_r=1, S=2, M=2)
    config = TrainConfig(n_train=32, n_test=0, epochs=50, batch_size=16,
                         lr=1e-3, dual_lr=1e-3, n_layers=2, seed=0)
    _, _, history = train(config, scen)
    losses = [row["loss"] for row in history]
    assert len(losses) == 50
    assert all(np.isfinite(losses))
    start = float(np.mean(losses[:10]))
    end = float(np.mean(losses[-10:]))
    _report("S1", end < start,
            f"windowed mean loss {start:.4f} -> {end:.4f}, all finite")


def test_s2_exported_weights_reproduce_forward():
    scen = Scenario(K_c=2, K_s=1, N_t=4, N_r=1, S=2, M=2)
    cfg = _config_for(scen)
    geo = waveguide_axes(cfg)
    config = TrainConfig(n_train=8, n_test=0, epochs=2, batch_size=8,
                         lr=1e-3, dual_lr=1e-3, n_layers=2, seed=1)
    model, _, _ = train(config, scen)
    weights = load_weights(export_weights(model))

    worst = 0.0
    for users, targets in sample_placements(scen, 10, 2024):
        with torch.no_grad():
            out = forward(model, users, targets, scen)
        layout, state = gnn_forward(
            weights, Placement(users=users, targets=targets), cfg, geo)
        for trainer_val, primary_val in (
                (out["tx_x"], layout.tx_x),
                (out["rx_x"], layout.rx_x),
                (out["W"], state.W),
                (out["p"], state.p),
                (out["beta"], state.beta)):
            arr = (trainer_val.resolve_conj().numpy()
                   if torch.is_tensor(trainer_val) else np.asarray(trainer_val))
            worst = max(worst, float(np.max(np.abs(arr - primary_val))))
        assert np.array_equal(np.asarray(out["sel"]),
                              layout.tx_selected_segment)
    _report("S2", worst < 1e-5,
            f"worst forward deviation {worst:.3e} over 10 placements")


def test_s3_trained_network_beats_random_baseline():
    scen = Scenario(K_c=4, K_s=1, N_t=4, N_r=1, S=2, M=2, R_min=11.0)
    cfg = _config_for(scen)
    geo = waveguide_axes(cfg)
    config = TrainConfig(n_train=192, n_test=0, epochs=8, batch_size=32,
                         lr=1e-3, dual_lr=0.05, n_layers=2, seed=0)
    model, _, _ = train(config, scen)

    test_set = sample_placements(scen, 50, 12345)
    gnn_csrs, rnd_csrs = [], []
    for i, (users, targets) in enumerate(test_set):
        with torch.no_grad():
            out = forward(model, users, targets, scen)
        gnn_csrs.append(csr(out["rates"].numpy(), scen.R_min))

        placement = Placement(users=users, targets=targets)
        _, channels, W, _ = random_baseline(placement, cfg, seed=i,
                                            geometry=geo)
        rnd_csrs.append(csr(all_rates(W, channels, cfg), scen.R_min))

    gnn_mean = float(np.mean(gnn_csrs))
    rnd_mean = float(np.mean(rnd_csrs))
    _report("S3", gnn_mean >= rnd_mean,
            f"trained CSR {gnn_mean:.3f} vs random deployment {rnd_mean:.3f} "
            f"over {len(test_set)} samples")
