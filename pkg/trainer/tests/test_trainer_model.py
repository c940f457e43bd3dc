import numpy as np
import torch

from pinchtrain import GnnModel, MultiplierNet, Scenario, export_weights
from pinchtrain.model import FNN_NAMES


def small_scenario(**kw):
    base = dict(K_c=2, K_s=1, N_t=4, N_r=1, S=2, M=2)
    base.update(kw)
    return Scenario(**base)


def test_model_seed_determinism():
    scen = small_scenario()
    a = GnnModel(scen, n_layers=2, seed=5)
    b = GnnModel(scen, n_layers=2, seed=5)
    c = GnnModel(scen, n_layers=2, seed=6)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc)
               for pa, pc in zip(a.parameters(), c.parameters()))


def test_export_document_layout():
    scen = small_scenario()
    model = GnnModel(scen, n_layers=3, seed=0)
    doc = export_weights(model, provenance="unit test")
    assert doc["format_version"] == 1
    assert doc["n_layers"] == 3
    assert (doc["S"], doc["M"], doc["N_t"], doc["N_r"]) == (2, 2, 4, 1)
    assert doc["provenance"] == "unit test"
    for li in range(3):
        for name in FNN_NAMES:
            assert f"layer{li}/{name}" in doc["bundles"]
            w0 = doc["tensors"][f"layer{li}/{name}/w0"]
            assert len(w0["data"]) == int(np.prod(w0["shape"]))
    # single-affine nets export exactly one stage
    assert "layer0/F_t/w1" not in doc["tensors"]
    assert "layer0/F_beta/w2" in doc["tensors"]


def test_multiplier_net_nonnegative_and_shapes():
    net = MultiplierNet(seed=0)
    users = torch.randn(5, 3, dtype=torch.float64)
    targets = torch.randn(2, 3, dtype=torch.float64)
    beta = net(users, targets)
    assert beta.shape == (5,)
    assert torch.all(beta >= 0)


def test_multiplier_net_user_equivariance():
    net = MultiplierNet(seed=1)
    users = torch.randn(4, 3, dtype=torch.float64)
    targets = torch.randn(3, 3, dtype=torch.float64)
    perm = torch.tensor([2, 0, 3, 1])
    direct = net(users, targets)
    permuted = net(users[perm], targets)
    assert torch.allclose(permuted, direct[perm], atol=1e-12)


def test_multiplier_net_target_invariance():
    net = MultiplierNet(seed=2)
    users = torch.randn(3, 3, dtype=torch.float64)
    targets = torch.randn(4, 3, dtype=torch.float64)
    perm = torch.tensor([3, 1, 0, 2])
    assert torch.allclose(net(users, targets), net(users, targets[perm]),
                          atol=1e-12)
