import json

import numpy as np
import pytest

from pinchtrain import Scenario, load_scenario, sample_placements
from pinchtrain.scenario import scenario_from_dict, scenario_to_dict


def test_defaults_and_derived():
    scen = Scenario()
    assert scen.lam == pytest.approx(3e8 / 28e9)
    assert scen.lam_g == pytest.approx(scen.lam / 1.4)
    assert scen.Delta_min == pytest.approx(scen.lam / 2)
    assert scen.gamma == pytest.approx(2.0 ** scen.R_min - 1.0)
    assert scen.segment_length == pytest.approx(scen.D / scen.S)


def test_unknown_key_rejected():
    with pytest.raises(ValueError):
        scenario_from_dict({"N_t": 4, "banana": 1})


def test_round_trip(tmp_path):
    scen = Scenario(K_c=2, K_s=1, N_t=4, N_r=1, S=2, M=2, R_min=8.0)
    path = tmp_path / "scen.json"
    path.write_text(json.dumps(scenario_to_dict(scen)))
    loaded, users, targets = load_scenario(str(path))
    assert loaded == scen
    assert users is None and targets is None


def test_fixed_placements(tmp_path):
    doc = scenario_to_dict(Scenario(K_c=2, K_s=1, N_t=4, N_r=1, S=2, M=2))
    doc["users"] = [[1.0, 2.0, 3.0], [-1.0, 0.5, 3.0]]
    doc["targets"] = [[0.0, 0.0, 3.0]]
    path = tmp_path / "scen.json"
    path.write_text(json.dumps(doc))
    _, users, targets = load_scenario(str(path))
    assert users.shape == (2, 3) and targets.shape == (1, 3)
    np.testing.assert_allclose(users[1], [-1.0, 0.5, 3.0])


def test_sampling_deterministic_and_in_bounds():
    scen = Scenario(K_c=3, K_s=2, N_t=4, N_r=1, S=2, M=2)
    a = sample_placements(scen, 8, 42)
    b = sample_placements(scen, 8, 42)
    c = sample_placements(scen, 8, 43)
    for (ua, ta), (ub, tb) in zip(a, b):
        np.testing.assert_array_equal(ua, ub)
        np.testing.assert_array_equal(ta, tb)
    assert not np.array_equal(a[0][0], c[0][0])
    for users, targets in a:
        assert users.shape == (3, 3) and targets.shape == (2, 3)
        assert np.all(np.abs(users[:, :2]) <= scen.D / 2)
        assert np.all(users[:, 2] == scen.d)


def test_sampling_covers_the_region():
    scen = Scenario(K_c=4, K_s=1, N_t=4, N_r=1, S=2, M=2)
    xs = np.concatenate([u[:, 0] for u, _ in sample_placements(scen, 200, 0)])
    assert abs(xs.mean()) < 0.5
    assert xs.min() < -8.0 and xs.max() > 8.0
