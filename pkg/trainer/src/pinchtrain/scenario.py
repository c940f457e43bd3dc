"""Scenario file ingestion and instance sampling.

Mirrors the scenario document contract of the inference package: a flat JSON
mapping of physical constants, optionally with fixed "users"/"targets"
position lists.  Unknown keys are rejected so a typo cannot silently change
the physics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

_KNOWN_KEYS = {
    "D", "d", "S", "M", "N_t", "N_r", "K_c", "K_s", "f_c", "c", "n_eff",
    "kappa", "sigma_c2", "sigma_s2", "L_pulses", "alpha_s", "P_max", "R_min",
    "Delta_min", "include_waveguide_loss",
}


@dataclass(frozen=True)
class Scenario:
    D: float = 20.0
    d: float = 3.0
    S: int = 4
    M: int = 4
    N_t: int = 16
    N_r: int = 2
    K_c: int = 4
    K_s: int = 2
    f_c: float = 28e9
    c: float = 3.0e8
    n_eff: float = 1.4
    kappa: float = 0.08
    sigma_c2: float = 1e-12
    sigma_s2: float = 1e-15
    L_pulses: int = 64
    alpha_s: float = 1.0
    P_max: float = 1.0
    R_min: float = 10.0
    Delta_min: float | None = None
    include_waveguide_loss: bool = False

    def __post_init__(self):
        if self.Delta_min is None:
            object.__setattr__(self, "Delta_min", self.lam / 2.0)
        if self.M > 1 and (self.M - 1) * self.Delta_min > self.segment_length:
            raise ValueError("minimum spacing infeasible within a segment")

    @property
    def lam(self) -> float:
        return self.c / self.f_c

    @property
    def lam_g(self) -> float:
        return self.lam / self.n_eff

    @property
    def k0(self) -> float:
        return 2.0 * math.pi / self.lam

    @property
    def eta(self) -> float:
        return self.c ** 2 / (16.0 * math.pi ** 2 * self.f_c ** 2)

    @property
    def gamma(self) -> float:
        return 2.0 ** self.R_min - 1.0

    @property
    def segment_length(self) -> float:
        return self.D / self.S


def scenario_from_dict(doc: dict) -> tuple[Scenario, np.ndarray | None, np.ndarray | None]:
    unknown = set(doc) - _KNOWN_KEYS - {"users", "targets"}
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in doc.items() if k in _KNOWN_KEYS}
    scen = Scenario(**kwargs)
    users = targets = None
    if "users" in doc or "targets" in doc:
        users = np.asarray(doc.get("users", []), float).reshape(-1, 3)
        targets = np.asarray(doc.get("targets", []), float).reshape(-1, 3)
    return scen, users, targets


def load_scenario(path: str) -> tuple[Scenario, np.ndarray | None, np.ndarray | None]:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def scenario_to_dict(scen: Scenario) -> dict:
    return {f.name: getattr(scen, f.name) for f in fields(Scenario)}


def sample_placements(scen: Scenario, n: int, seed: int):
    """n (users, targets) pairs, i.i.d. uniform over the square at z = d."""
    rng = np.random.default_rng(seed)
    half = scen.D / 2.0
    out = []
    for _ in range(n):
        users = np.column_stack([
            rng.uniform(-half, half, scen.K_c),
            rng.uniform(-half, half, scen.K_c),
            np.full(scen.K_c, scen.d)])
        targets = np.column_stack([
            rng.uniform(-half, half, scen.K_s),
            rng.uniform(-half, half, scen.K_s),
            np.full(scen.K_s, scen.d)]) if scen.K_s else np.zeros((0, 3))
        out.append((users, targets))
    return out
