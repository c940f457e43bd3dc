"""Scenario constants, instance placements and waveguide geometry.

All distances are in meters, powers in watts, frequencies in Hz.  The service
area is a D x D square; transmit/receive waveguides run parallel to the x-axis
at z = 0, users and targets fly in the plane z = d.  Each waveguide is split
into S end-to-end segments with an individual feed point at the left end of
the segment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

SPEED_OF_LIGHT = 3.0e8


class ScenarioError(ValueError):
    """Invalid scenario configuration or scenario file."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and system constants for one deployment."""

    D: float = 20.0            # side length of the square region (m)
    d: float = 3.0             # z offset from waveguides to the UAV plane (m)
    S: int = 4                 # segments per waveguide
    M: int = 4                 # transmit PAs per segment
    N_t: int = 16              # transmit waveguides
    N_r: int = 2               # receive waveguides
    K_c: int = 4               # users
    K_s: int = 2               # targets
    f_c: float = 28e9          # carrier frequency (Hz)
    c: float = SPEED_OF_LIGHT  # propagation speed (m/s)
    n_eff: float = 1.4         # effective refractive index of the waveguide
    kappa: float = 0.08        # in-waveguide attenuation (dB/m)
    sigma_c2: float = 1e-12    # communication noise power (W), -90 dBm
    sigma_s2: float = 1e-15    # sensing noise power (W), -120 dBm
    L_pulses: int = 64         # frame length / number of sensing pulses
    alpha_s: float = 1.0       # radar cross-section variance
    P_max: float = 1.0         # transmit power budget (W)
    R_min: float = 10.0        # minimum user rate (bits per channel use)
    Delta_min: float | None = None  # minimum intra-segment PA spacing; None -> lambda/2
    include_waveguide_loss: bool = False

    def __post_init__(self):
        if self.S < 1 or self.M < 1:
            raise ScenarioError("S and M must be at least 1")
        if self.N_t < self.K_c:
            raise ScenarioError("N_t must be >= K_c for zero-forcing feasibility")
        if self.N_t < 1 or self.N_r < 0 or self.K_c < 1 or self.K_s < 0:
            raise ScenarioError("waveguide and user counts out of range")
        for name in ("D", "d", "f_c", "c", "n_eff", "sigma_c2", "sigma_s2",
                     "alpha_s", "P_max"):
            if getattr(self, name) <= 0 and not (name == "D" and self.D == 0.0):
                raise ScenarioError(f"{name} must be strictly positive")
        if self.R_min < 0 or self.kappa < 0 or self.L_pulses < 1:
            raise ScenarioError("R_min, kappa must be nonnegative; L_pulses >= 1")
        if self.Delta_min is None:
            object.__setattr__(self, "Delta_min", self.lam / 2.0)
        if self.Delta_min < 0:
            raise ScenarioError("Delta_min must be nonnegative")
        # feasibility of the minimum-spacing constraint inside one segment
        if self.M > 1 and (self.M - 1) * self.Delta_min > self.segment_length:
            raise ScenarioError(
                f"cannot place {self.M} PAs with spacing {self.Delta_min} "
                f"in a segment of length {self.segment_length}")

    # -- derived constants, recomputable from the fields ---------------------

    @property
    def lam(self) -> float:
        """Free-space wavelength."""
        return self.c / self.f_c

    @property
    def lam_g(self) -> float:
        """Guided wavelength inside the dielectric waveguide."""
        return self.lam / self.n_eff

    @property
    def k0(self) -> float:
        """Free-space wavenumber 2*pi/lambda."""
        return 2.0 * math.pi / self.lam

    @property
    def eta(self) -> float:
        """Path-loss constant c^2 / (16 pi^2 f_c^2)."""
        return self.c ** 2 / (16.0 * math.pi ** 2 * self.f_c ** 2)

    @property
    def gamma(self) -> float:
        """SINR threshold 2^R_min - 1."""
        return 2.0 ** self.R_min - 1.0

    @property
    def segment_length(self) -> float:
        return self.D / self.S


@dataclass(frozen=True)
class Placement:
    """User and target positions for one problem instance."""

    users: np.ndarray    # (K_c, 3)
    targets: np.ndarray  # (K_s, 3)

    def __post_init__(self):
        object.__setattr__(self, "users", np.atleast_2d(np.asarray(self.users, float)))
        t = np.asarray(self.targets, float).reshape(-1, 3)
        object.__setattr__(self, "targets", t)
        if self.users.shape[1] != 3:
            raise ScenarioError("user positions must be [x, y, z] triples")

    def validate(self, config: ScenarioConfig) -> None:
        half = config.D / 2.0 + 1e-9
        for name, arr in (("users", self.users), ("targets", self.targets)):
            if arr.size == 0:
                continue
            if np.any(np.abs(arr[:, :2]) > half):
                raise ScenarioError(f"{name} fall outside the D x D square")
            if np.any(np.abs(arr[:, 2] - config.d) > 1e-9):
                raise ScenarioError(f"{name} must lie in the plane z = d")


@dataclass(frozen=True)
class Geometry:
    """Explicit waveguide axes and feed points.

    Kept as arrays (rather than recomputed from indices) so that any
    permutation of waveguides or segments can be expressed by permuting the
    arrays; all downstream operations are index-agnostic.
    """

    tx_y: np.ndarray       # (N_t,) waveguide y coordinates
    rx_y: np.ndarray       # (N_r,)
    tx_feed_x: np.ndarray  # (N_t, S) feed-point x of each transmit segment
    rx_feed_x: np.ndarray  # (N_r, S)
    z_wg: float = 0.0      # waveguide height


def waveguide_axes(config: ScenarioConfig) -> Geometry:
    """Uniform waveguide axes along y and left-end segment feed points."""
    D, S = config.D, config.S
    n_t = np.arange(1, config.N_t + 1)
    n_r = np.arange(1, config.N_r + 1)
    tx_y = (2 * n_t - 1) * D / (2 * config.N_t) - D / 2
    rx_y = (2 * n_r - 1) * D / (2 * config.N_r) - D / 2 if config.N_r else np.zeros(0)
    feed = (np.arange(1, S + 1) - 1) * D / S - D / 2
    return Geometry(
        tx_y=tx_y,
        rx_y=rx_y,
        tx_feed_x=np.tile(feed, (config.N_t, 1)),
        rx_feed_x=np.tile(feed, (max(config.N_r, 1), 1))[: config.N_r],
    )


@dataclass(frozen=True)
class PinchingLayout:
    """PA x-coordinates plus the per-waveguide transmit segment selection."""

    tx_x: np.ndarray               # (N_t, S, M)
    rx_x: np.ndarray               # (N_r, S)
    tx_selected_segment: np.ndarray  # (N_t,) int
    tx_feed_x: np.ndarray          # (N_t, S)
    rx_feed_x: np.ndarray          # (N_r, S)

    def __post_init__(self):
        for name in ("tx_x", "rx_x", "tx_feed_x", "rx_feed_x"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        object.__setattr__(self, "tx_selected_segment",
                           np.asarray(self.tx_selected_segment, int))

    def is_feasible(self, config: ScenarioConfig, tol: float = 1e-9) -> bool:
        seg = config.segment_length
        rel_t = self.tx_x - self.tx_feed_x[:, :, None]
        if np.any(rel_t < -tol) or np.any(rel_t > seg + tol):
            return False
        if self.rx_x.size:
            rel_r = self.rx_x - self.rx_feed_x
            if np.any(rel_r < -tol) or np.any(rel_r > seg + tol):
                return False
        if config.M > 1:
            gaps = np.diff(self.tx_x, axis=2)
            if np.any(gaps < config.Delta_min - tol):
                return False
        return True


def sample_placement(config: ScenarioConfig, seed: int) -> Placement:
    """Users and targets i.i.d. uniform over the D x D square at z = d."""
    rng = np.random.default_rng(seed)
    half = config.D / 2.0
    users = np.column_stack([
        rng.uniform(-half, half, config.K_c),
        rng.uniform(-half, half, config.K_c),
        np.full(config.K_c, config.d),
    ])
    targets = np.column_stack([
        rng.uniform(-half, half, config.K_s),
        rng.uniform(-half, half, config.K_s),
        np.full(config.K_s, config.d),
    ]) if config.K_s else np.zeros((0, 3))
    return Placement(users=users, targets=targets)


def _isotonic_increasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto nondecreasing sequences."""
    n = len(y)
    level = y.astype(float).copy()
    weight = np.ones(n)
    # blocks stored as (value, weight) merged right-to-left
    vals: list[float] = []
    wts: list[float] = []
    for v, w in zip(level, weight):
        vals.append(v)
        wts.append(w)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2 = vals.pop(), wts.pop()
            v1, w1 = vals.pop(), wts.pop()
            vals.append((v1 * w1 + v2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
    out = np.empty(n)
    i = 0
    for v, w in zip(vals, wts):
        out[i:i + int(w)] = v
        i += int(w)
    return out


def _project_segment(x: np.ndarray, feed: float, seg_len: float,
                     delta: float) -> np.ndarray:
    """Euclidean projection of one segment's PA coordinates.

    Feasible set: feed <= x_1, x_m - x_{m-1} >= delta, x_M <= feed + seg_len.
    Shifting y_m = x_m - (m-1)*delta turns it into box-bounded isotonic
    regression, solved by PAV followed by clipping.
    """
    m = len(x)
    shift = np.arange(m) * delta
    y = _isotonic_increasing(x - shift)
    y = np.clip(y, feed, feed + seg_len - (m - 1) * delta)
    return y + shift


def project_layout(layout: PinchingLayout, config: ScenarioConfig) -> PinchingLayout:
    """Project arbitrary coordinates onto the feasible position polytope."""
    seg = config.segment_length
    if config.M > 1 and (config.M - 1) * config.Delta_min > seg:
        raise ScenarioError("minimum spacing infeasible within a segment")
    tx = layout.tx_x.copy()
    for n in range(tx.shape[0]):
        for s in range(tx.shape[1]):
            tx[n, s] = _project_segment(tx[n, s], layout.tx_feed_x[n, s], seg,
                                        config.Delta_min)
    rx = layout.rx_x.copy()
    if rx.size:
        rx = np.clip(rx, layout.rx_feed_x, layout.rx_feed_x + seg)
    return replace(layout, tx_x=tx, rx_x=rx)


def default_layout(config: ScenarioConfig,
                   geometry: Geometry | None = None) -> PinchingLayout:
    """PAs uniformly spaced inside every segment; segment 0 selected."""
    geo = geometry or waveguide_axes(config)
    seg = config.segment_length
    offs = (np.arange(config.M) + 0.5) * seg / config.M
    tx = geo.tx_feed_x[:, :, None] + offs[None, None, :]
    rx = geo.rx_feed_x + seg / 2.0
    return PinchingLayout(
        tx_x=tx, rx_x=rx,
        tx_selected_segment=np.zeros(config.N_t, int),
        tx_feed_x=geo.tx_feed_x.copy(), rx_feed_x=geo.rx_feed_x.copy(),
    )


# -- scenario files ----------------------------------------------------------

_CONFIG_KEYS = {f.name for f in fields(ScenarioConfig)}


def scenario_from_dict(doc: dict) -> tuple[ScenarioConfig, Placement | None]:
    """Parse a flat scenario document; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(doc) - _CONFIG_KEYS - {"users", "targets"}
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    cfg_kwargs = {k: v for k, v in doc.items() if k in _CONFIG_KEYS}
    config = ScenarioConfig(**cfg_kwargs)
    placement = None
    if "users" in doc or "targets" in doc:
        users = np.asarray(doc.get("users", []), float).reshape(-1, 3)
        targets = np.asarray(doc.get("targets", []), float).reshape(-1, 3)
        placement = Placement(users=users, targets=targets)
        placement.validate(config)
    return config, placement


def load_scenario(path: str) -> tuple[ScenarioConfig, Placement | None]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"malformed scenario file: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(config: ScenarioConfig,
                     placement: Placement | None = None) -> dict:
    doc = {f.name: getattr(config, f.name) for f in fields(ScenarioConfig)}
    if placement is not None:
        doc["users"] = placement.users.tolist()
        doc["targets"] = placement.targets.tolist()
    return doc
