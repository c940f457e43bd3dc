"""Free-space and in-waveguide channel construction.

Transmit PA positions are flattened waveguide-major: the PA (m, s, n) maps to
flat index (n * S + s) * M + m, so each waveguide owns a contiguous block of
M * S rows and the in-waveguide matrix G_t is block diagonal.

The downlink uses segment selection (only the selected segment of each
transmit waveguide is fed, the other segments contribute exact zeros), the
uplink uses segment aggregation (echoes picked up by all S receive segments
are summed at the RF chain).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Geometry, Placement, PinchingLayout, ScenarioConfig, waveguide_axes


class ChannelError(ValueError):
    """Singular channel geometry (coincident points)."""


def free_space_coeff(p: np.ndarray, q: np.ndarray, config: ScenarioConfig) -> complex:
    """Spherical-wave coefficient sqrt(eta) * exp(-j k0 r) / r between p and q."""
    r = float(np.linalg.norm(np.asarray(p, float) - np.asarray(q, float)))
    if r == 0.0:
        raise ChannelError("coincident transmit/receive points")
    return np.sqrt(config.eta) * np.exp(-1j * config.k0 * r) / r


def in_waveguide_vector(segment_xs: np.ndarray, feed_x: float,
                        config: ScenarioConfig) -> np.ndarray:
    """Guided-wave response of M PAs relative to their segment feed point."""
    dist = np.abs(np.asarray(segment_xs, float) - feed_x)
    g = np.exp(-1j * 2.0 * np.pi / config.lam_g * dist) / np.sqrt(config.M)
    if config.include_waveguide_loss:
        g = g * 10.0 ** (-config.kappa * dist / 20.0)
    return g


@dataclass(frozen=True)
class ChannelSet:
    """All channel quantities for one (placement, layout) pair.

    h_user / h_tar_tx rows are flattened over transmit PAs; h_eff_user and
    h_eff_sense are the per-user and per-receive-waveguide effective channels
    seen from the N_t feed ports.
    """

    h_user: np.ndarray      # (K_c, M*S*N_t)
    h_tar_tx: np.ndarray    # (K_s, M*S*N_t)
    h_tar_rx: np.ndarray    # (K_s, N_r, S)
    G_t: np.ndarray         # (M*S*N_t, N_t), block diagonal
    g_r: np.ndarray         # (N_r, S), unit-modulus receive phases
    rho: np.ndarray         # (K_s, N_r) aggregated receive factors sum_s g*h
    a_tar: np.ndarray       # (K_s, N_t) = G_t^H h_tar_tx
    h_eff_user: np.ndarray  # (K_c, N_t)
    h_eff_sense: np.ndarray  # (N_r, N_t), includes the sqrt(L*alpha_s) scale


def _free_space_matrix(points: np.ndarray, pa_xyz: np.ndarray,
                       config: ScenarioConfig) -> np.ndarray:
    """Stack of free-space coefficients from each flattened PA to each point."""
    if points.size == 0:
        return np.zeros((0, pa_xyz.shape[0]), complex)
    diff = points[:, None, :] - pa_xyz[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    if np.any(r == 0.0):
        raise ChannelError("coincident transmit/receive points")
    return np.sqrt(config.eta) * np.exp(-1j * config.k0 * r) / r


def tx_positions(layout: PinchingLayout, geometry: Geometry,
                 config: ScenarioConfig) -> np.ndarray:
    """Flattened (M*S*N_t, 3) transmit PA coordinates, waveguide-major."""
    N_t, S, M = layout.tx_x.shape
    xyz = np.empty((N_t, S, M, 3))
    xyz[..., 0] = layout.tx_x
    xyz[..., 1] = geometry.tx_y[:, None, None]
    xyz[..., 2] = geometry.z_wg
    return xyz.reshape(N_t * S * M, 3)


def rx_positions(layout: PinchingLayout, geometry: Geometry) -> np.ndarray:
    """(N_r, S, 3) receive PA coordinates."""
    N_r, S = layout.rx_x.shape
    xyz = np.empty((N_r, S, 3))
    xyz[..., 0] = layout.rx_x
    xyz[..., 1] = geometry.rx_y[:, None]
    xyz[..., 2] = geometry.z_wg
    return xyz


def waveguide_matrix(layout: PinchingLayout, config: ScenarioConfig) -> np.ndarray:
    """Block-diagonal in-waveguide matrix; unselected segments are zero."""
    N_t, S, M = layout.tx_x.shape
    G = np.zeros((N_t * S * M, N_t), complex)
    for n in range(N_t):
        s = int(layout.tx_selected_segment[n])
        g = in_waveguide_vector(layout.tx_x[n, s], layout.tx_feed_x[n, s], config)
        base = (n * S + s) * M
        G[base:base + M, n] = g
    return G


def receive_phases(layout: PinchingLayout, config: ScenarioConfig) -> np.ndarray:
    """Pure-phase receive in-waveguide factors g(phi_r,sn), |.| = 1."""
    if layout.rx_x.size == 0:
        return np.zeros((0, layout.rx_feed_x.shape[1] if layout.rx_feed_x.ndim == 2 else 0), complex)
    dist = np.abs(layout.rx_x - layout.rx_feed_x)
    return np.exp(-1j * 2.0 * np.pi / config.lam_g * dist)


def build_channels(placement: Placement, layout: PinchingLayout,
                   config: ScenarioConfig,
                   geometry: Geometry | None = None) -> ChannelSet:
    """Assemble every channel quantity used by the optimizers and metrics."""
    geo = geometry or waveguide_axes(config)
    pa_t = tx_positions(layout, geo, config)
    h_user = _free_space_matrix(placement.users, pa_t, config)
    h_tar_tx = _free_space_matrix(placement.targets, pa_t, config)

    G_t = waveguide_matrix(layout, config)
    g_r = receive_phases(layout, config)

    K_s, N_r = h_tar_tx.shape[0], g_r.shape[0]
    if K_s and N_r:
        pa_r = rx_positions(layout, geo).reshape(N_r * layout.rx_x.shape[1], 3)
        h_tar_rx = _free_space_matrix(placement.targets, pa_r, config)
        h_tar_rx = h_tar_rx.reshape(K_s, N_r, -1)
        rho = np.einsum("ns,kns->kn", g_r, h_tar_rx)
    else:
        h_tar_rx = np.zeros((K_s, N_r, layout.rx_x.shape[1] if layout.rx_x.ndim == 2 else 0), complex)
        rho = np.zeros((K_s, N_r), complex)

    h_eff_user = h_user.conj() @ G_t            # rows are (G^H h_k)^T = h~_k
    h_eff_user = h_eff_user.conj()
    a_tar = (h_tar_tx.conj() @ G_t).conj()      # (K_s, N_t) = G^H h_tar,k
    scale = np.sqrt(config.L_pulses * config.alpha_s)
    # h~_s,n = sqrt(L alpha) sum_k conj(rho_kn) G^H h_tar,k
    h_eff_sense = scale * np.einsum("kn,kt->nt", rho.conj(), a_tar)
    return ChannelSet(
        h_user=h_user, h_tar_tx=h_tar_tx, h_tar_rx=h_tar_rx,
        G_t=G_t, g_r=g_r, rho=rho, a_tar=a_tar,
        h_eff_user=h_eff_user, h_eff_sense=h_eff_sense,
    )
