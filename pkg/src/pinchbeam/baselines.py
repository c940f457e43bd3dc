"""Reference transmit schemes: zero-forcing, conventional arrays, random PAs."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .ao import select_segments
from .channel import ChannelSet, _free_space_matrix, build_channels
from .scenario import (Geometry, Placement, PinchingLayout, ScenarioConfig,
                       default_layout, waveguide_axes)


def zf_beamformer(channels: ChannelSet, config: ScenarioConfig):
    """Zero-forcing on the effective user channels.

    W = H^H (H H^H)^{-1} with columns rescaled to equal per-user power
    summing to P_max.  Returns (W, rank_warning); a rank-deficient H falls
    back to a regularized pseudo-inverse instead of failing.
    """
    H = channels.h_eff_user                      # rows h~_k^H? rows are h~_k
    K_c, N_t = H.shape
    if N_t < K_c:
        raise ValueError("zero-forcing needs N_t >= K_c")
    Hc = H.conj()                                # stack of h~_k^H as rows
    gram = Hc @ Hc.conj().T
    warning = False
    try:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError
        W = Hc.conj().T @ np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        warning = True
        ridge = 1e-12 * max(np.trace(gram).real / K_c, 1e-300)
        W = Hc.conj().T @ np.linalg.inv(gram + ridge * np.eye(K_c))
    norms = np.linalg.norm(W, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    W = W / norms * np.sqrt(config.P_max / K_c)
    return W, warning


def random_layout(config: ScenarioConfig, seed: int,
                  geometry: Geometry | None = None) -> PinchingLayout:
    """Uniform PA positions per segment box; rejection sampling for the
    minimum spacing, falling back to an evenly spaced grid after 1000 tries."""
    geo = geometry or waveguide_axes(config)
    rng = np.random.default_rng(seed)
    seg = config.segment_length
    base = default_layout(config, geo)
    tx = np.empty_like(base.tx_x)
    for n in range(config.N_t):
        for s in range(config.S):
            lo = geo.tx_feed_x[n, s]
            for _try in range(1000):
                xs = np.sort(rng.uniform(lo, lo + seg, config.M))
                if config.M == 1 or np.min(np.diff(xs)) >= config.Delta_min:
                    break
            else:
                # minimum-spacing grid centered in the segment; always feasible
                span = (config.M - 1) * config.Delta_min
                xs = lo + (seg - span) / 2.0 \
                    + np.arange(config.M) * config.Delta_min
            tx[n, s] = xs
    rx = geo.rx_feed_x + rng.uniform(0.0, seg, size=base.rx_x.shape) \
        if base.rx_x.size else base.rx_x
    return replace(base, tx_x=tx, rx_x=rx)


def random_baseline(placement: Placement, config: ScenarioConfig, seed: int,
                    geometry: Geometry | None = None):
    """Random PA deployment with zero-forcing transmission."""
    geo = geometry or waveguide_axes(config)
    layout = random_layout(config, seed, geo)
    layout = replace(layout, tx_selected_segment=select_segments(
        placement, layout, config, geo))
    channels = build_channels(placement, layout, config, geo)
    W, warning = zf_beamformer(channels, config)
    return layout, channels, W, warning


def uniform_zf_baseline(placement: Placement, config: ScenarioConfig,
                        geometry: Geometry | None = None):
    """Zero-forcing on the uniformly spaced default layout."""
    geo = geometry or waveguide_axes(config)
    layout = default_layout(config, geo)
    layout = replace(layout, tx_selected_segment=select_segments(
        placement, layout, config, geo))
    channels = build_channels(placement, layout, config, geo)
    W, warning = zf_beamformer(channels, config)
    return layout, channels, W, warning


def cmimo_positions(config: ScenarioConfig):
    """Half-wavelength planar grids centered on the deployment footprint.

    Transmit: (M*S) x N_t elements, x along the first index; receive:
    (M*S) x N_r.  Returns (n_x, n_y, 3) coordinate arrays.
    """
    def grid(n_x, n_y):
        d = config.lam / 2.0
        xs = (np.arange(n_x) - (n_x - 1) / 2.0) * d
        ys = (np.arange(n_y) - (n_y - 1) / 2.0) * d
        pts = np.zeros((n_x, n_y, 3))
        pts[..., 0] = xs[:, None]
        pts[..., 1] = ys[None, :]
        return pts

    n_cols = config.M * config.S
    return grid(n_cols, config.N_t), grid(n_cols, config.N_r)


def cmimo_baseline(placement: Placement, config: ScenarioConfig):
    """Conventional MIMO: fixed arrays, per-element channels, identity
    feed mapping, zero-forcing transmission; the sensing chain follows the
    same aggregation form with unit array gains."""
    tx_grid, rx_grid = cmimo_positions(config)
    tx = tx_grid.reshape(-1, 3)
    n_tx = tx.shape[0]
    h_user = _free_space_matrix(placement.users, tx, config)
    h_tar_tx = _free_space_matrix(placement.targets, tx, config)
    # receive rows play the role of waveguides: unit gains, aggregate columns
    N_r = config.N_r
    n_cols = config.M * config.S
    h_tar_rx = np.zeros((placement.targets.shape[0], N_r, n_cols), complex)
    if placement.targets.size and N_r:
        flat = _free_space_matrix(placement.targets, rx_grid.reshape(-1, 3),
                                  config)
        h_tar_rx = flat.reshape(-1, n_cols, N_r).transpose(0, 2, 1)
    g_r = np.ones((N_r, n_cols), complex)
    rho = np.einsum("ns,kns->kn", g_r, h_tar_rx) if N_r else \
        np.zeros((placement.targets.shape[0], 0), complex)
    scale = np.sqrt(config.L_pulses * config.alpha_s)
    h_eff_sense = scale * np.einsum("kn,kt->nt", rho.conj(), h_tar_tx) \
        if N_r else np.zeros((0, n_tx), complex)
    channels = ChannelSet(
        h_user=h_user, h_tar_tx=h_tar_tx, h_tar_rx=h_tar_rx,
        G_t=np.eye(n_tx, dtype=complex), g_r=g_r, rho=rho,
        a_tar=h_tar_tx, h_eff_user=h_user, h_eff_sense=h_eff_sense)
    W, warning = zf_beamformer(channels, config)
    return channels, W, warning
