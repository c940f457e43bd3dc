"""Learned layer-wise inference of PA positions and beamforming.

Each layer mimics one alternating-optimization round: small shared FNNs move
the transmit/receive PA coordinates from chain-rule message scalars, then
update the multiplier, structure, power and receive-filter variables from
hyper-link aggregations; the transmit matrix is rebuilt from the optimal
beamforming structure with the power multiplier fixed at 1.  All FNNs are
applied per vertex/edge, so the forward pass has no K_c- or K_s-sized
parameters and is permutation equivariant.

Feature encoding contract (mirrored bit-for-bit by the trainer):
  * complex scalars enter FNNs as (Re, Im) pairs after dividing by the RMS
    magnitude over the feature's natural index set (all (m,s,n) PAs for the
    three transmit messages, all (s,n) for the receive message, users for the
    interference scalar c_k, (n,k) pairs for the Xi/V aggregations), with the
    RMS guarded below by 1e-30;
  * a PA coordinate enters as (x - x0_segment) / segment_length, a power
    share as p_k / (P_max / K_c); multipliers beta_k enter raw;
  * input layout per FNN:
      F_t:   [x, Re/Im msg_tar, Re/Im msg_wg, Re/Im msg_user]     (7)
      F_r:   [x, Re/Im msg_rx]                                    (3)
      F_beta:[beta_k, Re/Im c_k]                                  (3)
      F_p:   [p_k, Re/Im c_k]                                     (3)
      F_xi:  [Re/Im xi_nk, Re/Im c_k, Re/Im agg_nk]               (6)
      F_V:   [Re/Im v_nk, Re/Im agg_nk]                           (4)
  * outputs: F_t/F_r sigmoid scalars decoded to coordinates as below; F_beta
    and F_p softplus scalars (p renormalized to sum P_max); F_xi and F_V
    (Re, Im) pairs taken verbatim.

Transmit positions decode through cumulative sigmoid spacing: with outputs
u_1..u_M for one segment, c_m = (u_1+..+u_m)/(u_1+..+u_M+1) and
x_m = x0 + (m-1)*Delta_min + (seg_len - (M-1)*Delta_min)*c_m, which respects
the segment box and the minimum spacing exactly while staying differentiable.
Receive positions are x0 + seg_len * sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ao import gradient_core, reconstruct_beamformer, select_segments
from .channel import ChannelSet, build_channels, tx_positions, rx_positions
from .metrics import BeamformingState, initial_state, mui_matrix, weight_update
from .scenario import (Geometry, Placement, PinchingLayout, ScenarioConfig,
                       default_layout, project_layout, waveguide_axes)
from .weights_io import (FnnBundle, GnnWeights, WeightDimensionError,
                         FNN_NAMES, load_weights, load_weights_file,
                         save_weights, save_weights_file)

__all__ = ["GraphState", "approx_gradients", "fnn_forward", "layer_forward",
           "gnn_forward", "default_weights", "load_weights", "save_weights",
           "load_weights_file", "save_weights_file"]

_RMS_FLOOR = 1e-30

# input widths per FNN (see module docstring)
FNN_IN_DIMS = {"F_t": 7, "F_r": 3, "F_beta": 3, "F_p": 3, "F_xi": 6, "F_V": 4}
FNN_OUT_DIMS = {"F_t": 1, "F_r": 1, "F_beta": 1, "F_p": 1, "F_xi": 2, "F_V": 2}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


_ACT = {"sigmoid": _sigmoid, "tanh": np.tanh, "softplus": _softplus,
        "identity": lambda x: x}


def fnn_forward(bundle: FnnBundle, x: np.ndarray) -> np.ndarray:
    """Apply the affine stages along the last axis of x."""
    x = np.asarray(x, float)
    if x.shape[-1] != bundle.in_dim:
        raise WeightDimensionError(
            f"FNN expects input width {bundle.in_dim}, got {x.shape[-1]}")
    for w, b, act in zip(bundle.weights, bundle.biases, bundle.activations):
        x = _ACT[act](x @ w.T + b)
    return x


def _rms_encode(z: np.ndarray) -> np.ndarray:
    """(Re, Im) stacked on a trailing axis after instance-RMS scaling."""
    rms = max(float(np.sqrt(np.mean(np.abs(z) ** 2))) if z.size else 0.0,
              _RMS_FLOOR)
    zn = z / rms
    return np.stack([zn.real, zn.imag], axis=-1)


@dataclass
class GraphState:
    layer: int
    layout: PinchingLayout
    channels: ChannelSet
    W: np.ndarray
    V: np.ndarray
    beta: np.ndarray
    Xi: np.ndarray
    p: np.ndarray
    B: np.ndarray          # interference matrix cached for the current layer
    Theta: np.ndarray


def approx_gradients(state: GraphState, config: ScenarioConfig):
    """Message tensors: the exact gradients with A_n^H Theta_n v_n -> v_n
    (near-perfect-recovery and low-sensing-noise assumptions) and the QoS
    multipliers beta in place of the penalty factors."""
    beta = np.asarray(state.beta, float)
    return gradient_core(state.W, state.V, beta, state.channels, config)


def _dh_dx(points: np.ndarray, pa_xyz: np.ndarray,
           config: ScenarioConfig) -> np.ndarray:
    """d/dx_pa of the free-space coefficient for each (point, PA) pair."""
    if points.size == 0:
        return np.zeros((0, pa_xyz.shape[0]), complex)
    diff = points[:, None, :] - pa_xyz[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    h = np.sqrt(config.eta) * np.exp(-1j * config.k0 * r) / r
    return h * (-1j * config.k0 - 1.0 / r) * (-diff[..., 0]) / r


def _dg_dx_factor(layout: PinchingLayout, config: ScenarioConfig) -> np.ndarray:
    """d ln g / dx for every transmit PA (flattened), sign from the feed side."""
    N_t, S, M = layout.tx_x.shape
    sgn = np.where(layout.tx_x >= layout.tx_feed_x[:, :, None], 1.0, -1.0)
    fac = -1j * 2.0 * np.pi / config.lam_g * sgn
    if config.include_waveguide_loss:
        fac = fac - config.kappa * np.log(10.0) / 20.0 * sgn
    return fac.reshape(N_t * S * M)


def _tx_messages(state: GraphState, placement: Placement, geo: Geometry,
                 config: ScenarioConfig):
    """Three chain-rule complex scalars per transmit PA, flattened (MSN,)."""
    g_htar, g_G, g_huser = approx_gradients(state, config)
    ch = state.channels
    pa_t = tx_positions(state.layout, geo, config)
    msg_tar = np.zeros(pa_t.shape[0], complex)
    if placement.targets.size:
        dtar = _dh_dx(placement.targets, pa_t, config)
        msg_tar = np.einsum("km,km->m", g_htar, dtar)
    # dG/dx touches one entry per PA: row flat, column of its own waveguide
    N_t, S, M = state.layout.tx_x.shape
    col = np.repeat(np.arange(N_t), S * M)
    dG = ch.G_t[np.arange(pa_t.shape[0]), col] * _dg_dx_factor(state.layout, config)
    msg_wg = g_G[np.arange(pa_t.shape[0]), col] * dG
    duser = _dh_dx(placement.users, pa_t, config)
    msg_user = np.einsum("km,km->m", g_huser, duser)
    return msg_tar, msg_wg, msg_user


def _rx_messages(state: GraphState, placement: Placement, geo: Geometry,
                 config: ScenarioConfig) -> np.ndarray:
    """Receive-side message per (n, s): d/dx of the aggregated target path
    times the downstream combining scalar."""
    ch = state.channels
    N_r, S = state.layout.rx_x.shape
    if N_r == 0:
        return np.zeros((0, S), complex)
    msg = np.zeros((N_r, S), complex)
    if placement.targets.size:
        pa_r = rx_positions(state.layout, geo).reshape(N_r * S, 3)
        h = np.stack([ch.h_tar_rx[:, n, :] for n in range(N_r)], axis=1)  # (K_s,N_r,S)
        dh = _dh_dx(placement.targets, pa_r, config).reshape(-1, N_r, S)
        sgn = np.where(state.layout.rx_x >= state.layout.rx_feed_x, 1.0, -1.0)
        dlng = -1j * 2.0 * np.pi / config.lam_g * sgn                     # (N_r,S)
        dgh = ch.g_r[None] * (dh + dlng[None] * h)                        # (K_s,N_r,S)
        down = np.einsum("kt,tc,nc->kn", ch.a_tar.conj(), state.W, state.V)
        msg = np.einsum("kns,kn->ns", dgh, down)
    return msg


def layer_forward(state: GraphState, layer: dict, placement: Placement,
                  config: ScenarioConfig,
                  geometry: Geometry | None = None) -> GraphState:
    geo = geometry or waveguide_axes(config)
    seg = config.segment_length
    N_t, S, M = state.layout.tx_x.shape

    # position updates from the current state's messages
    msg_tar, msg_wg, msg_user = _tx_messages(state, placement, geo, config)
    xn = ((state.layout.tx_x - state.layout.tx_feed_x[:, :, None]) / seg)
    feats_t = np.concatenate(
        [xn.reshape(-1, 1), _rms_encode(msg_tar), _rms_encode(msg_wg),
         _rms_encode(msg_user)], axis=1)
    u = fnn_forward(layer["F_t"], feats_t)[:, 0].reshape(N_t, S, M)
    csum = np.cumsum(u, axis=2)
    cum = csum / (csum[:, :, -1:] + 1.0)
    free = seg - (M - 1) * config.Delta_min
    tx_x = state.layout.tx_feed_x[:, :, None] \
        + np.arange(M)[None, None, :] * config.Delta_min + free * cum

    rx_x = state.layout.rx_x
    if rx_x.size:
        msg_r = _rx_messages(state, placement, geo, config)
        xr = (state.layout.rx_x - state.layout.rx_feed_x) / seg
        feats_r = np.concatenate([xr.reshape(-1, 1),
                                  _rms_encode(msg_r.reshape(-1))], axis=1)
        ur = fnn_forward(layer["F_r"], feats_r)[:, 0].reshape(rx_x.shape)
        rx_x = state.layout.rx_feed_x + seg * ur

    layout = replace(state.layout, tx_x=tx_x, rx_x=rx_x)
    layout = project_layout(layout, config)
    layout = replace(layout, tx_selected_segment=select_segments(
        placement, layout, config, geo))
    channels = build_channels(placement, layout, config, geo)

    # beamforming-variable updates on the refreshed graph
    B = mui_matrix(state.W, channels, config).B
    U = channels.h_eff_user.conj() @ state.W
    c_link = np.einsum("kj,jk->k", U, B)          # h_k^H G W b_k per user
    c_enc = _rms_encode(c_link)                   # (K_c, 2)

    K_c = state.W.shape[1]
    beta_feats = np.concatenate([state.beta.reshape(-1, 1), c_enc], axis=1)
    beta = fnn_forward(layer["F_beta"], beta_feats)[:, 0]
    p_feats = np.concatenate(
        [(state.p / (config.P_max / K_c)).reshape(-1, 1), c_enc], axis=1)
    p_scores = fnn_forward(layer["F_p"], p_feats)[:, 0]
    p = config.P_max * p_scores / max(float(p_scores.sum()), 1e-30)

    N_r = channels.rho.shape[1]
    if N_r:
        z = np.einsum("kns,ns->kn", channels.h_tar_rx.conj(), channels.g_r)
        vecs = channels.a_tar @ state.W.conj()    # rows W^H a_tar_k, (K_s,K_c)
        agg = np.einsum("kn,kc->nc", z, vecs)     # (N_r, K_c)
        agg_enc = _rms_encode(agg).reshape(-1, 2)
        xi_feats = np.concatenate(
            [_rms_encode(state.Xi).reshape(-1, 2),
             np.broadcast_to(c_enc, (N_r, K_c, 2)).reshape(-1, 2),
             agg_enc], axis=1)
        xi_out = fnn_forward(layer["F_xi"], xi_feats)
        Xi = (xi_out[:, 0] + 1j * xi_out[:, 1]).reshape(N_r, K_c)
        v_feats = np.concatenate(
            [_rms_encode(state.V).reshape(-1, 2), agg_enc], axis=1)
        v_out = fnn_forward(layer["F_V"], v_feats)
        V = (v_out[:, 0] + 1j * v_out[:, 1]).reshape(N_r, K_c)
    else:
        Xi = np.zeros((0, K_c), complex)
        V = np.zeros((0, K_c), complex)

    Theta = weight_update(state.W, V, channels, config)
    W = reconstruct_beamformer(p, beta, Xi, 1.0, channels, V, Theta, config)
    return GraphState(layer=state.layer + 1, layout=layout, channels=channels,
                      W=W, V=V, beta=beta, Xi=Xi, p=p, B=B, Theta=Theta)


def initial_graph_state(placement: Placement, config: ScenarioConfig,
                        geometry: Geometry | None = None) -> GraphState:
    geo = geometry or waveguide_axes(config)
    layout = default_layout(config, geo)
    layout = replace(layout, tx_selected_segment=select_segments(
        placement, layout, config, geo))
    channels = build_channels(placement, layout, config, geo)
    st = initial_state(channels, config)
    B = mui_matrix(st.W, channels, config).B
    return GraphState(layer=0, layout=layout, channels=channels, W=st.W,
                      V=st.V, beta=st.beta, Xi=st.Xi, p=st.p, B=B,
                      Theta=st.Theta)


def _canonical_orders(placement: Placement, geo: Geometry):
    """Sorting permutations making the instance independent of input order.

    Users and targets sort lexicographically by coordinates, waveguides by
    their y position, segments per waveguide by feed coordinate.  Running the
    forward pass on the canonically ordered instance and permuting the
    outputs back makes the network exactly (bitwise) permutation
    equivariant: reorderings of the input never change summation order.
    """
    u_ord = np.lexsort(placement.users.T[::-1]) if placement.users.size \
        else np.arange(0)
    t_ord = np.lexsort(placement.targets.T[::-1]) if placement.targets.size \
        else np.arange(0)
    wt_ord = np.argsort(geo.tx_y, kind="stable")
    wr_ord = np.argsort(geo.rx_y, kind="stable")
    st_ord = np.argsort(geo.tx_feed_x[wt_ord], axis=1, kind="stable")
    sr_ord = np.argsort(geo.rx_feed_x[wr_ord], axis=1, kind="stable") \
        if geo.rx_feed_x.size else np.zeros_like(geo.rx_feed_x, dtype=int)
    return u_ord, t_ord, wt_ord, wr_ord, st_ord, sr_ord


def gnn_forward(weights: GnnWeights, placement: Placement,
                config: ScenarioConfig, geometry: Geometry | None = None
                ) -> tuple[PinchingLayout, BeamformingState]:
    """Run all layers from the standard initialization; deterministic.

    The instance is reordered canonically before the pass and the outputs
    are mapped back, so permuting users, targets, waveguides or segments in
    the input permutes the output exactly.
    """
    for name, got, want in (("S", weights.S, config.S),
                            ("M", weights.M, config.M),
                            ("N_t", weights.N_t, config.N_t),
                            ("N_r", weights.N_r, config.N_r)):
        if got != want:
            raise WeightDimensionError(
                f"weights bound to {name}={got}, scenario has {want}")
    geo = geometry or waveguide_axes(config)
    u_ord, t_ord, wt_ord, wr_ord, st_ord, sr_ord = _canonical_orders(
        placement, geo)
    place_c = Placement(users=placement.users[u_ord],
                        targets=placement.targets[t_ord])
    row = np.arange(len(wt_ord))[:, None]
    row_r = np.arange(len(wr_ord))[:, None]
    geo_c = Geometry(
        tx_y=geo.tx_y[wt_ord], rx_y=geo.rx_y[wr_ord],
        tx_feed_x=geo.tx_feed_x[wt_ord][row, st_ord],
        rx_feed_x=(geo.rx_feed_x[wr_ord][row_r, sr_ord]
                   if geo.rx_feed_x.size else geo.rx_feed_x),
        z_wg=geo.z_wg)

    state = initial_graph_state(place_c, config, geo_c)
    for li in range(weights.n_layers):
        state = layer_forward(state, weights.layers[li], place_c, config, geo_c)

    # map canonical outputs back to the caller's ordering
    lay_c = state.layout
    tx_x = np.empty_like(lay_c.tx_x)
    tx_x[wt_ord[:, None], st_ord] = lay_c.tx_x
    sel = np.empty(len(wt_ord), int)
    sel[wt_ord] = st_ord[np.arange(len(wt_ord)), lay_c.tx_selected_segment]
    rx_x = np.empty_like(lay_c.rx_x)
    if rx_x.size:
        rx_x[wr_ord[:, None], sr_ord] = lay_c.rx_x
    layout = PinchingLayout(tx_x=tx_x, rx_x=rx_x, tx_selected_segment=sel,
                            tx_feed_x=geo.tx_feed_x.copy(),
                            rx_feed_x=geo.rx_feed_x.copy())

    W = np.empty_like(state.W)
    W[np.ix_(wt_ord, u_ord)] = state.W
    V = np.empty_like(state.V)
    Xi = np.empty_like(state.Xi)
    Theta = np.empty_like(state.Theta)
    if len(wr_ord):
        V[np.ix_(wr_ord, u_ord)] = state.V
        Xi[np.ix_(wr_ord, u_ord)] = state.Xi
        Theta[np.ix_(wr_ord, u_ord, u_ord)] = state.Theta
    beta = np.empty_like(state.beta)
    beta[u_ord] = state.beta
    p = np.empty_like(state.p)
    p[u_ord] = state.p
    bf = BeamformingState(W=W, V=V, Theta=Theta, p=p, beta=beta, Xi=Xi,
                          nu=1.0)
    return layout, bf


def default_weights(config: ScenarioConfig, n_layers: int = 4,
                    seed: int = 0, provenance: str = "random-init") -> GnnWeights:
    """Deterministic random initialization with the published topology."""
    rng = np.random.default_rng(seed)
    hidden = {"F_t": [], "F_r": [], "F_beta": [8, 8], "F_p": [8, 8],
              "F_xi": [8, 8], "F_V": [8, 8]}
    hid_act = {"F_beta": "softplus", "F_p": "softplus", "F_xi": "tanh",
               "F_V": "softplus"}
    out_act = {"F_t": "sigmoid", "F_r": "sigmoid", "F_beta": "softplus",
               "F_p": "softplus", "F_xi": "identity", "F_V": "identity"}
    layers = []
    for _ in range(n_layers):
        layer = {}
        for name in FNN_NAMES:
            dims = [FNN_IN_DIMS[name]] + hidden[name] + [FNN_OUT_DIMS[name]]
            ws, bs, acts = [], [], []
            for i in range(len(dims) - 1):
                fan_in, fan_out = dims[i], dims[i + 1]
                scale = np.sqrt(2.0 / (fan_in + fan_out))
                ws.append(rng.normal(0.0, scale, (fan_out, fan_in)))
                bs.append(np.zeros(fan_out))
                last = i == len(dims) - 2
                acts.append(out_act[name] if last else hid_act[name])
            layer[name] = FnnBundle(ws, bs, acts)
        layers.append(layer)
    return GnnWeights(n_layers=n_layers, S=config.S, M=config.M,
                      N_t=config.N_t, N_r=config.N_r, layers=layers,
                      provenance=provenance)
