"""Differentiable forward pass of the inference network.

Torch re-implementation of the documented layer recipe: chain-rule message
scalars move the PA coordinates through small shared FNNs, hyper-link
aggregations update the multiplier/power/structure/filter variables, and the
transmit matrix is rebuilt from the optimal beamforming structure with the
power multiplier fixed at 1.  Feature encodings (instance-RMS scaled (Re, Im)
pairs, normalized coordinates, raw multipliers) and the cumulative-sigmoid
position decode follow the inference package's contract bit for bit, so an
exported weight document reproduces these outputs there to fp accuracy.

Everything runs in float64/complex128; positions, channels and beamformers
stay on the autograd tape.  Discrete choices (segment selection, canonical
sorting) are taken off-tape and treated as constants of the instance.
"""

from __future__ import annotations

import numpy as np
import torch

from .scenario import Scenario

_RMS_FLOOR = 1e-30


# -- geometry (constants of the scenario) ------------------------------------

def waveguide_axes(scen: Scenario):
    D, S = scen.D, scen.S
    n_t = np.arange(1, scen.N_t + 1)
    n_r = np.arange(1, scen.N_r + 1)
    tx_y = (2 * n_t - 1) * D / (2 * scen.N_t) - D / 2
    rx_y = (2 * n_r - 1) * D / (2 * scen.N_r) - D / 2 if scen.N_r else np.zeros(0)
    feed = (np.arange(1, S + 1) - 1) * D / S - D / 2
    return {
        "tx_y": tx_y, "rx_y": rx_y,
        "tx_feed_x": np.tile(feed, (scen.N_t, 1)),
        "rx_feed_x": np.tile(feed, (max(scen.N_r, 1), 1))[: scen.N_r],
        "z_wg": 0.0,
    }


def default_positions(scen: Scenario, geo) -> tuple[torch.Tensor, torch.Tensor]:
    seg = scen.segment_length
    offs = (np.arange(scen.M) + 0.5) * seg / scen.M
    tx = geo["tx_feed_x"][:, :, None] + offs[None, None, :]
    rx = geo["rx_feed_x"] + seg / 2.0
    return torch.from_numpy(tx.copy()), torch.from_numpy(rx.copy())


def _pa_xyz(tx_x: torch.Tensor, geo, scen: Scenario) -> torch.Tensor:
    """Flattened (M*S*N_t, 3) transmit PA coordinates, waveguide-major."""
    N_t, S, M = tx_x.shape
    y = torch.from_numpy(geo["tx_y"]).reshape(N_t, 1, 1).expand(N_t, S, M)
    z = torch.full_like(tx_x, geo["z_wg"])
    return torch.stack([tx_x, y.to(tx_x.dtype), z], dim=-1).reshape(-1, 3)


def _rx_xyz(rx_x: torch.Tensor, geo) -> torch.Tensor:
    N_r, S = rx_x.shape
    y = torch.from_numpy(geo["rx_y"]).reshape(N_r, 1).expand(N_r, S)
    z = torch.zeros_like(rx_x)
    return torch.stack([rx_x, y.to(rx_x.dtype), z], dim=-1).reshape(-1, 3)


# -- channels -----------------------------------------------------------------

def _free_space(points: np.ndarray, pa: torch.Tensor, scen: Scenario) -> torch.Tensor:
    """(P, Q) spherical-wave coefficients sqrt(eta) exp(-j k0 r) / r."""
    if points.size == 0:
        return torch.zeros((0, pa.shape[0]), dtype=torch.complex128)
    pts = torch.from_numpy(np.asarray(points, float))
    diff = pts[:, None, :] - pa[None, :, :]
    r = torch.linalg.norm(diff, dim=2)
    phase = torch.complex(torch.zeros_like(r), -scen.k0 * r)
    return np.sqrt(scen.eta) * torch.exp(phase) / r


def _dh_dx(points: np.ndarray, pa: torch.Tensor, scen: Scenario) -> torch.Tensor:
    """d/dx_pa of the free-space coefficient for each (point, PA) pair."""
    if points.size == 0:
        return torch.zeros((0, pa.shape[0]), dtype=torch.complex128)
    pts = torch.from_numpy(np.asarray(points, float))
    diff = pts[:, None, :] - pa[None, :, :]
    r = torch.linalg.norm(diff, dim=2)
    h = np.sqrt(scen.eta) * torch.exp(
        torch.complex(torch.zeros_like(r), -scen.k0 * r)) / r
    fac = torch.complex(-1.0 / r, torch.full_like(r, -scen.k0))
    return h * fac * (-diff[..., 0]) / r


def _guided(dist: torch.Tensor, scen: Scenario, *, tx: bool) -> torch.Tensor:
    g = torch.exp(torch.complex(torch.zeros_like(dist),
                                -2.0 * np.pi / scen.lam_g * dist))
    if tx:
        g = g / np.sqrt(scen.M)
        if scen.include_waveguide_loss:
            g = g * 10.0 ** (-scen.kappa * dist / 20.0)
    return g


def select_segments(users, targets, tx_x: torch.Tensor, geo, scen: Scenario) -> np.ndarray:
    """Per waveguide, segment with the largest aggregate channel energy."""
    with torch.no_grad():
        pa = _pa_xyz(tx_x, geo, scen)
        N_t, S, M = tx_x.shape
        score = torch.zeros((N_t, S), dtype=torch.float64)
        for pts in (users, targets):
            if np.asarray(pts).size:
                h = _free_space(pts, pa, scen).reshape(-1, N_t, S, M)
                score += (h.abs() ** 2).sum(dim=(0, 3))
        return score.argmax(dim=1).numpy()


def build_channels(users, targets, tx_x, rx_x, sel, geo, scen: Scenario) -> dict:
    pa_t = _pa_xyz(tx_x, geo, scen)
    h_user = _free_space(users, pa_t, scen)
    h_tar_tx = _free_space(targets, pa_t, scen)

    N_t, S, M = tx_x.shape
    G = torch.zeros((N_t * S * M, N_t), dtype=torch.complex128)
    feed = torch.from_numpy(geo["tx_feed_x"])
    for n in range(N_t):
        s = int(sel[n])
        dist = (tx_x[n, s] - feed[n, s]).abs()
        base = (n * S + s) * M
        G[base:base + M, n] = _guided(dist, scen, tx=True)

    K_s, N_r = h_tar_tx.shape[0], rx_x.shape[0]
    if N_r:
        g_r = _guided((rx_x - torch.from_numpy(geo["rx_feed_x"])).abs(),
                      scen, tx=False)
    else:
        g_r = torch.zeros((0, S), dtype=torch.complex128)
    if K_s and N_r:
        pa_r = _rx_xyz(rx_x, geo)
        h_tar_rx = _free_space(targets, pa_r, scen).reshape(K_s, N_r, -1)
        rho = torch.einsum("ns,kns->kn", g_r, h_tar_rx)
    else:
        h_tar_rx = torch.zeros((K_s, N_r, rx_x.shape[1] if N_r else 0),
                               dtype=torch.complex128)
        rho = torch.zeros((K_s, N_r), dtype=torch.complex128)

    h_eff_user = (h_user.conj() @ G).conj()
    a_tar = (h_tar_tx.conj() @ G).conj()
    scale = np.sqrt(scen.L_pulses * scen.alpha_s)
    h_eff_sense = scale * torch.einsum("kn,kt->nt", rho.conj(), a_tar)
    return {"h_user": h_user, "h_tar_tx": h_tar_tx, "h_tar_rx": h_tar_rx,
            "G": G, "g_r": g_r, "rho": rho, "a_tar": a_tar,
            "Hu": h_eff_user, "Hs": h_eff_sense}


# -- beamforming-variable closed forms ---------------------------------------

def receive_filters(W, ch, scen: Scenario):
    T = ch["Hs"].conj() @ W
    denom = (T.abs() ** 2).sum(dim=1) + scen.sigma_s2
    return T.conj() / denom[:, None]


def weight_matrices(W, V, ch, scen: Scenario):
    N_r, K_c = V.shape[0], W.shape[1]
    eye = torch.eye(K_c, dtype=torch.complex128)
    out = []
    for n in range(N_r):
        T = ch["Hs"][n].conj() @ W
        A = eye - torch.outer(V[n], T)
        E = A @ A.conj().T + scen.sigma_s2 * torch.outer(V[n], V[n].conj())
        Th = torch.linalg.inv(E)
        out.append(0.5 * (Th + Th.conj().T))
    return torch.stack(out) if out else torch.zeros((0, K_c, K_c),
                                                    dtype=torch.complex128)


def reconstruct_beamformer(p, beta, Xi, ch, scen: Scenario, V, Theta):
    Hu, Hs = ch["Hu"], ch["Hs"]
    K_c, N_t = Hu.shape
    theta_v = torch.einsum("nij,nj->ni", Theta, V)
    q = torch.einsum("ni,ni->n", V.conj(), theta_v).real
    A = torch.eye(N_t, dtype=torch.complex128)
    if Hs.shape[0]:
        A = A + torch.einsum("n,nt,nu->tu", q.to(torch.complex128), Hs, Hs.conj())
    A = A + torch.einsum("j,jt,ju->tu",
                         (beta / scen.sigma_c2).to(torch.complex128),
                         Hu, Hu.conj())
    rhs = Hu.T.clone()
    if Hs.shape[0]:
        rhs = rhs + Hs.T @ Xi
    dirs = torch.linalg.solve(A, rhs)
    norms = torch.linalg.norm(dirs, dim=0)
    norms = torch.where(norms > 0, norms, torch.ones_like(norms))
    return dirs / norms * torch.sqrt(p).to(torch.complex128)


# -- message scalars ----------------------------------------------------------

def _gradient_core(W, m, mu, ch, scen: Scenario):
    G, rho, Hu = ch["G"], ch["rho"], ch["Hu"]
    K_s, N_r = rho.shape
    MSN, N_t = G.shape
    scale = np.sqrt(scen.L_pulses * scen.alpha_s)

    GW = G @ W
    g_htar = torch.zeros((K_s, MSN), dtype=torch.complex128)
    if N_r and K_s:
        GWm = GW @ m.T
        g_htar = -scale * (GWm @ rho.T).T

    Ueff = Hu.conj() @ W
    B = Ueff - torch.diag_embed(torch.diagonal(Ueff) * (1.0 + 1.0 / scen.gamma))

    g_G = torch.zeros((MSN, N_t), dtype=torch.complex128)
    if N_r and K_s:
        r_tilde = scale * torch.einsum("kn,km->nm", rho.conj(), ch["h_tar_tx"])
        Wm = W @ m.T
        g_G = g_G - torch.einsum("nm,tn->mt", r_tilde, Wm.conj())
    WcB = W.conj() @ B.T
    g_G = g_G + torch.einsum("k,km,tk->mt",
                             (mu / scen.sigma_c2).to(torch.complex128),
                             ch["h_user"], WcB)

    g_huser = (mu / scen.sigma_c2)[:, None].to(torch.complex128) \
        * (G @ (W @ B.conj().T)).T
    return g_htar, g_G, g_huser, B


def _dg_dx_factor(tx_x, geo, scen: Scenario):
    feed = torch.from_numpy(geo["tx_feed_x"])[:, :, None]
    sgn = torch.where(tx_x >= feed, torch.ones_like(tx_x), -torch.ones_like(tx_x))
    fac = torch.complex(torch.zeros_like(sgn),
                        -2.0 * np.pi / scen.lam_g * sgn)
    if scen.include_waveguide_loss:
        fac = fac - scen.kappa * np.log(10.0) / 20.0 * sgn
    return fac.reshape(-1)


def _rms_encode(z: torch.Tensor) -> torch.Tensor:
    rms = torch.sqrt((z.abs() ** 2).mean()) if z.numel() else torch.tensor(0.0)
    rms = torch.clamp(rms, min=_RMS_FLOOR)
    zn = z / rms
    return torch.stack([zn.real, zn.imag], dim=-1)


# -- one layer ----------------------------------------------------------------

def layer_forward(layer, state, users, targets, geo, scen: Scenario):
    seg = scen.segment_length
    tx_x, rx_x = state["tx_x"], state["rx_x"]
    N_t, S, M = tx_x.shape
    ch = state["ch"]
    W, V = state["W"], state["V"]

    g_htar, g_G, g_huser, _ = _gradient_core(W, V, state["beta"], ch, scen)
    pa_t = _pa_xyz(tx_x, geo, scen)

    msg_tar = torch.zeros(pa_t.shape[0], dtype=torch.complex128)
    if np.asarray(targets).size:
        dtar = _dh_dx(targets, pa_t, scen)
        msg_tar = torch.einsum("km,km->m", g_htar, dtar)
    idx = torch.arange(pa_t.shape[0])
    col = torch.repeat_interleave(torch.arange(N_t), S * M)
    dG = ch["G"][idx, col] * _dg_dx_factor(tx_x, geo, scen)
    msg_wg = g_G[idx, col] * dG
    msg_user = torch.einsum("km,km->m", g_huser, _dh_dx(users, pa_t, scen))

    feed = torch.from_numpy(geo["tx_feed_x"])
    xn = ((tx_x - feed[:, :, None]) / seg).reshape(-1, 1)
    feats_t = torch.cat([xn, _rms_encode(msg_tar), _rms_encode(msg_wg),
                         _rms_encode(msg_user)], dim=1)
    u = layer["F_t"](feats_t)[:, 0].reshape(N_t, S, M)
    csum = torch.cumsum(u, dim=2)
    cum = csum / (csum[:, :, -1:] + 1.0)
    free = seg - (M - 1) * scen.Delta_min
    tx_new = feed[:, :, None] + torch.arange(M, dtype=torch.float64) \
        * scen.Delta_min + free * cum

    rx_new = rx_x
    if rx_x.numel():
        # receive message: d/dx of the aggregated target path times the
        # downstream combining scalar
        N_r = rx_x.shape[0]
        pa_r = _rx_xyz(rx_x, geo)
        msg_r = torch.zeros((N_r, S), dtype=torch.complex128)
        if np.asarray(targets).size:
            h = ch["h_tar_rx"]
            dh = _dh_dx(targets, pa_r, scen).reshape(-1, N_r, S)
            rfeed = torch.from_numpy(geo["rx_feed_x"])
            sgn = torch.where(rx_x >= rfeed, torch.ones_like(rx_x),
                              -torch.ones_like(rx_x))
            dlng = torch.complex(torch.zeros_like(sgn),
                                 -2.0 * np.pi / scen.lam_g * sgn)
            dgh = ch["g_r"][None] * (dh + dlng[None] * h)
            down = torch.einsum("kt,tc,nc->kn", ch["a_tar"].conj(), W, V)
            msg_r = torch.einsum("kns,kn->ns", dgh, down)
        xr = ((rx_x - torch.from_numpy(geo["rx_feed_x"])) / seg).reshape(-1, 1)
        feats_r = torch.cat([xr, _rms_encode(msg_r.reshape(-1))], dim=1)
        ur = layer["F_r"](feats_r)[:, 0].reshape(rx_x.shape)
        rx_new = torch.from_numpy(geo["rx_feed_x"]) + seg * ur

    sel = select_segments(users, targets, tx_new.detach(), geo, scen)
    ch = build_channels(users, targets, tx_new, rx_new, sel, geo, scen)

    U = ch["Hu"].conj() @ W
    B = U - torch.diag_embed(torch.diagonal(U) * (1.0 + 1.0 / scen.gamma))
    c_link = torch.einsum("kj,jk->k", U, B)
    c_enc = _rms_encode(c_link)

    K_c = W.shape[1]
    beta_feats = torch.cat([state["beta"].reshape(-1, 1), c_enc], dim=1)
    beta = layer["F_beta"](beta_feats)[:, 0]
    p_feats = torch.cat(
        [(state["p"] / (scen.P_max / K_c)).reshape(-1, 1), c_enc], dim=1)
    p_scores = layer["F_p"](p_feats)[:, 0]
    p = scen.P_max * p_scores / torch.clamp(p_scores.sum(), min=1e-30)

    N_r = ch["rho"].shape[1]
    if N_r:
        z = torch.einsum("kns,ns->kn", ch["h_tar_rx"].conj(), ch["g_r"])
        vecs = ch["a_tar"] @ W.conj()
        agg = torch.einsum("kn,kc->nc", z, vecs)
        agg_enc = _rms_encode(agg).reshape(-1, 2)
        xi_feats = torch.cat(
            [_rms_encode(state["Xi"]).reshape(-1, 2),
             c_enc[None].expand(N_r, K_c, 2).reshape(-1, 2), agg_enc], dim=1)
        xi_out = layer["F_xi"](xi_feats)
        Xi = torch.complex(xi_out[:, 0], xi_out[:, 1]).reshape(N_r, K_c)
        v_feats = torch.cat([_rms_encode(V).reshape(-1, 2), agg_enc], dim=1)
        v_out = layer["F_V"](v_feats)
        V_new = torch.complex(v_out[:, 0], v_out[:, 1]).reshape(N_r, K_c)
    else:
        Xi = torch.zeros((0, K_c), dtype=torch.complex128)
        V_new = torch.zeros((0, K_c), dtype=torch.complex128)

    Theta = weight_matrices(W, V_new, ch, scen)
    W_new = reconstruct_beamformer(p, beta, Xi, ch, scen, V_new, Theta)
    return {"tx_x": tx_new, "rx_x": rx_new, "sel": sel, "ch": ch, "W": W_new,
            "V": V_new, "beta": beta, "Xi": Xi, "p": p}


def initial_graph(users, targets, scen: Scenario, geo):
    tx_x, rx_x = default_positions(scen, geo)
    sel = select_segments(users, targets, tx_x, geo, scen)
    ch = build_channels(users, targets, tx_x, rx_x, sel, geo, scen)
    Hu = ch["Hu"]
    K_c = Hu.shape[0]
    norms = torch.linalg.norm(Hu, dim=1)
    norms = torch.where(norms > 0, norms, torch.ones_like(norms))
    W = (Hu.conj() / norms[:, None]).T * np.sqrt(scen.P_max / K_c)
    V = receive_filters(W, ch, scen)
    return {"tx_x": tx_x, "rx_x": rx_x, "sel": sel, "ch": ch, "W": W, "V": V,
            "beta": torch.ones(K_c, dtype=torch.float64),
            "Xi": torch.zeros((scen.N_r, K_c), dtype=torch.complex128),
            "p": torch.full((K_c,), scen.P_max / K_c, dtype=torch.float64)}


def forward(model, users: np.ndarray, targets: np.ndarray, scen: Scenario) -> dict:
    """All layers from the standard initialization, canonically ordered.

    Users and targets are sorted lexicographically before the pass and the
    per-user outputs mapped back, matching the inference runtime exactly.
    """
    users = np.asarray(users, float).reshape(-1, 3)
    targets = np.asarray(targets, float).reshape(-1, 3)
    u_ord = np.lexsort(users.T[::-1]) if users.size else np.arange(0)
    t_ord = np.lexsort(targets.T[::-1]) if targets.size else np.arange(0)
    geo = waveguide_axes(scen)

    state = initial_graph(users[u_ord], targets[t_ord], scen, geo)
    for layer in model.layers:
        state = layer_forward(layer, state, users[u_ord], targets[t_ord],
                              geo, scen)

    u_inv = np.argsort(u_ord)
    ch = state["ch"]
    W = state["W"][:, u_inv]
    Hu = ch["Hu"][u_inv][:, :]
    U = Hu.conj() @ W
    P = U.abs() ** 2
    sig = torch.diagonal(P)
    interf = P.sum(dim=1) - sig
    rates = torch.log2(1.0 + sig / (interf + scen.sigma_c2))
    T = ch["Hs"].conj() @ W
    sr = torch.log2(1.0 + (T.abs() ** 2).sum(dim=1) / scen.sigma_s2).sum()
    return {"tx_x": state["tx_x"], "rx_x": state["rx_x"], "sel": state["sel"],
            "W": W, "beta": state["beta"][u_inv], "p": state["p"][u_inv],
            "rates": rates, "sr": sr}
