"""Alternating optimization of PA positions and transmit beamforming.

One outer round updates, in order: transmit segment selection, PA positions
(coordinate-wise 1-D search on the penalized surrogate), the transmit matrix
W (dual fixed point on the KKT solution structure), then the closed-form
receive filters and MMSE weights.

The W subproblem is the convex rate-constrained surrogate minimization; its
stationarity condition gives each column as a regularized-inverse combination
of the user and sensing effective channels, which we exploit instead of a
generic conic solver: for fixed multipliers the stationary W is a linear
solve, the power multiplier nu is found by bisection, and the per-user
multipliers beta follow sign-adaptive dual ascent on the constraint slack.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet, _free_space_matrix, build_channels, tx_positions
from .metrics import (BeamformingState, SurrogateCoeffs, initial_state,
                      penalty_terms, receive_filter_update, soc_margins,
                      surrogate_coeffs, surrogate_value, weight_update)
from .scenario import (Geometry, Placement, PinchingLayout, ScenarioConfig,
                       default_layout, waveguide_axes)

update_receive_filters = receive_filter_update
update_weights = weight_update


@dataclass(frozen=True)
class AoConfig:
    T: int = 5                      # outer iterations
    coarse_step: float | None = None  # line-search grid spacing; None -> lambda/4
    fine_step: float | None = None    # refinement spacing; None -> lambda/100
    mu: float | np.ndarray = 10.0   # penalty factors for the position search
    dual_step: float = 0.1          # initial multiplier ascent step
    inner_iters: int = 400          # dual fixed-point rounds for the W update
    tol_kkt: float = 1e-7           # residual tolerance
    beta_cap: float = 1e12          # multiplier cap flagging QoS infeasibility

    def __post_init__(self):
        if self.T < 0 or self.inner_iters < 1:
            raise ValueError("T must be >= 0 and inner_iters >= 1")
        for name in ("dual_step", "tol_kkt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def steps(self, config: ScenarioConfig) -> tuple[float, float]:
        coarse = self.coarse_step if self.coarse_step is not None else config.lam / 4
        fine = self.fine_step if self.fine_step is not None else config.lam / 100
        return coarse, fine


@dataclass
class TraceRow:
    iteration: int
    objective: float
    sensing_rate: float
    rates: np.ndarray
    margins: np.ndarray
    ms: float
    w_accepted: bool = True
    kkt_residual: float = 0.0
    qos_feasible: bool = True


@dataclass
class AoTrace:
    rows: list[TraceRow] = field(default_factory=list)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        K = len(self.rows[0].rates) if self.rows else 0
        head = ["iteration", "objective", "sr"]
        head += [f"cr_{k + 1}" for k in range(K)]
        head += [f"margin_{k + 1}" for k in range(K)] + ["ms"]
        buf.write(",".join(head) + "\n")
        for r in self.rows:
            cells = [str(r.iteration), repr(r.objective), repr(r.sensing_rate)]
            cells += [repr(float(x)) for x in r.rates]
            cells += [repr(float(x)) for x in r.margins]
            cells.append(repr(r.ms))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


# -- transmit beamforming update --------------------------------------------

def reconstruct_beamformer(p: np.ndarray, beta: np.ndarray, Xi: np.ndarray,
                           nu: float, channels: ChannelSet, V: np.ndarray,
                           Theta: np.ndarray, config: ScenarioConfig) -> np.ndarray:
    """Columns from the optimal-structure expression.

    w_k = sqrt(p_k) * A^{-1} (h~_k + sum_n xi_nk h~_s,n) normalized, with
    A = sum_n (v_n^H Theta_n v_n) h~_s,n h~_s,n^H
        + sum_j (beta_j / sigma_c^2) h~_j h~_j^H + nu I.
    """
    Hu, Hs = channels.h_eff_user, channels.h_eff_sense
    K_c, N_t = Hu.shape
    theta_v = np.einsum("nij,nj->ni", Theta, V)
    q = np.real(np.einsum("ni,ni->n", V.conj(), theta_v))
    A = nu * np.eye(N_t, dtype=complex)
    if Hs.shape[0]:
        A += np.einsum("n,nt,nu->tu", q, Hs, Hs.conj())
    A += np.einsum("j,jt,ju->tu", np.asarray(beta, float) / config.sigma_c2,
                   Hu, Hu.conj())
    rhs = Hu.T + (Hs.T @ Xi if Hs.shape[0] else 0.0)   # (N_t, K_c)
    if nu == 0.0 and np.linalg.matrix_rank(A) < N_t:
        raise np.linalg.LinAlgError("regularized matrix is rank deficient at nu = 0")
    dirs = np.linalg.solve(A, rhs)
    norms = np.linalg.norm(dirs, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    return dirs / norms * np.sqrt(np.asarray(p, float))


@dataclass
class TxUpdateResult:
    W: np.ndarray
    beta: np.ndarray
    Xi: np.ndarray
    p: np.ndarray
    nu: float
    converged: bool
    qos_feasible: bool
    kkt_residual: float
    comp_slackness: float


def _power_at(lams: np.ndarray, u2: np.ndarray, nu: float) -> float:
    return float(np.sum(u2 / (lams + nu) ** 2))


def update_tx_beamforming(state: BeamformingState, channels: ChannelSet,
                          config: ScenarioConfig, ao: AoConfig) -> TxUpdateResult:
    """Solve the rate-constrained surrogate minimization in W.

    Fixed point on (W, beta, nu): for fixed beta the stationary columns are
    w_k = (C_k + nu I)^{-1} s_k with C_k assembled from the sensing and user
    outer products (own-user coefficient -beta_k / (gamma sigma_c^2)); nu is
    bisected so the power budget is met; beta ascends on constraint violation
    with per-user sign-adaptive steps.
    """
    Hu, Hs = channels.h_eff_user, channels.h_eff_sense
    K_c, N_t = Hu.shape
    gam, s2 = config.gamma, config.sigma_c2
    c_own = (1.0 + gam) / (gam * s2)

    theta_v = np.einsum("nij,nj->ni", state.Theta, state.V)
    q = np.real(np.einsum("ni,ni->n", state.V.conj(), theta_v))
    base = np.einsum("n,nt,nu->tu", q, Hs, Hs.conj()) if Hs.shape[0] \
        else np.zeros((N_t, N_t), complex)
    # source vectors s_k = sum_n conj((Theta_n v_n)_k) h~_s,n from the
    # conjugate-gradient stationarity (the structure result prints the
    # unconjugated coefficient; the derivative of the cross term carries it)
    S_mat = np.einsum("nk,nt->tk", theta_v.conj(), Hs) if Hs.shape[0] \
        else np.zeros((N_t, K_c), complex)

    hu_norm2 = np.sum(np.abs(Hu) ** 2, axis=1)
    if np.linalg.norm(S_mat) < 1e-300:
        # no sensing pull on any user: matched filters at full power
        W = (Hu.conj() / np.where(hu_norm2 > 0, np.sqrt(hu_norm2), 1.0)[:, None]).T
        W = W * np.sqrt(config.P_max / K_c)
        g = penalty_terms(W, Hu, config)
        feas = bool(np.all(g >= -ao.tol_kkt))
        return TxUpdateResult(W=W, beta=np.zeros(K_c),
                              Xi=np.zeros((Hs.shape[0], K_c), complex),
                              p=np.full(K_c, config.P_max / K_c), nu=0.0,
                              converged=True, qos_feasible=feas,
                              kkt_residual=0.0, comp_slackness=0.0)

    beta = np.maximum(np.asarray(state.beta, float).copy(), 0.0)
    # dimensionally sensible multiplier unit: balances the own-channel outer
    # product against the sensing curvature
    curv = max(np.real(np.trace(base)) / N_t, 1e-300)
    beta_unit = curv * gam * s2 / max(hu_norm2.max(), 1e-300)
    if not np.any(beta > 0):
        beta[:] = beta_unit
    steps = np.full(K_c, ao.dual_step) * np.maximum(beta, beta_unit)
    prev_viol = np.zeros(K_c)

    def solve_primal(beta_now: np.ndarray) -> tuple[np.ndarray, float]:
        """Stationary W for fixed multipliers, with nu set by the budget."""
        lam_all = np.empty((K_c, N_t))
        U_all = np.empty((K_c, N_t, N_t), complex)
        u2 = np.empty((K_c, N_t))
        A_users = np.einsum("j,jt,ju->tu", beta_now / s2, Hu, Hu.conj())
        for k in range(K_c):
            C_k = base + A_users \
                - c_own * beta_now[k] * np.outer(Hu[k], Hu[k].conj())
            lam, U = np.linalg.eigh(C_k)
            lam_all[k], U_all[k] = lam, U
            u2[k] = np.abs(U.conj().T @ S_mat[:, k]) ** 2
        lam_flat = lam_all.ravel()
        u2_flat = u2.ravel()
        nu_floor = max(0.0, -lam_flat.min()) * (1 + 1e-12) \
            + 1e-14 * np.abs(lam_flat).max()
        if _power_at(lam_flat, u2_flat, nu_floor) <= config.P_max:
            nu = 0.0 if (lam_flat.min() > 0
                         and _power_at(lam_flat, u2_flat, 0.0) <= config.P_max) \
                else nu_floor
        else:
            lo, hi = nu_floor, max(nu_floor, 1e-12)
            while _power_at(lam_flat, u2_flat, hi) > config.P_max:
                hi = 2.0 * hi + 1e-12
            for _b in range(200):
                mid = 0.5 * (lo + hi)
                if _power_at(lam_flat, u2_flat, mid) > config.P_max:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * max(1.0, hi):
                    break
            nu = hi  # feasible side: power <= P_max
        W = np.empty((N_t, K_c), complex)
        for k in range(K_c):
            coef = (U_all[k].conj().T @ S_mat[:, k]) / (lam_all[k] + nu)
            W[:, k] = U_all[k] @ coef
        return W, nu

    converged = False
    feasible = True
    for _ in range(ao.inner_iters):
        W, nu = solve_primal(beta)
        g = penalty_terms(W, Hu, config)
        viol = -g
        comp = float(np.max(np.abs(beta * g) / np.maximum(1.0, beta))) if K_c else 0.0
        max_viol = float(np.max(np.maximum(viol, 0.0)))
        if comp < ao.tol_kkt * 10 and max_viol < ao.tol_kkt * 10:
            converged = True
            break
        # sign-adaptive ascent (RPROP style) on the dual variables
        flip = (viol * prev_viol) < 0
        steps = np.where(flip, steps * 0.5, steps * 1.2)
        steps = np.clip(steps, 1e-12 * beta_unit, 1e6 * np.maximum(beta, beta_unit))
        beta = np.maximum(0.0, beta + steps * np.sign(viol))
        prev_viol = viol
        if np.any(beta > ao.beta_cap * beta_unit):
            feasible = False
            break

    W, nu = solve_primal(beta)
    t_raw = np.einsum("kt,tk->k", Hu.conj(), W)          # complex h~_k^H w_k

    # stationarity residual of the KKT linear system (phase-free iterate)
    resid = 0.0
    A_full = base + np.einsum("j,jt,ju->tu", beta / s2, Hu, Hu.conj()) \
        + nu * np.eye(N_t)
    for k in range(K_c):
        lhs = A_full @ W[:, k]
        rhs = c_own * beta[k] * t_raw[k] * Hu[k] + S_mat[:, k]
        resid = max(resid, float(np.linalg.norm(lhs - rhs)
                                 / max(np.linalg.norm(rhs), 1e-300)))

    # structure coefficients from the *unrotated* inner product, then adopt
    # the phase convention h~_k^H w_k real >= 0 for the returned columns;
    # reconstruction from (p, beta, Xi, nu) then reproduces W exactly
    beta_safe = np.maximum(beta, 1e-30)
    t_safe = np.where(np.abs(t_raw) > 0, t_raw, 1.0)
    Xi = theta_v.conj() / (c_own * beta_safe * t_safe)[None, :] \
        if Hs.shape[0] else np.zeros((0, K_c), complex)
    phase = t_safe / np.abs(t_safe)
    W = W / phase[None, :]
    p = np.sum(np.abs(W) ** 2, axis=0)
    g = penalty_terms(W, Hu, config)
    comp = float(np.max(np.abs(beta * g) / np.maximum(1.0, beta))) if K_c else 0.0
    feasible = feasible and bool(np.all(g >= -1e-6))
    return TxUpdateResult(W=W, beta=beta, Xi=Xi, p=p, nu=nu,
                          converged=converged, qos_feasible=feasible,
                          kkt_residual=resid, comp_slackness=comp)


# -- analytic gradients ------------------------------------------------------

def surrogate_from_parts(h_user: np.ndarray, h_tar: np.ndarray, G: np.ndarray,
                         rho: np.ndarray, state: BeamformingState,
                         config: ScenarioConfig, mu) -> float:
    """Penalized surrogate as an explicit function of the raw channel parts."""
    Hu = (h_user.conj() @ G).conj()
    scale = np.sqrt(config.L_pulses * config.alpha_s)
    a_tar = (h_tar.conj() @ G).conj()
    Hs = scale * np.einsum("kn,kt->nt", rho.conj(), a_tar)
    coeffs = surrogate_coeffs(state, config, mu)
    return float(surrogate_value(coeffs, Hu, Hs, config))


def gradient_core(W: np.ndarray, m: np.ndarray, mu: np.ndarray,
                  channels: ChannelSet, config: ScenarioConfig):
    """Shared assembly of the three channel-space gradients.

    m rows are the per-receive-waveguide combination vectors: A_n^H Theta_n
    v_n for the exact gradients, plainly v_n for the learned-message
    approximation (which drops the near-identity recovery factor).
    """
    G, rho = channels.G_t, channels.rho
    Hu = channels.h_eff_user
    K_c = W.shape[1]
    K_s, N_r = rho.shape
    MSN = G.shape[0]
    scale = np.sqrt(config.L_pulses * config.alpha_s)

    GW = G @ W                                          # (MSN, K_c)
    g_htar = np.zeros((K_s, MSN), complex)
    if N_r and K_s:
        GWm = GW @ m.T                                  # (MSN, N_r)
        g_htar = -scale * (GWm @ rho.T).T               # sum_n rho_kn (GW m_n)

    # MUI matrix on effective channels
    Ueff = Hu.conj() @ W
    B = Ueff.copy()
    np.fill_diagonal(B, -np.diag(Ueff) / config.gamma)

    g_G = np.zeros((MSN, W.shape[0]), complex)
    if N_r and K_s:
        r_tilde = scale * np.einsum("kn,km->nm", rho.conj(), channels.h_tar_tx)
        Wm = W @ m.T                                    # (N_t, N_r)
        g_G -= np.einsum("nm,tn->mt", r_tilde, Wm.conj())
    WcB = W.conj() @ B.T                                # (N_t, K_c) columns W* B[k]
    g_G += np.einsum("k,km,tk->mt", mu / config.sigma_c2, channels.h_user, WcB)

    g_huser = (mu / config.sigma_c2)[:, None] * (G @ (W @ B.conj().T)).T
    return g_htar, g_G, g_huser


def full_gradients(state: BeamformingState, channels: ChannelSet,
                   config: ScenarioConfig, mu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Conjugate (Wirtinger) gradients of the penalized surrogate.

    Returns derivatives with respect to the per-target transmit free-space
    vectors, the in-waveguide matrix, and the per-user free-space vectors:
    shapes (K_s, MSN), (MSN, N_t), (K_c, MSN).  The real directional
    derivative along a perturbation dh is 2 Re(<grad, dh>_conj).
    """
    W, V, Theta = state.W, state.V, state.Theta
    mu = np.broadcast_to(np.asarray(mu, float), (W.shape[1],))
    Hs = channels.h_eff_sense
    N_r = Hs.shape[0]
    theta_v = np.einsum("nij,nj->ni", Theta, V)
    q = np.real(np.einsum("ni,ni->n", V.conj(), theta_v))
    T = Hs.conj() @ W if N_r else np.zeros((0, W.shape[1]), complex)
    # m_n = A_n^H Theta_n v_n = theta_v_n - q_n W^H h~_s,n
    m = theta_v - q[:, None] * T.conj() if N_r else theta_v
    return gradient_core(W, m, mu, channels, config)


# -- segment selection and position search ----------------------------------

def select_segments(placement: Placement, layout: PinchingLayout,
                    config: ScenarioConfig,
                    geometry: Geometry | None = None) -> np.ndarray:
    """Per transmit waveguide, segment with the largest aggregate channel energy."""
    geo = geometry or waveguide_axes(config)
    pa_t = tx_positions(layout, geo, config)
    N_t, S, M = layout.tx_x.shape
    score = np.zeros((N_t, S))
    for pts in (placement.users, placement.targets):
        if pts.size:
            h = _free_space_matrix(pts, pa_t, config).reshape(-1, N_t, S, M)
            score += np.sum(np.abs(h) ** 2, axis=(0, 3))
    return np.argmax(score, axis=1).astype(int)


def _pa_coeff(x: np.ndarray, point: np.ndarray, y: float, z: float, feed: float,
              config: ScenarioConfig, tx: bool) -> np.ndarray:
    """conj(g(x)) * h(point, phi(x)) for a batch of candidate x (transmit) or
    g(x) * h(point, phi(x)) (receive)."""
    dy = point[1] - y
    dz = point[2] - z
    r = np.sqrt((point[0] - x) ** 2 + dy * dy + dz * dz)
    h = np.sqrt(config.eta) * np.exp(-1j * config.k0 * r) / r
    dist = np.abs(x - feed)
    if tx:
        g = np.exp(1j * 2 * np.pi / config.lam_g * dist) / np.sqrt(config.M)
        if config.include_waveguide_loss:
            g = g * 10.0 ** (-config.kappa * dist / 20.0)
    else:
        g = np.exp(-1j * 2 * np.pi / config.lam_g * dist)
    return g * h


def position_line_search(layout: PinchingLayout, state: BeamformingState,
                         placement: Placement, config: ScenarioConfig,
                         ao: AoConfig,
                         geometry: Geometry | None = None) -> PinchingLayout:
    """Greedy coordinate sweep of PA x-coordinates on the penalized surrogate.

    Each PA is moved on a coarse grid over its feasible interval (respecting
    the segment box and the minimum spacing against its frozen neighbors),
    then refined around the best coarse point; a move is accepted only if it
    strictly decreases the objective.  Only PAs on selected transmit segments
    are swept: the others do not enter the objective.
    """
    geo = geometry or waveguide_axes(config)
    coarse, fine = ao.steps(config)
    coeffs = surrogate_coeffs(state, config, ao.mu)
    seg_len = config.segment_length

    tx_x = layout.tx_x.copy()
    rx_x = layout.rx_x.copy()
    channels = build_channels(placement, replace(layout, tx_x=tx_x, rx_x=rx_x),
                              config, geo)
    Hu = channels.h_eff_user.copy()
    Hs = channels.h_eff_sense.copy()
    a_tar = channels.a_tar.copy()
    rho = channels.rho.copy()
    scale = np.sqrt(config.L_pulses * config.alpha_s)
    cur_val = float(surrogate_value(coeffs, Hu, Hs, config))

    def eval_tx(n: int, cand: np.ndarray, terms_u, terms_t, cur_u, cur_t):
        # cand: (Gc,) candidate coordinates for one PA on waveguide n
        dHu = terms_u - cur_u[:, None]                    # (K_c, Gc)
        Hu_b = np.broadcast_to(Hu, (cand.size,) + Hu.shape).copy()
        Hu_b[:, :, n] += dHu.T
        Hs_b = np.broadcast_to(Hs, (cand.size,) + Hs.shape).copy()
        if rho.size:
            da = terms_t - cur_t[:, None]                 # (K_s, Gc)
            dHs = scale * np.einsum("kn,kg->gn", rho.conj(), da)  # (Gc, N_r)
            Hs_b[:, :, n] += dHs
        return surrogate_value(coeffs, Hu_b, Hs_b, config)

    def tx_candidates(n, s, m, grid):
        feed = layout.tx_feed_x[n, s]
        terms_u = np.stack([
            _pa_coeff(grid, placement.users[k], geo.tx_y[n], geo.z_wg, feed,
                      config, tx=True) for k in range(config.K_c)])
        terms_t = np.stack([
            _pa_coeff(grid, placement.targets[k], geo.tx_y[n], geo.z_wg, feed,
                      config, tx=True) for k in range(placement.targets.shape[0])]) \
            if placement.targets.size else np.zeros((0, grid.size), complex)
        return terms_u, terms_t

    # transmit PAs on selected segments
    for n in range(config.N_t):
        s = int(layout.tx_selected_segment[n])
        feed = layout.tx_feed_x[n, s]
        for m in range(config.M):
            lo = feed if m == 0 else tx_x[n, s, m - 1] + config.Delta_min
            hi = feed + seg_len if m == config.M - 1 \
                else tx_x[n, s, m + 1] - config.Delta_min
            if hi < lo:
                continue
            x_cur = tx_x[n, s, m]
            cur_u = np.array([_pa_coeff(np.array([x_cur]), placement.users[k],
                                        geo.tx_y[n], geo.z_wg, feed, config,
                                        tx=True)[0] for k in range(config.K_c)])
            cur_t = np.array([_pa_coeff(np.array([x_cur]), placement.targets[k],
                                        geo.tx_y[n], geo.z_wg, feed, config,
                                        tx=True)[0]
                              for k in range(placement.targets.shape[0])]) \
                if placement.targets.size else np.zeros(0, complex)
            best_x, best_val = x_cur, cur_val
            for grid in (np.arange(lo, hi + 1e-12, coarse),
                         None):  # second pass refined below
                if grid is None:
                    glo, ghi = max(lo, best_x - coarse), min(hi, best_x + coarse)
                    grid = np.arange(glo, ghi + 1e-12, fine)
                if grid.size == 0:
                    continue
                tu, tt = tx_candidates(n, s, m, grid)
                vals = eval_tx(n, grid, tu, tt, cur_u, cur_t)
                i = int(np.argmin(vals))
                if vals[i] < best_val:
                    best_val, best_x = float(vals[i]), float(grid[i])
            if best_val < cur_val:
                # commit: update effective channels incrementally
                new_u = np.array([_pa_coeff(np.array([best_x]), placement.users[k],
                                            geo.tx_y[n], geo.z_wg, feed, config,
                                            tx=True)[0] for k in range(config.K_c)])
                Hu[:, n] += new_u - cur_u
                if placement.targets.size:
                    new_t = np.array([_pa_coeff(np.array([best_x]),
                                                placement.targets[k], geo.tx_y[n],
                                                geo.z_wg, feed, config, tx=True)[0]
                                      for k in range(placement.targets.shape[0])])
                    a_tar[:, n] += new_t - cur_t
                    if rho.size:
                        Hs[:, n] = scale * (rho.conj().T @ a_tar[:, n])
                tx_x[n, s, m] = best_x
                cur_val = best_val

    # receive PAs (all segments aggregate)
    for n in range(config.N_r):
        for s in range(rx_x.shape[1]):
            feed = layout.rx_feed_x[n, s]
            lo, hi = feed, feed + seg_len
            x_cur = rx_x[n, s]
            if not placement.targets.size:
                continue
            cur_terms = np.array([_pa_coeff(np.array([x_cur]), placement.targets[k],
                                            geo.rx_y[n], geo.z_wg, feed, config,
                                            tx=False)[0]
                                  for k in range(placement.targets.shape[0])])
            best_x, best_val = x_cur, cur_val
            for grid in (np.arange(lo, hi + 1e-12, coarse), None):
                if grid is None:
                    glo, ghi = max(lo, best_x - coarse), min(hi, best_x + coarse)
                    grid = np.arange(glo, ghi + 1e-12, fine)
                if grid.size == 0:
                    continue
                terms = np.stack([_pa_coeff(grid, placement.targets[k],
                                            geo.rx_y[n], geo.z_wg, feed, config,
                                            tx=False)
                                  for k in range(placement.targets.shape[0])])
                rho_cand = rho[:, n][:, None] + terms - cur_terms[:, None]
                Hs_b = np.broadcast_to(Hs, (grid.size,) + Hs.shape).copy()
                Hs_b[:, n, :] = scale * np.einsum("kg,kt->gt", rho_cand.conj(), a_tar)
                vals = surrogate_value(coeffs, Hu[None], Hs_b, config)
                i = int(np.argmin(vals))
                if vals[i] < best_val:
                    best_val, best_x = float(vals[i]), float(grid[i])
            if best_val < cur_val:
                new_term = np.array([_pa_coeff(np.array([best_x]),
                                               placement.targets[k], geo.rx_y[n],
                                               geo.z_wg, feed, config, tx=False)[0]
                                     for k in range(placement.targets.shape[0])])
                rho[:, n] += new_term - cur_terms
                Hs[n] = scale * np.einsum("k,kt->t", rho[:, n].conj(), a_tar)
                rx_x[n, s] = best_x
                cur_val = best_val

    return replace(layout, tx_x=tx_x, rx_x=rx_x)


# -- full alternating loop ---------------------------------------------------

@dataclass
class AoResult:
    layout: PinchingLayout
    state: BeamformingState
    trace: AoTrace
    qos_feasible: bool


def run_alternating_optimization(placement: Placement, config: ScenarioConfig,
                                 ao: AoConfig | None = None, seed: int = 0,
                                 geometry: Geometry | None = None) -> AoResult:
    """T rounds of {segment selection, positions, W, V, Theta}.

    Runs from the uniform layout and from a seeded random layout and keeps
    the better endpoint; the block updates only find stationary points, so
    the restart guards against poor basins of the position landscape.  Each
    recorded step is accepted only if it does not increase the penalized
    surrogate.  Deterministic given inputs.
    """
    ao = ao or AoConfig()
    geo = geometry or waveguide_axes(config)
    from .baselines import random_layout
    from .metrics import sensing_rate

    # run on the canonically ordered instance so permuting the users or
    # targets cannot change the arithmetic; per-user outputs are mapped back
    u_ord = np.lexsort(placement.users.T[::-1]) if placement.users.size \
        else np.arange(0)
    t_ord = np.lexsort(placement.targets.T[::-1]) if placement.targets.size \
        else np.arange(0)
    placement = Placement(users=placement.users[u_ord],
                          targets=placement.targets[t_ord])
    u_inv = np.argsort(u_ord)

    starts = [default_layout(config, geo)]
    if ao.T > 0:
        starts.append(random_layout(config, seed, geo))
    best = None
    best_key = None
    for layout0 in starts:
        res = _run_single(placement, config, ao, geo, layout0)
        ch = build_channels(placement, res.layout, config, geo)
        key = (res.qos_feasible, sensing_rate(res.state.W, ch, config))
        if best is None or key > best_key:
            best, best_key = res, key

    st = best.state
    state = st.with_(W=st.W[:, u_inv], V=st.V[:, u_inv],
                     Theta=st.Theta[:, u_inv][:, :, u_inv],
                     p=st.p[u_inv], beta=st.beta[u_inv], Xi=st.Xi[:, u_inv])
    for row in best.trace.rows:
        row.rates = row.rates[u_inv]
        row.margins = row.margins[u_inv]
    return AoResult(layout=best.layout, state=state, trace=best.trace,
                    qos_feasible=best.qos_feasible)


def _run_single(placement: Placement, config: ScenarioConfig, ao: AoConfig,
                geo: Geometry, layout: PinchingLayout) -> AoResult:
    mu = ao.mu

    layout = replace(layout,
                     tx_selected_segment=select_segments(placement, layout, config, geo))
    channels = build_channels(placement, layout, config, geo)
    state = initial_state(channels, config)

    # zero-forcing warm start: feasible whenever the power budget covers the
    # rate floor, and the monotone block updates can then only improve on it
    from .baselines import zf_beamformer
    W_zf, _ = zf_beamformer(channels, config)
    if np.all(penalty_terms(W_zf, channels.h_eff_user, config) >= 0.0):
        state = state.with_(W=W_zf)
        V = update_receive_filters(state.W, channels, config)
        state = state.with_(V=V, Theta=update_weights(state.W, V, channels,
                                                      config))

    def objective(st, ch):
        coeffs = surrogate_coeffs(st, config, mu)
        return float(surrogate_value(coeffs, ch.h_eff_user, ch.h_eff_sense, config))

    from .metrics import all_rates, sensing_rate  # local import avoids cycle noise

    trace = AoTrace()

    def record(it, ch, st, ms, w_acc=True, kkt=0.0, qos=True):
        trace.rows.append(TraceRow(
            iteration=it,
            objective=objective(st, ch),
            sensing_rate=sensing_rate(st.W, ch, config),
            rates=all_rates(st.W, ch, config),
            margins=soc_margins(st.W, ch.h_eff_user, config),
            ms=ms, w_accepted=w_acc, kkt_residual=kkt, qos_feasible=qos,
        ))

    record(0, channels, state, 0.0)

    for it in range(1, ao.T + 1):
        t0 = time.perf_counter()
        # segment re-selection, kept only if it does not hurt the surrogate
        sel = select_segments(placement, layout, config, geo)
        if not np.array_equal(sel, layout.tx_selected_segment):
            cand = replace(layout, tx_selected_segment=sel)
            ch_cand = build_channels(placement, cand, config, geo)
            if objective(state, ch_cand) <= objective(state, channels) + 1e-9:
                layout, channels = cand, ch_cand

        layout = position_line_search(layout, state, placement, config, ao, geo)
        channels = build_channels(placement, layout, config, geo)

        obj_before = objective(state, channels)
        res = update_tx_beamforming(state, channels, config, ao)
        cand = state.with_(W=res.W, beta=res.beta, Xi=res.Xi, p=res.p,
                           nu=res.nu)
        V = update_receive_filters(cand.W, channels, config)
        cand = cand.with_(V=V, Theta=update_weights(cand.W, V, channels, config))
        # the W step targets the constrained surrogate; with the fixed
        # penalty factors it may trade QoS slack for sensing, so it is
        # audited against the recorded objective and dropped when it would
        # raise it (QoS slack already enters through the penalty terms)
        w_accepted = objective(cand, channels) <= obj_before + 1e-9
        if w_accepted:
            state = cand
        else:
            V = update_receive_filters(state.W, channels, config)
            state = state.with_(V=V, Theta=update_weights(state.W, V,
                                                          channels, config))
        ms = (time.perf_counter() - t0) * 1e3
        record(it, channels, state, ms, w_accepted, res.kkt_residual,
               res.qos_feasible)

    final_g = penalty_terms(state.W, channels.h_eff_user, config)
    return AoResult(layout=layout, state=state, trace=trace,
                    qos_feasible=bool(np.all(final_g >= -1e-6)))
