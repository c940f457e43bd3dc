"""Objective and constraint quantities.

Rates use log2 (bits per channel use); the log-det in the weighted-MMSE
surrogate uses the natural log.  All functions are pure.

Fast paths (`surrogate_value`, `penalty_terms`) work directly on effective
channels so the position line search can evaluate thousands of candidate
layouts without rebuilding full ChannelSets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelSet
from .scenario import ScenarioConfig

CSR_RATE_TOL = 1e-9  # absolute rate slack at the constraint boundary


class MetricsError(ValueError):
    """Domain error in an objective computation (e.g. non-PD weights)."""


@dataclass(frozen=True)
class BeamformingState:
    """Transmit matrix plus receive filters, weights and structure variables."""

    W: np.ndarray       # (N_t, K_c)
    V: np.ndarray       # (N_r, K_c) rows are the per-receive-waveguide filters v_n
    Theta: np.ndarray   # (N_r, K_c, K_c) Hermitian weights
    p: np.ndarray       # (K_c,) power shares
    beta: np.ndarray    # (K_c,) nonnegative rate-constraint multipliers
    Xi: np.ndarray      # (N_r, K_c) structure coefficients xi_nk
    nu: float           # power-budget multiplier

    def with_(self, **kw) -> "BeamformingState":
        return replace(self, **kw)


@dataclass(frozen=True)
class MuiMatrix:
    """Effective multi-user interference terms; diagonal scaled by -1/gamma."""

    B: np.ndarray  # (K_c, K_c)


def initial_state(channels: ChannelSet, config: ScenarioConfig) -> BeamformingState:
    """Matched-filter transmit init, closed-form filters and weights."""
    Hu = channels.h_eff_user
    K_c = Hu.shape[0]
    norms = np.linalg.norm(Hu, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    W = (Hu.conj() / norms[:, None]).T * np.sqrt(config.P_max / K_c)
    V = receive_filter_update(W, channels, config)
    Theta = weight_update(W, V, channels, config)
    return BeamformingState(
        W=W, V=V, Theta=Theta,
        p=np.full(K_c, config.P_max / K_c),
        beta=np.ones(K_c),
        Xi=np.zeros((channels.h_eff_sense.shape[0], K_c), complex),
        nu=1.0,
    )


def receive_filter_update(W: np.ndarray, channels: ChannelSet,
                          config: ScenarioConfig) -> np.ndarray:
    """Closed-form MMSE receive filters v_n = W^H h~_s,n / (||h~_s,n^H W||^2 + sigma_s^2)."""
    Hs = channels.h_eff_sense
    T = Hs.conj() @ W                       # (N_r, K_c) rows h~_s,n^H W
    denom = np.sum(np.abs(T) ** 2, axis=1) + config.sigma_s2
    return T.conj() / denom[:, None]


def weight_update(W: np.ndarray, V: np.ndarray, channels: ChannelSet,
                  config: ScenarioConfig, ridge: float = 1e-12) -> np.ndarray:
    """Theta_n = (E_n^MSE)^{-1}; a tiny ridge guards the sigma_s2 -> 0 corner."""
    N_r = V.shape[0]
    K_c = W.shape[1]
    Theta = np.empty((N_r, K_c, K_c), complex)
    for n in range(N_r):
        E = mse_matrix(n, W, V[n], channels, config)
        try:
            Theta[n] = np.linalg.inv(E)
        except np.linalg.LinAlgError:
            Theta[n] = np.linalg.inv(E + ridge * np.eye(K_c))
        Theta[n] = 0.5 * (Theta[n] + Theta[n].conj().T)
    return Theta


def mse_matrix(n: int, W: np.ndarray, v_n: np.ndarray, channels: ChannelSet,
               config: ScenarioConfig) -> np.ndarray:
    """Estimation error covariance of the n-th equivalent user."""
    K_c = W.shape[1]
    T = channels.h_eff_sense[n].conj() @ W       # (K_c,) row h~_s,n^H W
    A = np.eye(K_c) - np.outer(v_n, T)
    return A @ A.conj().T + config.sigma_s2 * np.outer(v_n, v_n.conj())


def communication_rate(k: int, W: np.ndarray, channels: ChannelSet,
                       config: ScenarioConfig) -> float:
    U = channels.h_eff_user[k].conj() @ W        # (K_c,)
    sig = np.abs(U[k]) ** 2
    interf = np.sum(np.abs(U) ** 2) - sig
    return float(np.log2(1.0 + sig / (interf + config.sigma_c2)))


def all_rates(W: np.ndarray, channels: ChannelSet, config: ScenarioConfig) -> np.ndarray:
    U = channels.h_eff_user.conj() @ W           # (K_c, K_c), U[k, j] = h~_k^H w_j
    P = np.abs(U) ** 2
    sig = np.diag(P)
    interf = P.sum(axis=1) - sig
    return np.log2(1.0 + sig / (interf + config.sigma_c2))


def sensing_rate(W: np.ndarray, channels: ChannelSet, config: ScenarioConfig) -> float:
    T = channels.h_eff_sense.conj() @ W          # (N_r, K_c)
    snr = np.sum(np.abs(T) ** 2, axis=1) / config.sigma_s2
    return float(np.sum(np.log2(1.0 + snr)))


def wmmse_objective(state: BeamformingState, channels: ChannelSet,
                    config: ScenarioConfig) -> float:
    """Sum of Tr(Theta_n E_n) - logdet(Theta_n) over receive waveguides."""
    total = 0.0
    for n in range(state.V.shape[0]):
        E = mse_matrix(n, state.W, state.V[n], channels, config)
        sign, logdet = np.linalg.slogdet(state.Theta[n])
        if sign.real <= 0:
            raise MetricsError("Theta_n must be positive definite")
        total += float(np.real(np.trace(state.Theta[n] @ E))) - logdet
    return total


def penalty_terms(W: np.ndarray, h_eff_user: np.ndarray,
                  config: ScenarioConfig) -> np.ndarray:
    """Per-user constraint slack g_k = |h~_k^H w_k|^2/(gamma s2) - interference/s2 - 1."""
    U = h_eff_user.conj() @ W
    P = np.abs(U) ** 2
    sig = np.diag(P)
    interf = P.sum(axis=1) - sig
    return sig / (config.gamma * config.sigma_c2) - interf / config.sigma_c2 - 1.0


def penalized_objective(state: BeamformingState, channels: ChannelSet,
                        config: ScenarioConfig, mu: np.ndarray | float) -> float:
    """WMMSE surrogate minus the penalty-weighted constraint slack (Eq. form)."""
    mu = np.broadcast_to(np.asarray(mu, float), (state.W.shape[1],))
    g = penalty_terms(state.W, channels.h_eff_user, config)
    return wmmse_objective(state, channels, config) - float(np.dot(mu, g))


def soc_margin(k: int, W: np.ndarray, channels: ChannelSet,
               config: ScenarioConfig) -> float:
    """Second-order-cone slack of user k's rate constraint (phase-rotated)."""
    U = channels.h_eff_user[k].conj() @ W
    lhs = np.abs(U[k]) / np.sqrt(config.gamma * config.sigma_c2)
    interf = np.sum(np.abs(U) ** 2) - np.abs(U[k]) ** 2
    return float(lhs - np.sqrt(interf / config.sigma_c2 + 1.0))


def soc_margins(W: np.ndarray, h_eff_user: np.ndarray,
                config: ScenarioConfig) -> np.ndarray:
    U = h_eff_user.conj() @ W
    P = np.abs(U) ** 2
    sig = np.diag(P)
    interf = P.sum(axis=1) - sig
    return np.sqrt(sig / (config.gamma * config.sigma_c2)) - np.sqrt(interf / config.sigma_c2 + 1.0)


def mui_matrix(W: np.ndarray, channels: ChannelSet,
               config: ScenarioConfig) -> MuiMatrix:
    U = channels.h_eff_user.conj() @ W
    B = U.copy()
    np.fill_diagonal(B, -np.diag(U) / config.gamma)
    return MuiMatrix(B=B)


def csr(rates: np.ndarray, R_min: float) -> float:
    """Fraction of users meeting the minimum rate (with boundary slack)."""
    rates = np.asarray(rates, float)
    if rates.size == 0:
        return 1.0
    return float(np.count_nonzero(rates >= R_min - CSR_RATE_TOL) / rates.size)


# -- fast surrogate evaluation on effective channels -------------------------

@dataclass(frozen=True)
class SurrogateCoeffs:
    """W/V/Theta-dependent scalars that make the surrogate cheap in (Hu, Hs)."""

    W: np.ndarray          # (N_t, K_c)
    theta_v: np.ndarray    # (N_r, K_c) rows Theta_n v_n
    q: np.ndarray          # (N_r,) real v_n^H Theta_n v_n
    tr_theta: np.ndarray   # (N_r,) real traces
    logdet_theta: float
    sigma_terms: float     # sigma_s^2 * sum_n q_n
    mu: np.ndarray         # (K_c,)


def surrogate_coeffs(state: BeamformingState, config: ScenarioConfig,
                     mu: np.ndarray | float) -> SurrogateCoeffs:
    N_r, K_c = state.V.shape
    theta_v = np.einsum("nij,nj->ni", state.Theta, state.V)
    q = np.real(np.einsum("ni,ni->n", state.V.conj(), theta_v))
    tr_theta = np.real(np.trace(state.Theta, axis1=1, axis2=2)) if N_r else np.zeros(0)
    logdet = 0.0
    for n in range(N_r):
        sign, ld = np.linalg.slogdet(state.Theta[n])
        if sign.real <= 0:
            raise MetricsError("Theta_n must be positive definite")
        logdet += ld
    return SurrogateCoeffs(
        W=state.W, theta_v=theta_v, q=q, tr_theta=tr_theta,
        logdet_theta=float(logdet),
        sigma_terms=float(config.sigma_s2 * np.sum(q)),
        mu=np.broadcast_to(np.asarray(mu, float), (K_c,)).copy(),
    )


def surrogate_value(coeffs: SurrogateCoeffs, Hu: np.ndarray, Hs: np.ndarray,
                    config: ScenarioConfig) -> np.ndarray:
    """Penalized surrogate for a batch of effective channels.

    Hu: (..., K_c, N_t) rows h~_k; Hs: (..., N_r, N_t) rows h~_s,n.  Returns
    the objective for each leading-batch element.  Uses the scalar identity
    Tr(Theta E) = Tr(Theta) - 2 Re(T theta_v) + (||T||^2 + sigma^2) q with
    T = h~_s,n^H W.
    """
    T = Hs.conj() @ coeffs.W                                 # (..., N_r, K_c)
    cross = np.real(np.einsum("...nk,nk->...n", T, coeffs.theta_v))
    power = np.sum(np.abs(T) ** 2, axis=-1)
    wmmse = np.sum(coeffs.tr_theta - 2.0 * cross + power * coeffs.q, axis=-1)
    wmmse = wmmse + coeffs.sigma_terms - coeffs.logdet_theta

    U = Hu.conj() @ coeffs.W                                 # (..., K_c, K_c)
    P = np.abs(U) ** 2
    sig = np.diagonal(P, axis1=-2, axis2=-1)
    interf = P.sum(axis=-1) - sig
    g = sig / (config.gamma * config.sigma_c2) - interf / config.sigma_c2 - 1.0
    return wmmse - g @ coeffs.mu
