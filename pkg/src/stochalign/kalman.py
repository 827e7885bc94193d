"""Kalman filtering for the alignment dynamics.

Two routes to the same covariances are kept deliberately separate:

* a dense, textbook filter (`gain`, `measurement_update`, `time_update`)
  that works for any linear-Gaussian system and serves as the reference
  implementation, and
* closed forms (`AlphaSchedule`, `closed_form_filter_state`) that exploit
  the constant-diagonal structure of the alignment system and cost O(1)
  per round.

`kalman_check` style comparisons of the two routes are the main
correctness guard for everything downstream.
"""

import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ModelConfig
from .structmat import StructuredMatrix, mn


@dataclass(frozen=True)
class LinearSystem:
    """x' = A x + B u + w, z = H x + v, w ~ N(0, Q), v ~ N(0, R)."""

    a: np.ndarray
    b: np.ndarray
    h: np.ndarray
    q: np.ndarray
    r: np.ndarray


@dataclass
class KalmanState:
    """Filter state at one round.

    The _pre fields are the predicted quantities; the _post fields are
    filled in by the measurement update.
    """

    round: int
    estimate_pre: np.ndarray
    cov_pre: np.ndarray
    estimate_post: Optional[np.ndarray] = None
    cov_post: Optional[np.ndarray] = None


def alignment_system(cfg: ModelConfig) -> LinearSystem:
    """Dense matrices for the stretch-vector dynamics.

    The state is the stretch vector itself: it is measured directly with
    variance sigma_m^2 per coordinate, moves enter through the stretch
    operator, and the drift covariance is sigma_d^2 times its square.
    """
    m = mn(cfg.n).to_dense()
    eye = np.eye(cfg.n)
    return LinearSystem(
        a=eye,
        b=m,
        h=eye,
        q=cfg.sigma_d ** 2 * (m @ m),
        r=cfg.sigma_m ** 2 * eye,
    )


def alignment_initial_state(cfg: ModelConfig) -> KalmanState:
    """Zero initial estimate; covariance sigma0^2 times the squared stretch operator."""
    m = mn(cfg.n).to_dense()
    return KalmanState(
        round=0,
        estimate_pre=np.zeros(cfg.n),
        cov_pre=cfg.sigma0 ** 2 * (m @ m),
    )


def gain(state: KalmanState, system: LinearSystem) -> np.ndarray:
    """Optimal gain K = P- H' (H P- H' + R)^-1 for the current prediction."""
    ph = state.cov_pre @ system.h.T
    s = system.h @ ph + system.r
    # K = ph s^-1; solve on the transposed system to avoid forming s^-1
    return np.linalg.solve(s.T, ph.T).T


def measurement_update(state: KalmanState, system: LinearSystem,
                       z: np.ndarray) -> KalmanState:
    """Condition the prediction on one measurement vector z."""
    k = gain(state, system)
    innovation = np.asarray(z, dtype=float) - system.h @ state.estimate_pre
    estimate_post = state.estimate_pre + k @ innovation
    cov_post = (np.eye(state.cov_pre.shape[0]) - k @ system.h) @ state.cov_pre
    return KalmanState(
        round=state.round,
        estimate_pre=state.estimate_pre,
        cov_pre=state.cov_pre,
        estimate_post=estimate_post,
        cov_post=cov_post,
    )


def time_update(state: KalmanState, system: LinearSystem,
                u: np.ndarray) -> KalmanState:
    """Propagate the posterior through the dynamics with known input u."""
    if state.estimate_post is None or state.cov_post is None:
        raise ValueError("time update requires a measurement-updated state")
    return KalmanState(
        round=state.round + 1,
        estimate_pre=system.a @ state.estimate_post + system.b @ np.asarray(u, dtype=float),
        cov_pre=system.a @ state.cov_post @ system.a.T + system.q,
    )


def dense_filter_path(cfg: ModelConfig, t_max: int):
    """Prediction covariance and gain per round from the dense filter.

    Runs the generic textbook recursions on the alignment system (the
    measurement and input values do not affect covariances, so zeros are
    fed in).  Returns [(P-_t, K_t)] for t = 0..t_max as dense arrays.
    """
    system = alignment_system(cfg)
    state = alignment_initial_state(cfg)
    zeros = np.zeros(cfg.n)
    out = []
    for _ in range(t_max + 1):
        out.append((state.cov_pre.copy(), gain(state, system)))
        state = time_update(measurement_update(state, system, zeros), system, zeros)
    return out


class AlphaSchedule:
    """Per-coordinate prediction uncertainty alpha_t and responsiveness rho*(t).

    alpha_0 = n sigma0^2 / (n-1), and each round

        alpha_{t+1} = sigma_m^2 alpha_t / (c alpha_t + sigma_m^2) + c sigma_d^2,
        rho*(t)     = alpha_t / (c alpha_t + sigma_m^2),         c = n/(n-1).

    Values are computed eagerly through the config horizon and extended
    transparently (and cached) when later rounds are requested.
    """

    def __init__(self, cfg: ModelConfig, t_max: Optional[int] = None):
        self.cfg = cfg
        self._alphas = [cfg.n * cfg.sigma0 ** 2 / (cfg.n - 1)]
        self._lock = threading.Lock()  # extension may be reached from worker threads
        self.extend_to(cfg.horizon if t_max is None else t_max)

    def extend_to(self, t: int) -> None:
        if len(self._alphas) > t:
            return
        c = self.cfg.n / (self.cfg.n - 1)
        sm2 = self.cfg.sigma_m ** 2
        csd2 = c * self.cfg.sigma_d ** 2
        with self._lock:
            a = self._alphas
            while len(a) <= t:
                prev = a[-1]
                a.append(sm2 * prev / (c * prev + sm2) + csd2)

    def alpha(self, t: int) -> float:
        if t < 0:
            raise ValueError(f"round must be >= 0, got {t}")
        self.extend_to(t)
        return self._alphas[t]

    def rho(self, t: int) -> float:
        a = self.alpha(t)
        c = self.cfg.n / (self.cfg.n - 1)
        return a / (c * a + self.cfg.sigma_m ** 2)

    def alphas(self, t_max: int) -> np.ndarray:
        self.extend_to(t_max)
        return np.array(self._alphas[:t_max + 1])

    def rhos(self, t_max: int) -> np.ndarray:
        a = self.alphas(t_max)
        c = self.cfg.n / (self.cfg.n - 1)
        return a / (c * a + self.cfg.sigma_m ** 2)


def alpha_schedule(cfg: ModelConfig, t_max: int) -> AlphaSchedule:
    """Construct the schedule through round t_max."""
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    return AlphaSchedule(cfg, t_max)


def closed_form_filter_state(cfg: ModelConfig, t: int,
                             schedule: Optional[AlphaSchedule] = None):
    """Structured (prediction covariance, gain) at round t.

    P-_t = -alpha_t M and K_t = -rho*(t) M, where M is the stretch
    operator; both stay in the constant-diagonal family forever.
    """
    if schedule is None:
        schedule = AlphaSchedule(cfg, t)
    m = mn(cfg.n)
    cov_pre: StructuredMatrix = -schedule.alpha(t) * m
    gain_t: StructuredMatrix = -schedule.rho(t) * m
    return cov_pre, gain_t


def scalar_filter_step(p_pre: float, rho_opp: float, cfg: ModelConfig):
    """One round of the deviating agent's scalar filter.

    The agent tracks its own stretch while every opponent plays
    responsiveness rho_opp this round.  Returns (gain, next prediction
    variance); the agent's own move is known to it and does not enter the
    variance recursion.
    """
    if p_pre < 0:
        raise ValueError(f"prediction variance must be >= 0, got {p_pre}")
    n = cfg.n
    sm2 = cfg.sigma_m ** 2
    sd2 = cfg.sigma_d ** 2
    k = p_pre / (p_pre + sm2)
    shrink = 1.0 - rho_opp / (n - 1)
    p_next = (shrink ** 2 * p_pre * sm2 / (p_pre + sm2)
              + (rho_opp ** 2 * sm2 + sd2) / (n - 1) + sd2)
    return k, p_next
