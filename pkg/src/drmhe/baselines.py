"""Baseline estimators: Kalman filtering and quadratic moving-horizon smoothing.

Both baselines operate on linear(ized) dynamics; the benchmark harness
wraps them in deviation coordinates around nonlinear reference
trajectories.  The filter update uses the Joseph form so covariances stay
symmetric positive definite; the moving-horizon solve is a dense linear
least-squares problem whose optimum coincides with a fixed-interval
Kalman smoother when the weights match the noise covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ContractViolation, DimensionError


def _check_spd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ContractViolation(f"{name} must be finite")
    if np.abs(M - M.T).max() > 1e-10 * (1.0 + np.abs(M).max()):
        raise ContractViolation(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(M) <= 0.0):
        raise ContractViolation(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class EkfConfig:
    """Covariances of the filter: process ``Q_cov``, measurement ``R_cov``, prior ``P0``."""

    Q_cov: np.ndarray
    R_cov: np.ndarray
    P0: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "Q_cov", _check_spd(self.Q_cov, "Q_cov"))
        object.__setattr__(self, "R_cov", _check_spd(self.R_cov, "R_cov"))
        object.__setattr__(self, "P0", _check_spd(self.P0, "P0"))


@dataclass(frozen=True)
class QmheConfig:
    """Horizon and weights of the quadratic moving-horizon smoother.

    The cost weights are the inverses of ``Qw`` (process), ``Rv``
    (measurement) and ``P_arrival`` (prior on the window-start state).
    """

    T_s: int
    Qw: np.ndarray
    Rv: np.ndarray
    P_arrival: np.ndarray

    def __post_init__(self) -> None:
        if self.T_s < 0:
            raise ContractViolation(f"T_s must be >= 0, got {self.T_s}")
        object.__setattr__(self, "Qw", _check_spd(self.Qw, "Qw"))
        object.__setattr__(self, "Rv", _check_spd(self.Rv, "Rv"))
        object.__setattr__(self, "P_arrival", _check_spd(self.P_arrival, "P_arrival"))


def ekf_step(
    state_est: np.ndarray,
    cov: np.ndarray,
    y: np.ndarray,
    linearization: tuple[np.ndarray, np.ndarray],
    config: EkfConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """One predict-update cycle of the (linearized) Kalman filter.

    Predicts through ``A`` from ``linearization = (A, C)``, then corrects
    with measurement ``y`` using the Joseph-form covariance update.  The
    returned covariance is exactly symmetric.

    Raises
    ------
    ConditioningError
        If the innovation covariance is numerically singular.
    """
    A, C = (np.asarray(M, dtype=float) for M in linearization)
    x = np.asarray(state_est, dtype=float).reshape(-1)
    P = np.asarray(cov, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = x.shape[0]
    if A.shape != (n, n) or C.shape[1] != n or y.shape[0] != C.shape[0]:
        raise DimensionError(
            f"inconsistent shapes: A {A.shape}, C {C.shape}, y {y.shape}, state {x.shape}"
        )

    x_pred = A @ x
    P_pred = A @ P @ A.T + config.Q_cov
    return _joseph_update(x_pred, P_pred, y, C, config.R_cov)


def _joseph_update(
    x_pred: np.ndarray, P_pred: np.ndarray, y: np.ndarray, C: np.ndarray, R: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Measurement update shared by the filter step and arrival-cost recursions."""
    S = C @ P_pred @ C.T + R
    # Scale-aware singularity guard: S inherits the scale of P_pred and R.
    scale = max(float(np.abs(P_pred).max()), float(np.abs(R).max()), 1e-300)
    if np.linalg.cond(S) > 1e12 or np.abs(np.linalg.det(S)) < (1e-300 * scale ** S.shape[0]):
        raise ConditioningError("innovation covariance is numerically singular")
    K = P_pred @ C.T @ np.linalg.inv(S)
    x_new = x_pred + K @ (y - C @ x_pred)
    IKC = np.eye(x_pred.shape[0]) - K @ C
    P_new = IKC @ P_pred @ IKC.T + K @ R @ K.T
    return x_new, 0.5 * (P_new + P_new.T)


@dataclass(frozen=True)
class WindowData:
    """Linear(ized) data of one smoothing window in deviation coordinates.

    ``outputs[j]`` is the (deviation) measurement at window position ``j``
    for ``j = 0..T_s``; ``A_seq`` holds ``T_s + 1`` transition matrices, of
    which the first ``T_s`` drive the in-window dynamics and the last maps
    the window-end estimate to the one-step prediction.  ``prior_mean`` is
    the arrival estimate of the window-start state.
    """

    outputs: np.ndarray  # (T_s + 1, p)
    A_seq: np.ndarray  # (T_s + 1, n, n)
    C_seq: np.ndarray  # (T_s + 1, p, n)
    prior_mean: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        y = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        A = np.asarray(self.A_seq, dtype=float)
        C = np.asarray(self.C_seq, dtype=float)
        m = np.asarray(self.prior_mean, dtype=float).reshape(-1)
        steps = y.shape[0]
        if A.shape[0] != steps or C.shape[0] != steps:
            raise DimensionError("outputs, A_seq and C_seq must have equal length")
        n = A.shape[1]
        if A.shape[2] != n or C.shape[2] != n or m.shape[0] != n or C.shape[1] != y.shape[1]:
            raise DimensionError("window data shapes are inconsistent")
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "A_seq", A)
        object.__setattr__(self, "C_seq", C)
        object.__setattr__(self, "prior_mean", m)


def qmhe_solve(window_data: WindowData, config: QmheConfig) -> tuple[np.ndarray, np.ndarray]:
    """Solve one quadratic moving-horizon window.

    Minimizes the sum of squared Mahalanobis residuals — prior deviation
    under ``P_arrival``, process residuals under ``Qw``, measurement
    residuals under ``Rv`` — over the window states, as one dense linear
    least-squares problem.  Returns ``(estimates, prediction)`` where
    ``estimates`` has shape ``(T_s + 1, n)`` and ``prediction`` is
    ``A_seq[-1] @ estimates[-1]``.

    Raises
    ------
    ConditioningError
        If the stacked regression is rank deficient.
    """
    wd = window_data
    steps = wd.outputs.shape[0]
    if steps != config.T_s + 1:
        raise DimensionError(
            f"window supplies {steps} positions but config.T_s = {config.T_s}"
        )
    n = wd.A_seq.shape[1]
    p = wd.outputs.shape[1]

    Wp = np.linalg.cholesky(np.linalg.inv(config.P_arrival))
    Wq = np.linalg.cholesky(np.linalg.inv(config.Qw))
    Wr = np.linalg.cholesky(np.linalg.inv(config.Rv))

    n_rows = n + config.T_s * n + steps * p
    n_vars = steps * n
    G = np.zeros((n_rows, n_vars))
    h = np.zeros(n_rows)

    G[:n, :n] = Wp.T
    h[:n] = Wp.T @ wd.prior_mean
    row = n
    for j in range(config.T_s):
        G[row : row + n, (j + 1) * n : (j + 2) * n] = Wq.T
        G[row : row + n, j * n : (j + 1) * n] = -Wq.T @ wd.A_seq[j]
        row += n
    for j in range(steps):
        G[row : row + p, j * n : (j + 1) * n] = Wr.T @ wd.C_seq[j]
        h[row : row + p] = Wr.T @ wd.outputs[j]
        row += p

    solution, _, rank, _ = np.linalg.lstsq(G, h, rcond=None)
    if rank < n_vars:
        raise ConditioningError(
            f"moving-horizon regression is rank deficient ({rank} < {n_vars})"
        )
    estimates = solution.reshape(steps, n)
    prediction = wd.A_seq[-1] @ estimates[-1]
    return estimates, prediction


def tune_covariances(w_draws: np.ndarray, v_draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Empirical noise covariances from pooled training draws.

    ``w_draws`` is ``(M, n)``, ``v_draws`` is ``(M, p)``.  A small jitter
    keeps the results positive definite even for degenerate (e.g. all-zero)
    corpora.
    """
    w = np.atleast_2d(np.asarray(w_draws, dtype=float))
    v = np.atleast_2d(np.asarray(v_draws, dtype=float))
    if v.shape[1] > v.shape[0]:
        raise DimensionError("need more draws than dimensions to estimate covariances")
    Q = np.cov(w, rowvar=False).reshape(w.shape[1], w.shape[1])
    R = np.cov(v, rowvar=False).reshape(v.shape[1], v.shape[1])
    jitter = 1e-9
    return Q + jitter * np.eye(w.shape[1]), R + jitter * np.eye(v.shape[1])
