"""Independent reference implementations used to validate the package.

Everything here is deliberately written from first principles against the
defining equations — scalar recursions assembled equation by equation, a
hand-rolled Bland-rule simplex, a monolithic risk LP over the response
entries — rather than reusing the package's stacked/per-row machinery, so
agreement is meaningful.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_discrete_are
from scipy.optimize import linprog

from drmhe.stacking import LtvSystem, StackedOperators, Window, build_stacked


# ---------------------------------------------------------------------------
# Window error recursion, assembled equation by equation


def window_error_oracle(
    A_list: np.ndarray,
    C_list: np.ndarray,
    gains: np.ndarray,
    e0: np.ndarray,
    w_list: np.ndarray,
    v_list: np.ndarray,
) -> np.ndarray:
    """Solve the smoother error recursion directly.

    Builds one linear equation per scalar error coordinate from

        e_0     = e0
        e_{j+1} = A_j e_j - w_j - sum_k gains[j, k] (C_k e_k - v_k)

    (``gains[j, k]`` weighting the innovation at window position ``k``,
    ``k <= T_s``) and solves the assembled system.  Never touches the
    stacked operators.
    """
    T = A_list.shape[0]
    n = A_list.shape[1]
    p = C_list.shape[1]
    n_corr = gains.shape[1]  # T_s + 1 usable measurement positions
    dim = (T + 1) * n
    M = np.zeros((dim, dim))
    rhs = np.zeros(dim)

    M[:n, :n] = np.eye(n)
    rhs[:n] = e0
    for j in range(T):
        r = (j + 1) * n
        M[r : r + n, r : r + n] = np.eye(n)
        M[r : r + n, j * n : (j + 1) * n] -= A_list[j]
        rhs[r : r + n] = -w_list[j]
        for k in range(n_corr):
            Lk = gains[j, k]  # (n, p)
            # + L (C e_k - v_k) moved to the left-hand side for the e_k part
            M[r : r + n, k * n : (k + 1) * n] += Lk @ C_list[k]
            rhs[r : r + n] += Lk @ v_list[k]
    return np.linalg.solve(M, rhs)


# ---------------------------------------------------------------------------
# Bland-rule tableau simplex for least absolute deviations


def bland_l1_objective(
    psi: np.ndarray, mu: np.ndarray, tol: float = 1e-10, max_iter: int = 100000
) -> float:
    """Optimal value of ``min ||psi @ phi - mu||_1`` by textbook simplex.

    Standard form with ``phi = phi+ - phi-`` and residual splits
    ``r+ - r-``; the initial basis picks ``r+`` or ``r-`` per row, which is
    feasible outright (no phase 1).  Bland's smallest-index rule is used
    for both the entering column and ratio ties, so the iteration cannot
    cycle.
    """
    psi = np.asarray(psi, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    m, d = psi.shape
    A = np.hstack([psi, -psi, np.eye(m), -np.eye(m)])
    b = mu.copy()
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    n_vars = 2 * d + 2 * m
    c = np.concatenate([np.zeros(2 * d), np.ones(2 * m)])
    basis = np.where(~flip, 2 * d + np.arange(m), 2 * d + m + np.arange(m))

    T = A.copy()
    rhs = b.copy()
    for _ in range(max_iter):
        reduced = c - c[basis] @ T
        candidates = np.nonzero(reduced < -tol)[0]
        if candidates.size == 0:
            return float(c[basis] @ rhs)
        enter = int(candidates[0])
        col = T[:, enter]
        positive = col > tol
        if not positive.any():
            raise RuntimeError("LP is unbounded (cannot happen for this problem)")
        ratios = np.full(m, np.inf)
        ratios[positive] = rhs[positive] / col[positive]
        best = ratios.min()
        ties = [i for i in range(m) if positive[i] and ratios[i] <= best + 1e-12]
        leave = min(ties, key=lambda i: basis[i])
        pivot = T[leave, enter]
        T[leave] /= pivot
        rhs[leave] /= pivot
        others = [i for i in range(m) if i != leave]
        factors = T[others, enter][:, None]
        T[others] -= factors * T[leave]
        rhs[others] -= factors[:, 0] * rhs[leave]
        basis[leave] = enter
    raise RuntimeError("simplex iteration limit reached")


# ---------------------------------------------------------------------------
# Monolithic worst-case risk LP over the free response entries


def monolithic_risk_lp(
    ops: StackedOperators,
    v_tilde: np.ndarray,
    w_tilde: np.ndarray,
    eps_v: float,
    eps_w: float,
    q: np.ndarray,
    normalize: bool = False,
) -> float:
    """Optimal worst-case cost by one LP over all free response entries.

    Epigraph formulation: variables are the free entries of the
    measurement response (rows below the first, usable-measurement
    columns), with absolute-value slacks for every empirical entry, every
    response entry and every disturbance-response entry, the latter
    expressed through the achievability completion.  Completely bypasses
    the per-row decomposition.
    """
    w = ops.window
    n_bar, p_bar = w.n_stacked, w.p_stacked
    N = v_tilde.shape[1]
    B = np.linalg.inv(np.eye(n_bar) - ops.Z @ ops.Acal)
    X = ops.Ccal @ ops.Z @ B  # (p_bar, n_bar)
    free_cols = np.nonzero(ops.mask_phi_v.any(axis=0))[0]
    nf = free_cols.size
    rows_free = list(range(1, n_bar))
    nr = len(rows_free)

    emp_scale = 1.0 / N if normalize else 1.0
    G = v_tilde - X @ w_tilde  # (p_bar, N): empirical coefficient of phi_v rows
    C0 = B @ w_tilde  # (n_bar, N)

    # Variable layout: phi (nr * nf), t_emp (nr * N), t_v (nr * nf), t_w (nr * n_bar)
    n_phi = nr * nf
    n_emp = nr * N
    n_tv = nr * nf
    n_tw = nr * n_bar
    n_var = n_phi + n_emp + n_tv + n_tw
    off_emp = n_phi
    off_tv = off_emp + n_emp
    off_tw = off_tv + n_tv

    rows_A: list[np.ndarray] = []
    rows_b: list[float] = []

    def add_abs_pair(coeffs: np.ndarray, const: float, slack_idx: int) -> None:
        # |coeffs . phi + const| <= t_slack  as two inequalities
        for sign in (1.0, -1.0):
            row = np.zeros(n_var)
            row[:n_phi] = sign * coeffs
            row[slack_idx] = -1.0
            rows_A.append(row)
            rows_b.append(-sign * const)

    for ri, i in enumerate(rows_free):
        base = ri * nf
        for k in range(N):
            coeffs = np.zeros(n_phi)
            coeffs[base : base + nf] = q[i] * G[free_cols, k]
            add_abs_pair(coeffs, q[i] * C0[i, k], off_emp + ri * N + k)
        for a in range(nf):
            coeffs = np.zeros(n_phi)
            coeffs[base + a] = q[i]
            add_abs_pair(coeffs, 0.0, off_tv + ri * nf + a)
        for j in range(n_bar):
            coeffs = np.zeros(n_phi)
            coeffs[base : base + nf] = -q[i] * X[free_cols, j]
            add_abs_pair(coeffs, q[i] * B[i, j], off_tw + ri * n_bar + j)

    cost = np.zeros(n_var)
    cost[off_emp:off_tv] = emp_scale
    cost[off_tv:off_tw] = eps_v
    cost[off_tw:] = eps_w
    bounds = [(None, None)] * n_phi + [(0, None)] * (n_var - n_phi)
    res = linprog(
        cost,
        A_ub=np.vstack(rows_A),
        b_ub=np.array(rows_b),
        bounds=bounds,
        method="highs",
    )
    assert res.status == 0, res.message
    # Pinned first row: empirical constants plus its disturbance-response norm.
    const = emp_scale * q[0] * np.abs(C0[0]).sum() + eps_w * q[0] * np.abs(B[0]).sum()
    return float(res.fun + const)


# ---------------------------------------------------------------------------
# Optimality certificate for least absolute deviations


def certificate_gap(psi: np.ndarray, mu: np.ndarray, phi: np.ndarray) -> float:
    """Smallest ``||psi^T s||_inf`` over valid subgradient sign vectors.

    ``s`` must equal the residual sign where the residual is clearly
    nonzero and may lie anywhere in ``[-1, 1]`` elsewhere; a gap near zero
    certifies ``phi`` as a minimizer.
    """
    residual = psi @ phi - mu
    fixed = np.abs(residual) > 1e-7
    s_fixed = np.sign(residual[fixed])
    base = psi[fixed].T @ s_fixed  # (d,)
    free_part = psi[~fixed]  # (m_free, d)
    m_free, d = free_part.shape
    if m_free == 0:
        return float(np.abs(base).max())
    # min u  s.t.  -u <= base_j + (free^T s)_j <= u,  -1 <= s <= 1
    c = np.concatenate([np.zeros(m_free), [1.0]])
    A = np.zeros((2 * d, m_free + 1))
    b = np.zeros(2 * d)
    A[:d, :m_free] = free_part.T
    A[:d, -1] = -1.0
    b[:d] = -base
    A[d:, :m_free] = -free_part.T
    A[d:, -1] = -1.0
    b[d:] = base
    bounds = [(-1, 1)] * m_free + [(0, None)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


# ---------------------------------------------------------------------------
# Gaussian smoothing and filtering references


def rts_smoother(
    A_seq: np.ndarray,
    C_seq: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    P0: np.ndarray,
    prior_mean: np.ndarray,
    ys: np.ndarray,
) -> np.ndarray:
    """Fixed-interval smoother (forward filter + backward recursion).

    Measurements are incorporated at every window position including the
    first; ``A_seq`` holds the transitions between consecutive positions.
    Returns the smoothed means, shape ``(T + 1, n)``.
    """
    T = A_seq.shape[0]
    n = A_seq.shape[1]
    x_pred = np.empty((T + 1, n))
    P_pred = np.empty((T + 1, n, n))
    x_filt = np.empty((T + 1, n))
    P_filt = np.empty((T + 1, n, n))
    x_pred[0] = prior_mean
    P_pred[0] = P0
    for j in range(T + 1):
        if j > 0:
            x_pred[j] = A_seq[j - 1] @ x_filt[j - 1]
            P_pred[j] = A_seq[j - 1] @ P_filt[j - 1] @ A_seq[j - 1].T + Q
        C = C_seq[j]
        S = C @ P_pred[j] @ C.T + R
        K = P_pred[j] @ C.T @ np.linalg.inv(S)
        x_filt[j] = x_pred[j] + K @ (ys[j] - C @ x_pred[j])
        P_filt[j] = (np.eye(n) - K @ C) @ P_pred[j]
    x_smooth = np.empty((T + 1, n))
    x_smooth[T] = x_filt[T]
    for j in range(T - 1, -1, -1):
        G = P_filt[j] @ A_seq[j].T @ np.linalg.inv(P_pred[j + 1])
        x_smooth[j] = x_filt[j] + G @ (x_smooth[j + 1] - x_pred[j + 1])
    return x_smooth


def steady_state_filtered_trace(
    A: np.ndarray, C: np.ndarray, Q: np.ndarray, R: np.ndarray
) -> float:
    """Trace of the steady-state filtered covariance of an LTI filter."""
    P_pred = solve_discrete_are(A.T, C.T, Q, R)
    S = C @ P_pred @ C.T + R
    P_filt = P_pred - P_pred @ C.T @ np.linalg.inv(S) @ C @ P_pred
    return float(np.trace(P_filt))


# ---------------------------------------------------------------------------
# Small utilities


def fd_jacobian(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.empty((f0.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = h
        J[:, j] = (np.asarray(f(x + step)) - np.asarray(f(x - step))) / (2 * h)
    return J


def random_window_instance(
    rng: np.random.Generator,
    n_max: int = 3,
    p_max: int = 3,
    T_s_max: int = 5,
    T_f_max: int = 2,
    a_scale: float = 0.5,
):
    """A random well-conditioned window: ``(system, window, ops)``."""
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    T_s = int(rng.integers(1, T_s_max + 1))
    T_f = int(rng.integers(1, T_f_max + 1))
    window = Window(n=n, p=p, T_s=T_s, T_f=T_f)
    A_seq = rng.normal(scale=a_scale / np.sqrt(n), size=(window.horizon, n, n))
    C_seq = rng.normal(size=(window.horizon, p, n))
    system = LtvSystem(n=n, p=p, A_seq=A_seq, C_seq=C_seq, check_pairs=False)
    return system, window, build_stacked(system, window)


def random_causal_gain(
    ops: StackedOperators, rng: np.random.Generator, scale: float = 0.3
) -> np.ndarray:
    """A random gain supported on ``mask_L``."""
    L = rng.normal(scale=scale / np.sqrt(ops.mask_L.shape[0]), size=ops.mask_L.shape)
    L[~ops.mask_L] = 0.0
    return L


def gain_blocks_from_stacked(L: np.ndarray, window: Window) -> np.ndarray:
    """Reshape a stacked gain into ``(horizon, T_s + 1, n, p)`` blocks."""
    n, p = window.n, window.p
    out = np.empty((window.horizon, window.T_s + 1, n, p))
    for j in range(window.horizon):
        for k in range(window.T_s + 1):
            out[j, k] = L[(j + 1) * n : (j + 2) * n, (k + 1) * p : (k + 2) * p]
    return out
