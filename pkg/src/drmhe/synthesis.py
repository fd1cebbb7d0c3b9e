"""Sample-based synthesis of worst-case-optimal smoother response maps.

The smoother is parameterized not by its gain but by the pair of linear
maps ``(phi_v, phi_w)`` sending stacked measurement noise and stacked
disturbance to the stacked estimation error.  Achievable pairs satisfy

    [phi_v, phi_w] @ [Ccal Z; I - Z Acal] = I,

which pins ``phi_w`` to ``(I - Z Acal)^-1 - phi_v Ccal Z (I - Z Acal)^-1``
and leaves ``phi_v`` free on its mask.  The design objective is the sum,
over scalar error coordinates, of the worst-case mean absolute error over
all noise distributions within per-coordinate sup-norm ambiguity radii
``eps_v`` / ``eps_w`` of the empirical sample cloud.  That worst case has
a closed form: the empirical cost plus an l1 regularizer on the map rows,

    sum_i q_i [ sum_k |phi_v_i v_k + phi_w_i w_k|
                + eps_v ||phi_v_i||_1 + eps_w ||phi_w_i||_1 ],

so the synthesis decouples into one least-absolute-deviation fit per
error coordinate, solved here through :mod:`.l1min`.  The first error
coordinate has no usable measurements and is pinned to zero response; its
cost contribution is a constant.

Sample sums are NOT divided by the sample count by default; pass
``normalize_empirical=True`` to average instead (the minimizer only
changes when the relative weighting against ``eps`` matters, i.e. it
rescales the effective ambiguity radius).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import CausalityError, ConditioningError, ContractViolation, DimensionError
from .l1min import _solve_slack_lp
from .stacking import StackedOperators

# Achievability residuals above this indicate a construction bug, not noise.
ACHIEVABILITY_TOL = 1e-8

# Condition-number ceiling for recovering a gain from a response map.
GAIN_RECOVERY_MAX_COND = 1e12


@dataclass(frozen=True)
class SlsMaps:
    """An achievable response pair with its achievability residual.

    ``achievability_residual`` is the max-abs deviation of
    ``[phi_v, phi_w] @ [Ccal Z; I - Z Acal]`` from the identity, computed
    by whichever routine produced the maps.
    """

    phi_v: np.ndarray
    phi_w: np.ndarray
    achievability_residual: float

    def __post_init__(self) -> None:
        phi_v = np.asarray(self.phi_v, dtype=float)
        phi_w = np.asarray(self.phi_w, dtype=float)
        if phi_v.ndim != 2 or phi_w.ndim != 2:
            raise DimensionError("phi_v and phi_w must be 2-d arrays")
        if phi_w.shape[0] != phi_w.shape[1] or phi_v.shape[0] != phi_w.shape[0]:
            raise DimensionError(
                f"incompatible map shapes {phi_v.shape} and {phi_w.shape}"
            )
        if not (np.all(np.isfinite(phi_v)) and np.all(np.isfinite(phi_w))):
            raise ContractViolation("response maps must be finite")
        object.__setattr__(self, "phi_v", phi_v)
        object.__setattr__(self, "phi_w", phi_w)


@dataclass(frozen=True)
class RiskParams:
    """Ambiguity radii and per-coordinate weights of the design objective.

    ``q_diag`` holds the positive diagonal of the weighting applied to the
    stacked error; ``None`` means uniform weights.  The radii bound the
    per-sample sup-norm shift of measurement noise (``eps_v``) and
    disturbance (``eps_w``) columns.
    """

    eps_v: float
    eps_w: float
    q_diag: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (self.eps_v >= 0.0 and self.eps_w >= 0.0):
            raise ContractViolation(
                f"ambiguity radii must be >= 0, got eps_v={self.eps_v}, eps_w={self.eps_w}"
            )
        if self.q_diag is not None:
            q = np.asarray(self.q_diag, dtype=float).reshape(-1)
            if not np.all(np.isfinite(q)) or np.any(q <= 0.0):
                raise ContractViolation("q_diag entries must be finite and > 0")
            object.__setattr__(self, "q_diag", q)

    def weights(self, n_stacked: int) -> np.ndarray:
        """The weight vector resolved against a stacked dimension."""
        if self.q_diag is None:
            return np.ones(n_stacked)
        if self.q_diag.shape[0] != n_stacked:
            raise DimensionError(
                f"q_diag has length {self.q_diag.shape[0]}, expected {n_stacked}"
            )
        return self.q_diag


@dataclass(frozen=True)
class SampleSet:
    """Stacked noise sample columns used as the empirical distribution.

    Column ``k`` of ``v_tilde`` / ``w_tilde`` is one stacked realization in
    the same layout the error dynamics consume: the first ``p`` rows of
    ``v_tilde`` correspond to the structurally-zero measurement block and
    must be exactly zero.
    """

    v_tilde: np.ndarray
    w_tilde: np.ndarray
    p: int

    def __post_init__(self) -> None:
        v = np.asarray(self.v_tilde, dtype=float)
        w = np.asarray(self.w_tilde, dtype=float)
        if v.ndim != 2 or w.ndim != 2 or v.shape[1] != w.shape[1]:
            raise DimensionError(
                f"sample arrays must be 2-d with equal column counts, "
                f"got {v.shape} and {w.shape}"
            )
        if v.shape[1] < 1:
            raise ContractViolation("need at least one sample column")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise ContractViolation("sample columns must be finite")
        if not (1 <= self.p <= v.shape[0]):
            raise DimensionError(f"invalid measurement block size p={self.p}")
        if np.any(v[: self.p] != 0.0):
            raise ContractViolation(
                "the first p rows of v_tilde (structurally-zero block) must be zero"
            )
        object.__setattr__(self, "v_tilde", v)
        object.__setattr__(self, "w_tilde", w)

    @property
    def n_samples(self) -> int:
        return self.v_tilde.shape[1]


@dataclass(frozen=True)
class SynthesisResult:
    """Output of :func:`synthesize`.

    ``gain_blocks[j, k]`` is the correction applied to window-position-
    ``j + 1``'s error update from the innovation at window position ``k``;
    ``risk`` equals the sum of ``row_objectives`` up to solver accuracy.
    """

    maps: SlsMaps
    gain_blocks: np.ndarray
    risk: float
    row_objectives: np.ndarray
    solve_seconds: float


def _achievability_stack(ops: StackedOperators) -> np.ndarray:
    dim = ops.Z.shape[0]
    return np.vstack([ops.Ccal @ ops.Z, np.eye(dim) - ops.Z @ ops.Acal])


def check_achievability(maps: SlsMaps, ops: StackedOperators) -> float:
    """Max-abs residual of the achievability identity for ``maps``."""
    combined = np.hstack([maps.phi_v, maps.phi_w])
    resid = combined @ _achievability_stack(ops) - np.eye(ops.Z.shape[0])
    return float(np.abs(resid).max())


def phi_from_gain(ops: StackedOperators, L: np.ndarray) -> SlsMaps:
    """Response maps realized by a structurally-valid gain ``L``.

    Inverts the window fixed point once:
    ``phi_w = (I - Z Acal + L Ccal Z)^-1`` and ``phi_v = phi_w @ L``.

    Raises
    ------
    CausalityError
        If ``L`` violates ``mask_L``.
    """
    L = np.asarray(L, dtype=float)
    if L.shape != ops.mask_L.shape:
        raise DimensionError(f"L must have shape {ops.mask_L.shape}, got {L.shape}")
    if np.any(L[~ops.mask_L] != 0.0):
        raise CausalityError("gain has nonzero entries in structurally-zero positions")
    dim = ops.Z.shape[0]
    M = np.eye(dim) - ops.Z @ ops.Acal + L @ ops.Ccal @ ops.Z
    try:
        phi_w = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"window dynamics not invertible: {exc}") from exc
    phi_v = phi_w @ L
    maps = SlsMaps(phi_v=phi_v, phi_w=phi_w, achievability_residual=0.0)
    resid = check_achievability(maps, ops)
    return SlsMaps(phi_v=phi_v, phi_w=phi_w, achievability_residual=resid)


def gain_from_phi(ops: StackedOperators, phi_v: np.ndarray) -> np.ndarray:
    """Recover the smoother gain realizing a measurement-response map.

    Computes ``L = (I - Z Acal) (I - phi_v Ccal Z)^-1 phi_v`` and projects
    the result onto ``mask_L``.  For maps produced by :func:`phi_from_gain`
    the projection is a no-op and the round trip is exact to solver
    precision; for synthesized maps whose first block row is nonzero below
    the first scalar row, the projection discards those entries (the
    deployed estimator applies the maps directly and never needs them).

    Raises
    ------
    ConditioningError
        If ``I - phi_v Ccal Z`` has condition number above 1e12.
    """
    phi_v = np.asarray(phi_v, dtype=float)
    if phi_v.shape != ops.mask_phi_v.shape:
        raise DimensionError(
            f"phi_v must have shape {ops.mask_phi_v.shape}, got {phi_v.shape}"
        )
    if np.any(phi_v[~ops.mask_phi_v] != 0.0):
        raise CausalityError("phi_v has nonzero entries in structurally-zero positions")
    dim = ops.Z.shape[0]
    G = np.eye(dim) - phi_v @ (ops.Ccal @ ops.Z)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > GAIN_RECOVERY_MAX_COND:
        raise ConditioningError(
            f"gain recovery is ill-conditioned (cond={cond:.3e} > {GAIN_RECOVERY_MAX_COND:.0e})"
        )
    L = (np.eye(dim) - ops.Z @ ops.Acal) @ np.linalg.solve(G, phi_v)
    L[~ops.mask_L] = 0.0
    return L


def evaluate_risk(
    maps: SlsMaps,
    samples: SampleSet,
    params: RiskParams,
    normalize_empirical: bool = False,
) -> float:
    """Worst-case design cost of ``maps`` against the sample ambiguity set.

    Equals the weighted empirical absolute error summed over samples plus
    the ambiguity regularizer
    ``sum_i q_i (eps_v ||phi_v_i||_1 + eps_w ||phi_w_i||_1)``.
    """
    n_stacked, p_stacked = maps.phi_v.shape
    if samples.v_tilde.shape[0] != p_stacked or samples.w_tilde.shape[0] != n_stacked:
        raise DimensionError(
            f"sample rows {samples.v_tilde.shape[0]}/{samples.w_tilde.shape[0]} do not "
            f"match map dims {p_stacked}/{n_stacked}"
        )
    q = params.weights(n_stacked)[:, None]
    empirical = np.abs(q * (maps.phi_v @ samples.v_tilde + maps.phi_w @ samples.w_tilde)).sum()
    if normalize_empirical:
        empirical /= samples.n_samples
    regularizer = params.eps_v * np.abs(q * maps.phi_v).sum() + params.eps_w * np.abs(
        q * maps.phi_w
    ).sum()
    return float(empirical + regularizer)


def assemble_psi(
    ops: StackedOperators,
    samples: SampleSet,
    params: RiskParams,
    normalize_empirical: bool = False,
) -> np.ndarray:
    """Residual matrix shared by every per-row fit.

    Stacks the ``eps_v`` block, the ``eps_w`` block (routed through the
    open-loop response) and one row per sample, then keeps only the columns
    corresponding to usable measurements.  Shape is
    ``(p_stacked + n_stacked + N, p_stacked - p_tail)``.
    """
    _check_sample_dims(ops, samples)
    w = ops.window
    cz_t = (ops.Ccal @ ops.Z).T
    # S = (I - Z Acal)^-T Z^T Ccal^T, the open-loop measurement response.
    S = np.linalg.solve((np.eye(w.n_stacked) - ops.Z @ ops.Acal).T, cz_t)
    bottom = samples.w_tilde.T @ S - samples.v_tilde.T
    if normalize_empirical:
        bottom = bottom / samples.n_samples
    psi = np.vstack([-params.eps_v * np.eye(w.p_stacked), params.eps_w * S, bottom])
    d = w.p_stacked - w.p_tail
    return psi[:, :d]


def assemble_mu(
    ops: StackedOperators,
    samples: SampleSet,
    params: RiskParams,
    row: int,
    normalize_empirical: bool = False,
) -> np.ndarray:
    """Target vector of the fit for one error coordinate.

    ``row`` is the one-based index into the stacked error vector and must
    satisfy ``2 <= row <= n_stacked``: the first coordinate's response is
    pinned to zero and has no fit.
    """
    _check_sample_dims(ops, samples)
    n_stacked = ops.window.n_stacked
    if not 2 <= row <= n_stacked:
        raise ContractViolation(
            f"row must satisfy 2 <= row <= {n_stacked} (row 1 is pinned to zero), got {row}"
        )
    B = _open_loop_inverse(ops)
    q = params.weights(n_stacked)
    return _mu_rows(B, q, samples, params, [row - 1], normalize_empirical)[0]


def synthesize(
    ops: StackedOperators,
    samples: SampleSet,
    params: RiskParams,
    tol: float = 1e-9,
    normalize_empirical: bool = False,
) -> SynthesisResult:
    """Minimize the worst-case design cost over achievable response maps.

    Solves one least-absolute-deviation fit per error coordinate below the
    first (a single block LP), rescales the minimizers into ``phi_v`` rows,
    completes ``phi_w`` through the achievability identity and recovers the
    masked gain blocks.  Row order is fixed, so repeated calls are
    bit-identical.
    """
    t_start = time.perf_counter()
    _check_sample_dims(ops, samples)
    w = ops.window
    n_stacked, p_stacked = w.n_stacked, w.p_stacked
    q = params.weights(n_stacked)

    psi = assemble_psi(ops, samples, params, normalize_empirical)
    B = _open_loop_inverse(ops)
    mus = _mu_rows(B, q, samples, params, range(n_stacked), normalize_empirical)

    phis, objectives, _ = _solve_slack_lp(psi, mus[1:], tol)

    phi_v = np.zeros((n_stacked, p_stacked))
    d = p_stacked - w.p_tail
    phi_v[1:, :d] = phis / q[1:, None]
    phi_w = B - phi_v @ (ops.Ccal @ ops.Z @ B)

    maps = SlsMaps(phi_v=phi_v, phi_w=phi_w, achievability_residual=0.0)
    resid = check_achievability(maps, ops)
    if resid > ACHIEVABILITY_TOL:
        raise ContractViolation(
            f"synthesized maps violate achievability (residual {resid:.3e})"
        )
    maps = SlsMaps(phi_v=phi_v, phi_w=phi_w, achievability_residual=resid)

    L = gain_from_phi(ops, phi_v)
    n, p = w.n, w.p
    gain_blocks = np.empty((w.horizon, w.T_s + 1, n, p))
    for j in range(w.horizon):
        for k in range(w.T_s + 1):
            gain_blocks[j, k] = L[(j + 1) * n : (j + 2) * n, (k + 1) * p : (k + 2) * p]

    row_objectives = np.concatenate([[np.abs(mus[0]).sum()], objectives])
    risk = evaluate_risk(maps, samples, params, normalize_empirical)
    return SynthesisResult(
        maps=maps,
        gain_blocks=gain_blocks,
        risk=risk,
        row_objectives=row_objectives,
        solve_seconds=time.perf_counter() - t_start,
    )


def solve_response_rows(
    ops: StackedOperators,
    samples: SampleSet,
    params: RiskParams,
    rows: list[int],
    tol: float = 1e-9,
    normalize_empirical: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Fit only the requested zero-based rows of ``phi_v``.

    A deployment that reads a few error coordinates (e.g. the one-step
    prediction block) can skip the other fits; the returned rows are
    bit-identical to the corresponding rows of :func:`synthesize`.  Row 0
    is accepted and returns its pinned zero response with the constant
    objective.  Returns ``(phi_v_rows (k, p_stacked), objectives (k,))``.
    """
    _check_sample_dims(ops, samples)
    w = ops.window
    n_stacked, p_stacked = w.n_stacked, w.p_stacked
    if any(not 0 <= r < n_stacked for r in rows):
        raise ContractViolation(f"row indices must lie in [0, {n_stacked}), got {rows}")
    q = params.weights(n_stacked)
    B = _open_loop_inverse(ops)
    mus = _mu_rows(B, q, samples, params, rows, normalize_empirical)

    phi_rows = np.zeros((len(rows), p_stacked))
    objectives = np.empty(len(rows))
    fit_pos = [k for k, r in enumerate(rows) if r != 0]
    for k, r in enumerate(rows):
        if r == 0:
            objectives[k] = np.abs(mus[k]).sum()
    if fit_pos:
        psi = assemble_psi(ops, samples, params, normalize_empirical)
        phis, objs, _ = _solve_slack_lp(psi, mus[fit_pos], tol)
        d = p_stacked - w.p_tail
        for j, k in enumerate(fit_pos):
            phi_rows[k, :d] = phis[j] / q[rows[k]]
            objectives[k] = objs[j]
    return phi_rows, objectives


def _check_sample_dims(ops: StackedOperators, samples: SampleSet) -> None:
    w = ops.window
    if samples.v_tilde.shape[0] != w.p_stacked or samples.w_tilde.shape[0] != w.n_stacked:
        raise DimensionError(
            f"sample rows {samples.v_tilde.shape[0]}/{samples.w_tilde.shape[0]} do not "
            f"match stacked dims {w.p_stacked}/{w.n_stacked}"
        )
    if samples.p != w.p:
        raise DimensionError(f"sample block size {samples.p} != window p {w.p}")


def _open_loop_inverse(ops: StackedOperators) -> np.ndarray:
    """``(I - Z Acal)^-1`` (unit lower triangular, always invertible)."""
    dim = ops.Z.shape[0]
    return np.linalg.inv(np.eye(dim) - ops.Z @ ops.Acal)


def _mu_rows(
    B: np.ndarray,
    q: np.ndarray,
    samples: SampleSet,
    params: RiskParams,
    rows: "list[int] | range",
    normalize_empirical: bool,
) -> np.ndarray:
    """Fit targets for the given zero-based rows, stacked as ``(k, m)``."""
    idx = list(rows)
    R = q[idx, None] * B[idx]  # weighted rows of the open-loop response
    bottom = R @ samples.w_tilde
    if normalize_empirical:
        bottom = bottom / samples.n_samples
    p_stacked = samples.v_tilde.shape[0]
    return np.hstack([np.zeros((len(idx), p_stacked)), params.eps_w * R, bottom])
