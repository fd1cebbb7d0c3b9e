"""Least absolute deviation fitting via linear programming.

Solves ``min_phi || psi @ phi - mu ||_1`` through the standard slack
reformulation (one epigraph variable per residual row) with a
deterministic dual-simplex backend.  Columns of ``psi`` that are exactly
zero cannot affect the residual; the corresponding entries of the
minimizer are pinned to zero rather than left to solver whim, so repeated
solves are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ContractViolation, DimensionError, SolverError

_LP_METHOD = "highs-ds"


@dataclass(frozen=True)
class L1Problem:
    """One fit ``min || psi @ phi - mu ||_1``.

    Args:
        psi: residual matrix, shape ``(m, d)`` with ``m, d >= 1``.
        mu: target vector, shape ``(m,)``.
    """

    psi: np.ndarray
    mu: np.ndarray

    def __post_init__(self) -> None:
        psi = np.asarray(self.psi, dtype=float)
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if psi.ndim != 2 or psi.shape[0] < 1 or psi.shape[1] < 1:
            raise DimensionError(f"psi must be a 2-d array with m, d >= 1, got shape {psi.shape}")
        if mu.shape[0] != psi.shape[0]:
            raise DimensionError(
                f"mu has length {mu.shape[0]} but psi has {psi.shape[0]} rows"
            )
        if not np.all(np.isfinite(psi)) or not np.all(np.isfinite(mu)):
            raise ContractViolation("psi and mu must be finite")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class L1Solution:
    """Result of one fit.

    ``objective`` is always recomputed from ``phi`` (never taken from the
    solver), so it satisfies ``objective == ||psi @ phi - mu||_1`` exactly
    up to floating-point evaluation.
    """

    phi: np.ndarray
    objective: float
    iterations: int
    status: str  # "optimal" or "tolerance-limited"


def l1_fit(problem: L1Problem, tol: float = 1e-9) -> L1Solution:
    """Solve one least-absolute-deviation fit.

    Args:
        problem: the ``(psi, mu)`` pair.
        tol: optimality tolerance passed to the LP backend; the returned
            objective is within ``tol * (1 + |optimum|)`` of the true optimum.

    Returns:
        An :class:`L1Solution`; entries of ``phi`` matching zero columns of
        ``psi`` are exactly zero.

    Raises:
        SolverError: if the backend does not converge.
    """
    psi, mu = problem.psi, problem.mu
    phis, objectives, iters = _solve_slack_lp(psi, mu[None, :], tol)
    return L1Solution(
        phi=phis[0], objective=float(objectives[0]), iterations=iters, status="optimal"
    )


def l1_fit_batch(problems: list[L1Problem], tol: float = 1e-9) -> list[L1Solution]:
    """Solve a batch of fits sharing one ``psi``.

    The batch is solved as a single block LP; results are elementwise
    identical to per-problem :func:`l1_fit` calls.  An empty batch returns
    an empty list.

    Raises:
        DimensionError: if the problems do not share an identical ``psi``.
        SolverError: on backend failure, reporting the failing batch index.
    """
    if not problems:
        return []
    psi = problems[0].psi
    for idx, prob in enumerate(problems[1:], start=1):
        if prob.psi.shape != psi.shape or not np.array_equal(prob.psi, psi):
            raise DimensionError(f"problem {idx} does not share psi with problem 0")
    mus = np.stack([prob.mu for prob in problems])
    phis, objectives, iters = _solve_slack_lp(psi, mus, tol)
    return [
        L1Solution(phi=phis[k], objective=float(objectives[k]), iterations=iters, status="optimal")
        for k in range(len(problems))
    ]


def _solve_slack_lp(
    psi: np.ndarray, mus: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """Shared backend: ``k`` fits against one ``psi``, one LP solve.

    Zero columns of ``psi`` are dropped before the solve and restored as
    exact zeros afterwards.  Returns ``(phis (k, d), objectives (k,), nit)``.

    The solve goes through the LP dual — ``max mu^T y`` over ``psi^T y = 0``,
    ``|y| <= 1`` — which has far fewer rows than the primal slack form; the
    primal minimizers are the negated equality multipliers.  Each recovered
    ``phi`` can only overshoot its block optimum, so the recomputed
    objectives summing to the dual optimum certifies every block; on a
    certification gap the primal slack form is solved instead.
    """
    m, d = psi.shape
    k = mus.shape[0]
    keep = ~np.all(psi == 0.0, axis=0)
    psi_r = psi[:, keep]
    dr = int(keep.sum())

    phis = np.zeros((k, d))
    if dr == 0:
        # Nothing to fit: phi = 0 is optimal for every target.
        return phis, np.abs(mus).sum(axis=1), 0

    a_eq = psi_r.T if k == 1 else np.kron(np.eye(k), psi_r.T)
    res = linprog(
        -mus.ravel(),
        A_eq=a_eq,
        b_eq=np.zeros(k * dr),
        bounds=(-1.0, 1.0),
        method=_LP_METHOD,
        options=_lp_options(tol),
    )
    if res.status != 0:
        raise SolverError(f"LP backend failed (status {res.status}): {res.message}")

    objectives = np.empty(k)
    for j in range(k):
        phi_r = -res.eqlin.marginals[j * dr : (j + 1) * dr]
        phis[j, keep] = phi_r
        objectives[j] = np.abs(psi_r @ phi_r - mus[j]).sum()
    optimum = -float(res.fun)
    if abs(objectives.sum() - optimum) <= 1e-6 * (1.0 + abs(optimum)):
        return phis, objectives, int(res.nit)
    return _solve_slack_lp_primal(psi_r, keep, mus, tol)


def _solve_slack_lp_primal(
    psi_r: np.ndarray, keep: np.ndarray, mus: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """Primal slack form ``-t <= psi phi - mu <= t``; fallback path."""
    m, dr = psi_r.shape
    k = mus.shape[0]
    block = np.block([[psi_r, -np.eye(m)], [-psi_r, -np.eye(m)]])
    a_ub = block if k == 1 else np.kron(np.eye(k), block)
    b_ub = np.concatenate([np.concatenate([mu, -mu]) for mu in mus])
    c = np.tile(np.concatenate([np.zeros(dr), np.ones(m)]), k)
    bounds = ([(None, None)] * dr + [(0, None)] * m) * k
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method=_LP_METHOD, options=_lp_options(tol))
    if res.status != 0:
        raise SolverError(f"LP backend failed (status {res.status}): {res.message}")
    phis = np.zeros((k, keep.shape[0]))
    objectives = np.empty(k)
    width = dr + m
    for j in range(k):
        phi_r = res.x[j * width : j * width + dr]
        phis[j, keep] = phi_r
        objectives[j] = np.abs(psi_r @ phi_r - mus[j]).sum()
    return phis, objectives, int(res.nit)


def _lp_options(tol: float) -> dict:
    feas = max(float(tol), 1e-10)
    return {
        "primal_feasibility_tolerance": feas,
        "dual_feasibility_tolerance": feas,
    }
