"""Stacked operators for estimation error dynamics over a sliding window.

A window covers ``T_s`` past steps and ``T_f`` future steps around the
current time, so the stacked error vector holds ``T_s + T_f + 1`` state
blocks.  The error recursion of a linear smoother over that window is

    e_0     = (initial estimate) - (state at window start)
    e_{j+1} = A_j e_j - w_j - sum_k  L[j, k] (C_k e_k - v_k)

with the gain ``L[j, k]`` acting on the innovation of the measurement at
window position ``k``.  This module builds the block-downshift, dynamics
and measurement operators that turn the recursion into one linear fixed
point equation, together with the sparsity masks that encode which gain
and response entries are structurally available.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CausalityError, ContractViolation, DimensionError

# Guard against accidentally requesting astronomically large stacked
# operators (e.g. a corrupted config): n * horizon_len above this raises.
MAX_STACKED_DIM = 4096

# Relative singular-value threshold below which a stacked window (or an
# (A, C) pair) is reported as unobservable.
OBSERVABILITY_RTOL = 1e-8


@dataclass(frozen=True)
class Window:
    """Sliding-window geometry: ``T_s`` past and ``T_f`` future steps.

    Attributes
    ----------
    n, p:
        State and measurement dimension of the underlying system.
    T_s, T_f:
        Number of past and future steps; both must be at least 1.
    """

    n: int
    p: int
    T_s: int
    T_f: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.p < 1:
            raise DimensionError(f"need n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if self.T_s < 1 or self.T_f < 1:
            raise ContractViolation(
                f"need T_s >= 1 and T_f >= 1, got T_s={self.T_s}, T_f={self.T_f}"
            )

    @property
    def horizon(self) -> int:
        """Number of dynamics steps covered by the window (``T_s + T_f``)."""
        return self.T_s + self.T_f

    @property
    def n_blocks(self) -> int:
        """Number of stacked state blocks (``T_s + T_f + 1``)."""
        return self.T_s + self.T_f + 1

    @property
    def n_stacked(self) -> int:
        """Length of the stacked error vector, ``n * (T_s + T_f + 1)``."""
        return self.n * self.n_blocks

    @property
    def p_stacked(self) -> int:
        """Length of the stacked measurement vector, ``p * (T_s + T_f + 1)``."""
        return self.p * self.n_blocks

    @property
    def p_tail(self) -> int:
        """Trailing measurement entries that are structurally unavailable.

        The smoother never sees measurements from the final ``T_f - 1``
        window positions, so the last ``p * (T_f - 1)`` columns of any
        gain or measurement-response map are forced to zero.
        """
        return self.p * (self.T_f - 1)


@dataclass(frozen=True)
class LtvSystem:
    """A finite sequence of linear time-varying system matrices.

    ``A_seq`` holds the ``T_s + T_f`` state-transition matrices covering the
    window's dynamics steps; ``C_seq`` holds the measurement matrices at the
    same positions.  Each pair is checked for observability at construction
    (rank of the ``[C; CA; ...]`` stack); failures are reported via a
    warning rather than an exception so that deliberately degenerate
    systems can still be studied.
    """

    n: int
    p: int
    A_seq: np.ndarray  # (horizon, n, n)
    C_seq: np.ndarray  # (horizon, p, n)
    check_pairs: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        A = np.asarray(self.A_seq, dtype=float)
        C = np.asarray(self.C_seq, dtype=float)
        if A.ndim != 3 or A.shape[1:] != (self.n, self.n):
            raise DimensionError(f"A_seq must have shape (*, {self.n}, {self.n}), got {A.shape}")
        if C.ndim != 3 or C.shape[1:] != (self.p, self.n):
            raise DimensionError(f"C_seq must have shape (*, {self.p}, {self.n}), got {C.shape}")
        if A.shape[0] != C.shape[0]:
            raise DimensionError(
                f"A_seq and C_seq must have equal length, got {A.shape[0]} != {C.shape[0]}"
            )
        object.__setattr__(self, "A_seq", A)
        object.__setattr__(self, "C_seq", C)
        if self.check_pairs and A.shape[0] > 0:
            bad = _unobservable_pairs(A, C)
            if bad:
                warnings.warn(
                    f"(A, C) pairs at positions {bad} fail the observability rank test",
                    RuntimeWarning,
                    stacklevel=2,
                )

    @property
    def horizon(self) -> int:
        return self.A_seq.shape[0]


def _unobservable_pairs(A: np.ndarray, C: np.ndarray) -> list[int]:
    """Indices whose observability matrix ``[C; CA; ...; CA^{n-1}]`` is rank deficient."""
    n = A.shape[1]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)  # batched: (T, p, n) @ (T, n, n)
    obs = np.concatenate(blocks, axis=1)  # (T, p*n, n)
    sv = np.linalg.svd(obs, compute_uv=False)
    rel = sv[:, -1] / np.maximum(sv[:, 0], np.finfo(float).tiny)
    return [int(i) for i in np.nonzero(rel <= OBSERVABILITY_RTOL)[0]]


@dataclass(frozen=True)
class StackedOperators:
    """Block operators and sparsity masks for one window.

    Attributes
    ----------
    Z:
        Block downshift, ``n_stacked x n_stacked``.
    Acal:
        Block-diagonal dynamics ``diag(A_0, ..., A_{horizon-1}, 0)``.
    Ccal:
        Block-diagonal measurement map ``diag(0, C_0, ..., C_{horizon-1})``
        of shape ``p_stacked x n_stacked``.
    mask_L:
        Boolean mask of structurally available gain entries.
    mask_phi_v, mask_phi_w:
        Masks of potentially nonzero entries of the measurement- and
        disturbance-response maps over all gains satisfying ``mask_L``.
    """

    window: Window
    Z: np.ndarray
    Acal: np.ndarray
    Ccal: np.ndarray
    mask_L: np.ndarray
    mask_phi_v: np.ndarray
    mask_phi_w: np.ndarray

    @property
    def n(self) -> int:
        return self.window.n

    @property
    def p(self) -> int:
        return self.window.p


@dataclass(frozen=True)
class StackedNoise:
    """Stacked noise vectors entering the window error dynamics.

    ``v_bar`` starts with a structurally-zero measurement block; ``w_bar``
    starts with the initial error followed by the negated process
    disturbances.
    """

    v_bar: np.ndarray
    w_bar: np.ndarray


def build_downshift(n: int, horizon_len: int) -> np.ndarray:
    """Block downshift matrix with ``n x n`` identity blocks on the subdiagonal.

    Parameters
    ----------
    n:
        Block size, at least 1.
    horizon_len:
        Number of blocks, at least 2.

    Returns
    -------
    ``(n * horizon_len, n * horizon_len)`` array ``Z`` with
    ``(Z x)_j = x_{j-1}`` blockwise and a zero first block row.

    >>> build_downshift(1, 3)
    array([[0., 0., 0.],
           [1., 0., 0.],
           [0., 1., 0.]])
    """
    if n < 1:
        raise DimensionError(f"block size must be >= 1, got {n}")
    if horizon_len < 2:
        raise ContractViolation(f"horizon_len must be >= 2, got {horizon_len}")
    dim = n * horizon_len
    if dim > MAX_STACKED_DIM:
        raise DimensionError(
            f"stacked dimension {dim} exceeds the configured maximum {MAX_STACKED_DIM}"
        )
    # Ones on the (-n)-th scalar diagonal are exactly the identity blocks
    # on the first block subdiagonal.
    return np.eye(dim, k=-n)


def build_stacked(system: LtvSystem, window: Window) -> StackedOperators:
    """Assemble the stacked operators and masks for ``system`` over ``window``.

    Parameters
    ----------
    system:
        Must provide exactly ``window.horizon`` matrix pairs with matching
        ``n`` and ``p``.

    Raises
    ------
    DimensionError
        On any shape or length mismatch.
    """
    if system.n != window.n or system.p != window.p:
        raise DimensionError(
            f"system dims (n={system.n}, p={system.p}) do not match "
            f"window dims (n={window.n}, p={window.p})"
        )
    if system.horizon != window.horizon:
        raise DimensionError(
            f"system provides {system.horizon} steps, window needs {window.horizon}"
        )
    n, p = window.n, window.p
    blocks = window.n_blocks
    Z = build_downshift(n, blocks)

    Acal = np.zeros((window.n_stacked, window.n_stacked))
    Ccal = np.zeros((window.p_stacked, window.n_stacked))
    for j in range(window.horizon):
        Acal[j * n : (j + 1) * n, j * n : (j + 1) * n] = system.A_seq[j]
        # Measurement blocks are shifted down by one: block 0 is zero.
        r = (j + 1) * p
        c = (j + 1) * n
        Ccal[r : r + p, c : c + n] = system.C_seq[j]

    mask_L = np.ones((window.n_stacked, window.p_stacked), dtype=bool)
    mask_L[:n, :] = False  # the window-start error is not corrected
    mask_L[:, :p] = False  # measurement block 0 is structurally zero
    if window.p_tail:
        mask_L[:, -window.p_tail :] = False  # future measurements unavailable

    mask_phi_v = np.ones_like(mask_L)
    mask_phi_v[:, :p] = False
    if window.p_tail:
        mask_phi_v[:, -window.p_tail :] = False

    # The disturbance response of any gain respecting mask_L is free on the
    # block lower triangle (the open-loop propagation) and, for every scalar
    # row below the first, additionally on the block columns whose
    # disturbances feed measurements the smoother may use.
    br = np.arange(window.n_stacked)[:, None] // n
    bc = np.arange(window.n_stacked)[None, :] // n
    rows = np.arange(window.n_stacked)[:, None]
    mask_phi_w = (br >= bc) | ((rows >= 1) & (bc <= window.T_s + 1))

    return StackedOperators(
        window=window,
        Z=Z,
        Acal=Acal,
        Ccal=Ccal,
        mask_L=mask_L,
        mask_phi_v=mask_phi_v,
        mask_phi_w=mask_phi_w,
    )


def stack_noise(
    e0: np.ndarray, w_seq: np.ndarray, v_seq: np.ndarray, window: Window
) -> StackedNoise:
    """Stack an initial error and per-step noises into ``(v_bar, w_bar)``.

    ``w_seq`` and ``v_seq`` hold the disturbances and measurement noises at
    the window's ``T_s + T_f`` dynamics steps, in window order.  Process
    disturbances enter the error dynamics with a negative sign, which is
    baked into ``w_bar`` here.
    """
    e0 = np.asarray(e0, dtype=float).reshape(-1)
    w = np.asarray(w_seq, dtype=float)
    v = np.asarray(v_seq, dtype=float)
    if e0.shape != (window.n,):
        raise DimensionError(f"e0 must have length {window.n}, got {e0.shape}")
    if w.shape != (window.horizon, window.n):
        raise DimensionError(
            f"w_seq must have shape ({window.horizon}, {window.n}), got {w.shape}"
        )
    if v.shape != (window.horizon, window.p):
        raise DimensionError(
            f"v_seq must have shape ({window.horizon}, {window.p}), got {v.shape}"
        )
    v_bar = np.concatenate([np.zeros(window.p), v.reshape(-1)])
    w_bar = np.concatenate([e0, -w.reshape(-1)])
    return StackedNoise(v_bar=v_bar, w_bar=w_bar)


def propagate_error(ops: StackedOperators, L: np.ndarray, noise: StackedNoise) -> np.ndarray:
    """Stacked error produced by gain ``L`` under the given noise.

    Solves the window fixed point
    ``(I - Z Acal + L Ccal Z) e = L v_bar + w_bar`` exactly (dense solve).

    Raises
    ------
    CausalityError
        If ``L`` has nonzeros outside ``mask_L``.
    """
    L = np.asarray(L, dtype=float)
    if L.shape != ops.mask_L.shape:
        raise DimensionError(f"L must have shape {ops.mask_L.shape}, got {L.shape}")
    if np.any(L[~ops.mask_L] != 0.0):
        raise CausalityError("gain has nonzero entries in structurally-zero positions")
    dim = ops.Z.shape[0]
    M = np.eye(dim) - ops.Z @ ops.Acal + L @ ops.Ccal @ ops.Z
    rhs = L @ noise.v_bar + noise.w_bar
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - requires a singular window
        raise ContractViolation(f"window error dynamics are singular: {exc}") from exc


@dataclass(frozen=True)
class ObservabilityReport:
    """Outcome of the window-level and per-pair observability checks."""

    ok: bool
    min_rel_singular_value: float
    unobservable_pairs: tuple[int, ...]


def check_observability(system: LtvSystem, window: Window) -> ObservabilityReport:
    """Rank test of the stacked map ``[Ccal Z; I - Z Acal]`` plus per-pair checks.

    The stacked map is square-plus-tall and has full column rank for every
    window (the ``I - Z Acal`` block is unit lower triangular), so the
    window-level test mainly guards the numerics; the per-pair
    ``[C; CA; ...]`` rank test is the discriminating one and failures are
    also surfaced as a warning.
    """
    ops = build_stacked(system, window)
    dim = ops.Z.shape[0]
    stackmap = np.vstack([ops.Ccal @ ops.Z, np.eye(dim) - ops.Z @ ops.Acal])
    sv = np.linalg.svd(stackmap, compute_uv=False)
    rel = float(sv[-1] / sv[0])
    bad = tuple(_unobservable_pairs(system.A_seq, system.C_seq))
    ok = rel > OBSERVABILITY_RTOL and not bad
    if not ok:
        warnings.warn(
            f"observability check failed: min relative singular value {rel:.3e}, "
            f"unobservable pairs {bad}",
            RuntimeWarning,
            stacklevel=2,
        )
    return ObservabilityReport(ok=ok, min_rel_singular_value=rel, unobservable_pairs=bad)
