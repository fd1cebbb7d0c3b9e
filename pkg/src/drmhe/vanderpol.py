"""Van der Pol oscillator: dynamics, Euler discretization, linearization.

The benchmark plant is the unforced Van der Pol oscillator with unit
stiffness, discretized by the explicit Euler scheme with additive process
disturbance and a position measurement.  State trajectories, outputs and
per-step linearizations along the true trajectory are bundled in
:class:`SimTrace`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DimensionError, InstabilityError
from .noise import NoiseProfile, _step_count, sample_profile

DT_DEFAULT = 0.1
STATE_DIM = 2
MEAS_DIM = 1
C_ROW = np.array([[1.0, 0.0]])

# |x| beyond this is treated as divergence of the explicit Euler scheme.
INSTABILITY_LIMIT = 1e6


def vdp_rhs(x: np.ndarray) -> np.ndarray:
    """Continuous-time vector field ``(x2, (1 - x1^2) x2 - x1)``."""
    x = np.asarray(x, dtype=float)
    return np.array([x[1], (1.0 - x[0] ** 2) * x[1] - x[0]])


def euler_step(x: np.ndarray, w: np.ndarray, dt: float = DT_DEFAULT) -> np.ndarray:
    """One explicit Euler step ``x + dt * (f(x) + w)``.

    >>> euler_step(np.array([1.0, 1.0]), np.zeros(2))
    array([1.1, 0.9])
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (STATE_DIM,) or w.shape != (STATE_DIM,):
        raise DimensionError(f"state and disturbance must have shape ({STATE_DIM},)")
    return x + dt * (vdp_rhs(x) + w)


def linearize(x: np.ndarray, dt: float = DT_DEFAULT) -> tuple[np.ndarray, np.ndarray]:
    """Discrete-time linearization ``(A, C)`` about state ``x``.

    ``A = I + dt * J(x)`` with ``J`` the Jacobian of the vector field;
    the measurement picks the first coordinate.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (STATE_DIM,):
        raise DimensionError(f"state must have shape ({STATE_DIM},), got {x.shape}")
    jac = np.array(
        [
            [0.0, 1.0],
            [-2.0 * x[0] * x[1] - 1.0, 1.0 - x[0] ** 2],
        ]
    )
    return np.eye(STATE_DIM) + dt * jac, C_ROW.copy()


@dataclass(frozen=True)
class SimTrace:
    """One simulated trajectory with its noises and linearizations.

    All arrays share the leading length ``S + 1`` (time grid); ``A_seq[s]``
    is the linearization about the true state at step ``s``.
    """

    times: np.ndarray  # (S+1,)
    states: np.ndarray  # (S+1, 2)
    outputs: np.ndarray  # (S+1,)
    w: np.ndarray  # (S+1, 2)
    v: np.ndarray  # (S+1,)
    A_seq: np.ndarray  # (S+1, 2, 2)
    C_seq: np.ndarray  # (S+1, 1, 2)

    def __post_init__(self) -> None:
        length = self.times.shape[0]
        for name in ("states", "outputs", "w", "v", "A_seq", "C_seq"):
            if getattr(self, name).shape[0] != length:
                raise DimensionError(f"{name} length does not match the time grid")

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1


def simulate_from_draws(
    x0: np.ndarray, w: np.ndarray, v: np.ndarray, dt: float = DT_DEFAULT
) -> SimTrace:
    """Roll the noisy plant from recorded draws.

    Disturbances act additively on the discrete state update,
    ``x_{s+1} = euler_step(x_s, 0, dt) + w_s``, so the draws are exactly
    the per-step disturbances the estimators must reject.  The final
    disturbance row is carried in the trace but never enters the dynamics.
    """
    x0 = np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float).reshape(-1)
    if x0.shape != (STATE_DIM,):
        raise DimensionError(f"x0 must have shape ({STATE_DIM},), got {x0.shape}")
    if w.ndim != 2 or w.shape[1] != STATE_DIM or w.shape[0] != v.shape[0]:
        raise DimensionError(f"draw arrays have inconsistent shapes {w.shape}, {v.shape}")
    n_steps = w.shape[0] - 1
    states = np.empty((n_steps + 1, STATE_DIM))
    states[0] = x0
    zero_w = np.zeros(STATE_DIM)
    for s in range(n_steps):
        if np.any(np.abs(states[s]) > INSTABILITY_LIMIT):
            raise InstabilityError(f"state diverged at step {s}: |x| > {INSTABILITY_LIMIT:.0e}")
        states[s + 1] = euler_step(states[s], zero_w, dt) + w[s]
    if np.any(np.abs(states[-1]) > INSTABILITY_LIMIT):
        raise InstabilityError(f"state diverged at step {n_steps}: |x| > {INSTABILITY_LIMIT:.0e}")
    outputs = states[:, 0] + v
    A_seq = np.empty((n_steps + 1, STATE_DIM, STATE_DIM))
    C_seq = np.empty((n_steps + 1, MEAS_DIM, STATE_DIM))
    for s in range(n_steps + 1):
        A_seq[s], C_seq[s] = linearize(states[s], dt)
    return SimTrace(
        times=np.arange(n_steps + 1) * dt,
        states=states,
        outputs=outputs,
        w=w,
        v=v,
        A_seq=A_seq,
        C_seq=C_seq,
    )


def simulate(
    x0: np.ndarray,
    profile: NoiseProfile,
    duration: float,
    dt: float,
    rng: np.random.Generator,
) -> SimTrace:
    """Simulate the noisy plant under a built-in noise profile.

    Draws one joint ``(w, v)`` sample per grid point from ``rng`` in time
    order, so a fixed seed reproduces the trace bit-for-bit.  With a
    zero-noise profile the output equals the first state coordinate
    exactly.
    """
    n_steps = _step_count(duration, dt)
    times = np.arange(n_steps + 1) * dt
    draws = np.empty((n_steps + 1, 3))
    for s, t in enumerate(times):
        draws[s] = sample_profile(profile, float(t), rng)
    return simulate_from_draws(x0, draws[:, :STATE_DIM], draws[:, STATE_DIM], dt)


def save_trace(trace: SimTrace, path: str | Path) -> None:
    """Write a trace as CSV with header ``t, x1, x2, y, w1, w2, v``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x1", "x2", "y", "w1", "w2", "v"])
        for s in range(trace.times.shape[0]):
            writer.writerow(
                [
                    repr(float(trace.times[s])),
                    repr(float(trace.states[s, 0])),
                    repr(float(trace.states[s, 1])),
                    repr(float(trace.outputs[s])),
                    repr(float(trace.w[s, 0])),
                    repr(float(trace.w[s, 1])),
                    repr(float(trace.v[s])),
                ]
            )


def load_trace(path: str | Path, dt: float = DT_DEFAULT) -> SimTrace:
    """Read a trace CSV written by :func:`save_trace`, recomputing linearizations."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "x1", "x2", "y", "w1", "w2", "v"]:
            raise ContractViolation(f"{path}: unexpected trace header {header}")
        rows = np.asarray([[float(x) for x in row] for row in reader if row])
    states = rows[:, 1:3]
    A_seq = np.empty((rows.shape[0], STATE_DIM, STATE_DIM))
    C_seq = np.empty((rows.shape[0], MEAS_DIM, STATE_DIM))
    for s in range(rows.shape[0]):
        A_seq[s], C_seq[s] = linearize(states[s], dt)
    return SimTrace(
        times=rows[:, 0],
        states=states,
        outputs=rows[:, 3],
        w=rows[:, 4:6],
        v=rows[:, 6],
        A_seq=A_seq,
        C_seq=C_seq,
    )
