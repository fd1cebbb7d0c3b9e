"""Noise sampling, corpora of recorded realizations, and sample stacking.

Two built-in joint distributions over ``(w_1, w_2, v)`` are provided: a
uniform band whose center drifts sinusoidally in time (all realizations
share the deterministic phase) and a time-invariant two-mode Gaussian
mixture.  A corpus stores full noise trajectories for many realizations;
training columns are stacked into :class:`~drmhe.synthesis.SampleSet`
instances window by window.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, CorpusError, DimensionError
from .stacking import Window
from .synthesis import SampleSet

SINE_UNIFORM = "sine-uniform"
BIMODAL_GAUSSIAN = "bimodal-gaussian"
PROFILE_KINDS = (SINE_UNIFORM, BIMODAL_GAUSSIAN)

INITIAL_ERROR_POLICIES = ("zeros", "disturbance-like")

# Sinusoidal band: center sin(10 t) * SINE_AMPLITUDE, half-width SINE_HALF_WIDTH.
SINE_RATE = 10.0
SINE_AMPLITUDE = np.array([0.1, 0.1, -0.1])
SINE_HALF_WIDTH = 0.1

# Two-mode Gaussian mixture; per-coordinate standard deviations.  With
# these scales the third coordinate is visibly two-banded: the mode
# centers sit 3 sigma apart.
BIMODAL_WEIGHTS = (0.25, 0.75)
BIMODAL_MEANS = (
    np.array([0.05, 0.05, -0.05]),
    np.array([-0.05, -0.05, 0.10]),
)
BIMODAL_SIGMAS = np.array([0.025, 0.025, 0.05])

assert abs(sum(BIMODAL_WEIGHTS) - 1.0) < 1e-15


@dataclass(frozen=True)
class NoiseProfile:
    """A named noise distribution, optionally backed by a recorded corpus."""

    kind: str
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in PROFILE_KINDS and self.path is None:
            raise ContractViolation(
                f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS} "
                "or a corpus path"
            )


def sample_sine(t: float, rng: np.random.Generator) -> np.ndarray:
    """One ``(w_1, w_2, v)`` draw from the sinusoidal uniform band at time ``t``."""
    center = np.sin(SINE_RATE * t) * SINE_AMPLITUDE
    return rng.uniform(center - SINE_HALF_WIDTH, center + SINE_HALF_WIDTH)


def sample_bimodal(rng: np.random.Generator) -> np.ndarray:
    """One ``(w_1, w_2, v)`` draw from the two-mode Gaussian mixture."""
    mean = BIMODAL_MEANS[0] if rng.random() < BIMODAL_WEIGHTS[0] else BIMODAL_MEANS[1]
    return rng.normal(mean, BIMODAL_SIGMAS)


def sample_profile(profile: NoiseProfile, t: float, rng: np.random.Generator) -> np.ndarray:
    """Dispatch one draw for a built-in profile."""
    if profile.kind == SINE_UNIFORM:
        return sample_sine(t, rng)
    if profile.kind == BIMODAL_GAUSSIAN:
        return sample_bimodal(rng)
    raise ContractViolation(f"profile kind {profile.kind!r} cannot be sampled directly")


@dataclass(frozen=True)
class RealizationCorpus:
    """Recorded noise trajectories for a set of realizations.

    ``draws[r, s]`` is the ``(w_1, ..., w_n, v_1, ..., v_p)`` vector of
    realization ``r`` at step ``s``; steps run over a uniform grid of
    ``times``.  The first ``n_train`` realizations are the training split,
    the next ``n_test`` the test split (disjoint by construction).
    """

    draws: np.ndarray  # (n_realizations, n_steps + 1, n + p)
    times: np.ndarray  # (n_steps + 1,)
    n: int
    p: int
    n_train: int
    n_test: int

    def __post_init__(self) -> None:
        draws = np.asarray(self.draws, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if draws.ndim != 3 or draws.shape[2] != self.n + self.p:
            raise DimensionError(
                f"draws must have shape (R, S+1, {self.n + self.p}), got {draws.shape}"
            )
        if times.shape != (draws.shape[1],):
            raise DimensionError("times length must match the draw grid")
        if self.n_train < 0 or self.n_test < 0 or self.n_train + self.n_test > draws.shape[0]:
            raise ContractViolation(
                f"train/test split ({self.n_train}, {self.n_test}) exceeds "
                f"{draws.shape[0]} realizations"
            )
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "times", times)

    @property
    def n_realizations(self) -> int:
        return self.draws.shape[0]

    @property
    def n_steps(self) -> int:
        return self.draws.shape[1] - 1

    @property
    def train_ids(self) -> range:
        return range(self.n_train)

    @property
    def test_ids(self) -> range:
        return range(self.n_train, self.n_train + self.n_test)

    def w(self, real_id: int) -> np.ndarray:
        """Process disturbance trajectory, shape (S+1, n)."""
        return self.draws[real_id, :, : self.n]

    def v(self, real_id: int) -> np.ndarray:
        """Measurement noise trajectory, shape (S+1, p)."""
        return self.draws[real_id, :, self.n :]


def generate_corpus(
    profile: NoiseProfile,
    n_realizations: int,
    duration: float,
    dt: float,
    seed: int,
    n_train: int = 0,
    n_test: int = 0,
) -> RealizationCorpus:
    """Draw a corpus from a built-in profile.

    Each realization gets its own generator spawned from ``(seed, real_id)``,
    so regenerating any subset of realizations is reproducible and adding
    realizations never perturbs existing ones.
    """
    if profile.kind not in PROFILE_KINDS:
        raise ContractViolation(f"cannot generate draws for profile kind {profile.kind!r}")
    n_steps = _step_count(duration, dt)
    times = np.arange(n_steps + 1) * dt
    draws = np.empty((n_realizations, n_steps + 1, 3))
    for r in range(n_realizations):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        for s, t in enumerate(times):
            draws[r, s] = sample_profile(profile, float(t), rng)
    return RealizationCorpus(
        draws=draws, times=times, n=2, p=1, n_train=n_train, n_test=n_test
    )


def _step_count(duration: float, dt: float) -> int:
    if dt <= 0 or duration <= 0:
        raise ContractViolation(f"need duration > 0 and dt > 0, got {duration}, {dt}")
    steps = round(duration / dt)
    if abs(steps * dt - duration) > 1e-9:
        raise ContractViolation(f"duration {duration} is not a multiple of dt {dt}")
    return steps


def build_sample_set(
    corpus: RealizationCorpus,
    window: Window,
    initial_error_policy: str = "zeros",
    start_step: int = 0,
) -> SampleSet:
    """Stack the training realizations of one window position into samples.

    ``start_step`` is the corpus step index of the window's first state.
    Column ``k`` stacks realization ``k``'s noises over the window in the
    layout the error dynamics consume (leading zero measurement block,
    negated disturbances).  The initial-error row block is filled per
    policy: ``"zeros"``, or ``"disturbance-like"`` which reuses the
    disturbance draw just before the window (the window's own first draw
    when the window starts at step 0).
    """
    if initial_error_policy not in INITIAL_ERROR_POLICIES:
        raise ContractViolation(
            f"unknown initial_error_policy {initial_error_policy!r}; "
            f"expected one of {INITIAL_ERROR_POLICIES}"
        )
    if corpus.n != window.n or corpus.p != window.p:
        raise DimensionError(
            f"corpus dims (n={corpus.n}, p={corpus.p}) do not match window "
            f"(n={window.n}, p={window.p})"
        )
    if corpus.n_train < 1:
        raise CorpusError("corpus has no training realizations")
    if start_step < 0 or start_step + window.horizon > corpus.n_steps:
        raise CorpusError(
            f"window [{start_step}, {start_step + window.horizon}] does not fit a "
            f"corpus with {corpus.n_steps} steps"
        )
    train = corpus.draws[: corpus.n_train]  # (N, S+1, n+p)
    block = train[:, start_step : start_step + window.horizon]  # (N, horizon, n+p)
    w_cols = block[:, :, : window.n]
    v_cols = block[:, :, window.n :]

    N = corpus.n_train
    v_tilde = np.zeros((window.p_stacked, N))
    v_tilde[window.p :] = v_cols.reshape(N, -1).T
    w_tilde = np.empty((window.n_stacked, N))
    if initial_error_policy == "zeros":
        w_tilde[: window.n] = 0.0
    else:
        e0_step = start_step - 1 if start_step >= 1 else start_step
        w_tilde[: window.n] = train[:, e0_step, : window.n].T
    w_tilde[window.n :] = -w_cols.reshape(N, -1).T
    return SampleSet(v_tilde=v_tilde, w_tilde=w_tilde, p=window.p)


# ---------------------------------------------------------------------------
# Corpus CSV round trip

_W_COL = re.compile(r"^w(\d+)$")
_V_COL = re.compile(r"^v(\d+)$")


def save_corpus(corpus: RealizationCorpus, path: str | Path) -> None:
    """Write a corpus as CSV with header ``real_id, t, w1..wn, v1..vp``.

    Floats are written in shortest round-trip form, so save/load is
    bit-exact.
    """
    path = Path(path)
    header = (
        ["real_id", "t"]
        + [f"w{i + 1}" for i in range(corpus.n)]
        + [f"v{i + 1}" for i in range(corpus.p)]
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(corpus.n_realizations):
            for s, t in enumerate(corpus.times):
                writer.writerow(
                    [r, repr(float(t))] + [repr(float(x)) for x in corpus.draws[r, s]]
                )


def load_corpus(path: str | Path, n_train: int = 0, n_test: int = 0) -> RealizationCorpus:
    """Read a corpus CSV written by :func:`save_corpus` (or any compatible file).

    Raises
    ------
    CorpusError
        On a missing/malformed header, ragged realizations, or a non-uniform
        time grid.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError(f"{path}: empty corpus file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["real_id", "t"]:
            raise CorpusError(
                f"{path}: header must start with 'real_id, t', got {header[:2]}"
            )
        n = sum(1 for h in header if _W_COL.match(h))
        p = sum(1 for h in header if _V_COL.match(h))
        expected = ["real_id", "t"] + [f"w{i + 1}" for i in range(n)] + [
            f"v{i + 1}" for i in range(p)
        ]
        if header != expected or n < 1 or p < 1:
            raise CorpusError(f"{path}: malformed header {header}")

        by_real: dict[int, list[list[float]]] = {}
        times_by_real: dict[int, list[float]] = {}
        order: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CorpusError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rid = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if rid not in by_real:
                by_real[rid] = []
                times_by_real[rid] = []
                order.append(rid)
            times_by_real[rid].append(vals[0])
            by_real[rid].append(vals[1:])

    if not by_real:
        raise CorpusError(f"{path}: corpus has no data rows")
    lengths = {len(rows) for rows in by_real.values()}
    if len(lengths) != 1:
        raise CorpusError(f"{path}: realizations have differing lengths {sorted(lengths)}")
    times = np.asarray(times_by_real[order[0]])
    if len(times) < 2:
        raise CorpusError(f"{path}: need at least two time points per realization")
    dts = np.diff(times)
    if np.any(np.abs(dts - dts[0]) > 1e-9) or dts[0] <= 0:
        raise CorpusError(f"{path}: time grid is not uniform")
    for rid in order:
        if np.any(np.abs(np.asarray(times_by_real[rid]) - times) > 1e-9):
            raise CorpusError(f"{path}: realization {rid} disagrees with the time grid")
    draws = np.asarray([by_real[rid] for rid in order])
    return RealizationCorpus(
        draws=draws, times=times, n=n, p=p, n_train=n_train, n_test=n_test
    )
