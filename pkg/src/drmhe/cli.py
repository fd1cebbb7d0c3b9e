"""Command-line entry point.

Subcommands::

    drmhe gen-corpus  --config cfg   # draw noise corpora, one CSV per seed
    drmhe synthesize  --config cfg --linearization lin.csv [--corpus c.csv]
    drmhe benchmark   --config cfg   # run the prediction benchmark
    drmhe sweep       --config cfg   # mean dro total vs ambiguity radius

All subcommands read the same ``key = value`` config file (see
:class:`~drmhe.bench.BenchConfig`); ``--seed`` overrides the configured
seed list with a single seed.  Exit code is 0 on success and nonzero with
a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import bench
from .errors import (
    CausalityError,
    ConditioningError,
    ConfigError,
    ContractViolation,
    CorpusError,
    DimensionError,
    InstabilityError,
    SolverError,
)
from .noise import (
    PROFILE_KINDS,
    NoiseProfile,
    build_sample_set,
    generate_corpus,
    load_corpus,
    save_corpus,
)
from .stacking import LtvSystem, Window, build_stacked
from .synthesis import RiskParams, synthesize

_USER_ERRORS = (
    ConfigError,
    CorpusError,
    ContractViolation,
    DimensionError,
    CausalityError,
    SolverError,
    ConditioningError,
    InstabilityError,
    OSError,
    ValueError,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drmhe", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the configured seeds")

    add_common(sub.add_parser("gen-corpus", help="draw and save noise corpora"))
    p_syn = sub.add_parser("synthesize", help="one-shot synthesis from a corpus")
    add_common(p_syn)
    p_syn.add_argument(
        "--linearization",
        required=True,
        help="CSV of per-step linearizations (header: step, a11, ..., c11, ...)",
    )
    p_syn.add_argument(
        "--corpus",
        default=None,
        help="corpus CSV (defaults to the config profile when it is a path)",
    )
    p_syn.add_argument("--eps", type=float, default=None, help="ambiguity radius (default: max of config grid)")
    p_syn.add_argument("--start-step", type=int, default=0, help="corpus step of the window start")
    add_common(sub.add_parser("benchmark", help="run the prediction benchmark"))
    add_common(sub.add_parser("sweep", help="sweep the ambiguity radius"))
    return parser


def _load_config(args: argparse.Namespace) -> bench.BenchConfig:
    config = bench.parse_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seeds=(args.seed,))
    return config


_MAT_COL = re.compile(r"^([ac])([1-9])([1-9])$")


def _load_linearization(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a per-step linearization CSV into ``(A_seq, C_seq)``.

    The header is ``step`` followed by ``a<i><j>`` and ``c<i><j>`` entries
    in row-major order (single-digit indices); rows must be consecutive
    steps starting at 0.
    """
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty linearization file")
    header = [tok.strip() for tok in lines[0].split(",")]
    if header[:1] != ["step"]:
        raise ConfigError(f"{path}: header must start with 'step', got {header[:1]}")
    a_pos: dict[tuple[int, int], int] = {}
    c_pos: dict[tuple[int, int], int] = {}
    for col, name in enumerate(header[1:], start=1):
        m = _MAT_COL.match(name)
        if not m:
            raise ConfigError(f"{path}: unexpected column {name!r}")
        which, i, j = m.group(1), int(m.group(2)) - 1, int(m.group(3)) - 1
        (a_pos if which == "a" else c_pos)[(i, j)] = col
    n = 1 + max(i for i, _ in a_pos)
    p = 1 + max(i for i, _ in c_pos) if c_pos else 0
    if set(a_pos) != {(i, j) for i in range(n) for j in range(n)}:
        raise ConfigError(f"{path}: a-columns do not form a complete {n}x{n} matrix")
    if p < 1 or set(c_pos) != {(i, j) for i in range(p) for j in range(n)}:
        raise ConfigError(f"{path}: c-columns do not form a complete px{n} matrix")
    A_rows, C_rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        toks = [tok.strip() for tok in line.split(",")]
        if len(toks) != len(header):
            raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields")
        if int(toks[0]) != lineno - 2:
            raise ConfigError(f"{path}:{lineno}: steps must be consecutive from 0")
        A = np.array([[float(toks[a_pos[(i, j)]]) for j in range(n)] for i in range(n)])
        C = np.array([[float(toks[c_pos[(i, j)]]) for j in range(n)] for i in range(p)])
        A_rows.append(A)
        C_rows.append(C)
    return np.stack(A_rows), np.stack(C_rows)


def _write_matrix(path: Path, M: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        for row in np.atleast_2d(M):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _cmd_gen_corpus(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if config.profile not in PROFILE_KINDS:
        raise ConfigError(
            f"gen-corpus needs a built-in profile, got {config.profile!r}"
        )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in config.seeds:
        corpus = generate_corpus(
            NoiseProfile(kind=config.profile),
            config.N_total,
            config.duration,
            config.dt,
            seed,
            n_train=config.N_train,
            n_test=config.N_test,
        )
        path = out / f"corpus_seed{seed}.csv"
        save_corpus(corpus, path)
        print(f"wrote {path}")
    return 0


def _cmd_synthesize(args: argparse.Namespace) -> int:
    config = _load_config(args)
    corpus_path = args.corpus
    if corpus_path is None:
        if config.profile in PROFILE_KINDS:
            raise ConfigError("pass --corpus or set the config profile to a corpus path")
        corpus_path = config.profile
    A_seq, C_seq = _load_linearization(args.linearization)
    n, p = A_seq.shape[1], C_seq.shape[1]
    window = Window(n=n, p=p, T_s=config.T_s, T_f=config.T_f)
    if A_seq.shape[0] != window.horizon:
        raise ConfigError(
            f"linearization supplies {A_seq.shape[0]} steps, window needs {window.horizon}"
        )
    corpus = load_corpus(corpus_path, n_train=config.N_train, n_test=0)
    samples = build_sample_set(
        corpus, window, config.initial_error_policy, start_step=args.start_step
    )
    system = LtvSystem(n=n, p=p, A_seq=A_seq, C_seq=C_seq)
    ops = build_stacked(system, window)
    eps = args.eps if args.eps is not None else max(config.eps)
    if eps < 0:
        raise ConfigError(f"--eps must be >= 0, got {eps}")
    result = synthesize(
        ops,
        samples,
        RiskParams(eps_v=eps, eps_w=eps),
        normalize_empirical=config.normalize_empirical,
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .synthesis import gain_from_phi  # local import to keep the happy path light

    _write_matrix(out / "gain.csv", gain_from_phi(ops, result.maps.phi_v))
    _write_matrix(out / "phi_v.csv", result.maps.phi_v)
    _write_matrix(out / "phi_w.csv", result.maps.phi_w)
    meta = {
        "eps": eps,
        "risk": result.risk,
        "achievability_residual": result.maps.achievability_residual,
        "solve_seconds": result.solve_seconds,
        "row_objectives": [float(x) for x in result.row_objectives],
    }
    (out / "synthesis.json").write_text(json.dumps(meta, indent=2) + "\n")
    for name in ("gain.csv", "phi_v.csv", "phi_w.csv", "synthesis.json"):
        print(f"wrote {out / name}")
    return 0


def _cmd_benchmark(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = bench.run_benchmark(config)
    paths = bench.emit_results(result)
    for run in result.runs:
        for row in bench.summary_rows(run):
            print(f"seed {run.seed}: " + " ".join(row))
        if run.failed:
            print(
                f"seed {run.seed}: WARNING {len(run.failed)} realization(s) aborted",
                file=sys.stderr,
            )
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    rows = bench.sweep_epsilon(config)
    path = bench.emit_sweep(rows, Path(config.output_dir) / "sweep.csv")
    for eps, mean in rows:
        print(f"eps={eps:g}: mean_total={mean:.6g}")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "synthesize": _cmd_synthesize,
    "benchmark": _cmd_benchmark,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
