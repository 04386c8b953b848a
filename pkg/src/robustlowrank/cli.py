"""Command-line front end: fit, test, and simulate.

``fit`` reads a CSV matrix and writes the robust decomposition as JSON;
``test`` adds the unidimensionality score test against a direction file
or auto-built group contrast; ``simulate`` reproduces the rejection-rate
tables.  All randomness is controlled by ``--seed`` (an entropy seed is
drawn and recorded when omitted), and every artifact is byte-identical
across ``--threads`` settings.

Exit codes: 0 success, 2 input problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__, _rng
from .errors import DegenerateDataError, InputError, NumericError
from .inference import (
    group_contrast,
    group_mean_direction,
    orthogonalize_direction,
    test_unidimensionality,
)
from .loss import LossSpec, huber, least_squares, logistic, scale_adaptive_c
from .robustfit import TrimConfig, residual_sqnorms, robust_svd
from .simlab import ERROR_MODELS, SimConfig, format_table, run_table, table_to_csv

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

THREADS_ENV = "ROBUSTLOWRANK_THREADS"


def read_csv_matrix(path: str) -> np.ndarray:
    """Strict CSV reader: numeric cells only, optional single header row.

    A non-numeric first row is treated as a header.  Any other parse
    problem raises InputError naming the offending cell; missing values
    are not allowed.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n").rstrip("\r") for ln in fh if ln.strip() != ""]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    if not lines:
        raise InputError(f"{path}: empty file")

    def parse_row(line: str, rownum: int) -> list[float] | None:
        cells = line.split(",")
        out = []
        for colnum, cell in enumerate(cells, start=1):
            text = cell.strip()
            if text == "":
                raise InputError(f"{path}: row {rownum}, column {colnum}: empty cell")
            try:
                value = float(text)
            except ValueError:
                raise InputError(
                    f"{path}: row {rownum}, column {colnum}: could not parse {text!r}"
                ) from None
            if not np.isfinite(value):
                raise InputError(f"{path}: row {rownum}, column {colnum}: non-finite value")
            out.append(value)
        return out

    start = 0
    try:
        first = parse_row(lines[0], 1)
    except InputError:
        if len(lines) == 1:
            raise
        first = None
        start = 1
    rows = [] if first is None else [first]
    for i, line in enumerate(lines[start:], start=start + 1):
        if i == 1 and first is not None:
            continue
        rows.append(parse_row(line, i))
    width = len(rows[0])
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise InputError(f"{path}: row {start + i} has {len(row)} cells, expected {width}")
    return np.asarray(rows, dtype=np.float64)


def read_vector(path: str) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() != ""]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    out = []
    for i, text in enumerate(lines, start=1):
        try:
            out.append(float(text))
        except ValueError:
            raise InputError(f"{path}: line {i}: could not parse {text!r}") from None
    if not out:
        raise InputError(f"{path}: empty file")
    return np.asarray(out, dtype=np.float64)


def read_labels(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            labels = [ln.strip() for ln in fh if ln.strip() != ""]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    if not labels:
        raise InputError(f"{path}: empty file")
    return labels


def _make_loss(name: str, c_text: str, Y: np.ndarray, rank: int) -> LossSpec:
    """Loss from CLI options; ``--c adaptive`` scales to the residuals.

    The adaptive constant is 1.205 times the robust scale of the
    residuals from a preliminary classical rank-r fit.
    """
    name = name.lower()
    if name == "leastsquares":
        return least_squares()
    if c_text.lower() == "adaptive":
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        approx = (U[:, :rank] * s[:rank]) @ Vt[:rank]
        c = scale_adaptive_c((Y - approx).ravel())
    else:
        try:
            c = float(c_text)
        except ValueError:
            raise InputError(f"--c must be a number or 'adaptive', got {c_text!r}") from None
    if name == "huber":
        return huber(c)
    if name == "logistic":
        return logistic(c)
    raise InputError(f"unknown loss {name!r}")


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"{THREADS_ENV}={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _resolve_seed(value: int | None) -> int:
    return _rng.fresh_seed() if value is None else value


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _emit(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _trim_config(args, spec: LossSpec, seed: int) -> TrimConfig:
    return TrimConfig(
        rank=args.rank,
        loss=spec,
        alpha_star=args.alpha_star,
        alpha=args.alpha,
        n_subsets=args.n_subsets,
        seed=seed,
        subset_all=args.subset_all,
    )


def _config_echo(args, cfg: TrimConfig, seed: int) -> dict:
    return {
        "rank": cfg.rank,
        "alpha": cfg.alpha,
        "alpha_star": cfg.alpha_star,
        "n_subsets": cfg.n_subsets,
        "subset_all": cfg.subset_all,
        "loss": cfg.loss.family,
        "c": cfg.loss.c,
        "seed": seed,
    }


def cmd_fit(args) -> int:
    Y = read_csv_matrix(args.input)
    seed = _resolve_seed(args.seed)
    spec = _make_loss(args.loss, args.c, Y, args.rank)
    cfg = _trim_config(args, spec, seed)
    fit = robust_svd(Y, cfg)
    # residual_sqnorms is reported against the emitted basis so the file
    # round-trips; trim_sqnorms are the step-1 quantities behind `weights`.
    _emit(
        {
            "schema": SCHEMA_VERSION,
            "version": __version__,
            "command": "fit",
            "config": _config_echo(args, cfg, seed),
            "theta": fit.Theta,
            "phi": fit.Phi,
            "singular_values": fit.singular_values,
            "weights": fit.weights,
            "residual_sqnorms": residual_sqnorms(Y, fit.Phi),
            "trim_sqnorms": fit.residual_sqnorms,
            "chosen_subset": fit.chosen_subset,
        },
        args.output,
    )
    return EXIT_OK


def cmd_test(args) -> int:
    Y = read_csv_matrix(args.input)
    n = Y.shape[0]
    seed = _resolve_seed(args.seed)
    spec = _make_loss(args.loss, args.c, Y, args.rank)
    if args.rank != 2:
        raise InputError("the unidimensionality test requires --rank 2")
    cfg = _trim_config(args, spec, seed)

    labels = read_labels(args.groups) if args.groups else None
    if args.direction:
        a_raw = read_vector(args.direction)
        if a_raw.size != n:
            raise InputError(f"direction has {a_raw.size} entries, expected {n}")
    elif labels is not None:
        if len(labels) != n:
            raise InputError(f"group file has {len(labels)} labels, expected {n}")
        a_raw = group_contrast(labels)
    else:
        raise InputError("provide --direction or --groups")

    # The raw direction is made orthogonal to the estimated first mean
    # direction (group-wise means of the leading robust row effects).  On
    # exactly unidimensional data the rank-2 prefit is degenerate; the
    # rank-1 fit supplies the mean direction instead.
    try:
        prefit = robust_svd(Y, cfg)
    except DegenerateDataError:
        prefit = robust_svd(Y, dataclasses.replace(cfg, rank=1))
    mu1_hat = group_mean_direction(prefit.Theta[:, 0], labels)
    a = orthogonalize_direction(a_raw, mu1_hat)

    result, fit = test_unidimensionality(
        Y, a, cfg, calibration=args.calibration, B=args.bootstrap_samples,
        seed=_rng.derive_seed(seed, _rng.BOOT_SIGNS),
    )
    _emit(
        {
            "schema": SCHEMA_VERSION,
            "version": __version__,
            "command": "test",
            "config": _config_echo(args, cfg, seed),
            "calibration": args.calibration,
            "bootstrap_samples": args.bootstrap_samples if args.calibration == "bootstrap" else None,
            "direction": a,
            "statistic": result.statistic,
            "sigma_n": result.sigma_n,
            "p_asymptotic": result.p_asymptotic,
            "p_bootstrap": result.p_bootstrap,
            "gamma": result.gamma,
            "singular_values": fit.singular_values,
        },
        args.output,
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    threads = _resolve_threads(args.threads)
    losses = [logistic(args.c_sim), huber(args.c_sim), least_squares()]
    cases = {"1": [1], "2": [2], "both": [1, 2]}[args.direction_case]
    trim = TrimConfig(
        rank=2,
        loss=losses[0],
        alpha_star=args.alpha_star,
        alpha=args.alpha,
        n_subsets=args.n_subsets,
        seed=seed,
    )
    sim = SimConfig(
        t5_literal=args.t5_literal,
        contamination_mode=args.contamination_mode,
    )
    cells = run_table(
        trim,
        losses,
        cases,
        error_models=ERROR_MODELS,
        contaminated=(args.table == 2),
        replicates=args.replicates,
        B=args.bootstrap_samples,
        seed=seed,
        calibration=args.calibration,
        threads=threads,
        sim_template=sim,
    )
    csv_text = table_to_csv(cells)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    sys.stderr.write(format_table(cells))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustlowrank",
        description="Robust low-rank matrix approximation and unidimensionality tests",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("input", help="CSV data matrix (rows = observations)")
        p.add_argument("--rank", type=int, default=2)
        p.add_argument("--alpha", type=float, default=0.1, help="trimming proportion (0 disables)")
        p.add_argument("--alpha-star", type=float, default=0.3, dest="alpha_star")
        p.add_argument("--n-subsets", type=int, default=100, dest="n_subsets")
        p.add_argument("--subset-all", action="store_true", dest="subset_all",
                       help="use the single all-rows subset instead of random subsets")
        p.add_argument("--loss", choices=["leastsquares", "huber", "logistic"], default="logistic")
        p.add_argument("--c", default="0.1", help="loss tuning constant or 'adaptive'")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--output", default=None, help="write JSON here instead of stdout")

    p_fit = sub.add_parser("fit", help="robust rank-r decomposition of a CSV matrix")
    add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="score test of a rank-one mean structure")
    add_common(p_test)
    p_test.add_argument("--direction", default=None, help="file with one direction entry per row")
    p_test.add_argument("--groups", default=None, help="file with one group label per row")
    p_test.add_argument("--calibration", choices=["asymptotic", "bootstrap"], default="asymptotic")
    p_test.add_argument("--bootstrap-samples", type=int, default=199, dest="bootstrap_samples")
    p_test.set_defaults(func=cmd_test)

    p_sim = sub.add_parser("simulate", help="reproduce the rejection-rate tables")
    p_sim.add_argument("--table", type=int, choices=[1, 2], required=True,
                       help="1: outlier-free models, 2: contaminated models")
    p_sim.add_argument("--replicates", type=int, default=1000)
    p_sim.add_argument("--bootstrap-samples", type=int, default=199, dest="bootstrap_samples")
    p_sim.add_argument("--calibration", choices=["bootstrap", "asymptotic"], default="bootstrap")
    p_sim.add_argument("--direction-case", choices=["1", "2", "both"], default="1",
                       dest="direction_case")
    p_sim.add_argument("--alpha", type=float, default=0.1)
    p_sim.add_argument("--alpha-star", type=float, default=0.3, dest="alpha_star")
    p_sim.add_argument("--n-subsets", type=int, default=100, dest="n_subsets")
    p_sim.add_argument("--c-sim", type=float, default=0.1, dest="c_sim",
                       help="tuning constant for the robust losses")
    p_sim.add_argument("--t5-literal", action="store_true", dest="t5_literal",
                       help="use the (3/10)^(-1/2) t5 scaling instead of the variance-consistent one")
    p_sim.add_argument("--contamination-mode", choices=["cell", "row"], default="cell",
                       dest="contamination_mode")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--output", default=None, help="write the CSV table here")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
