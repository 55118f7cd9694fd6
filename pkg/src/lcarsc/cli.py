"""Command-line interface.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 data error,
4 estimation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .dataio import DEFAULT_MEMORY_BUDGET, FORMATS, AtomicWriter, DataError, column_csv, load_response, matrix_csv
from .estimators import EstimationError, Method, default_tau, fit
from .metrics import estimate_k
from .model import ModelError, PopulationModel, sample_synthetic
from .rng import substream_seed
from .schemas import SCHEMA_VERSION

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(writer: AtomicWriter, path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        writer.add(path, text)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_input(p):
    p.add_argument("--input", required=True, help="response matrix file")
    p.add_argument("--format", default="dense-csv", choices=FORMATS)
    p.add_argument("--m-levels", type=_positive_int, required=True, help="maximum response level M")
    p.add_argument("--n-rows", type=_positive_int, help="rows of a sparse file (default: largest i)")
    p.add_argument("--n-cols", type=_positive_int, help="columns of a sparse file (default: largest j)")
    p.add_argument("--memory-budget", type=int, default=DEFAULT_MEMORY_BUDGET,
                   help="refuse dense matrices larger than this many bytes")


def _add_method(p):
    p.add_argument("--method", default="rsc", choices=[m.value for m in Method])
    p.add_argument("--tau", type=float, help="regularizer (default: M * max(N, J))")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcarsc", description="Latent class analysis by regularized spectral clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate classes and item parameters")
    _add_input(p)
    _add_method(p)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--output", help="JSON result path (default: stdout)")

    p = sub.add_parser("select-k", help="choose the number of classes by modularity")
    _add_input(p)
    _add_method(p)
    p.add_argument("--k-max", type=_positive_int)
    p.add_argument("--repeats", type=_positive_int, default=1)
    p.add_argument("--output", help="JSON profile path (default: stdout)")
    p.add_argument("--csv", help="k,Q table path")

    p = sub.add_parser("simulate", help="draw a synthetic response matrix")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--j", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--m-levels", type=_positive_int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-prefix", required=True)

    p = sub.add_parser("experiment", help="run a simulation study")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--experiment", type=int, choices=[1, 2, 3, 4])
    g.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--reps", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--record-timing", action="store_true",
                   help="include mean wall times (makes output run-dependent)")
    p.add_argument("--output-dir", required=True)

    p = sub.add_parser("diagnose", help="perturbation bound check and theory quantities")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--figure1", action="store_true", help="N=500, J=200, K=3, M=5, rho=1")
    g.add_argument("--n", type=_positive_int)
    p.add_argument("--j", type=_positive_int)
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--m-levels", type=_positive_int)
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau-grid", default="0.2,0.4,0.6,0.8,1.0,1.2,1.4,1.6,1.8,2.0",
                   help="comma-separated multipliers of M * max(N, J)")
    p.add_argument("--absolute-tau", action="store_true", help="read --tau-grid as raw tau values")
    p.add_argument("--output-prefix", required=True)
    return parser


def _load(args):
    return load_response(args.input, args.format, args.m_levels, args.n_rows, args.n_cols, args.memory_budget)


def _tau(args, r) -> float | None:
    if not Method(args.method).uses_tau:
        return None
    if args.tau is not None:
        if args.tau < 0:
            raise UsageError("--tau must be non-negative")
        return args.tau
    return default_tau(*r.shape, r.m_levels)


def cmd_fit(args, writer: AtomicWriter) -> None:
    r = _load(args)
    if args.k > min(r.shape):
        raise UsageError(f"--k {args.k} exceeds min(N, J) = {min(r.shape)}")
    tau = _tau(args, r)
    res = fit(r, args.k, args.method, tau, args.seed)
    doc = {"schema_version": SCHEMA_VERSION, "kind": "fit", "labels": res.labeling.one_based(),
           "theta_hat": res.theta_hat.tolist(), "method": res.method.value, "tau": tau, "k": res.k,
           "seed": args.seed, "n": r.shape[0], "j": r.shape[1], "m_levels": r.m_levels}
    _emit(writer, args.output, _dumps(doc))


def cmd_select_k(args, writer: AtomicWriter) -> None:
    r = _load(args)
    if args.k_max is not None and args.k_max > min(r.shape):
        raise UsageError(f"--k-max {args.k_max} exceeds min(N, J) = {min(r.shape)}")
    if not np.any(r.entries):
        raise DataError("all responses are zero; modularity is undefined")
    tau = _tau(args, r)
    rule = (lambda *_: tau) if tau is not None else default_tau
    profile = estimate_k(r, args.method, args.k_max, rule, args.seed, args.repeats)
    doc = {"schema_version": SCHEMA_VERSION, "kind": "select_k", "seed": args.seed,
           "repeats": args.repeats, "tau": tau, **profile.as_dict()}
    _emit(writer, args.output, _dumps(doc))
    if args.csv:
        lines = ["k,Q\n"] + [f"{k},{'' if q is None else repr(q)}\n" for k, q in sorted(profile.q_values.items())]
        writer.add(args.csv, "".join(lines))


def cmd_simulate(args, writer: AtomicWriter) -> None:
    try:
        labeling, items, r = sample_synthetic(args.n, args.j, args.k, args.m_levels, args.rho, args.seed)
    except ModelError as exc:
        raise UsageError(str(exc)) from exc
    prefix = args.output_prefix
    writer.add(f"{prefix}_R.csv", matrix_csv(r.entries))
    writer.add(f"{prefix}_labels.csv", column_csv(labeling.one_based()))
    writer.add(f"{prefix}_theta.csv", matrix_csv(items.theta))


def _toy_outputs(seed: int, out: Path, writer: AtomicWriter) -> None:
    toy = harness.run_toy_example(seed)
    model = toy["model"]
    writer.add(out / "toy_Z.csv", matrix_csv(model.labeling.one_hot.astype(int)))
    writer.add(out / "toy_theta.csv", matrix_csv(model.items.theta))
    writer.add(out / "toy_R.csv", matrix_csv(toy["responses"].entries))
    for method, theta_hat in toy["theta_hat"].items():
        writer.add(out / f"toy_theta_hat_{method}.csv", matrix_csv(theta_hat))
    header = list(toy["table"][0])
    lines = [",".join(header) + "\n"]
    for row in toy["table"]:
        lines.append(",".join(str(row[h]) if isinstance(row[h], str) else repr(row[h]) for h in header) + "\n")
    writer.add(out / "toy_table.csv", "".join(lines))
    writer.add(out / "toy_report.json", _dumps({"schema_version": SCHEMA_VERSION, "kind": "toy_example",
                                                "seed": seed, "table": toy["table"]}))


def cmd_experiment(args, writer: AtomicWriter) -> None:
    out = Path(args.output_dir)
    seed = 0 if args.seed is None else args.seed
    if args.experiment == 4:
        _toy_outputs(seed, out, writer)
        return
    try:
        if args.config:
            try:
                data = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config: {exc}") from exc
            if args.reps is not None:
                data["repetitions"] = args.reps
            if args.seed is not None:
                data["seed"] = args.seed
            config = harness.ExperimentConfig.from_dict(data)
        else:
            config = harness.preset(args.experiment, args.reps or 20, seed)
    except harness.ConfigError as exc:
        raise UsageError(str(exc)) from exc
    report = harness.run_experiment(config, workers=args.workers)
    writer.add(out / "report.json", report.to_json(args.record_timing))
    writer.add(out / "report.csv", report.to_csv(args.record_timing))


def cmd_diagnose(args, writer: AtomicWriter) -> None:
    try:
        grid = [float(x) for x in args.tau_grid.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --tau-grid: {exc}") from exc
    if not grid or any(t < 0 for t in grid) or (not args.absolute_tau and any(t <= 0 for t in grid)):
        raise UsageError("--tau-grid must be a non-empty list of positive numbers")
    if args.figure1:
        model = harness.canned_bound_model(args.seed)
    else:
        missing = [f for f in ("j", "k", "m_levels", "rho") if getattr(args, f) is None]
        if missing:
            raise UsageError(f"explicit model needs --{', --'.join(m.replace('_', '-') for m in missing)}")
        try:
            labeling, items, _ = sample_synthetic(args.n, args.j, args.k, args.m_levels, args.rho, args.seed)
            model = PopulationModel(labeling, items)
        except ModelError as exc:
            raise UsageError(str(exc)) from exc
    base = default_tau(model.n, model.j, model.m_levels)
    taus = grid if args.absolute_tau else [c * base for c in grid]
    curve = harness.bound_ratio_curve(model, substream_seed(args.seed, 1), taus)
    lines = ["tau,ratio,epsilon_tau\n"] + [f"{p.tau!r},{p.ratio!r},{p.epsilon!r}\n" for p in curve]
    writer.add(f"{args.output_prefix}_ratio.csv", "".join(lines))
    doc = {"schema_version": SCHEMA_VERSION, "kind": "diagnose",
           "model": {"n": model.n, "j": model.j, "k": model.k, "m_levels": model.m_levels,
                     "seed": args.seed, "figure1": bool(args.figure1)},
           "diagnostics": harness.theory_diagnostics(model, base),
           "curve": [{"tau": p.tau, "ratio": p.ratio, "epsilon_tau": p.epsilon} for p in curve]}
    writer.add(f"{args.output_prefix}_diagnostics.json", _dumps(doc))


COMMANDS = {"fit": cmd_fit, "select-k": cmd_select_k, "simulate": cmd_simulate,
            "experiment": cmd_experiment, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    writer = AtomicWriter()
    try:
        with writer:
            COMMANDS[args.command](args, writer)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lcarsc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelError, OSError) as exc:
        print(f"lcarsc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"lcarsc {args.command}: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
