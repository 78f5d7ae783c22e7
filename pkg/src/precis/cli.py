"""Batch command-line interface.

Four commands: ``design`` (one estimator on one subset), ``select`` (subset
search), ``verify`` (recompute the norm of a saved result), and ``bench``
(the benchmark protocols).  Exit codes: 0 success/certified, 1 usage or
input error, 2 honest infeasibility (or a failed verification bound).

Flags may also be given in a JSON config file (``--config``); explicit
flags win.  Sensor ids are 1-based on the command line and in printed
output; files and the library use 0-based ids.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import admm, bench, estimator, selection
from .errors import BudgetError, InfeasibleDesign, PrecisError, UnstableError
from .model import SensorSubset, assemble_measurement, example1_plant, load_plant, \
    random_plant, spring_mass_plant

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; we reserve 2 for
    infeasibility, so remap parser errors to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class UsageError(Exception):
    pass


def _load_builtin(token: str):
    if token == "example1":
        return example1_plant()
    if token.startswith("spring-mass:"):
        try:
            masses = int(token.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad --builtin value {token!r}; expected spring-mass:M")
        return spring_mass_plant(masses)
    if token.startswith("random:"):
        parts = token.split(":", 1)[1].split(",")
        if len(parts) != 4:
            raise UsageError(
                f"bad --builtin value {token!r}; expected random:SEED,NX,ND,NS"
            )
        try:
            seed, n_x, n_d, n_s = (int(v) for v in parts)
        except ValueError:
            raise UsageError(f"non-integer field in --builtin {token!r}")
        return random_plant(seed, n_x, n_d, n_s)
    raise UsageError(
        f"unknown builtin {token!r}; use example1, spring-mass:M or random:SEED,NX,ND,NS"
    )


def _load_plant_args(args):
    if getattr(args, "builtin", None):
        return _load_builtin(args.builtin)
    if getattr(args, "plant", None):
        return load_plant(args.plant)
    raise UsageError("a plant is required: pass --builtin or --plant")


def _parse_subset(token: str, n_s: int) -> SensorSubset:
    try:
        ids1 = [int(v) for v in token.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --subset value {token!r}; expected 1-based ids like 1,4")
    if not ids1:
        raise UsageError("--subset must name at least one sensor")
    for i in ids1:
        if not 1 <= i <= n_s:
            raise UsageError(f"--subset id {i} out of range 1..{n_s}")
    return SensorSubset(i - 1 for i in ids1)


def _format_subset(subset) -> str:
    return ",".join(str(i + 1) for i in subset) or "-"


def _parse_rho(token, n_s: int):
    if token is None:
        return None
    try:
        return np.full(n_s, float(token))
    except ValueError:
        pass
    path = Path(token)
    if not path.exists():
        raise UsageError(f"--rho is neither a number nor an existing file: {token!r}")
    values = np.loadtxt(path, dtype=float).reshape(-1)
    if values.shape != (n_s,):
        raise UsageError(f"--rho file has {values.shape[0]} values for {n_s} sensors")
    return values


def _admm_config(args) -> admm.AdmmConfig:
    kwargs = {}
    for flag, name in (
        ("mu", "mu"),
        ("eps_abs", "eps_abs"),
        ("eps_rel", "eps_rel"),
        ("max_iter", "max_iter"),
        ("eps_p", "eps_p"),
        ("eps_slack", "eps_slack"),
        ("mode", "x_update_mode"),
        ("inner_mu", "inner_mu"),
        ("inner_max_iter", "inner_max_iter"),
        ("stall_window", "stall_window"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            kwargs[name] = value
    return admm.AdmmConfig(**kwargs)


def _jobs(args) -> int:
    if getattr(args, "jobs", None) is not None:
        return args.jobs
    env = os.environ.get("PRECIS_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"PRECIS_JOBS must be an integer, got {env!r}")
    return 1


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def cmd_design(args) -> int:
    plant, catalog = _load_plant_args(args)
    _require(args, "gamma")
    framework = args.framework or "hinf"
    kind = args.estimator or "observer"
    subset = (
        _parse_subset(args.subset, catalog.n_sensors)
        if args.subset
        else catalog.full_subset()
    )
    rho = _parse_rho(args.rho, catalog.n_sensors)
    spec = estimator.DesignSpec(framework, kind, args.gamma, subset, rho)
    out = _out_dir(args)
    try:
        result = estimator.design(plant, catalog, spec, _admm_config(args))
    except InfeasibleDesign as exc:
        print(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    estimator.save_result(out / "result.txt", result)
    if result.solver is not None:
        admm.write_trace_csv(result.solver.history, out / "trace.csv")
    print(
        f"certified {spec.framework} {spec.estimator} on sensors "
        f"{_format_subset(subset)}: objective {result.objective:.6g}, "
        f"achieved norm {result.achieved_norm:.6g} <= gamma {spec.gamma:.6g}"
    )
    print(f"wrote {out / 'result.txt'} and {out / 'trace.csv'}")
    return EXIT_OK


def cmd_select(args) -> int:
    plant, catalog = _load_plant_args(args)
    _require(args, "gamma", "ks")
    if args.ks > catalog.n_sensors:
        raise UsageError(
            f"--ks {args.ks} exceeds the {catalog.n_sensors} available sensors"
        )
    rho = _parse_rho(args.rho, catalog.n_sensors)
    problem = selection.SelectionProblem(
        plant, catalog, args.ks, args.framework or "hinf",
        args.estimator or "observer", args.gamma,
        rho=rho, admm=_admm_config(args), jobs=_jobs(args),
    )
    out = _out_dir(args)
    algorithm = args.algorithm or "gse"
    if algorithm == "gse":
        result = selection.gse(problem)
    elif algorithm == "lpe":
        result = selection.lpe(problem)
    elif algorithm == "rlm":
        result = selection.rlm(
            problem,
            i_max=args.imax if args.imax is not None else 50,
            eps_rlm=args.eps_rlm,
        )
    else:
        result = selection.exhaustive(problem, budget=args.budget or 10_000)
    selection.write_selection_csv(result, out / "trace.csv")
    summary = out / "selection.txt"
    with open(summary, "w") as fh:
        fh.write(f"algorithm {result.algorithm}\n")
        fh.write(f"status {result.status}\n")
        fh.write(f"sensors {_format_subset(result.subset)}\n")
        fh.write(f"cost {result.cost:.12g}\n")
        fh.write(f"evaluations {result.evaluation_count}\n")
        fh.write(f"total_solves {result.total_solves}\n")
        if result.precisions:
            ordered = sorted(result.precisions.items())
            fh.write("p " + " ".join(f"{v:.12g}" for _, v in ordered) + "\n")
    if not result.feasible:
        print(f"{result.algorithm}: reached infeasibility (see {summary})")
        return EXIT_INFEASIBLE
    print(
        f"{result.algorithm}: sensors {_format_subset(result.subset)} "
        f"cost {result.cost:.6g} ({result.evaluation_count} evaluations)"
    )
    print(f"wrote {summary} and {out / 'trace.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    plant, catalog = _load_plant_args(args)
    loaded = estimator.load_result(args.result)
    gamma = args.gamma if args.gamma is not None else loaded.gamma
    meas = assemble_measurement(plant, catalog, loaded.subset)
    try:
        sys_cl = estimator.error_system(plant, meas, loaded.matrices, loaded.p)
        norm = (
            estimator.hinf_norm(sys_cl)
            if loaded.framework == "hinf"
            else estimator.h2_norm(sys_cl)
        )
    except UnstableError as exc:
        print(f"verification failed: {exc}")
        return EXIT_INFEASIBLE
    bound = gamma * (1.0 + 1e-6)
    status = "OK" if norm <= bound else "VIOLATED"
    print(
        f"{loaded.framework} {loaded.estimator} on sensors "
        f"{_format_subset(loaded.subset)}: recomputed norm {norm:.8g}, "
        f"bound {gamma:.8g} -> {status}"
    )
    return EXIT_OK if norm <= bound else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    out = _out_dir(args)
    if args.protocol == "example1":
        report = bench.run_example1_regression(_admm_config(args))
        report.to_csv(out / "example1.csv")
        for ids, expected, actual, ok in report.rows:
            print(
                f"f({{{','.join(str(i + 1) for i in ids)}}}) = {actual:.4g} "
                f"(expected {expected}) {'PASS' if ok else 'FAIL'}"
            )
        print(f"submodularity violated: {report.submodularity_violated}")
        print(f"supermodularity violated: {report.supermodularity_violated}")
        print(f"wrote {out / 'example1.csv'}")
        return EXIT_OK
    if args.protocol == "scaling":
        masses = [int(v) for v in (args.masses or "2,4,8").split(",")]
        table = bench.run_scaling(
            masses,
            gamma=args.gamma or 0.5,
            repetitions=args.reps if args.reps is not None else 3,
            admm_config=_admm_config(args),
        )
        table.to_csv(out / "scaling.csv")
        for m, n_x, t, _ in table.rows:
            print(f"masses={m} n_x={n_x}: median {t:.4g} s")
        print(f"log-log slope {table.slope:.3g}; wrote {out / 'scaling.csv'}")
        return EXIT_OK
    if args.protocol == "compare":
        spec = bench.EnsembleSpec(
            count=args.count if args.count is not None else 20,
            seed=args.seed if args.seed is not None else 0,
            gamma=args.gamma or 0.1,
            k_s=args.ks or 4,
        )
        report = bench.run_comparison(spec, jobs=_jobs(args),
                                      admm_config=_admm_config(args))
        report.to_csv(out / "comparison.csv")
        for name, s in report.summary().items():
            print(
                f"{name}: exact {s['exact']}/{spec.count}, "
                f"infeasible {s['infeasible']}, "
                f"mean%err {s['mean_pct_error']:.3g}"
            )
        print(f"wrote {out / 'comparison.csv'}")
        return EXIT_OK
    raise UsageError(f"unknown bench protocol {args.protocol!r}")


def _add_plant_flags(p):
    p.add_argument("--builtin", help="example1 | spring-mass:M | random:SEED,NX,ND,NS")
    p.add_argument("--plant", help="plant text file (see README for the format)")


def _add_design_flags(p):
    p.add_argument("--framework", choices=("h2", "hinf"), help="default hinf")
    p.add_argument("--estimator", choices=("observer", "filter"), help="default observer")
    p.add_argument("--gamma", type=float, help="performance bound (> 0)")
    p.add_argument("--rho", help="uniform weight value or a file with one weight per sensor")


def _add_admm_flags(p):
    p.add_argument("--mu", type=float)
    p.add_argument("--eps-abs", dest="eps_abs", type=float)
    p.add_argument("--eps-rel", dest="eps_rel", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--eps-p", dest="eps_p", type=float)
    p.add_argument("--eps-slack", dest="eps_slack", type=float)
    p.add_argument("--mode", choices=(admm.PROJECTED_LS, admm.INNER_ADMM))
    p.add_argument("--inner-mu", dest="inner_mu", type=float)
    p.add_argument("--inner-max-iter", dest="inner_max_iter", type=int)
    p.add_argument("--stall-window", dest="stall_window", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="precis", description=__doc__)
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design one estimator on one subset")
    _add_plant_flags(p)
    _add_design_flags(p)
    p.add_argument("--subset", help="1-based sensor ids, e.g. 1,4 (default: all)")
    _add_admm_flags(p)
    p.add_argument("--out", help="output directory (default: .)")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("select", help="search for a sensor subset")
    _add_plant_flags(p)
    _add_design_flags(p)
    p.add_argument("--ks", type=int, help="cardinality bound")
    p.add_argument(
        "--algorithm", choices=("gse", "lpe", "rlm", "exhaustive"),
        help="default gse",
    )
    p.add_argument("--imax", type=int, help="rlm iteration cap (default 50)")
    p.add_argument("--eps-rlm", dest="eps_rlm", type=float)
    p.add_argument("--budget", type=int, help="exhaustive enumeration budget")
    _add_admm_flags(p)
    p.add_argument("--out", help="output directory (default: .)")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("verify", help="recompute the norm of a saved result")
    _add_plant_flags(p)
    p.add_argument("--result", required=True, help="result file from `precis design`")
    p.add_argument("--gamma", type=float, help="override the bound in the file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="benchmark protocols")
    p.add_argument("protocol", choices=("example1", "scaling", "compare"))
    p.add_argument("--masses", help="comma list for scaling (default 2,4,8)")
    p.add_argument("--reps", type=int, help="timing repetitions (default 3)")
    p.add_argument("--count", type=int, help="ensemble size (default 20)")
    p.add_argument("--seed", type=int, help="ensemble base seed (default 0)")
    p.add_argument("--ks", type=int)
    p.add_argument("--gamma", type=float)
    _add_admm_flags(p)
    p.add_argument("--out", help="output directory (default: .)")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def _merge_config(args):
    """Fill flags still at their unset (None) state from the JSON file.

    Every optional flag defaults to None, so an explicitly passed flag
    always wins over the file.
    """
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read --config {args.config!r}: {exc}")
    if not isinstance(values, dict):
        raise UsageError("--config must contain a JSON object")
    for key, value in values.items():
        name = key.replace("-", "_")
        if not hasattr(args, name):
            raise UsageError(f"--config key {key!r} is not a known flag")
        if getattr(args, name) is None:
            setattr(args, name, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDesign as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BudgetError, PrecisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
