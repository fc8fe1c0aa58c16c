"""Command-line interface: solve, verify, and sweep subcommands.

Exit codes: 0 success, 1 usage error, 2 invalid problem file,
3 positivity hypothesis violated, 4 verification check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import fem, shooting, sigma, pipeline
from .oscillation import count_sign_changes, IdenticallyZero
from .problem import ProblemError, parse_problem
from .transform import build_tau, push_forward

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_HYPOTHESIS = 3
EXIT_CHECK_FAILED = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="beamosc",
                     description="Spectral solver and oscillation-theorem "
                                 "verifier for a fourth-order multipoint "
                                 "boundary problem.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="problem JSON file")
        p.add_argument("--k", type=int, default=8, help="eigenpair count")
        p.add_argument("--mesh-n", type=int, default=256, dest="mesh_n")
        p.add_argument("--eps-rel", type=float, default=1e-8, dest="eps_rel")
        p.add_argument("--seed", type=int, default=20260826)
        p.add_argument("--lambda-cap", type=float,
                       default=shooting.DEFAULT_LAMBDA_CAP, dest="lambda_cap")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory for reports and CSV dumps")

    p_solve = sub.add_parser("solve", help="compute eigenvalues")
    common(p_solve)
    p_solve.add_argument("--method", choices=("fem", "shoot", "both"),
                         default="both")
    p_solve.add_argument("--dump-eigenfunctions", action="store_true",
                         dest="dump_eigenfunctions")
    p_solve.add_argument("--dump-scan", action="store_true", dest="dump_scan",
                         help="dump the (lambda, D(lambda)) scan as CSV")

    p_verify = sub.add_parser("verify", help="run the verification pipeline")
    common(p_verify)
    p_verify.add_argument("--dump-sigma", action="store_true",
                          dest="dump_sigma")
    p_verify.add_argument("--trials", type=int, default=200,
                          help="variation-diminishing trial count")

    p_sweep = sub.add_parser("sweep", help="sweep a parameter, emit CSV")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True,
                         help="alpha | beta | eta_<i> | alpha_i_<i>")
    p_sweep.add_argument("--start", type=float, required=True)
    p_sweep.add_argument("--stop", type=float, required=True)
    p_sweep.add_argument("--step", type=float, required=True)
    return parser


def _load_problem(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        print(f"error: cannot read problem file: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    try:
        return parse_problem(text)
    except ProblemError as exc:
        print(f"error: invalid problem: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _config(args, **extra) -> pipeline.PipelineConfig:
    if args.k < 1:
        raise SystemExit(_usage_error("--k must be >= 1"))
    if args.mesh_n < 8:
        raise SystemExit(_usage_error("--mesh-n must be >= 8"))
    return pipeline.PipelineConfig(
        n=args.mesh_n, k=args.k, eps_rel=args.eps_rel,
        seed=args.seed, lam_cap=args.lambda_cap, **extra)


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _outdir(args) -> Path:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _cmd_solve(args) -> int:
    spec = _load_problem(args.problem)
    config = _config(args)
    try:
        table = pipeline.solve(spec, config, method=args.method)
    except pipeline.HypothesisViolation as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ProblemError, sigma.SigmaError, fem.FemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    cols = [c for c in ("fem", "shoot") if c in table]
    header = ["n"] + [f"lambda_{c}" for c in cols]
    if "discrepancy" in table:
        header.append("rel_discrepancy")
    print("  ".join(f"{h:>16s}" for h in header))
    rows = max(len(table[c]) for c in cols)
    for n in range(rows):
        cells = [f"{n:>16d}"]
        for c in cols:
            cells.append(f"{table[c][n]:16.10g}" if n < len(table[c])
                         else " " * 16)
        if "discrepancy" in table and n < len(table["discrepancy"]):
            cells.append(f"{table['discrepancy'][n]:16.3e}")
        print("  ".join(cells))
    if "discrepancy" in table:
        print(f"max relative discrepancy: {np.max(table['discrepancy']):.3e}")

    if args.dump_eigenfunctions or args.dump_scan:
        out = _outdir(args)
        hat, sig, tilde = pipeline.reduce_problem(spec, config)
        prob = shooting.problem_from_hat(hat)
        if args.dump_eigenfunctions:
            lam_list = table.get("shoot", table.get("fem"))
            for n, lam in enumerate(lam_list):
                ef = shooting.eigenfunction(prob, float(lam))
                _write_csv(out / f"eigenfunction_{n}.csv",
                           ["t", "u", "du", "moment", "flux"],
                           zip(ef.nodes, ef.u, ef.du, ef.moment, ef.flux))
            print(f"wrote {len(lam_list)} eigenfunction CSVs to {out}")
        if args.dump_scan:
            top = float(table.get("shoot", table.get("fem"))[-1]) * 1.2
            lams = np.linspace(1e-6, top, 400)
            _write_csv(out / "characteristic_scan.csv", ["lambda", "D"],
                       ((lam, shooting.characteristic(prob, lam))
                        for lam in lams))
            print(f"wrote characteristic scan to {out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    spec = _load_problem(args.problem)
    config = _config(args, vd_trials=args.trials)
    try:
        result = pipeline.verify(spec, config)
    except pipeline.HypothesisViolation as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ProblemError, sigma.SigmaError, fem.FemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    out = _outdir(args)
    stamp = datetime.now(timezone.utc).isoformat()
    report_path = out / f"report_{pipeline.problem_hash(spec)}.json"
    report_path.write_text(pipeline.report_json(result, timestamp=stamp))
    if args.dump_sigma:
        ts = np.linspace(0.0, 1.0, 2049)
        _write_csv(out / "sigma.csv", ["t", "sigma", "flux"],
                   zip(ts, np.asarray(result.sigma_data.sigma(ts)),
                       np.asarray(result.sigma_data.flux(ts))))

    n_fail = len(result.report.failures)
    n_inc = len(result.report.inconclusive)
    n_all = len(result.report.entries)
    print(f"checks: {n_all}  failures: {n_fail}  inconclusive: {n_inc}")
    print(f"report: {report_path}")
    if n_fail:
        for e in result.report.failures:
            print(f"FAIL {e.name}[{e.index}] expected {e.expected} "
                  f"observed {e.observed}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    if n_inc:
        print(f"warning: {n_inc} inconclusive check(s)", file=sys.stderr)
    return EXIT_OK


def _sweep_values(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise SystemExit(_usage_error("empty sweep range"))
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _apply_param(spec, name: str, value: float):
    from dataclasses import replace
    if name == "alpha":
        return replace(spec, alpha=value)
    if name == "beta":
        return replace(spec, beta=value)
    if name.startswith("eta_"):
        i = int(name[4:])
        ifs = list(spec.interfaces)
        ifs[i] = replace(ifs[i], eta=value)
        return replace(spec, interfaces=tuple(ifs))
    if name.startswith("alpha_i_"):
        i = int(name[8:])
        ifs = list(spec.interfaces)
        ifs[i] = replace(ifs[i], alpha_i=value)
        return replace(spec, interfaces=tuple(ifs))
    raise SystemExit(_usage_error(f"unknown sweep parameter '{name}'"))


def _cmd_sweep(args) -> int:
    base = _load_problem(args.problem)
    config = _config(args)
    values = _sweep_values(args.start, args.stop, args.step)
    out = _outdir(args)
    rows = []
    for value in values:
        spec = _apply_param(base, args.param, float(value))
        try:
            hat, sig, tilde = pipeline.reduce_problem(spec, config)
        except (ProblemError, pipeline.HypothesisViolation,
                sigma.SigmaError) as exc:
            print(f"error at {args.param}={value:g}: {exc}", file=sys.stderr)
            return EXIT_INVALID
        form = fem.form_from_hat(hat)
        mesh = fem.build_mesh(form.required_points, config.n)
        tmesh = pipeline.mapped_mesh(mesh, tilde.omega)
        sp = fem.solve_gevp_refined(sigma.form_from_tilde(tilde), tmesh,
                                    config.k)
        xs = sp.sample_grid(per_element=16, endpoint_trim=False)
        counts = []
        for n in range(config.k):
            try:
                counts.append(count_sign_changes(xs, sp.du(n, xs)))
            except IdenticallyZero:
                counts.append(-1)
        over = [n for n in range(config.k)
                if tilde.alpha * sp.eigenvalues[n] > tilde.gamma_sigma1]
        first_over = over[0] if over else ""
        rows.append([f"{value:.10g}"]
                    + [f"{lam:.12g}" for lam in sp.eigenvalues]
                    + [str(c) for c in counts] + [str(first_over)])
    header = ([args.param]
              + [f"lambda_{n}" for n in range(config.k)]
              + [f"SC_du_{n}" for n in range(config.k)]
              + ["first_n_over_threshold"])
    path = out / f"sweep_{args.param}.csv"
    _write_csv(path, header, rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def main(argv=None) -> int:
    handlers = {"solve": _cmd_solve, "verify": _cmd_verify,
                "sweep": _cmd_sweep}
    try:
        args = _build_parser().parse_args(argv)
        return handlers[args.command](args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
