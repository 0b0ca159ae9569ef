"""Command-line interface.

Subcommands: ``solve``, ``certify``, ``check-uniqueness``, ``stability-sweep``
and ``oracle-compare``; all read a JSON scenario config.  Exit codes: 0 on
success, 1 when a bound or oracle-agreement check fails under valid
preconditions, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .certificates import build_certificate, certificate_quality, write_certificate_csv
from .experiments import (
    ConfigError,
    ScenarioConfig,
    generate_scenario,
    oracle_solve,
    run_scenario,
    solve_vanishing,
    vanishing_penalty,
)
from .guarantees import strong_nsp_check, uniqueness_from_certificate
from .linops import LinearOperator, kernel_basis, restricted_injectivity_constant
from .norms import decompose_at
from .solver import Problem, SolverOptions, solve_penalized


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decoreg",
        description="Penalized analysis recovery: solve, certify, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve", "solve the penalized problem for every noise level"),
        ("certify", "build and store the dual certificate"),
        ("check-uniqueness", "run the uniqueness verdicts for the scenario"),
        ("stability-sweep", "full pipeline with bound verification"),
        ("oracle-compare", "compare the solver against the tiny-instance oracle"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="scenario config (JSON)")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the seed")
        cmd.add_argument("--tol", type=float, default=None, help="solver tolerance")
        cmd.add_argument(
            "--max-iter", type=int, default=None, help="solver iteration budget"
        )
    return parser


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = int(args.seed)
    if args.tol is not None:
        cfg.tol = float(args.tol)
    if args.max_iter is not None:
        cfg.max_iter = int(args.max_iter)
    return cfg


def _solve_command(cfg: ScenarioConfig, out: Path) -> int:
    phi, l_op, norm, x0, ys = generate_scenario(cfg)
    opts = SolverOptions(tol=cfg.tol, max_iter=cfg.max_iter)
    header = "epsilon,objective,optimality_residual,iterations,converged," + ",".join(
        f"x{i}" for i in range(cfg.n)
    )
    lines = [header]
    for eps, y in zip(cfg.epsilons, ys):
        if eps > 0:
            lam = cfg.coupling_c * eps
            problem = Problem(phi=phi, l_adjoint=l_op.T, norm=norm, y=y, lam=lam)
            report = solve_penalized(problem, opts)
        else:
            lam = vanishing_penalty(phi, y)
            problem = Problem(phi=phi, l_adjoint=l_op.T, norm=norm, y=y, lam=lam)
            report = solve_vanishing(problem, opts)
        lines.append(
            ",".join(
                [
                    repr(float(eps)),
                    repr(report.objective),
                    repr(report.optimality_residual),
                    str(report.iterations),
                    str(report.converged),
                ]
                + [repr(float(v)) for v in report.x_star]
            )
        )
        print(
            f"eps={eps:g}: objective {report.objective:.6g}, "
            f"residual {report.optimality_residual:.3g}, "
            f"{report.iterations} iterations, converged={report.converged}"
        )
    (out / "solutions.csv").write_text("\n".join(lines) + "\n")
    return 0


def _certify_command(cfg: ScenarioConfig, out: Path) -> int:
    phi, l_op, norm, x0, _ = generate_scenario(cfg)
    model = decompose_at(norm, l_op.T.apply(x0))
    opts = SolverOptions(tol=cfg.tol, max_iter=cfg.max_iter)
    try:
        cert = build_certificate(
            phi, l_op, norm, model.T, model.e, mode=cfg.certificate_mode, opts=opts
        )
    except ValueError as exc:
        print(f"certificate failed: {exc}", file=sys.stderr)
        return 0
    write_certificate_csv(cert, out / "certificate.csv")
    print(f"saturation {cert.saturation:.6g}")
    print(f"quality {certificate_quality(cert):.6g}")
    print(f"source residual {cert.source_residual:.3g}")
    return 0


def _uniqueness_command(cfg: ScenarioConfig, out: Path) -> int:
    phi, l_op, norm, x0, _ = generate_scenario(cfg)
    model = decompose_at(norm, l_op.T.apply(x0))
    nsp = strong_nsp_check(phi, l_op, model.T, model.e, norm)
    lines = [f"strong nsp verdict: {nsp.status}"]
    opts = SolverOptions(tol=cfg.tol, max_iter=cfg.max_iter)
    try:
        cert = build_certificate(
            phi, l_op, norm, model.T, model.e, mode=cfg.certificate_mode, opts=opts
        )
        s_perp = model.T.complement()
        ls_adj = LinearOperator((l_op.entries @ s_perp.projector_matrix()).T)
        c_phi = restricted_injectivity_constant(phi, kernel_basis(ls_adj))
        verdict = uniqueness_from_certificate(cert, c_phi)
        lines.append(f"certificate verdict: {verdict.status}")
        lines.append(f"saturation: {cert.saturation!r}")
    except ValueError as exc:
        lines.append(f"certificate unavailable: {exc}")
    (out / "uniqueness.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


def _oracle_command(cfg: ScenarioConfig, out: Path) -> int:
    phi, l_op, norm, x0, ys = generate_scenario(cfg)
    opts = SolverOptions(tol=cfg.tol, max_iter=cfg.max_iter)
    lines = ["epsilon,objective_solver,objective_oracle,gap,agree"]
    worst = 0
    for eps, y in zip(cfg.epsilons, ys):
        lam = cfg.coupling_c * eps if eps > 0 else vanishing_penalty(phi, y)
        problem = Problem(phi=phi, l_adjoint=l_op.T, norm=norm, y=y, lam=lam)
        solved = (
            solve_penalized(problem, opts) if eps > 0 else solve_vanishing(problem, opts)
        )
        oracle = oracle_solve(problem)
        gap = abs(solved.objective - oracle.objective)
        agree = gap <= 1e-6 * (1.0 + abs(oracle.objective))
        if not agree:
            worst = 1
        lines.append(
            ",".join(
                [
                    repr(float(eps)),
                    repr(solved.objective),
                    repr(oracle.objective),
                    repr(gap),
                    str(agree),
                ]
            )
        )
        print(
            f"eps={eps:g}: solver {solved.objective:.9g} vs oracle "
            f"{oracle.objective:.9g} (agree={agree})"
        )
    (out / "oracle_compare.csv").write_text("\n".join(lines) + "\n")
    return worst


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return _solve_command(cfg, out)
        if args.command == "certify":
            return _certify_command(cfg, out)
        if args.command == "check-uniqueness":
            return _uniqueness_command(cfg, out)
        if args.command == "stability-sweep":
            result = run_scenario(cfg, out)
            print(f"wrote {result.results_path or result.summary_path}")
            return result.exit_code
        if args.command == "oracle-compare":
            return _oracle_command(cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
