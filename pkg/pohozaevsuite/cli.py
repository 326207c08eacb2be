"""
Command-line front end.

    pohozaevsuite solve    --N 3 --p 2 --q1 2.5 --q2 4 --mu 0.1 --branch plus --out run/
    pohozaevsuite classify --profile run/plus_profile.csv --N 3 --p 2 --q1 2.5 --q2 4 --mu 0.1
    pohozaevsuite sweep    --config sweep.cfg --jobs 4 --out sweep/
    pohozaevsuite certify  --N 3 --p 2 --q1 3 --q2 6 --mu-fraction 0.3 --out cert/

Exit codes: 0 success, 1 invalid arguments or unreadable files, 2 diagnosed
numerical failure.
"""

from pathlib import Path
from typing import Optional, List, Sequence
import argparse
import json
import logging
import sys

from pohozaevsuite import __version__
from pohozaevsuite.core.radial_core import read_profile_csv
from pohozaevsuite.core.scaling_fibering import ProblemParams, classify_fibering
from pohozaevsuite.processors.extremal_values import MuStarSolver, scaling_law_report
from pohozaevsuite.processors.manifold_solver import ManifoldSolver
from pohozaevsuite.processors.mfg_bridge import to_mfg, write_mfg
from pohozaevsuite.processors.special_profiles import CertificateBuilder
from pohozaevsuite.processors.spectral_morse import MorseAnalyzer
from pohozaevsuite.utils.config import (
    ConfigManager, CertificateConfig, jobs_from_environment,
)
from pohozaevsuite.utils.errors import (
    ProcessingError, ValidationError, exit_code_for, error_details,
)
from pohozaevsuite.utils.logger import LoggerSetup, captured_warnings
from pohozaevsuite.workflow_manager import RunManifest, SweepConfig, WorkflowManager, MANIFEST_NAME


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_problem_arguments(parser: argparse.ArgumentParser, q2_required: bool = True):
    group = parser.add_argument_group("problem")
    group.add_argument("--N", type=int, required=True, help="Space dimension")
    group.add_argument("--p", type=float, required=True, help="Gradient exponent, 1 < p < N")
    group.add_argument("--q1", type=float, required=True, help="Mass-subcritical exponent")
    group.add_argument("--q2", type=float, required=q2_required,
                       help="Mass-supercritical exponent (defaults to p* when optional)")
    group.add_argument("--a", type=float, default=1.0, help="Mass ||u||_p")
    group.add_argument("--mu", type=float, default=None, help="Coupling of the q1 term")


def _add_grid_arguments(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("grid")
    group.add_argument("--grid-n", type=int, default=None, help="Number of grid intervals")
    group.add_argument("--grid-R", type=float, default=None,
                       help="Truncation radius (adaptive when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pohozaevsuite",
        description="Normalized solutions of the p-Laplacian equation with combined nonlinearities")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, default=None, help="JSON configuration file")
    parser.add_argument("--log-dir", type=Path, default=None, help="Also write a DEBUG log file here")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Show DEBUG messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Show warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Minimize on one branch of the Pohozaev manifold")
    _add_problem_arguments(solve)
    _add_grid_arguments(solve)
    solve.add_argument("--branch", choices=("plus", "minus", "zero"), default="plus")
    solve.add_argument("--morse", action="store_true", help="Attach the radial Morse index")
    solve.add_argument("--morse-full", action="store_true",
                       help="Also sum the angular sectors (p = 2 only)")
    solve.add_argument("--mfg-ch", type=float, default=None,
                       help="Export the mean-field-game fields for this Hamiltonian coefficient")
    solve.add_argument("--out", type=Path, default=Path("output"))

    classify = sub.add_parser("classify", help="Classify the fibering map of a stored profile")
    classify.add_argument("--profile", type=Path, required=True, help="CSV with columns r,u,du")
    _add_problem_arguments(classify)

    sweep = sub.add_parser("sweep", help="Solve a grid of masses and couplings")
    sweep.add_argument("--config", dest="sweep_config", type=Path, required=True,
                       help="key = value sweep file")
    sweep.add_argument("--jobs", type=int, default=1,
                       help="Concurrent points (POHOZAEV_JOBS overrides)")
    sweep.add_argument("--out", type=Path, default=Path("sweep"))
    sweep.add_argument("--resume", action="store_true", help="Skip points already finished")

    certify = sub.add_parser("certify", help="Certify m^- < m^+ + S^{N/p}/N through the bubble path")
    _add_problem_arguments(certify, q2_required=False)
    _add_grid_arguments(certify)
    certify.add_argument("--mu-fraction", type=float, default=None,
                         help="Coupling as a fraction of mu_a* (instead of --mu)")
    certify.add_argument("--eps", type=_float_list, default=None, help="Bubble scales, comma-separated")
    certify.add_argument("--alpha", type=_float_list, default=None, help="Cutoff exponents, comma-separated")
    certify.add_argument("--masses", type=_float_list, default=None,
                         help="Two masses for the mu* scaling-law check")
    certify.add_argument("--out", type=Path, default=Path("certificate"))
    return parser


def _params(args, mu: Optional[float] = None) -> ProblemParams:
    q2 = args.q2
    if q2 is None:
        q2 = args.N * args.p / (args.N - args.p)
    mu = args.mu if mu is None else mu
    params = ProblemParams(args.N, args.p, args.q1, q2, args.a, mu if mu is not None else 1.0)
    params.validate(require_mu=mu is not None)
    return params


def _solver_config(args, manager: ConfigManager, **extra):
    return manager.get_solver_config(grid_n=getattr(args, 'grid_n', None),
                                     grid_R=getattr(args, 'grid_R', None), **extra)


def cmd_solve(args, manager: ConfigManager, logger: logging.Logger) -> int:
    if args.mu is None:
        raise ValidationError("solve needs --mu")
    params = _params(args)
    config = _solver_config(args, manager, branch=args.branch)
    out = Path(args.out)
    manifest = RunManifest(command="solve", params=params.to_dict(),
                           grid={'n': config.grid_n, 'R': config.grid_R},
                           options={'branch': args.branch, 'morse': args.morse,
                                    'mfg_ch': args.mfg_ch})
    manifest_path = manifest.write(out / MANIFEST_NAME)
    try:
        with ManifoldSolver(params, config, logger) as solver:
            record = solver.process(args.branch)
        outputs = {}
        if args.morse or args.morse_full:
            report = MorseAnalyzer(config, logger).analyze(record, full=args.morse_full)
            record.morse_index = report.index_radial
            morse_path = out / f"{args.branch}_morse.json"
            morse_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
            outputs['morse'] = morse_path.name
        if args.mfg_ch is not None:
            outputs['mfg'] = write_mfg(to_mfg(record, args.mfg_ch, params), out, f"{args.branch}_mfg", logger).name
        outputs['solution'] = record.save(out, stem=args.branch).name
    except ProcessingError as e:
        manifest.finalize(manifest_path, "failed", error=f"{type(e).__name__}: {e.message}")
        raise
    manifest.finalize(manifest_path, "finished", outputs,
                      {'energy': record.energy, 'lambda': record.lam})
    logger.info(f"{args.branch} energy {record.energy:.15g}, lambda {record.lam:.15g}")
    return 0 if record.converged else 2


def cmd_classify(args, manager: ConfigManager, logger: logging.Logger) -> int:
    if args.mu is None:
        raise ValidationError("classify needs --mu")
    params = _params(args)
    u = read_profile_csv(args.profile, params.N)
    tol = manager.get_solver_config().degeneracy_tol
    report = classify_fibering(u, params, tol)
    sys.stdout.write(json.dumps(report.to_dict(), indent=2) + "\n")
    return 0


def cmd_sweep(args, manager: ConfigManager, logger: logging.Logger) -> int:
    sweep = SweepConfig.from_file(args.sweep_config)
    jobs = jobs_from_environment(args.jobs)
    workflow = WorkflowManager(args.out, jobs=jobs, resume=args.resume,
                               config=manager.get_solver_config(), logger=logger)
    results = workflow.run(sweep)
    return 0 if results['succeeded'] > 0 else 2


def cmd_certify(args, manager: ConfigManager, logger: logging.Logger) -> int:
    params = _params(args, mu=args.mu)
    if not params.critical:
        raise ValidationError("The certificate is defined only for q2 = p*",
                              {'q2': params.q2, 'p_star': params.p_star})
    base = _solver_config(args, manager)
    overrides = {}
    if args.eps:
        overrides['eps_values'] = tuple(args.eps)
    if args.alpha:
        overrides['alpha_values'] = tuple(args.alpha)
    config = CertificateConfig(**{**base.__dict__, **overrides})
    out = Path(args.out)
    manifest = RunManifest(command="certify", params=params.to_dict(),
                           grid={'n': config.grid_n, 'R': config.grid_R},
                           options={'mu_fraction': args.mu_fraction,
                                    'eps': list(config.eps_values),
                                    'alpha': list(config.alpha_values),
                                    'masses': args.masses})
    manifest_path = manifest.write(out / MANIFEST_NAME)
    try:
        extremal = MuStarSolver(params, config, logger).compute()
        if args.mu_fraction is not None:
            params = params.with_mu(args.mu_fraction * extremal.mu_star)
        elif args.mu is None:
            raise ValidationError("certify needs --mu or --mu-fraction")
        logger.info(f"mu* = {extremal.mu_star:.12g}, mu = {params.mu:.12g}")

        certificate = CertificateBuilder(params, config, logger).certify(extremal=extremal)
        outputs = {'certificate': certificate.save(out).name}
        defect = None
        if args.masses:
            if len(args.masses) != 2:
                raise ValidationError("--masses takes exactly two values", {'masses': args.masses})
            scaling = scaling_law_report(args.masses[0], args.masses[1], params, config, logger)
            defect = scaling.defect
            scaling_path = out / "scaling_law.json"
            scaling_path.write_text(json.dumps(scaling.to_dict(), indent=2) + "\n", encoding="utf-8")
            outputs['scaling_law'] = scaling_path.name
            logger.info(f"Scaling-law defect {defect:.3e}")
    except ProcessingError as e:
        manifest.finalize(manifest_path, "failed", error=f"{type(e).__name__}: {e.message}")
        raise
    manifest.finalize(manifest_path, "finished", outputs,
                      {'margin': certificate.margin, 'mu_star': extremal.mu_star,
                       'scaling_defect': defect})
    logger.info(f"Certificate margin {certificate.margin:.10g} at eps={certificate.eps:g}, "
                f"alpha={certificate.alpha:.4g}")
    if defect is not None and not defect < 0.01:
        return 2
    return 0


COMMANDS = {
    'solve': cmd_solve,
    'classify': cmd_classify,
    'sweep': cmd_sweep,
    'certify': cmd_certify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # usage errors map to 1
        return 0 if e.code in (0, None) else 1

    logger = LoggerSetup().setup_logger("PohozaevSuite")
    try:
        manager = ConfigManager(args.config)
        if args.log_dir is not None:
            manager.update_config({'paths': {'log_dir': str(args.log_dir)}})
        log_dir = manager.get_base_config().log_dir
        if log_dir is not None:
            logger = LoggerSetup(log_dir).setup_logger("PohozaevSuite")
        if args.verbose:
            LoggerSetup.set_console_level(logger, logging.DEBUG)
        elif args.quiet or args.command == "classify":
            LoggerSetup.set_console_level(logger, logging.WARNING)
        with captured_warnings(logger):
            return COMMANDS[args.command](args, manager, logger)
    except ProcessingError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        if e.details:
            logger.debug(json.dumps(error_details(e)))
        return exit_code_for(e)
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return 2
    finally:
        LoggerSetup.close_file_handlers(logger)


if __name__ == "__main__":
    raise SystemExit(main())
