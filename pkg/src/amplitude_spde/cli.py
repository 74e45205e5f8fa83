"""Command line entry point: ``amplitude-spde {coeffs,validate,simulate,convergence}``."""
from __future__ import annotations

import argparse
import sys
import warnings

from . import amplitude as amp
from .errors import AmplitudeError, ExperimentAborted
from .experiment import ExperimentConfig, emit_report, read_config_file, report_lines, run_comparison
from .model import CATALOG, allen_cahn_model, closed_form_coefficient, projected_coefficient, validate_assumptions

EXIT_OK, EXIT_USAGE, EXIT_ABORTED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _eps_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of reals: {text!r}") from None


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", choices=["1", "2"], help="1: uniform noise, 2: noise along e1")
    p.add_argument("--h", type=float)
    p.add_argument("--modes", type=int, dest="n_modes")
    p.add_argument("--quad", type=int, dest="n_quad")
    p.add_argument("--dt", type=float, help="fixed fast step (default: slow step / eps^2)")
    p.add_argument("--slow-dt", type=float, dest="slow_dt")
    p.add_argument("--samples", type=int, dest="n_samples")
    p.add_argument("--t0", type=float, dest="T0")
    p.add_argument("--kappa", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--include-k", type=_on_off, dest="include_K", metavar="{on,off}")
    p.add_argument("--coupling", choices=list(amp.COUPLINGS))
    p.add_argument("--snapshots", type=int, dest="n_snapshots")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", dest="output_path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amplitude-spde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("coeffs", help="closed-form and quadrature coefficients, both sigma1 routes")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--modes", type=int, default=32)
    p.add_argument("--quad", type=int, default=512)

    p = sub.add_parser("validate", help="randomised checks of the model assumptions")
    p.add_argument("--model", choices=["allen-cahn"], default="allen-cahn")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--noise", choices=["case1", "case2"], default="case1")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="error study at a single eps")
    p.add_argument("--epsilon", type=float)
    _add_run_options(p)

    p = sub.add_parser("convergence", help="error study over several eps with fitted orders")
    p.add_argument("--epsilons", type=_eps_list, dest="epsilon_list")
    _add_run_options(p)
    return parser


def _coeffs(args) -> int:
    model = allen_cahn_model(args.h, args.modes, args.quad, noise="case2")
    print(f"{'tag':<20} {'closed form':>22} {'quadrature':>22} {'difference':>12}")
    for tag in CATALOG:
        c, q = closed_form_coefficient(model, tag), projected_coefficient(model, tag)
        print(f"{tag:<20} {c:>22.15g} {q:>22.15g} {abs(c - q):>12.3e}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sig = amp.sigma_coefficients(model, args.tol)
    print("# Case II sigma coefficients")
    print(f"sigma1 (closed series, {sig.series_terms} terms/index, tail <= {sig.series_tail_bound:.2e}) "
          f"= {sig.sigma1_series:.15g}")
    print(f"sigma1 (tensor pseudo-inverse, {args.modes} modes) = {sig.sigma1_generic:.15g}")
    print(f"sigma1 discrepancy = {sig.discrepancy:.3e}")
    print(f"sigma2_bar = {sig.sigma2_bar:.15g}")
    print(f"sigma3_bar = {sig.sigma3_bar:.15g}")
    return EXIT_OK


def _validate(args) -> int:
    model = allen_cahn_model(args.h, noise=args.noise)
    report = validate_assumptions(model, samples=args.samples, seed=args.seed)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_USAGE


_RUN_KEYS = ("case_tag", "h", "n_modes", "n_quad", "dt", "slow_dt", "n_samples", "T0", "kappa", "seed",
             "include_K", "coupling", "n_snapshots", "output_path", "epsilon_list")


def _config_from(args) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    if getattr(args, "case", None):
        values["case_tag"] = args.case
    if getattr(args, "epsilon", None) is not None:
        values["epsilon_list"] = (args.epsilon,)
    for key in _RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None and key != "case_tag":
            values[key] = v
    return ExperimentConfig(**values)


def _run(args) -> int:
    cfg = _config_from(args)
    report = run_comparison(cfg)
    files = emit_report(report, cfg.output_path)
    print("\n".join(report_lines(report)))
    print(f"wrote {', '.join(str(f) for f in files.values())}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"coeffs": _coeffs, "validate": _validate, "simulate": _run, "convergence": _run}
    try:
        return handlers[args.command](args)
    except ExperimentAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (AmplitudeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
