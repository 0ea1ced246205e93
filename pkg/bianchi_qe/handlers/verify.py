import argparse
import logging
from typing import Any

from bianchi_qe import config
from bianchi_qe.errors import ConfigError
from bianchi_qe.identities import (
    ADELIC_SAMPLES,
    VerificationReport,
    character_triples,
    verify_adelic,
    verify_bessel_mellin,
    verify_fourier_direct,
    verify_gamma_ratio,
    verify_orthogonality,
    verify_quadruple_L,
    verify_R_series,
    verify_residue,
    verify_scattering_unitary,
    verify_xi_modulus,
)
from bianchi_qe.models.number_field import make_field
from bianchi_qe.utils.db import init_database, save_report

logger = logging.getLogger(__name__)

SUITES = [
    "r-series",
    "quadruple-l",
    "xi-modulus",
    "bessel-mellin",
    "gamma-ratio",
    "scattering",
    "orthogonality",
    "fourier",
    "adelic",
    "residue",
]


def register_verify_handlers(subparsers: Any) -> None:
    verify = subparsers.add_parser("verify", help="Run an identity verification suite")
    verify.add_argument("suite", choices=SUITES)
    verify.add_argument("--d", type=int, default=-5)
    verify.add_argument("--seed", type=int, default=config.SEED)
    verify.add_argument(
        "--exact", action="store_true", help="exact group-ring R-series"
    )
    verify.add_argument(
        "--samples", type=int, default=ADELIC_SAMPLES, help="adelic sample count"
    )
    verify.add_argument("--json", action="store_true")
    verify.add_argument("--record", action="store_true")
    verify.set_defaults(handler=verify_command)


def run_suite(
    suite: str,
    d: int,
    seed: int,
    exact: bool = False,
    samples: int = ADELIC_SAMPLES,
) -> list[VerificationReport]:
    """Run one named suite, returning one report per checked case."""
    if suite == "r-series":
        return [verify_R_series(seed=seed, exact=exact)]
    elif suite == "quadruple-l":
        field = make_field(d)
        return [
            verify_quadruple_L(field, 6.0, t, triple)
            for t in (0.0, 1.3)
            for triple in character_triples(field)
        ]
    elif suite == "xi-modulus":
        return [verify_xi_modulus(make_field(d))]
    elif suite == "bessel-mellin":
        return [verify_bessel_mellin()]
    elif suite == "gamma-ratio":
        return [verify_gamma_ratio()]
    elif suite == "scattering":
        return [verify_scattering_unitary(make_field(d))]
    elif suite == "orthogonality":
        return [verify_orthogonality(make_field(d))]
    elif suite == "fourier":
        return [verify_fourier_direct(make_field(d), seed=seed)]
    elif suite == "adelic":
        return [verify_adelic(samples=samples, seed=seed)]
    elif suite == "residue":
        return [verify_residue(make_field(d))]
    raise ConfigError(f"unknown verification suite: {suite}")


def verify_command(args: argparse.Namespace) -> int:
    """Handle `verify <suite>`"""
    reports = run_suite(args.suite, args.d, args.seed, args.exact, args.samples)
    if args.record:
        init_database(config.DB_PATH)
    for report in reports:
        print(report.to_json() if args.json else report.summary())
        if args.record:
            save_report(
                report.name,
                report.params,
                report.residual,
                report.tolerance,
                report.passed,
                report.runtime,
                config.DB_PATH,
            )
    failed = [r.name for r in reports if not r.passed]
    if failed:
        logger.error(f"Verification failed: {', '.join(failed)}")
        return 1
    return 0
