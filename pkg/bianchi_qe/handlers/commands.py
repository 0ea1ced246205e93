import argparse
import asyncio
import logging
from typing import Any

from sympy import primerange

from bianchi_qe import config
from bianchi_qe.errors import ConfigError
from bianchi_qe.models.class_group import compute_class_group
from bianchi_qe.models.eisenstein import (
    eisenstein_direct_sum,
    eisenstein_fourier_eval,
    make_eisenstein_system,
)
from bianchi_qe.models.number_field import factor_rational_prime, make_field
from bianchi_qe.qe_scan import (
    ScanConfig,
    bounds_scan,
    qe_scan,
    summarize_scan,
    write_scan_csv,
)
from bianchi_qe.utils.db import init_database, save_scan_rows
from bianchi_qe.utils.l_functions import hecke_L, make_context

logger = logging.getLogger(__name__)


def register_command_handlers(subparsers: Any) -> None:
    field = subparsers.add_parser("field", help="Field invariants and small primes")
    field.add_argument("--d", type=int, required=True)
    field.set_defaults(handler=field_command)

    classgroup = subparsers.add_parser("classgroup", help="Class group structure")
    classgroup.add_argument("--d", type=int, required=True)
    classgroup.set_defaults(handler=classgroup_command)

    lfun = subparsers.add_parser("lfun", help="Hecke L-function value")
    lfun.add_argument("--d", type=int, required=True)
    lfun.add_argument("--chi", type=int, default=0)
    lfun.add_argument("--s", type=parse_complex, required=True)
    lfun.set_defaults(handler=lfun_command)

    eisenstein = subparsers.add_parser("eisenstein", help="Eisenstein series value")
    eisenstein.add_argument("--d", type=int, required=True)
    eisenstein.add_argument("--i", type=int, default=0)
    eisenstein.add_argument("--j", type=int, default=0)
    eisenstein.add_argument("--point", type=parse_point, required=True)
    eisenstein.add_argument("--s", type=parse_complex, required=True)
    eisenstein.add_argument("--direct", action="store_true")
    eisenstein.set_defaults(handler=eisenstein_command)

    qe = subparsers.add_parser("qe", help="Quantum ergodicity scans")
    qe_sub = qe.add_subparsers(dest="qe_command", required=True)
    scan = qe_sub.add_parser("scan", help="Scan μ_t over boxes")
    scan.add_argument("--config", required=True)
    scan.add_argument("--record", action="store_true")
    scan.set_defaults(handler=qe_scan_command)

    bounds = subparsers.add_parser("bounds", help="Growth scans of L-functions")
    bounds_sub = bounds.add_subparsers(dest="bounds_command", required=True)
    bscan = bounds_sub.add_parser("scan", help="Scan one growth bound over t")
    bscan.add_argument(
        "--kind", choices=["subconvexity", "inv_L", "logderiv_L"], required=True
    )
    bscan.add_argument("--d", type=int, required=True)
    bscan.add_argument("--chi", type=int, default=0)
    bscan.add_argument("--t-min", type=float, default=5.0)
    bscan.add_argument("--t-max", type=float, default=50.0)
    bscan.add_argument("--t-step", type=float, default=5.0)
    bscan.set_defaults(handler=bounds_scan_command)


def parse_complex(text: str) -> complex:
    """'re,im' or a plain real."""
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a complex number: {text}") from e
    if len(parts) == 1:
        return complex(parts[0])
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise argparse.ArgumentTypeError(f"not a complex number: {text}")


def parse_point(text: str) -> tuple[complex, float]:
    try:
        x, y, r = (float(p) for p in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"point must be x,y,r: {text}") from e
    if r <= 0:
        raise argparse.ArgumentTypeError(f"height must be positive: {text}")
    return complex(x, y), r


def field_command(args: argparse.Namespace) -> int:
    """Handle `field`"""
    field = make_field(args.d)
    print(f"F = Q(√{field.d}), O_F = Z[{field.ring_gen}]")
    print(f"d_F = {field.disc}, w_F = {field.unit_count}")
    for p in primerange(2, 31):
        for prime, _ in factor_rational_prime(int(p), field):
            if prime.ramified:
                kind = "ramified"
            else:
                kind = "inert" if prime.residue_deg == 2 else "split"
            print(f"  {prime.ideal!r} above {p}: {kind}")
    return 0


def classgroup_command(args: argparse.Namespace) -> int:
    """Handle `classgroup`"""
    group = compute_class_group(make_field(args.d))
    structure = " × ".join(f"Z/{n}" for n in group.orders) or "trivial"
    print(f"h_F = {group.h}, Cl_F ≅ {structure}")
    for cls, rep in zip(group.rep_classes, group.reps):
        print(f"  {cls.exponents}: {rep!r}, form {group.form_of(cls)}")
    print(f"2-torsion: {[c.exponents for c in group.two_torsion()]}")
    return 0


def lfun_command(args: argparse.Namespace) -> int:
    """Handle `lfun`"""
    ctx = make_context(make_field(args.d))
    chars = ctx.group.characters()
    if not 0 <= args.chi < len(chars):
        raise ConfigError(
            f"character index {args.chi} out of range 0..{len(chars) - 1}"
        )
    result = hecke_L(chars[args.chi], args.s, ctx, cross_check=True)
    print(
        f"L({args.s}, χ_{args.chi}) = {result.value:.15g}  "
        f"(± {result.est_error:.1e})"
    )
    return 0


def eisenstein_command(args: argparse.Namespace) -> int:
    """Handle `eisenstein`"""
    system = make_eisenstein_system(make_field(args.d))
    for index in (args.i, args.j):
        if not 0 <= index < system.h:
            raise ConfigError(f"cusp index {index} out of range 0..{system.h - 1}")
    result = eisenstein_fourier_eval(system, args.i, args.j, args.point, args.s)
    print(
        f"E_{args.j}(A_{args.i}⁻¹v, {args.s}) = {result.value:.12g}  "
        f"({result.term_count} terms, tail {result.est_tail:.1e})"
    )
    if args.direct:
        if args.i != 0:
            raise ConfigError("the direct coset sum is evaluated at the cusp ∞ only")
        direct = eisenstein_direct_sum(system, args.j, args.point, args.s)
        print(f"direct coset sum = {direct:.12g}")
    return 0


def qe_scan_command(args: argparse.Namespace) -> int:
    """Handle `qe scan`"""
    cfg = ScanConfig.from_json(args.config)
    rows = asyncio.run(qe_scan(cfg))
    text = write_scan_csv(rows, cfg.out)
    if cfg.out is None:
        print(text, end="")
    summary = summarize_scan(cfg, rows)
    for label, slope in summary.slopes.items():
        logger.info(
            f"Box {label}: slope of μ_t/vol against log t = {slope:.6g} "
            f"(predicted coefficient {summary.coefficient:.6g})"
        )
    if args.record:
        init_database(config.DB_PATH)
        scan_id = f"d{cfg.d}-j{cfg.cusp_j}-seed{cfg.seed}"
        save_scan_rows(
            scan_id,
            [
                (
                    r.t,
                    r.box_label,
                    r.mu,
                    r.vol,
                    r.ratio_to_first,
                    r.vol_ratio_to_first,
                    r.rel_dev,
                    r.est_err,
                )
                for r in rows
            ],
            config.DB_PATH,
        )
        logger.info(f"Recorded {len(rows)} scan rows as {scan_id}")
    return 0


def bounds_scan_command(args: argparse.Namespace) -> int:
    """Handle `bounds scan`"""
    if args.t_step <= 0 or args.t_max < args.t_min:
        raise ConfigError(
            f"empty t grid: [{args.t_min}, {args.t_max}] step {args.t_step}"
        )
    count = int(round((args.t_max - args.t_min) / args.t_step)) + 1
    ts = [args.t_min + k * args.t_step for k in range(count)]
    field = make_field(args.d)
    if not 0 <= args.chi < compute_class_group(field).h:
        raise ConfigError(f"character index {args.chi} out of range")
    result = bounds_scan(args.kind, ts, field, args.chi)
    print(result.to_csv(), end="")
    logger.info(f"Fitted {args.kind} statistic: {result.fitted:.6g}")
    return 0
