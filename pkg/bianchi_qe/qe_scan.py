import asyncio
import csv
import io
import json
import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import roots_legendre

from bianchi_qe import config
from bianchi_qe.errors import BianchiError, ConfigError, PrecisionError
from bianchi_qe.models.eisenstein import (
    EisensteinSystem,
    fourier_expansion,
    make_eisenstein_system,
    truncation_threshold,
)
from bianchi_qe.models.number_field import (
    FieldElement,
    Matrix2F,
    QuadField,
    complete_bottom_row,
    enumerate_elements,
    make_field,
    principal_ideal,
    unit_ideal,
)
from bianchi_qe.utils.l_functions import (
    L_log_derivative,
    hecke_L,
    make_context,
    zeta_F,
)

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "t",
    "box_label",
    "mu",
    "vol",
    "ratio_to_first",
    "vol_ratio_to_first",
    "rel_dev",
    "est_err",
]


@dataclass(frozen=True)
class BoxRegion:
    x: tuple[float, float]
    y: tuple[float, float]
    r: tuple[float, float]
    label: str = "A"

    def __post_init__(self) -> None:
        for name, (lo, hi) in (("x", self.x), ("y", self.y), ("r", self.r)):
            if not lo < hi:
                raise ConfigError(f"box {self.label}: empty {name}-range [{lo}, {hi}]")
        if self.r[0] <= 0:
            raise ConfigError(f"box {self.label}: r_min must be positive")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BoxRegion":
        try:
            return cls(
                tuple(data["x"]),
                tuple(data["y"]),
                tuple(data["r"]),
                str(data.get("label", "A")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid box specification {data}: {e}") from e

    def translated(self, b: complex, label: str | None = None) -> "BoxRegion":
        return BoxRegion(
            (self.x[0] + b.real, self.x[1] + b.real),
            (self.y[0] + b.imag, self.y[1] + b.imag),
            self.r,
            label or self.label,
        )

    @property
    def center(self) -> complex:
        return complex(sum(self.x) / 2, sum(self.y) / 2)

    @property
    def half_diagonal(self) -> float:
        return math.hypot(self.x[1] - self.x[0], self.y[1] - self.y[0]) / 2


def box_volume(box: BoxRegion) -> float:
    """Hyperbolic volume ∫ dx dy dr / r³."""
    dx, dy = box.x[1] - box.x[0], box.y[1] - box.y[0]
    r_lo, r_hi = box.r
    upper = 0.0 if math.isinf(r_hi) else 1 / (2 * r_hi**2)
    return dx * dy * (1 / (2 * r_lo**2) - upper)


@dataclass(frozen=True)
class InjectivityCertificate:
    passed: bool
    witness: Matrix2F | None
    checked: int


def _max_height(box: BoxRegion, c: complex, d: complex) -> float:
    """Upper bound of Im(γv) over the box for γ with bottom row (c, d)."""
    m = max(0.0, abs(c * box.center + d) - abs(c) * box.half_diagonal)
    r_lo, r_hi = box.r
    r_star = min(max(m / abs(c), r_lo), r_hi)
    return r_star / (m * m + abs(c) ** 2 * r_star * r_star)


def injectivity_certificate(box: BoxRegion, field: QuadField) -> InjectivityCertificate:
    """Certify that no γ ∈ Γ outside ±1 maps a point of the box into the box."""
    ring = unit_ideal(field)
    dx, dy = box.x[1] - box.x[0], box.y[1] - box.y[0]
    checked = 0
    one, zero = field.one, field.zero
    for b in enumerate_elements(ring, math.hypot(dx, dy)):
        checked += 1
        bc = complex(b)
        if abs(bc.real) < dx and abs(bc.imag) < dy:
            return InjectivityCertificate(False, Matrix2F(one, b, zero, one), checked)
    r_lo = box.r[0]
    for c in enumerate_elements(ring, 1 / r_lo):
        if c.b < 0 or (c.b == 0 and c.a < 0):
            continue
        cc = complex(c)
        spread = max(r / r_lo - abs(cc) ** 2 * r * r for r in _r_samples(box, cc))
        reach = math.sqrt(max(0.0, spread))
        radius = reach + abs(cc) * box.half_diagonal
        center = -cc * box.center
        for d in [zero, *enumerate_elements(ring, abs(center) + radius)]:
            if abs(complex(d) - center) > radius or not _coprime(c, d):
                continue
            checked += 1
            if _max_height(box, cc, complex(d)) >= r_lo:
                return InjectivityCertificate(False, complete_bottom_row(c, d), checked)
    logger.debug(f"Box {box.label} certified injective after {checked} candidates")
    return InjectivityCertificate(True, None, checked)


def _coprime(c: FieldElement, d: FieldElement) -> bool:
    if not d:
        return c.norm() == 1
    return principal_ideal(c) + principal_ideal(d) == unit_ideal(c.field)


def _r_samples(box: BoxRegion, c: complex) -> list[float]:
    r_lo, r_hi = box.r
    peak = 1 / (2 * abs(c) ** 2 * r_lo)
    return [r_lo, min(max(peak, r_lo), r_hi if math.isfinite(r_hi) else peak)]


@dataclass(frozen=True)
class MuValue:
    mu: float
    est_err: float
    nodes: tuple[int, int, int]


def _node_counts(box: BoxRegion, t: float, q: int) -> tuple[int, int, int]:
    freq = truncation_threshold(t) / (2 * math.pi * box.r[0])
    qx = max(q, math.ceil(12 * freq * (box.x[1] - box.x[0])))
    qy = max(q, math.ceil(12 * freq * (box.y[1] - box.y[0])))
    qr = max(q, math.ceil(6 * t * math.log(box.r[1] / box.r[0]) / math.pi) + q // 2)
    return qx, qy, qr


def _gauss(lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(n)
    half = (hi - lo) / 2
    return lo + half * (nodes + 1), half * weights


def _quadrature(
    system: EisensteinSystem,
    box: BoxRegion,
    t: float,
    j: int,
    nodes: tuple[int, int, int],
) -> float:
    expansion = fourier_expansion(system, 0, j, 1 + 1j * t, box.r[0])
    xs, wx = _gauss(*box.x, nodes[0])
    ys, wy = _gauss(*box.y, nodes[1])
    rs, wr = _gauss(*box.r, nodes[2])
    total = 0.0
    for r, w in zip(rs, wr):
        values = np.abs(expansion.evaluate_grid(xs, ys, float(r))) ** 2
        total += w * float(wx @ values @ wy) / r**3
    return total


def mu_measure(
    system: EisensteinSystem,
    box: BoxRegion,
    t: float,
    j: int = 0,
    q: int = config.QUAD_ORDER,
    tol: float = 1e-4,
    max_refinements: int = 4,
) -> MuValue:
    """μ_t(A) = ∫_A |E_j(v, 1+it)|² dV by refined tensor Gauss–Legendre."""
    if math.isinf(box.r[1]):
        raise PrecisionError("μ_t needs a bounded r-range")
    nodes = _node_counts(box, t, q)
    previous = _quadrature(system, box, t, j, nodes)
    for _ in range(max_refinements):
        nodes = (nodes[0] + 8, nodes[1] + 8, nodes[2] + 8)
        current = _quadrature(system, box, t, j, nodes)
        err = abs(current - previous)
        if err <= tol * abs(current):
            return MuValue(current, err, nodes)
        previous = current
    raise PrecisionError(f"μ_t({box.label}) at t={t} did not settle after refinement")


def trend_coefficient(system: EisensteinSystem, j: int) -> float:
    """(2π)²N(𝔪_j⁻²)/(|d_F|ζ_F(2)), the predicted coefficient of log t."""
    zeta2 = zeta_F(2, system.lctx).value.real
    norm = float(system.cusps[j].norm)
    return (2 * math.pi) ** 2 / (norm**2 * system.disc * zeta2)


def fit_log_slope(ts: Sequence[float], values: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(ts)), np.asarray(values), 1)
    return float(slope)


def fit_power_exponent(ts: Sequence[float], values: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(ts)), np.log(np.asarray(values)), 1)
    return float(slope)


@dataclass
class ScanConfig:
    d: int
    cusp_j: int
    t_min: float
    t_max: float
    t_step: float
    boxes: list[BoxRegion]
    quad_order: int = config.QUAD_ORDER
    tol: float = 1e-4
    seed: int = config.SEED
    out: str | None = None

    def __post_init__(self) -> None:
        if not self.boxes:
            raise ConfigError("scan needs at least one box")
        if self.t_step <= 0 or self.t_max < self.t_min:
            raise ConfigError(
                f"empty t grid: [{self.t_min}, {self.t_max}] step {self.t_step}"
            )

    @property
    def ts(self) -> list[float]:
        count = int(round((self.t_max - self.t_min) / self.t_step)) + 1
        return [round(self.t_min + k * self.t_step, 12) for k in range(count)]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScanConfig":
        try:
            grid = data["t_grid"]
            return cls(
                d=int(data["d"]),
                cusp_j=int(data.get("cusp_j", 0)),
                t_min=float(grid["min"]),
                t_max=float(grid["max"]),
                t_step=float(grid["step"]),
                boxes=[BoxRegion.from_dict(b) for b in data["boxes"]],
                quad_order=int(data.get("quad_order", config.QUAD_ORDER)),
                tol=float(data.get("tol", 1e-4)),
                seed=int(data.get("seed", config.SEED)),
                out=data.get("out"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid scan configuration: {e}") from e

    @classmethod
    def from_json(cls, path: str | Path) -> "ScanConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read scan configuration {path}: {e}") from e
        return cls.from_dict(data)


@dataclass(frozen=True)
class ScanRow:
    t: float
    box_label: str
    mu: float
    vol: float
    ratio_to_first: float
    vol_ratio_to_first: float
    rel_dev: float
    est_err: float

    def as_csv(self) -> list[str]:
        return [
            f"{self.t:.12g}",
            self.box_label,
            *(
                f"{x:.12g}"
                for x in (
                    self.mu,
                    self.vol,
                    self.ratio_to_first,
                    self.vol_ratio_to_first,
                    self.rel_dev,
                    self.est_err,
                )
            ),
        ]


def _rows_for_point(cfg: ScanConfig, t: float, values: list[MuValue]) -> list[ScanRow]:
    vols = [box_volume(b) for b in cfg.boxes]
    first, first_vol = values[0], vols[0]
    rows = []
    for box, value, vol in zip(cfg.boxes, values, vols):
        reliable = value.mu > 10 * value.est_err and first.mu > 10 * first.est_err
        ratio = value.mu / first.mu if reliable else math.nan
        vol_ratio = vol / first_vol
        rel_dev = abs(ratio / vol_ratio - 1) if reliable else math.nan
        rows.append(
            ScanRow(
                t, box.label, value.mu, vol, ratio, vol_ratio, rel_dev, value.est_err
            )
        )
    return rows


def scan_point(cfg: ScanConfig, t: float) -> list[ScanRow] | None:
    """All boxes at one t; None when any box fails."""
    try:
        system = make_eisenstein_system(make_field(cfg.d))
        values = [
            mu_measure(system, box, t, cfg.cusp_j, cfg.quad_order, cfg.tol)
            for box in cfg.boxes
        ]
    except BianchiError as e:
        logger.warning(f"Scan row t={t} aborted: {e}")
        return None
    measured = ", ".join(f"{b.label}={v.mu:.6g}" for b, v in zip(cfg.boxes, values))
    logger.info(f"Scan row t={t} done: {measured}")
    return _rows_for_point(cfg, t, values)


def certify_boxes(cfg: ScanConfig) -> None:
    field = make_field(cfg.d)
    for box in cfg.boxes:
        cert = injectivity_certificate(box, field)
        if not cert.passed:
            raise ConfigError(
                f"box {box.label} is not injective: overlap via {cert.witness}"
            )


async def qe_scan(cfg: ScanConfig, workers: int = config.MAX_WORKERS) -> list[ScanRow]:
    """Evaluate every t of the grid, at most `workers` at a time, rows in t-order."""
    certify_boxes(cfg)
    semaphore = asyncio.Semaphore(max(1, workers))
    loop = asyncio.get_running_loop()
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    async def run(t: float) -> list[ScanRow] | None:
        async with semaphore:
            if executor is None:
                return await asyncio.to_thread(scan_point, cfg, t)
            return await loop.run_in_executor(executor, scan_point, cfg, t)

    try:
        results = await asyncio.gather(*(run(t) for t in cfg.ts))
    finally:
        if executor is not None:
            executor.shutdown()
    rows = [row for result in results if result for row in result]
    logger.info(f"Scan finished: {len(rows)} rows over {len(cfg.ts)} t values")
    return rows


@dataclass
class ScanSummary:
    coefficient: float
    slopes: dict[str, float] = field(default_factory=dict)


def summarize_scan(cfg: ScanConfig, rows: list[ScanRow]) -> ScanSummary:
    system = make_eisenstein_system(make_field(cfg.d))
    summary = ScanSummary(trend_coefficient(system, cfg.cusp_j))
    for box in cfg.boxes:
        mine = [row for row in rows if row.box_label == box.label]
        if len(mine) >= 2:
            summary.slopes[box.label] = fit_log_slope(
                [row.t for row in mine], [row.mu / row.vol for row in mine]
            )
    return summary


def rows_to_csv(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_scan_csv(rows: Sequence[ScanRow], out: str | Path | None = None) -> str:
    text = rows_to_csv(CSV_HEADER, [row.as_csv() for row in rows])
    if out is not None:
        Path(out).write_text(text)
    return text


BOUND_HEADERS = {
    "subconvexity": ["t", "abs_L_half", "t_pow_sixth"],
    "inv_L": ["t", "abs_inv_L_one", "bound_shape"],
    "logderiv_L": ["t", "abs_logderiv_L_one", "bound_shape"],
}


@dataclass
class BoundsScan:
    kind: str
    rows: list[tuple[float, float, float]]
    fitted: float

    @property
    def header(self) -> list[str]:
        return BOUND_HEADERS[self.kind]

    def to_csv(self) -> str:
        cells = [[f"{x:.12g}" for x in row] for row in self.rows]
        return rows_to_csv(self.header, cells)


def _bound_shape(t: float) -> float:
    # log log t must stay positive
    log_t = math.log(max(t, 16.0))
    return log_t ** (2 / 3) * math.log(log_t) ** (1 / 3)


def bounds_scan(
    kind: str, ts: Sequence[float], field: QuadField, chi_index: int = 0
) -> BoundsScan:
    """Empirical growth of L on the critical line or of 1/L and L'/L on Re(s) = 1."""
    if kind not in BOUND_HEADERS:
        raise ConfigError(f"unknown bounds scan kind: {kind}")
    ctx = make_context(field)
    chi = ctx.group.characters()[chi_index]
    rows = []
    for t in ts:
        try:
            if kind == "subconvexity":
                value = abs(hecke_L(chi, 0.5 + 1j * t, ctx).value)
                rows.append((t, value, t ** (1 / 6)))
            elif kind == "inv_L":
                value = 1 / abs(hecke_L(chi, 1 + 1j * t, ctx).value)
                rows.append((t, value, _bound_shape(t)))
            else:
                value = abs(L_log_derivative(chi, 1 + 1j * t, ctx).value)
                rows.append((t, value, _bound_shape(t)))
        except BianchiError as e:
            logger.warning(f"Bounds scan {kind} failed at t={t}: {e}")
    if len(rows) < 2:
        fitted = math.nan
    elif kind == "subconvexity":
        fitted = fit_power_exponent([r[0] for r in rows], [r[1] for r in rows])
    else:
        fitted = max(r[1] / r[2] for r in rows)
    logger.info(f"Bounds scan {kind} over {len(rows)} points: fitted {fitted:.4g}")
    return BoundsScan(kind, rows, fitted)
