import json
import math

import pytest

from bianchi_qe.errors import ConfigError
from bianchi_qe.models.eisenstein import make_eisenstein_system
from bianchi_qe.models.number_field import make_field
from bianchi_qe.qe_scan import (
    CSV_HEADER,
    BoxRegion,
    ScanConfig,
    bounds_scan,
    box_volume,
    fit_log_slope,
    fit_power_exponent,
    injectivity_certificate,
    mu_measure,
    qe_scan,
    summarize_scan,
    trend_coefficient,
    write_scan_csv,
)
from bianchi_qe.utils.l_functions import zeta_F


@pytest.fixture(scope="module")
def f5():
    return make_field(-5)


@pytest.fixture(scope="module")
def system(f5):
    return make_eisenstein_system(f5)


@pytest.fixture
def box():
    return BoxRegion((0.0, 0.3), (0.0, 0.3), (3.0, 3.5), "A")


def scan_config(**overrides):
    data = {
        "d": -5,
        "cusp_j": 0,
        "t_grid": {"min": 10, "max": 11, "step": 1},
        "boxes": [
            {"x": [0.0, 0.3], "y": [0.0, 0.3], "r": [3.0, 3.5], "label": "A"},
            {"x": [0.0, 0.3], "y": [0.0, 0.3], "r": [3.0, 3.5], "label": "B"},
        ],
        "quad_order": 16,
        "tol": 1e-4,
        "seed": 0,
    }
    data.update(overrides)
    return ScanConfig.from_dict(data)


def test_box_volume():
    assert box_volume(BoxRegion((0, 1), (0, 1), (1, math.inf))) == pytest.approx(0.5)
    assert box_volume(BoxRegion((0, 1), (0, 1), (1, 2))) == pytest.approx(3 / 8)
    with pytest.raises(ConfigError):
        BoxRegion((0, 0), (0, 1), (1, 2))
    with pytest.raises(ConfigError):
        BoxRegion((0, 1), (0, 1), (0, 2))


def test_box_volume_is_additive_and_translation_invariant(box):
    left = BoxRegion((0.0, 0.1), box.y, box.r)
    right = BoxRegion((0.1, 0.3), box.y, box.r)
    assert box_volume(left) + box_volume(right) == pytest.approx(box_volume(box))
    assert box_volume(box.translated(1 + 2j)) == pytest.approx(box_volume(box))


def test_injectivity_certificate(f5, box):
    cert = injectivity_certificate(box, f5)
    assert cert.passed and cert.witness is None
    wide = BoxRegion((0.0, 3.0), (0.0, 0.4), (3.0, 3.5), "wide")
    cert = injectivity_certificate(wide, f5)
    assert not cert.passed
    assert cert.witness.c == f5.zero and abs(complex(cert.witness.b)) == 1
    deep = BoxRegion((0.0, 0.2), (0.0, 0.2), (0.05, 0.1), "deep")
    cert = injectivity_certificate(deep, f5)
    assert not cert.passed and cert.witness.det() == f5.one


def test_mu_measure_positive(system, box):
    value = mu_measure(system, box, 10.0, q=16)
    assert value.mu > 0 and math.isfinite(value.mu)
    assert value.est_err <= 1e-4 * value.mu


def test_mu_measure_is_translation_invariant(system):
    small = BoxRegion((0.0, 0.1), (0.0, 0.1), (3.0, 3.2), "S")
    base = mu_measure(system, small, 10.0, q=16).mu
    for shift in (1, 1j * math.sqrt(5), 1 + 1j * math.sqrt(5)):
        moved = mu_measure(system, small.translated(shift), 10.0, q=16).mu
        assert moved == pytest.approx(base, rel=1e-4)


@pytest.mark.slow
def test_mu_measure_is_additive(system, box):
    base = mu_measure(system, box, 12.0, q=16).mu
    left = mu_measure(system, BoxRegion((0.0, 0.15), box.y, box.r), 12.0, q=16).mu
    right = mu_measure(system, BoxRegion((0.15, 0.3), box.y, box.r), 12.0, q=16).mu
    assert left + right == pytest.approx(base, rel=1e-4)


def test_trend_coefficient(system):
    zeta2 = zeta_F(2, system.lctx).value.real
    first = trend_coefficient(system, 0)
    assert first == pytest.approx((2 * math.pi) ** 2 / (20 * zeta2))
    assert trend_coefficient(system, 1) == pytest.approx(4 * first)


def test_fits():
    ts = [10.0, 20.0, 40.0, 80.0]
    assert fit_log_slope(ts, [2.5 * math.log(t) + 1 for t in ts]) == pytest.approx(2.5)
    assert fit_power_exponent(ts, [3 * t**0.3 for t in ts]) == pytest.approx(0.3)


def test_scan_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ScanConfig.from_dict({"d": -5})
    with pytest.raises(ConfigError):
        scan_config(t_grid={"min": 5, "max": 4, "step": 1})
    with pytest.raises(ConfigError):
        scan_config(boxes=[])
    with pytest.raises(ConfigError):
        ScanConfig.from_json(tmp_path / "missing.json")
    path = tmp_path / "scan.json"
    data = {
        "d": -5,
        "t_grid": {"min": 1, "max": 2, "step": 0.5},
        "boxes": [{"x": [0, 1], "y": [0, 1], "r": [1, 2]}],
    }
    path.write_text(json.dumps(data))
    cfg = ScanConfig.from_json(path)
    assert cfg.ts == [1.0, 1.5, 2.0]
    assert cfg.boxes[0].label == "A"


@pytest.mark.asyncio
async def test_qe_scan_equal_boxes(tmp_path):
    cfg = scan_config()
    rows = await qe_scan(cfg, workers=1)
    assert [(r.t, r.box_label) for r in rows] == [
        (10.0, "A"),
        (10.0, "B"),
        (11.0, "A"),
        (11.0, "B"),
    ]
    for row in rows:
        assert row.ratio_to_first == 1.0
        assert row.vol_ratio_to_first == 1.0
        assert row.rel_dev == 0.0
    out = tmp_path / "scan.csv"
    text = write_scan_csv(rows, out)
    assert out.read_text() == text
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 6 and lines[-1] == ""
    assert "\r" not in text
    summary = summarize_scan(cfg, rows)
    assert set(summary.slopes) == {"A", "B"}


@pytest.mark.asyncio
async def test_qe_scan_rejects_overlapping_box():
    wide = {"x": [0, 3], "y": [0, 0.4], "r": [3, 3.5], "label": "W"}
    cfg = scan_config(boxes=[wide])
    with pytest.raises(ConfigError):
        await qe_scan(cfg, workers=1)


def test_bounds_scan(f5):
    result = bounds_scan("subconvexity", [5.0, 10.0, 20.0], f5, 1)
    assert len(result.rows) == 3
    assert result.to_csv().startswith("t,abs_L_half,t_pow_sixth\n")
    assert math.isfinite(result.fitted)
    inverse = bounds_scan("inv_L", [5.0, 10.0], f5)
    assert all(math.isfinite(v) for _, v, _ in inverse.rows)
    with pytest.raises(ConfigError):
        bounds_scan("zero_density", [5.0], f5)


def _mean_deviation(rows, lo, hi):
    devs = [row.rel_dev for row in rows if row.box_label == "B" and lo <= row.t <= hi]
    assert devs and all(math.isfinite(d) for d in devs)
    return sum(devs) / len(devs)


@pytest.mark.asyncio
async def test_equal_boxes_equidistribute_with_t():
    cfg = scan_config(
        t_grid={"min": 10, "max": 40, "step": 5},
        boxes=[
            {"x": [0.0, 0.15], "y": [0.0, 0.3], "r": [3.0, 3.5], "label": "A"},
            {"x": [0.15, 0.3], "y": [0.0, 0.3], "r": [3.0, 3.5], "label": "B"},
        ],
    )
    rows = await qe_scan(cfg, workers=1)
    assert {row.t for row in rows} == set(cfg.ts)
    assert _mean_deviation(rows, 30, 40) <= _mean_deviation(rows, 10, 20)


@pytest.mark.asyncio
async def test_qe_scan_output_is_reproducible(tmp_path):
    cfg = scan_config(
        boxes=[
            {"x": [0.0, 0.3], "y": [0.0, 0.3], "r": [3.0, 3.5], "label": "A"},
            {"x": [0.0, 0.1], "y": [0.1, 0.3], "r": [3.0, 3.2], "label": "B"},
        ],
    )
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    write_scan_csv(await qe_scan(cfg, workers=1), first)
    write_scan_csv(await qe_scan(cfg, workers=1), second)
    assert first.read_bytes() == second.read_bytes()
    assert len(first.read_bytes().splitlines()) == 5
