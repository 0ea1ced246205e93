import pytest

from bianchi_qe.utils.db import (
    get_reports,
    get_scan_rows,
    init_database,
    save_report,
    save_scan_rows,
)


@pytest.fixture
def db_path(tmp_path):
    path = str(tmp_path / "reports.db")
    init_database(path)
    return path


def test_reports_round_trip(db_path):
    params = {"order": 12, "exact": True}
    first = save_report("r-series", params, 0.0, 0.0, True, 0.5, db_path)
    second = save_report("xi-modulus", {"d": -5}, 1e-13, 1e-10, True, 0.1, db_path)
    assert second > first
    assert get_reports("r-series", db_path) == [
        ("r-series", {"exact": True, "order": 12}, 0.0, 0.0, True)
    ]
    assert [r[0] for r in get_reports(db_path=db_path)] == ["r-series", "xi-modulus"]


def test_init_is_idempotent(db_path):
    save_report("adelic", {}, 0.0, 0.0, False, 1.0, db_path)
    init_database(db_path)
    (report,) = get_reports("adelic", db_path)
    assert report[4] is False


def test_scan_rows_sorted_by_t(db_path):
    rows = [
        (11.0, "A", 0.5, 0.01, 1.0, 1.0, 0.0, 1e-6),
        (10.0, "A", 0.4, 0.01, 1.0, 1.0, 0.0, 1e-6),
        (10.0, "B", 0.2, 0.005, 0.5, 0.5, 0.0, 1e-6),
    ]
    save_scan_rows("d-5-j0-seed0", rows, db_path)
    save_scan_rows("other", rows[:1], db_path)
    stored = get_scan_rows("d-5-j0-seed0", db_path)
    assert [(t, label) for t, label, *_ in stored] == [
        (10.0, "A"),
        (10.0, "B"),
        (11.0, "A"),
    ]
    assert get_scan_rows("missing", db_path) == []
