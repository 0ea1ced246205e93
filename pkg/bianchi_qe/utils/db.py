import json
import logging
import sqlite3  # type: ignore
from typing import Any

from bianchi_qe.config import DB_PATH

logger = logging.getLogger(__name__)


def init_database(db_path: str = DB_PATH) -> None:
    """Initialize SQLite database for verification reports and scan rows."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        cursor.execute(
            """
            CREATE TABLE IF NOT EXISTS verification_reports (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                name TEXT,
                params TEXT,
                residual REAL,
                tolerance REAL,
                passed BOOLEAN,
                runtime REAL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """
        )
        cursor.execute(
            """
            CREATE TABLE IF NOT EXISTS scan_rows (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                scan_id TEXT,
                t REAL,
                box_label TEXT,
                mu REAL,
                vol REAL,
                ratio REAL,
                vol_ratio REAL,
                rel_dev REAL,
                est_err REAL
            )
        """
        )
        conn.commit()


def save_report(
    name: str,
    params: dict[str, Any],
    residual: float,
    tolerance: float,
    passed: bool,
    runtime: float,
    db_path: str = DB_PATH,
) -> int:
    """Save a verification report, returning its row id."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        cursor.execute(
            """
            INSERT INTO verification_reports (
                name, params, residual, tolerance, passed, runtime
            )
            VALUES (?, ?, ?, ?, ?, ?)
        """,
            (
                name,
                json.dumps(params, sort_keys=True),
                residual,
                tolerance,
                passed,
                runtime,
            ),
        )
        conn.commit()
        logger.debug(f"Recorded report {name} as row {cursor.lastrowid}")
        return int(cursor.lastrowid or 0)


def get_reports(
    name: str | None = None, db_path: str = DB_PATH
) -> list[tuple[str, dict[str, Any], float, float, bool]]:
    """Get recorded reports, optionally for one suite, oldest first."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        query = (
            "SELECT name, params, residual, tolerance, passed FROM verification_reports"
        )
        if name is None:
            cursor.execute(query + " ORDER BY id")
        else:
            cursor.execute(query + " WHERE name = ? ORDER BY id", (name,))
        return [
            (row_name, json.loads(params), float(residual), float(tol), bool(passed))
            for row_name, params, residual, tol, passed in cursor.fetchall()
        ]


def save_scan_rows(
    scan_id: str,
    rows: list[tuple[float, str, float, float, float, float, float, float]],
    db_path: str = DB_PATH,
) -> None:
    """Save the rows of one QE scan."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        cursor.executemany(
            """
            INSERT INTO scan_rows (
                scan_id, t, box_label, mu, vol, ratio, vol_ratio, rel_dev, est_err
            )
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
        """,
            [(scan_id, *row) for row in rows],
        )
        conn.commit()


def get_scan_rows(scan_id: str, db_path: str = DB_PATH) -> list[tuple[Any, ...]]:
    """Get the rows of a QE scan in t-order."""
    with sqlite3.connect(db_path) as conn:
        cursor = conn.cursor()
        cursor.execute(
            """
            SELECT t, box_label, mu, vol, ratio, vol_ratio, rel_dev, est_err
            FROM scan_rows
            WHERE scan_id = ?
            ORDER BY t, id
        """,
            (scan_id,),
        )
        return cursor.fetchall()
