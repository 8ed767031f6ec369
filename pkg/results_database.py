"""
SQLite run ledger for emitted experiment results
"""
import json
import logging
import math
import os
import sqlite3
from datetime import datetime
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

DEFAULT_DB_PATH = "beamsel_runs.db"


def default_db_path() -> str:
    """Ledger location from BEAMSEL_RESULTS_DB, else ./beamsel_runs.db"""
    return os.getenv('BEAMSEL_RESULTS_DB') or DEFAULT_DB_PATH


class ResultsDatabase:
    """Keeps one row per emitted run and one row per metric cell"""

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = db_path or default_db_path()
        self.initialize_database()

    def _connect(self):
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def initialize_database(self):
        """Create tables if they don't exist"""
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            name TEXT NOT NULL,
            config_hash TEXT NOT NULL,
            seed INTEGER NOT NULL,
            trials INTEGER NOT NULL,
            config_json TEXT NOT NULL,
            metadata_json TEXT,
            csv_path TEXT,
            timestamp TIMESTAMP NOT NULL
        )
        """)

        cursor.execute("""
        CREATE TABLE IF NOT EXISTS metrics (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL REFERENCES runs(id) ON DELETE CASCADE,
            method TEXT NOT NULL,
            n_meas INTEGER NOT NULL,
            t_c REAL,
            r_eff REAL NOT NULL,
            sp_b1 REAL NOT NULL,
            sp_b5 REAL NOT NULL,
            e INTEGER NOT NULL,
            sweep_value REAL
        )
        """)

        conn.commit()
        conn.close()

    def record_run(self, config, table, csv_path: Optional[str] = None,
                   metadata: Optional[Dict] = None) -> int:
        """
        Store a run and its metric rows
        Returns the run ID
        """
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute("""
        INSERT INTO runs (name, config_hash, seed, trials, config_json, metadata_json, csv_path, timestamp)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?)
        """, (
            config.name,
            config.config_hash(),
            config.seed,
            config.trials,
            config.canonical_json(),
            json.dumps(metadata or {}, sort_keys=True),
            csv_path,
            datetime.now().isoformat(timespec='seconds'),
        ))
        run_id = cursor.lastrowid

        for row in table.frame.to_dict('records'):
            t_c = float(row['T_c'])
            sweep_value = row.get('sweep_value')
            cursor.execute("""
            INSERT INTO metrics (run_id, method, n_meas, t_c, r_eff, sp_b1, sp_b5, e, sweep_value)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                run_id,
                row['method'],
                int(row['n_meas']),
                None if math.isinf(t_c) else t_c,
                float(row['R_eff']),
                float(row['SP_B1']),
                float(row['SP_B5']),
                int(row['E']),
                None if sweep_value is None else float(sweep_value),
            ))

        conn.commit()
        conn.close()
        logger.debug("recorded run %d (%s) with %d metric rows", run_id, config.name, len(table))
        return run_id

    def get_run(self, run_id: int) -> Optional[Dict]:
        conn = self._connect()
        row = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,)).fetchone()
        conn.close()
        return dict(row) if row else None

    def list_runs(self, limit: int = 20) -> List[Dict]:
        """Most recent runs first"""
        conn = self._connect()
        rows = conn.execute("""
        SELECT id, name, config_hash, seed, trials, csv_path, timestamp
        FROM runs ORDER BY id DESC LIMIT ?
        """, (limit,)).fetchall()
        conn.close()
        return [dict(row) for row in rows]

    def get_metrics(self, run_id: int) -> List[Dict]:
        """Metric rows of a run; NULL t_c means infinite coherence"""
        conn = self._connect()
        rows = conn.execute("SELECT * FROM metrics WHERE run_id = ? ORDER BY id", (run_id,)).fetchall()
        conn.close()
        return [dict(row) for row in rows]

    def delete_run(self, run_id: int) -> int:
        """
        Delete a run and its metric rows
        Returns number of runs deleted
        """
        conn = self._connect()
        cursor = conn.cursor()
        cursor.execute("DELETE FROM metrics WHERE run_id = ?", (run_id,))
        cursor.execute("DELETE FROM runs WHERE id = ?", (run_id,))
        deleted = cursor.rowcount
        conn.commit()
        conn.close()
        return deleted

    def get_statistics(self) -> Dict:
        """Run counts overall and per experiment name"""
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute("SELECT COUNT(*) FROM runs")
        total_runs = cursor.fetchone()[0]

        cursor.execute("""
        SELECT name, COUNT(*) as count
        FROM runs
        GROUP BY name
        ORDER BY count DESC
        """)
        by_name = {row['name']: row['count'] for row in cursor.fetchall()}

        cursor.execute("SELECT COUNT(DISTINCT config_hash) FROM runs")
        distinct_configs = cursor.fetchone()[0]

        conn.close()
        return {
            'total_runs': total_runs,
            'by_name': by_name,
            'distinct_configs': distinct_configs,
        }

    def export_run_json(self, run_id: int) -> str:
        """Run, config and metric rows as one JSON document"""
        run = self.get_run(run_id)
        if run is None:
            raise KeyError(f"no run with id {run_id}")
        run['config'] = json.loads(run.pop('config_json'))
        run['metadata'] = json.loads(run.pop('metadata_json') or '{}')
        run['metrics'] = self.get_metrics(run_id)
        return json.dumps(run, indent=2)
