"""
SQLite index of lab runs and their checks.
"""
import sqlite3
import json
import logging
from typing import Dict, List, Optional

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


class Database:
    """SQLite database manager for run summaries and check results."""

    def __init__(self, db_path: str = "kgspec_runs.db"):
        """
        Initialize database connection and create tables.

        Args:
            db_path: Path to SQLite database file
        """
        self.db_path = db_path
        self._create_tables()
        logger.info(f"Database initialized at {db_path}")

    def _get_connection(self):
        """Get database connection."""
        return sqlite3.connect(self.db_path)

    def _create_tables(self):
        """Create database tables if they don't exist."""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id TEXT NOT NULL,
                digest TEXT NOT NULL UNIQUE,
                pipeline TEXT NOT NULL,
                label TEXT NOT NULL,
                passed BOOLEAN,
                run_dir TEXT,
                config_json TEXT,
                summary_json TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS checks (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_pk INTEGER,
                name TEXT NOT NULL,
                passed BOOLEAN,
                value REAL,
                detail TEXT,
                FOREIGN KEY (run_pk) REFERENCES runs(id)
            )
        ''')

        conn.commit()
        conn.close()
        logger.info("Database tables created/verified")

    def save_run(self, summary: Dict, config: Dict, run_dir: str) -> int:
        """
        Save a run summary. A digest that is already stored returns the existing row.

        Args:
            summary: RunSummary dictionary
            config: ExperimentConfig dictionary
            run_dir: Run directory on disk

        Returns:
            Row ID in database, -1 on failure
        """
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('''
                INSERT INTO runs (
                    run_id, digest, pipeline, label, passed, run_dir, config_json, summary_json
                ) VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ''', (
                summary.get('run_id'),
                summary.get('digest'),
                summary.get('pipeline'),
                summary.get('label'),
                bool(summary.get('passed', False)),
                run_dir,
                json.dumps(config, sort_keys=True),
                json.dumps(summary, sort_keys=True)
            ))

            row_id = cursor.lastrowid
            conn.commit()
            logger.info(f"Saved run {summary.get('run_id')} with ID {row_id}")
            return row_id

        except sqlite3.IntegrityError as e:
            logger.warning(f"Run already recorded: {str(e)}")
            cursor.execute('SELECT id FROM runs WHERE digest = ?', (summary.get('digest'),))
            result = cursor.fetchone()
            return result[0] if result else -1
        except Exception as e:
            logger.error(f"Error saving run: {str(e)}")
            return -1
        finally:
            conn.close()

    def save_check(self, run_pk: int, check: Dict):
        """
        Save one check result of a run.

        Args:
            run_pk: Database ID of the run
            check: CheckResult dictionary
        """
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('''
                INSERT INTO checks (run_pk, name, passed, value, detail)
                VALUES (?, ?, ?, ?, ?)
            ''', (
                run_pk,
                check.get('name'),
                bool(check.get('passed', False)),
                check.get('value'),
                check.get('detail', '')
            ))
            conn.commit()
        except Exception as e:
            logger.error(f"Error saving check: {str(e)}")
        finally:
            conn.close()

    def _row_to_run(self, row) -> Dict:
        return {
            'id': row[0],
            'run_id': row[1],
            'digest': row[2],
            'pipeline': row[3],
            'label': row[4],
            'passed': bool(row[5]),
            'run_dir': row[6],
            'created_at': row[7]
        }

    def get_run(self, run_id: str) -> Optional[Dict]:
        """
        Retrieve a run by its short run id.

        Args:
            run_id: First twelve hex digits of the config digest

        Returns:
            Run dictionary with its summary, or None
        """
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('''
                SELECT id, run_id, digest, pipeline, label, passed, run_dir, created_at, summary_json
                FROM runs WHERE run_id = ?
            ''', (run_id,))

            row = cursor.fetchone()
            if row:
                run = self._row_to_run(row)
                run['summary'] = json.loads(row[8]) if row[8] else {}
                return run
            return None
        except Exception as e:
            logger.error(f"Error retrieving run {run_id}: {str(e)}")
            return None
        finally:
            conn.close()

    def find_run_by_digest(self, digest: str) -> Optional[int]:
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('SELECT id FROM runs WHERE digest = ?', (digest,))
            row = cursor.fetchone()
            return row[0] if row else None
        except Exception as e:
            logger.error(f"Error looking up digest: {str(e)}")
            return None
        finally:
            conn.close()

    def get_all_runs(self, pipeline: Optional[str] = None) -> List[Dict]:
        """
        Retrieve all runs, newest first.

        Args:
            pipeline: Only runs of this pipeline when given

        Returns:
            List of run dictionaries
        """
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            query = '''
                SELECT id, run_id, digest, pipeline, label, passed, run_dir, created_at
                FROM runs
            '''
            params = ()
            if pipeline:
                query += ' WHERE pipeline = ?'
                params = (pipeline,)
            cursor.execute(query + ' ORDER BY created_at DESC, id DESC', params)

            runs = [self._row_to_run(row) for row in cursor.fetchall()]
            logger.info(f"Retrieved {len(runs)} runs from database")
            return runs
        except Exception as e:
            logger.error(f"Error retrieving runs: {str(e)}")
            return []
        finally:
            conn.close()

    def get_checks(self, run_pk: int) -> List[Dict]:
        """
        Get all checks of a run.

        Args:
            run_pk: Database ID of the run

        Returns:
            List of check dictionaries
        """
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('''
                SELECT name, passed, value, detail
                FROM checks
                WHERE run_pk = ?
                ORDER BY id
            ''', (run_pk,))

            return [
                {'name': row[0], 'passed': bool(row[1]), 'value': row[2], 'detail': row[3]}
                for row in cursor.fetchall()
            ]
        except Exception as e:
            logger.error(f"Error retrieving checks: {str(e)}")
            return []
        finally:
            conn.close()

    def get_stats(self) -> Dict:
        """Run counts overall, passed and per pipeline."""
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('SELECT COUNT(*), COALESCE(SUM(passed), 0) FROM runs')
            total, passed = cursor.fetchone()
            cursor.execute('SELECT pipeline, COUNT(*) FROM runs GROUP BY pipeline')
            per_pipeline = {row[0]: row[1] for row in cursor.fetchall()}
            return {'total_runs': total, 'passed_runs': int(passed), 'per_pipeline': per_pipeline}
        except Exception as e:
            logger.error(f"Error computing stats: {str(e)}")
            return {'total_runs': 0, 'passed_runs': 0, 'per_pipeline': {}}
        finally:
            conn.close()

    def clear_all_data(self):
        """Clear all data from database (for testing)."""
        conn = self._get_connection()
        cursor = conn.cursor()

        try:
            cursor.execute('DELETE FROM checks')
            cursor.execute('DELETE FROM runs')
            conn.commit()
            logger.info("Cleared all data from database")
        except Exception as e:
            logger.error(f"Error clearing data: {str(e)}")
        finally:
            conn.close()
