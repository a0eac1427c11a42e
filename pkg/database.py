"""
sketchrows Database Module
SQLite run history: one row per CLI invocation with its full JSON report
"""
import json
from typing import List, Optional

import aiosqlite

from run_report import RunReport


async def init_db(path: str):
    """Initialize database tables"""
    async with aiosqlite.connect(path) as db:
        # Runs table - one RunReport per command
        await db.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                seed INTEGER,
                input_rows INTEGER,
                input_cols INTEGER,
                input_nnz INTEGER,
                output_rows INTEGER,
                passed INTEGER,
                report_json TEXT NOT NULL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """)

        await db.execute("""
            CREATE INDEX IF NOT EXISTS idx_runs_command_time
            ON runs(command, created_at DESC)
        """)

        await db.commit()


async def save_run(path: str, report: RunReport) -> int:
    """Save a run report, returns run ID"""
    passed = report.passed
    async with aiosqlite.connect(path) as db:
        cursor = await db.execute("""
            INSERT INTO runs (
                command, seed, input_rows, input_cols, input_nnz,
                output_rows, passed, report_json
            ) VALUES (?, ?, ?, ?, ?, ?, ?, ?)
        """, (
            report.command, report.seed, report.input_rows, report.input_cols,
            report.input_nnz, report.output_rows,
            None if passed is None else (1 if passed else 0),
            report.to_json(),
        ))
        await db.commit()
        return cursor.lastrowid


async def get_recent_runs(path: str, limit: int = 20, command: Optional[str] = None) -> List[dict]:
    """Most recent runs first, report JSON decoded"""
    async with aiosqlite.connect(path) as db:
        db.row_factory = aiosqlite.Row
        if command:
            cursor = await db.execute(
                "SELECT * FROM runs WHERE command = ? ORDER BY id DESC LIMIT ?", (command, limit)
            )
        else:
            cursor = await db.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
        rows = await cursor.fetchall()

    runs = []
    for row in rows:
        run = dict(row)
        run["report"] = json.loads(run.pop("report_json"))
        runs.append(run)
    return runs


async def record_run(path: str, report: RunReport) -> int:
    """init_db + save_run, used by the CLI after every command"""
    await init_db(path)
    return await save_run(path, report)
