"""CSV exchange format for count tables.

Columns: ``table,state,basis,d1,d2,d_both,n_gates,seed,stream``. ``seed`` and
``stream`` are blank for measured (non-simulated) data.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable

from .core import Bb84State, DomainError, EveBasis
from .montecarlo.models import CountRecord

HEADER = ("table", "state", "basis", "d1", "d2", "d_both", "n_gates", "seed", "stream")


class CsvSchemaError(DomainError):
    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.column = column


def format_counts_csv(records: Iterable[CountRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow(
            [
                r.table,
                r.state.value,
                "none" if r.eve_basis is None else r.eve_basis.value,
                r.d1,
                r.d2,
                r.d_both,
                r.n_gates,
                "" if r.seed is None else r.seed,
                "" if r.stream is None else r.stream,
            ]
        )
    return buf.getvalue()


def write_counts_csv(records: Iterable[CountRecord], path) -> None:
    Path(path).write_text(format_counts_csv(records), encoding="utf-8")


def _int(value: str, line: int, column: str, optional: bool = False):
    if optional and value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise CsvSchemaError(f"expected an integer, got {value!r}", line, column) from None


def parse_counts_csv(text: str) -> list[CountRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CsvSchemaError("empty file; expected header " + ",".join(HEADER), 1)
    if tuple(c.strip() for c in rows[0]) != HEADER:
        raise CsvSchemaError(f"header must be {','.join(HEADER)}, got {','.join(rows[0])}", 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(c.strip() == "" for c in row):
            continue
        if len(row) != len(HEADER):
            raise CsvSchemaError(f"expected {len(HEADER)} fields, got {len(row)}", lineno)
        f = dict(zip(HEADER, row))
        try:
            state = Bb84State.parse(f["state"])
        except DomainError as exc:
            raise CsvSchemaError(str(exc), lineno, "state") from None
        try:
            basis = None if f["basis"].strip().lower() == "none" else EveBasis.parse(f["basis"])
        except DomainError as exc:
            raise CsvSchemaError(str(exc), lineno, "basis") from None
        try:
            rec = CountRecord(
                state,
                basis,
                _int(f["d1"], lineno, "d1"),
                _int(f["d2"], lineno, "d2"),
                _int(f["d_both"], lineno, "d_both"),
                _int(f["n_gates"], lineno, "n_gates"),
                _int(f["seed"], lineno, "seed", optional=True),
                _int(f["stream"], lineno, "stream", optional=True),
                f["table"].strip(),
            )
        except CsvSchemaError:
            raise
        except DomainError as exc:
            raise CsvSchemaError(str(exc), lineno) from None
        out.append(rec)
    if not out:
        raise CsvSchemaError("no data rows", 2)
    return out


def read_counts_csv(path) -> list[CountRecord]:
    return parse_counts_csv(Path(path).read_text(encoding="utf-8"))


def group_tables(records: Iterable[CountRecord]) -> dict[str, list[CountRecord]]:
    """Split records by their ``table`` label, keeping first-seen order."""
    out: dict[str, list[CountRecord]] = {}
    for r in records:
        out.setdefault(r.table, []).append(r)
    return out
