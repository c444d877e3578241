"""Small CSV helpers shared by the dataset and trace exporters.

Floats are written with 17 significant digits so every float64 value
round-trips bit-exactly through the text form.
"""

from __future__ import annotations

import csv
from pathlib import Path


class CsvFormatError(ValueError):
    """Malformed header or cell; message names the file, line and problem."""


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path, expected_header: list[str]):
    """Read a CSV written by `write_csv`, validating the header.

    Returns a list of rows of floats; raises CsvFormatError with the line
    number for short rows or non-numeric cells.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if header != expected_header:
            raise CsvFormatError(
                f"{path}: header mismatch: expected {expected_header}, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {len(expected_header)} "
                    f"columns, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise CsvFormatError(f"{path}: line {lineno}: {exc}") from None
    return rows
