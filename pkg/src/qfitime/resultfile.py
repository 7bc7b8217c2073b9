"""Save and load experiment results.

Two formats carry the same ResultBundle:
- CSV: `# key: value` header lines (format version, experiment, config echo
  as JSON, units and conventions) followed by one table row per record.
  List- or dict-valued cells are JSON-encoded.
- JSON: the whole bundle as one document, used for nested results such as
  MLE local maxima.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CONVENTIONS = "natural log; hbar = 1; site i has index stride 2^i; A = sites_A of the partition"


@dataclass
class ResultBundle:
    """Rows from one experiment run with the config that produced them."""

    experiment: str
    config: dict[str, Any]
    rows: list[dict[str, Any]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        return cols

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def where(self, **match: Any) -> list[dict[str, Any]]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


def _encode_cell(value: Any) -> str:
    value = _plain(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _decode_cell(text: str) -> Any:
    if text == "":
        return None
    if text[0] in "[{":
        return json.loads(text)
    if text in ("True", "False"):
        return text == "True"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(
    path: str | Path,
    rows: list[dict[str, Any]],
    header: dict[str, Any] | None = None,
    columns: list[str] | None = None,
) -> None:
    """Write rows as CSV preceded by `# key: value` comment lines."""
    path = Path(path)
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as f:
        for key, value in (header or {}).items():
            f.write(f"# {key}: {json.dumps(_plain(value))}\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_encode_cell(row.get(c, "")) for c in columns])


def read_csv(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Inverse of write_csv: (header, rows) with numeric cells parsed."""
    header: dict[str, Any] = {}
    body: list[str] = []
    with open(path, newline="") as f:
        for line in f:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                header[key] = json.loads(value)
            else:
                body.append(line)
    reader = csv.reader(body)
    try:
        columns = next(reader)
    except StopIteration:
        return header, []
    rows = [
        {c: _decode_cell(v) for c, v in zip(columns, record) if v != ""}
        for record in reader
    ]
    return header, rows


def append_journal(path: str | Path, rows: list[dict[str, Any]]) -> None:
    """Append rows as JSON lines; one flushed write per call."""
    text = "".join(json.dumps(_plain(row)) + "\n" for row in rows)
    with open(path, "a") as f:
        f.write(text)
        f.flush()


def read_journal(path: str | Path) -> list[dict[str, Any]]:
    """Rows from a journal; a truncated final line is dropped."""
    path = Path(path)
    if not path.exists():
        return []
    rows = []
    for line in path.read_text().splitlines():
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError:
            logger.warning("dropping truncated journal line in %s", path)
    return rows


def _header(bundle: ResultBundle) -> dict[str, Any]:
    return {
        "format_version": bundle.format_version,
        "experiment": bundle.experiment,
        "conventions": CONVENTIONS,
        "config": bundle.config,
        "metadata": bundle.metadata,
    }


def save_bundle(bundle: ResultBundle, output_path: str | Path) -> Path:
    """Save as CSV or JSON according to the file suffix.

    Args:
        bundle: Results to save.
        output_path: Destination; `.json` selects JSON, anything else CSV.

    Returns:
        The path written.
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    if output_path.suffix == ".json":
        doc = {**_header(bundle), "rows": _plain(bundle.rows)}
        output_path.write_text(json.dumps(doc, indent=1) + "\n")
    else:
        write_csv(output_path, bundle.rows, header=_header(bundle), columns=bundle.columns)
    logger.info("wrote %d rows to %s", len(bundle.rows), output_path)
    return output_path


def load_bundle(input_path: str | Path) -> ResultBundle:
    """Load a bundle written by save_bundle."""
    input_path = Path(input_path)
    if input_path.suffix == ".json":
        doc = json.loads(input_path.read_text())
        rows = doc.get("rows", [])
    else:
        doc, rows = read_csv(input_path)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version!r} in {input_path}")
    return ResultBundle(
        experiment=doc["experiment"],
        config=doc.get("config", {}),
        rows=rows,
        metadata=doc.get("metadata", {}),
        format_version=version,
    )
