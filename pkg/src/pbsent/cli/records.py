"""Result records: JSON-lines and flattened CSV encodings."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from pbsent import __version__
from pbsent.cli.config import ExperimentConfig

SCHEMA_ID = "pbsent.result/1"
RECORD_SCHEMA = json.loads(resources.files("pbsent.schemas").joinpath("result_record.schema.json").read_text())


def make_record(config: ExperimentConfig, results: dict[str, Any]) -> dict[str, Any]:
    record = {
        "schema": SCHEMA_ID,
        "tool_version": __version__,
        "command": config.command,
        "config": config.experiment_mapping(),
        "config_hash": config.config_hash(),
        "results": results,
    }
    jsonschema.validate(record, RECORD_SCHEMA)
    return record


def encode_records(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def _flatten(prefix: str, value: Any, rows: list[tuple[str, Any]]) -> None:
    if isinstance(value, dict):
        for k in sorted(value, key=str):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, rows)
    else:
        rows.append((prefix, "" if value is None else value))


def encode_csv(record: dict[str, Any]) -> str:
    rows: list[tuple[str, Any]] = []
    _flatten("", record["results"], rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["command", "config_hash", "key", "value"])
    for key, value in rows:
        w.writerow([record["command"], record["config_hash"], key, repr(value) if isinstance(value, float) else value])
    return buf.getvalue()


def encode(record: dict[str, Any], fmt: str) -> str:
    if fmt == "csv":
        return encode_csv(record)
    return encode_records(record)


def write_atomic(path: str | Path, payload: str) -> None:
    """Write via a temporary sibling so a failed run never leaves a partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
