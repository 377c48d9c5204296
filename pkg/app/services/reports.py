"""
Report envelopes and their JSON / CSV encodings.

JSON reports sort keys and write floats with the shortest repr that round-trips.
CSV reports start with a `# ose-report schema=<payload_type> version=<n>` comment followed by a
header row. Payloads with a `rows` table (sweeps, benchmarks) write one line per row, embedding
reports one line per trial, and every other payload a single line of flattened fields.
"""
import csv
import datetime
import io
import json
import logging
from enum import Enum
from typing import Any, Dict, List, Tuple

import pydantic

from app import settings


logger = logging.getLogger(__name__)


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class ReportEnvelope(pydantic.BaseModel):
    tool_version: str = settings.TOOL_VERSION
    action: str
    config: Dict[str, Any]
    timestamp: str = pydantic.Field(default_factory=lambda: datetime.datetime.now(datetime.timezone.utc).isoformat())
    payload_type: str
    payload: Dict[str, Any]


def make_envelope(action_id: str, config: pydantic.BaseModel, payload: pydantic.BaseModel) -> ReportEnvelope:
    return ReportEnvelope(
        action=action_id,
        config=json.loads(config.json()),
        payload_type=type(payload).__name__,
        payload=json.loads(payload.json()),
    )


def canonical_payload(payload: Dict[str, Any]) -> str:
    # Compared on replay; timestamps live outside the payload
    return json.dumps(payload, sort_keys=True)


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{name}."))
        elif isinstance(value, list) and all(not isinstance(v, (dict, list)) for v in value):
            flat[name] = ";".join(_cell(v) for v in value)
        elif isinstance(value, list):
            # Nested tables are only written by the JSON encoding
            continue
        else:
            flat[name] = value
    return flat


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{settings.FLOAT_DIGITS}g}"
    return str(value)


def _tabulate(payload: Dict[str, Any]) -> Tuple[List[str], List[Dict[str, Any]]]:
    if isinstance(payload.get("rows"), list) and payload["rows"]:
        rows = [_flatten(row) for row in payload["rows"]]
        return list(rows[0]), rows
    if isinstance(payload.get("eps_hat"), list):
        eps = payload["eps"]
        rows = [
            {"trial": index, "s_min": s_min, "s_max": s_max, "eps_hat": eps_hat, "failed": eps_hat > eps}
            for index, (s_min, s_max, eps_hat) in enumerate(zip(payload["s_min"], payload["s_max"], payload["eps_hat"]))
        ]
        return ["trial", "s_min", "s_max", "eps_hat", "failed"], rows
    flat = _flatten(payload)
    return list(flat), [flat]


def write_report(envelope: ReportEnvelope, fmt: str = ReportFormat.JSON) -> bytes:
    if fmt == ReportFormat.JSON:
        return (json.dumps(envelope.dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")
    if fmt != ReportFormat.CSV:
        raise ValueError(f"Unknown report format '{fmt}'")
    columns, rows = _tabulate(envelope.payload)
    buffer = io.StringIO()
    buffer.write(
        f"# ose-report schema={envelope.payload_type} version={settings.CSV_SCHEMA_VERSION} "
        f"tool={envelope.tool_version} action={envelope.action}\n"
    )
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue().encode("utf-8")


def load_report(text: str) -> ReportEnvelope:
    return ReportEnvelope.parse_obj(json.loads(text))
