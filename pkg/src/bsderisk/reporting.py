"""Deterministic report payloads for scenario runs.

A report is a flat list of rows (scenario_id, quantity, value, std_error,
check, pass). Payload files are byte-identical across reruns of the same
scenario: floats are serialized with 17 significant digits (full round-trip
precision), field order is fixed, and anything nondeterministic (wall clock,
config echo) lives in a sidecar provenance file that is not part of the
payload contract.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigParseError

__all__ = ["Row", "RunReport", "emit_report", "read_report"]

CSV_HEADER = ("scenario_id", "quantity", "value", "std_error", "check", "pass")
FORMATS = ("csv", "json-lines")


@dataclass(frozen=True)
class Row:
    scenario_id: str
    quantity: str
    value: float | None
    std_error: float | None = None
    check: str = ""
    passed: bool | None = None


@dataclass
class RunReport:
    scenario_id: str
    rows: list[Row]
    provenance: dict = field(default_factory=dict)

    @property
    def checks_total(self) -> int:
        return sum(1 for r in self.rows if r.passed is not None)

    @property
    def checks_passed(self) -> int:
        return sum(1 for r in self.rows if r.passed)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows if r.passed is not None)


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def _fmt_bool(value: bool | None) -> str:
    if value is None:
        return ""
    return "true" if value else "false"


def _csv_payload(rows: list[Row]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(
            [r.scenario_id, r.quantity, _fmt(r.value), _fmt(r.std_error),
             r.check, _fmt_bool(r.passed)]
        )
    return buf.getvalue()


def _jsonl_payload(rows: list[Row]) -> str:
    lines = []
    for r in rows:
        fields = [
            f'"scenario_id": {json.dumps(r.scenario_id)}',
            f'"quantity": {json.dumps(r.quantity)}',
            f'"value": {_fmt(r.value) if r.value is not None else "null"}',
            f'"std_error": {_fmt(r.std_error) if r.std_error is not None else "null"}',
            f'"check": {json.dumps(r.check)}',
            f'"pass": {_fmt_bool(r.passed) or "null"}',
        ]
        lines.append("{" + ", ".join(fields) + "}")
    return "\n".join(lines) + ("\n" if lines else "")


def emit_report(report: RunReport, fmt: str, out_dir) -> tuple[Path, Path]:
    """Write the payload and its provenance sidecar; returns both paths."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = "csv" if fmt == "csv" else "jsonl"
    payload_path = out / f"{report.scenario_id}.{suffix}"
    payload = _csv_payload(report.rows) if fmt == "csv" else _jsonl_payload(report.rows)
    payload_path.write_bytes(payload.encode("utf-8"))

    sidecar_path = out / f"{report.scenario_id}.provenance.json"
    sidecar_path.write_text(
        json.dumps(report.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return payload_path, sidecar_path


def _parse_value(text: str):
    if text in ("", "null", None):
        return None
    return float(text)


def _parse_bool(text):
    if text in ("", "null", None):
        return None
    if isinstance(text, bool):
        return text
    return text == "true"


def read_report(path) -> RunReport:
    """Load a payload file (either format) back into rows."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read report {p}: {exc}") from exc
    rows: list[Row] = []
    if p.suffix == ".csv":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != list(CSV_HEADER):
            raise ConfigParseError(f"{p} is not a report payload (header mismatch)")
        for rec in reader:
            rows.append(
                Row(
                    scenario_id=rec["scenario_id"],
                    quantity=rec["quantity"],
                    value=_parse_value(rec["value"]),
                    std_error=_parse_value(rec["std_error"]),
                    check=rec["check"],
                    passed=_parse_bool(rec["pass"]),
                )
            )
    else:
        for line_no, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigParseError(f"{p}:{line_no}: invalid json line: {exc}") from exc
            rows.append(
                Row(
                    scenario_id=rec["scenario_id"],
                    quantity=rec["quantity"],
                    value=rec["value"],
                    std_error=rec["std_error"],
                    check=rec.get("check", ""),
                    passed=rec.get("pass"),
                )
            )
    scenario_id = rows[0].scenario_id if rows else "empty"
    return RunReport(scenario_id=scenario_id, rows=rows)
