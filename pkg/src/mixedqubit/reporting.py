"""Report containers and their schema-versioned JSON / CSV / TSV forms."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class BlockRow:
    """Per-irrep contribution to an optimal fidelity.

    ``v_axis`` is v^z for the 3D model and v^x for the 2D model.
    """

    twice_j: int
    n: int
    v0: float
    v_axis: float
    contribution: float
    R: float

    @property
    def j(self) -> float:
        return self.twice_j / 2


@dataclass(frozen=True)
class FidelityReport:
    model: str
    N: int
    prior: str
    per_block: tuple
    Delta: float
    F: float
    mode: str = "optimal"
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        axis = "vz" if self.model == "3d" else "vx"
        out = []
        for b in self.per_block:
            out.append({"row_type": "block", "model": self.model, "N": self.N,
                        "prior": self.prior, "mode": self.mode, "j": b.j, "n_j": b.n,
                        "v0": b.v0, axis: b.v_axis, "contribution": b.contribution,
                        "R": b.R, "Delta": None, "F": None})
        out.append({"row_type": "summary", "model": self.model, "N": self.N,
                    "prior": self.prior, "mode": self.mode, "j": None, "n_j": None,
                    "v0": None, axis: None, "contribution": None, "R": None,
                    "Delta": self.Delta, "F": self.F})
        return out

    def to_dict(self) -> dict:
        axis = "vz" if self.model == "3d" else "vx"
        return {
            "model": self.model, "N": self.N, "prior": self.prior, "mode": self.mode,
            "Delta": self.Delta, "F": self.F,
            "per_block": [{"j": b.j, "n_j": b.n, "v0": b.v0, axis: b.v_axis,
                           "contribution": b.contribution, "R": b.R}
                          for b in self.per_block],
            **({"extra": self.extra} if self.extra else {}),
        }


class FidelityReport3D(FidelityReport):
    pass


class FidelityReport2D(FidelityReport):
    pass


# --- documents -------------------------------------------------------------

DOCUMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "command", "parameters", "rows"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"type": "string"},
        "parameters": {"type": "object"},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["row_type"],
                "properties": {"row_type": {"enum": ["block", "summary", "point", "fit", "trial"]}},
            },
        },
    },
}


def make_document(command: str, parameters: dict, rows: list[dict]) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command,
            "parameters": parameters, "rows": rows}


def validate_document(doc: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` is not a valid report."""
    import jsonschema
    jsonschema.validate(doc, DOCUMENT_SCHEMA)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if hasattr(x, "item"):  # numpy scalar
        return _json_safe(x.item())
    return x


def to_json(doc: dict) -> str:
    # json writes floats with repr, so values round-trip exactly
    return json.dumps(_json_safe(doc), indent=2)


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def to_delimited(doc: dict, delimiter: str = ",") -> str:
    """Rows as CSV/TSV; a leading comment line records schema and command."""
    buf = io.StringIO()
    buf.write(f"# schema_version={doc['schema_version']} command={doc['command']}\n")
    rows = doc["rows"]
    cols = _columns(rows)
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def parse_delimited(text: str, delimiter: str = ",") -> dict:
    """Inverse of :func:`to_delimited`; numeric cells come back as int/float."""
    lines = text.splitlines()
    header = lines[0]
    if not header.startswith("# schema_version="):
        raise ValueError("missing schema header line")
    meta = dict(part.split("=", 1) for part in header[2:].split())
    reader = csv.reader(lines[1:], delimiter=delimiter)
    cols = next(reader)
    rows = []
    for rec in reader:
        row = {}
        for c, v in zip(cols, rec):
            row[c] = _parse_cell(v)
        rows.append(row)
    return {"schema_version": meta["schema_version"], "command": meta["command"],
            "parameters": {}, "rows": rows}


def _parse_cell(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def serialize(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(doc)
    if fmt == "csv":
        return to_delimited(doc, ",")
    if fmt == "tsv":
        return to_delimited(doc, "\t")
    raise ValueError(f"unknown format {fmt!r}")
