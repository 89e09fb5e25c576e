"""Deterministic report serialization and the flat summary table.

Reports are JSON with sorted keys. Floats are written with 17 significant
digits, and non-finite values become the strings ``"inf"``, ``"-inf"`` and
``"nan"``. Nothing time- or host-dependent is recorded, so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import is_dataclass

import numpy as np

from . import SCHEMA_VERSION, __version__
from .checks import Verdict

SUMMARY_COLUMNS = (
    "N", "q", "eps", "m", "h", "c_f", "c_p", "C_t", "C_max", "C_n", "eps_hat",
    "solver_tol", "max_formula_rtol", "duality_rtol", "passed", "report",
)


class SchemaMismatch(ValueError):
    pass


def _float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, Verdict):
        return obj.to_dict()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if is_dataclass(obj):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent: int = 1, _level: int = 0) -> str:
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = ",\n".join(f"{pad}{json.dumps(k)}: {dumps(v, indent, _level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float, str, bool)) or v is None for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        body = ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def versions() -> dict:
    import scipy
    import sympy

    return {
        "maxwellconst": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
        "python": platform.python_version(),
    }


def build_report(kind: str, config: dict, results: dict, verdicts: list, rows: list) -> dict:
    failed = [v for v in verdicts if not v.passed]
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": config.get("seed", 0),
        "config": config,
        "versions": versions(),
        "results": results,
        "verdicts": [v.to_dict() for v in verdicts],
        "n_verdicts": len(verdicts),
        "n_failed": len(failed),
        "passed": not failed,
        "rows": rows,
    }


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        rep = json.load(fh)
    got = rep.get("schema_version")
    if got != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: report schema version {got!r}, this tool reads {SCHEMA_VERSION!r}")
    return rep


def summary_table(reports: list[tuple[str, dict]]) -> str:
    """Tab-separated rows of every report, sorted by (N, q, m), then eps and report name."""
    rows = []
    for name, rep in reports:
        for r in rep.get("rows", []):
            rows.append({**r, "report": name})
    rows.sort(key=lambda r: (r["N"], r["q"], r["m"], str(r["eps"]), r["report"]))
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        out = []
        for c in SUMMARY_COLUMNS:
            v = r.get(c)
            if isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append(_float(v).strip('"'))
            elif v is None:
                out.append("")
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def parse_table(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text), delimiter="\t"))
