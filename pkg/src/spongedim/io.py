"""JSON and CSV reading and writing.

Spec files look like ``{"d": 3, "tree": [{"ratio": r, "offset": u, "children": [...]}, ...]}``.
Offsets may be left out for a whole sibling group, which is then left-packed.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .measures import ProbVector
from .model import AlphabetNode, SpongeSpec, left_pack


class SpecFormatError(ValueError):
    """A spec file that cannot be turned into a :class:`SpongeSpec`."""

    def __init__(self, path: Sequence[int], constraint: str, message: str, values: Sequence[Any] = ()):
        super().__init__(message)
        self.path = list(path)
        self.constraint = constraint
        self.values = list(values)

    def to_dict(self) -> dict:
        return {"path": self.path, "constraint": self.constraint, "message": str(self), "values": self.values}


# --- specs -------------------------------------------------------------


def _number(x, path, field):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SpecFormatError(path, "type", f"{field} must be a number", [repr(x)])
    x = float(x)
    if not math.isfinite(x):
        raise SpecFormatError(path, "type", f"{field} must be finite", [repr(x)])
    return x


def _nodes_from(items, prefix: tuple[int, ...]) -> tuple[AlphabetNode, ...]:
    if not isinstance(items, list):
        raise SpecFormatError(prefix, "type", "children must be a list", [type(items).__name__])
    nodes = []
    has_offset = []
    for i, item in enumerate(items):
        path = prefix + (i,)
        if not isinstance(item, dict):
            raise SpecFormatError(path, "type", "node must be an object", [type(item).__name__])
        if "ratio" not in item:
            raise SpecFormatError(path, "schema", "node has no ratio")
        ratio = _number(item["ratio"], path, "ratio")
        has_offset.append("offset" in item)
        offset = _number(item["offset"], path, "offset") if "offset" in item else 0.0
        kids = _nodes_from(item.get("children", []), path)
        nodes.append(AlphabetNode(ratio, offset, kids))
    if any(has_offset) and not all(has_offset):
        raise SpecFormatError(prefix, "schema", "offsets given for some siblings only")
    if nodes and not any(has_offset):
        return left_pack(nodes)
    return tuple(nodes)


def spec_from_dict(data: Any) -> SpongeSpec:
    if not isinstance(data, dict):
        raise SpecFormatError([], "type", "spec must be an object")
    for key in ("d", "tree"):
        if key not in data:
            raise SpecFormatError([], "schema", f"missing key {key!r}")
    d = data["d"]
    if isinstance(d, bool) or not isinstance(d, int) or d < 2:
        raise SpecFormatError([], "schema", "d must be an integer >= 2", [repr(d)])
    return SpongeSpec(d, _nodes_from(data["tree"], ()))


def spec_to_dict(spec: SpongeSpec) -> dict:
    def node(n: AlphabetNode) -> dict:
        return {"ratio": n.ratio, "offset": n.offset, "children": [node(c) for c in n.children]}

    return {"d": spec.d, "tree": [node(n) for n in spec.tree]}


def load_spec(path: str | Path) -> SpongeSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecFormatError([], "file", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFormatError([], "json", f"invalid JSON: {exc.msg}", [exc.lineno, exc.colno]) from exc
    return spec_from_dict(data)


def dump_spec(spec: SpongeSpec) -> str:
    # repr of a float is its shortest round-trip decimal, so load(dump(s)) == s bit for bit
    return json.dumps(spec_to_dict(spec), indent=2) + "\n"


# --- probability vectors ---------------------------------------------


def probvector_to_json(p: ProbVector) -> str:
    return json.dumps(p.to_mapping(), indent=2) + "\n"


def probvector_from_json(spec: SpongeSpec, text: str) -> ProbVector:
    return ProbVector.from_mapping(spec, json.loads(text))


# --- generic JSON ------------------------------------------------------


def jsonable(obj: Any) -> Any:
    """Replace numpy scalars and arrays and non-finite floats (-> null) recursively."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2) + "\n"


# --- CSV tables --------------------------------------------------------


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def boxes_csv(corners: np.ndarray, edges: np.ndarray) -> str:
    d = corners.shape[1]
    header = [f"corner_{i}" for i in range(1, d + 1)] + [f"edge_{i}" for i in range(1, d + 1)]
    return _csv_text(header, (list(c) + list(e) for c, e in zip(corners, edges)))


def sweep_csv(report) -> str:
    """One row per ``(eps, seed)`` cell, including the unperturbed row."""
    header = ["epsilon", "seed", "vp", "deviation", "realized_eps", "converged"]
    return _csv_text(
        header,
        ([r.epsilon, r.seed, r.vp, r.deviation, r.realized_eps, int(r.converged)] for r in report.rows),
    )


def max_deviation_csv(report) -> str:
    return _csv_text(["epsilon", "max_deviation"], report.max_deviations())


def read_csv_rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
