"""JSON reading and writing for measures, polygons and reports."""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry, EmptyInterior, InvalidInput
from .geometry import ConvexPolygon, DiscreteMeasure, build_measure, measure_from_angles


class InputFileError(InvalidInput):
    """Unreadable or malformed input file; the message carries the location."""


def read_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputFileError(f"{path}: cannot read file ({e.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputFileError(f"{path}:{e.lineno}:{e.colno}: malformed JSON ({e.msg})") from None


def _number_list(obj: dict, key: str, source, width: int | None = None) -> np.ndarray:
    if key not in obj:
        raise InputFileError(f"{source}: missing field '{key}'")
    val = obj[key]
    if not isinstance(val, list) or not val:
        raise InputFileError(f"{source}: field '{key}' must be a non-empty list")
    for i, item in enumerate(val):
        entries = item if width else [item]
        if width and (not isinstance(item, list) or len(item) != width):
            raise InputFileError(f"{source}: field '{key}[{i}]' must be a list of {width} numbers")
        for x in entries:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise InputFileError(f"{source}: field '{key}[{i}]' holds a non-numeric or non-finite value")
    return np.asarray(val, dtype=float)


def parse_measure(obj, source="<measure>") -> DiscreteMeasure:
    """``{"normals": [[x, y], ...], "weights": [...]}`` or ``{"angles": [...], "weights": [...]}``."""
    if not isinstance(obj, dict):
        raise InputFileError(f"{source}: top level must be an object")
    w = _number_list(obj, "weights", source)
    if "normals" in obj:
        n = _number_list(obj, "normals", source, width=2)
    elif "angles" in obj:
        a = _number_list(obj, "angles", source)
        if len(a) != len(w):
            raise InputFileError(f"{source}: 'angles' and 'weights' differ in length")
        return measure_from_angles(a, w)
    else:
        raise InputFileError(f"{source}: needs a 'normals' or an 'angles' field")
    if len(n) != len(w):
        raise InputFileError(f"{source}: 'normals' and 'weights' differ in length")
    return build_measure(n, w)


def parse_polygon(obj, source="<polygon>") -> ConvexPolygon:
    if not isinstance(obj, dict):
        raise InputFileError(f"{source}: top level must be an object")
    v = _number_list(obj, "vertices", source, width=2)
    try:
        return ConvexPolygon.from_vertices(v)
    except (InvalidInput, EmptyInterior, DegenerateGeometry) as e:
        raise InputFileError(f"{source}: field 'vertices': {e}") from None


def read_measure(path) -> DiscreteMeasure:
    return parse_measure(read_json(path), path)


def read_polygon(path) -> ConvexPolygon:
    return parse_polygon(read_json(path), path)


def measure_to_json(m: DiscreteMeasure) -> dict:
    return {"normals": m.normals.tolist(), "weights": m.weights.tolist()}


def polygon_to_json(P: ConvexPolygon) -> dict:
    return {"vertices": P.vertices.tolist()}


def sanitize(x):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(x, dict):
        return {str(k): sanitize(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sanitize(v) for v in x]
    if isinstance(x, np.ndarray):
        return sanitize(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def dumps(obj) -> str:
    # repr-based float formatting is the shortest string that round-trips
    return json.dumps(sanitize(obj), indent=2, allow_nan=False) + "\n"


def write_text(text: str, path=None) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def write_json(obj, path=None) -> None:
    write_text(dumps(obj), path)
