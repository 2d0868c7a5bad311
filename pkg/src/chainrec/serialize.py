"""JSON formats for complexes, vertex maps and sampled maps.

Rationals are written as "p/q" strings.  On input, "p/q" strings, decimal
strings and JSON numbers are all accepted (numbers are read through their
decimal text, so 0.1 means 1/10).

Complex:     {"vertices": [["0/1", "0/1"], ...], "maximal_simplices": [[0, 1, 2], ...]}
Vertex map:  {"source": "K2.json", "target": "K1.json", "assignment": [0, 1, ...]}
             (paths relative to the map file; inline complex objects also accepted)
Sampled map: {"delta": "1/100", "points": [[...], ...], "images": [[...], ...]}
"""
from __future__ import annotations

import json
import os
from fractions import Fraction

import numpy as np

from .complex import SimplicialComplex, VertexMap, close_complex
from .errors import FormatError
from .net import Net, SampledMap


def rational_str(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(value) -> Fraction:
    if isinstance(value, bool):
        raise FormatError(f"not a rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"not a rational: {value!r}") from None
    raise FormatError(f"not a rational: {value!r}")


def _point(row) -> tuple:
    if not isinstance(row, (list, tuple)):
        raise FormatError(f"expected a coordinate list, got {row!r}")
    return tuple(parse_rational(c) for c in row)


def _require(obj, *keys):
    if not isinstance(obj, dict):
        raise FormatError("expected a JSON object")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise FormatError(f"missing field(s): {', '.join(missing)}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from None


def complex_to_json(K: SimplicialComplex) -> dict:
    return {
        "vertices": [[rational_str(c) for c in v] for v in K.vertices],
        "maximal_simplices": [list(s) for s in K.maximal],
    }


def complex_from_json(obj) -> SimplicialComplex:
    _require(obj, "vertices", "maximal_simplices")
    verts = [_point(v) for v in obj["vertices"]]
    simplices = obj["maximal_simplices"]
    if not isinstance(simplices, list) or not all(
        isinstance(s, list) and all(isinstance(i, int) and not isinstance(i, bool) for i in s) for s in simplices
    ):
        raise FormatError("maximal_simplices must be a list of integer lists")
    return close_complex(simplices, verts)


def read_complex(path) -> SimplicialComplex:
    return complex_from_json(read_json(path))


def write_complex(path, K: SimplicialComplex):
    write_json(path, complex_to_json(K))


def vertex_map_to_json(m: VertexMap, source=None, target=None) -> dict:
    """``source``/``target`` are paths to reference; complexes are inlined otherwise."""
    return {
        "source": source if source is not None else complex_to_json(m.source),
        "target": target if target is not None else complex_to_json(m.target),
        "assignment": list(m.assignment),
    }


def _complex_ref(ref, base_dir):
    if isinstance(ref, str):
        return read_complex(os.path.join(base_dir, ref))
    return complex_from_json(ref)


def vertex_map_from_json(obj, base_dir=".") -> VertexMap:
    _require(obj, "source", "target", "assignment")
    assignment = obj["assignment"]
    if not isinstance(assignment, list) or not all(isinstance(a, int) and not isinstance(a, bool) for a in assignment):
        raise FormatError("assignment must be a list of integers")
    return VertexMap(_complex_ref(obj["source"], base_dir), _complex_ref(obj["target"], base_dir), assignment)


def read_vertex_map(path) -> VertexMap:
    return vertex_map_from_json(read_json(path), os.path.dirname(os.path.abspath(path)))


def write_vertex_map(path, m: VertexMap, source=None, target=None):
    write_json(path, vertex_map_to_json(m, source, target))


def sampled_map_to_json(f: SampledMap) -> dict:
    net = f.net
    if net.exact is not None:
        points = [[rational_str(c) for c in p] for p in net.exact]
    else:
        points = [[rational_str(Fraction(float(c))) for c in p] for p in net.points]
    if f.images_exact is not None:
        images = [[rational_str(c) for c in y] for y in f.images_exact]
    else:
        images = [[rational_str(Fraction(float(c))) for c in y] for y in f.images]
    return {"delta": rational_str(net.delta), "points": points, "images": images}


def sampled_map_from_json(obj, complex: SimplicialComplex | None = None) -> SampledMap:
    _require(obj, "delta", "points", "images")
    points = [_point(p) for p in obj["points"]]
    images = [_point(y) for y in obj["images"]]
    if len(points) != len(images):
        raise FormatError("points and images differ in length")
    if not points:
        raise FormatError("a sampled map needs at least one point")
    dims = {len(p) for p in points} | {len(y) for y in images}
    if len(dims) != 1:
        raise FormatError("points and images have mixed dimensions")
    if len(set(points)) != len(points):
        raise FormatError("net points repeat")
    delta = parse_rational(obj["delta"])
    if delta <= 0:
        raise FormatError("delta must be positive")
    coords = np.array([[float(c) for c in p] for p in points], dtype=float)
    net = Net(coords, delta, tuple(points), None, complex)
    return SampledMap(net, [[float(c) for c in y] for y in images], tuple(images))


def read_sampled_map(path, complex: SimplicialComplex | None = None) -> SampledMap:
    return sampled_map_from_json(read_json(path), complex)


def write_sampled_map(path, f: SampledMap):
    write_json(path, sampled_map_to_json(f))


def read_map(path, complex: SimplicialComplex | None = None):
    """A vertex map or a sampled map, whichever the file holds."""
    obj = read_json(path)
    if isinstance(obj, dict) and "assignment" in obj:
        return vertex_map_from_json(obj, os.path.dirname(os.path.abspath(path)))
    return sampled_map_from_json(obj, complex)


def read_weights(path, n: int) -> np.ndarray:
    obj = read_json(path)
    if isinstance(obj, dict):
        obj = obj.get("weights")
    if not isinstance(obj, list) or len(obj) != n:
        raise FormatError(f"weights must be a list of {n} numbers")
    return np.array([float(parse_rational(w)) for w in obj])
