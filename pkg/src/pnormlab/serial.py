"""JSON encoding of complex matrices as nested ``[re, im]`` pairs."""

from __future__ import annotations

import math

import numpy as np


def matrix_to_json(m) -> list:
    a = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(a)]


def vector_to_json(x) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(x, dtype=complex).ravel()]


def _entry(z) -> complex:
    if isinstance(z, (list, tuple)):
        if len(z) != 2:
            raise ValueError(f"complex entries must be [re, im] pairs, got {z!r}")
        return complex(float(z[0]), float(z[1]))
    return complex(float(z))


def matrix_from_json(data) -> np.ndarray:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise ValueError("matrix must be a non-empty list of rows")
    rows = [[_entry(z) for z in row] for row in data]
    if len({len(r) for r in rows}) != 1:
        raise ValueError("matrix rows have unequal lengths")
    return np.array(rows, dtype=complex)


def vector_from_json(data) -> np.ndarray:
    return np.array([_entry(z) for z in data], dtype=complex)


def real_matrix(data, shape=None) -> np.ndarray:
    a = np.array(data, dtype=float)
    if shape is not None and a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    return a


def order_to_json(p) -> float | str:
    p = float(getattr(p, "p", p))
    return "inf" if math.isinf(p) else p


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so ``json.dumps`` accepts them."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return matrix_to_json(obj) if obj.ndim == 2 else vector_to_json(obj)
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj
