"""Flat key-value text format for parameter tensors.

Layout, one record per line, in this order::

    # koopspec v1
    @<meta-key> <value>            (meta entries, in insertion order)
    <tensor-key> <shape> <values>  (tensors, in insertion order)

``<shape>`` is the comma-joined dimension list (``-`` for a scalar) and
``<values>`` are the row-major entries separated by single spaces, each
written with ``repr`` so that a dump/load round trip is exact. Keys never
contain whitespace. Files end with a single newline.
"""

from __future__ import annotations

import numpy as np

HEADER = "# koopspec v1"


class FormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(meta: dict[str, object], tensors: dict[str, np.ndarray]) -> str:
    lines = [HEADER]
    for key, value in meta.items():
        _check_key(key)
        text = str(value)
        if "\n" in text:
            raise FormatError(f"meta value for {key!r} contains a newline")
        lines.append(f"@{key} {text}")
    for key, arr in tensors.items():
        _check_key(key)
        arr = np.asarray(arr, dtype=np.float64)
        shape = ",".join(str(n) for n in arr.shape) if arr.ndim else "-"
        values = " ".join(_fmt(v) for v in arr.ravel())
        lines.append(f"{key} {shape} {values}".rstrip())
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise FormatError("missing format header")
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("@"):
            key, _, value = line[1:].partition(" ")
            meta[key] = value
            continue
        parts = line.split(" ")
        if len(parts) < 2:
            raise FormatError(f"line {lineno}: malformed tensor record")
        key, shape_txt, values = parts[0], parts[1], parts[2:]
        shape = () if shape_txt == "-" else tuple(int(n) for n in shape_txt.split(","))
        expected = int(np.prod(shape)) if shape else 1
        if len(values) != expected:
            raise FormatError(
                f"line {lineno}: {key} expects {expected} values, found {len(values)}"
            )
        tensors[key] = np.array([float(v) for v in values], dtype=np.float64).reshape(shape)
    return meta, tensors


def _check_key(key: str) -> None:
    if not key or any(c.isspace() for c in key):
        raise FormatError(f"invalid key {key!r}")
