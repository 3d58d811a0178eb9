"""Minimal binary little-endian PLY reader/writer.

Supports scalar vertex/face properties and the triangle face list
``property list uchar int vertex_indices``. Everything goes through numpy
structured arrays, so files are byte-reproducible.
"""
from __future__ import annotations

import os
from collections.abc import Mapping

import numpy as np

_PLY_TO_NUMPY = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}
_NUMPY_TO_PLY = {
    "i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
    "i4": "int", "u4": "uint", "f4": "float", "f8": "double",
}


class PlyError(ValueError):
    pass


def _ply_type(arr: np.ndarray) -> str:
    key = arr.dtype.str.lstrip("<>|=")
    try:
        return _NUMPY_TO_PLY[key]
    except KeyError:
        raise PlyError(f"unsupported dtype {arr.dtype}") from None


def write_ply(
    path: str | os.PathLike,
    vertex: Mapping[str, np.ndarray],
    faces: np.ndarray | None = None,
    face_props: Mapping[str, np.ndarray] | None = None,
    comments: tuple[str, ...] = (),
) -> None:
    """Write columns of ``vertex`` (and optional triangles) to a binary PLY file."""
    names = list(vertex)
    n = len(vertex[names[0]]) if names else 0
    for name in names:
        if len(vertex[name]) != n:
            raise PlyError(f"vertex property {name!r} has length {len(vertex[name])}, expected {n}")

    header = ["ply", "format binary_little_endian 1.0"]
    header += [f"comment {c}" for c in comments]
    header.append(f"element vertex {n}")
    vdtype = []
    for name in names:
        col = np.asarray(vertex[name])
        header.append(f"property {_ply_type(col)} {name}")
        vdtype.append((name, col.dtype.newbyteorder("<") if col.dtype.itemsize > 1 else col.dtype))
    vrec = np.empty(n, dtype=vdtype)
    for name in names:
        vrec[name] = vertex[name]

    frec = None
    if faces is not None:
        faces = np.asarray(faces, dtype="<i4").reshape(-1, 3)
        m = len(faces)
        header.append(f"element face {m}")
        header.append("property list uchar int vertex_indices")
        fdtype = [("count", "u1"), ("vertex_indices", "<i4", (3,))]
        props = dict(face_props or {})
        for name, col in props.items():
            col = np.asarray(col)
            if len(col) != m:
                raise PlyError(f"face property {name!r} has length {len(col)}, expected {m}")
            header.append(f"property {_ply_type(col)} {name}")
            fdtype.append((name, col.dtype.newbyteorder("<") if col.dtype.itemsize > 1 else col.dtype))
        frec = np.empty(m, dtype=fdtype)
        frec["count"] = 3
        frec["vertex_indices"] = faces
        for name, col in props.items():
            frec[name] = col
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(vrec.tobytes())
        if frec is not None:
            fh.write(frec.tobytes())


def read_ply(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None]:
    """Read a file written by :func:`write_ply`.

    Returns ``(vertex_columns, face_columns)``; face columns contain
    ``vertex_indices`` as an ``(M, 3)`` array, or ``None`` without faces.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise PlyError(f"{path}: not a PLY file")
    lines = data[:end].decode("ascii").splitlines()
    body = memoryview(data)[end + len(b"end_header\n"):]

    elements: list[tuple[str, int, list]] = []
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] != "binary_little_endian":
                raise PlyError(f"{path}: only binary_little_endian is supported")
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyError(f"{path}: property before element")
            if parts[1] == "list":
                if parts[2] not in ("uchar", "uint8"):
                    raise PlyError(f"{path}: unsupported list count type {parts[2]}")
                elements[-1][2].append(("__count", "u1"))
                elements[-1][2].append((parts[4], _PLY_TO_NUMPY[parts[3]], (3,)))
            else:
                elements[-1][2].append((parts[2], _PLY_TO_NUMPY[parts[1]]))

    offset = 0
    out: dict[str, dict[str, np.ndarray]] = {}
    for name, count, dtype in elements:
        dt = np.dtype(dtype)
        nbytes = dt.itemsize * count
        if offset + nbytes > len(body):
            raise PlyError(f"{path}: truncated element {name!r}")
        rec = np.frombuffer(body[offset:offset + nbytes], dtype=dt, count=count)
        offset += nbytes
        if "__count" in dt.names and count and np.any(rec["__count"] != 3):
            raise PlyError(f"{path}: only triangle faces are supported")
        out[name] = {k: np.array(rec[k]) for k in dt.names if k != "__count"}
    return out.get("vertex", {}), out.get("face")
