"""Triangle-mesh file ingestion (PLY, STL, OBJ) and deterministic PLY output.

Loaders are tolerant about extras (normals, colors, comments) but strict
about structure: malformed files fail with the byte offset of the problem,
and face indices are range-checked against the vertex count. STL's exploded
vertices are welded at exact coordinate equality only, so no geometry is
ever altered by loading. The PLY writer prints coordinates with repr-level
precision, so a written mesh reloads with bit-identical vertices.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IndexOutOfRange, IoError, MalformedFile, UnsupportedFormat
from .geometry import Mesh

_PLY_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_mesh(path) -> Mesh:
    """Load a PLY, STL or OBJ triangle mesh; polygons are fan-triangulated."""
    p = Path(path)
    if not p.is_file():
        raise IoError(f"mesh file not found: {p}")
    suffix = p.suffix.lower()
    if suffix == ".ply":
        return _load_ply(p)
    if suffix == ".stl":
        return _load_stl(p)
    if suffix == ".obj":
        return _load_obj(p)
    raise UnsupportedFormat(
        f"{p}: unsupported mesh format {suffix!r} (expected .ply, .stl or .obj)"
    )


def save_mesh(mesh: Mesh, path) -> Path:
    """Write an ascii PLY; coordinates round-trip exactly through reload."""
    p = Path(path)
    if p.suffix.lower() != ".ply":
        raise UnsupportedFormat(f"{p}: meshes are written as .ply only")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.faces.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for v in mesh.vertices:
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    try:
        p.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise IoError(f"cannot write mesh to {p}: {exc}") from exc
    return p


def _build_mesh(path: Path, verts: np.ndarray, face_lists) -> Mesh:
    n = verts.shape[0]
    tris = []
    for face_no, face in enumerate(face_lists):
        if len(face) < 3:
            raise MalformedFile(f"face {face_no} has fewer than 3 vertices", str(path))
        for v in face:
            if v < 0 or v >= n:
                raise IndexOutOfRange(
                    f"{path}: face {face_no} references vertex {v} but the file"
                    f" has {n} vertices"
                )
        for k in range(1, len(face) - 1):
            tris.append((face[0], face[k], face[k + 1]))
    faces = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    return Mesh(verts.astype(np.float64), faces)


# -- PLY ----------------------------------------------------------------------

def _load_ply(path: Path) -> Mesh:
    data = path.read_bytes()
    if not data.startswith(b"ply"):
        raise MalformedFile("missing 'ply' magic", str(path), 0)
    try:
        header_end = data.index(b"end_header")
    except ValueError:
        raise MalformedFile("missing 'end_header'", str(path), len(data)) from None
    header_end = data.index(b"\n", header_end) + 1
    header = data[:header_end].decode("ascii", errors="replace")

    fmt = None
    elements: list[tuple[str, int, list[tuple]]] = []
    for line in header.splitlines():
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise MalformedFile("property before any element", str(path), 0)
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1][2].append(("scalar", tokens[1], tokens[2]))
    if fmt == "ascii":
        return _parse_ply_ascii(path, data, header_end, elements)
    if fmt == "binary_little_endian":
        return _parse_ply_binary(path, data, header_end, elements)
    raise MalformedFile(
        f"unsupported PLY format {fmt!r} (ascii and binary_little_endian only)",
        str(path),
        0,
    )


def _vertex_axes(props) -> dict[str, int]:
    axes = {}
    for i, prop in enumerate(props):
        if prop[0] == "scalar" and prop[2] in ("x", "y", "z"):
            axes[prop[2]] = i
    if sorted(axes) != ["x", "y", "z"]:
        raise ValueError("vertex element lacks x/y/z properties")
    return axes


def _parse_ply_ascii(path, data, offset, elements) -> Mesh:
    body = data[offset:].decode("ascii", errors="replace")
    rows = body.splitlines()
    pos = 0
    verts = np.zeros((0, 3))
    faces: list[list[int]] = []
    for name, count, props in elements:
        if pos + count > len(rows):
            raise MalformedFile(
                f"element {name!r} declares {count} rows but the file ends early",
                str(path),
                len(data),
            )
        chunk = rows[pos : pos + count]
        pos += count
        if name == "vertex":
            axes = _vertex_axes(props)
            verts = np.empty((count, 3))
            for i, row in enumerate(chunk):
                tokens = row.split()
                if len(tokens) < len(props):
                    raise MalformedFile(f"vertex row {i} is short", str(path), offset)
                verts[i] = [
                    float(tokens[axes["x"]]),
                    float(tokens[axes["y"]]),
                    float(tokens[axes["z"]]),
                ]
        elif name == "face":
            for i, row in enumerate(chunk):
                tokens = row.split()
                if not tokens:
                    raise MalformedFile(f"face row {i} is empty", str(path), offset)
                n = int(tokens[0])
                if len(tokens) < 1 + n:
                    raise MalformedFile(f"face row {i} is short", str(path), offset)
                faces.append([int(t) for t in tokens[1 : 1 + n]])
    return _build_mesh(path, verts, faces)


def _parse_ply_binary(path, data, offset, elements) -> Mesh:
    verts = np.zeros((0, 3))
    faces: list[list[int]] = []
    for name, count, props in elements:
        all_scalar = all(p[0] == "scalar" for p in props)
        if all_scalar:
            dtype = np.dtype(
                [(f"f{i}", "<" + _PLY_SCALAR_TYPES[p[1]]) for i, p in enumerate(props)]
            )
            end = offset + dtype.itemsize * count
            if end > len(data):
                raise MalformedFile(
                    f"element {name!r} overruns the file", str(path), len(data)
                )
            table = np.frombuffer(data[offset:end], dtype=dtype)
            offset = end
            if name == "vertex":
                axes = _vertex_axes(props)
                verts = np.stack(
                    [table[f"f{axes[ax]}"].astype(np.float64) for ax in "xyz"], axis=1
                )
        else:
            # Variable-length rows (face lists): walk them sequentially.
            for i in range(count):
                row: list[int] = []
                for prop in props:
                    if prop[0] == "list":
                        count_t = "<" + _PLY_SCALAR_TYPES[prop[1]]
                        item_t = "<" + _PLY_SCALAR_TYPES[prop[2]]
                        csize = np.dtype(count_t).itemsize
                        if offset + csize > len(data):
                            raise MalformedFile(
                                f"{name} row {i} overruns the file", str(path), offset
                            )
                        n = int(np.frombuffer(data, count_t, 1, offset)[0])
                        offset += csize
                        isize = np.dtype(item_t).itemsize
                        if offset + isize * n > len(data):
                            raise MalformedFile(
                                f"{name} row {i} overruns the file", str(path), offset
                            )
                        values = np.frombuffer(data, item_t, n, offset)
                        offset += isize * n
                        if name == "face" and prop[3].startswith("vertex_ind"):
                            row = [int(v) for v in values]
                    else:
                        size = np.dtype(_PLY_SCALAR_TYPES[prop[1]]).itemsize
                        offset += size
                if name == "face":
                    faces.append(row)
    return _build_mesh(path, verts, faces)


# -- STL ----------------------------------------------------------------------

def _weld_exact(tri_verts: np.ndarray):
    """Merge vertices at exact coordinate equality only."""
    unique, inverse = np.unique(tri_verts, axis=0, return_inverse=True)
    return unique, inverse.reshape(-1, 3)


def _load_stl(path: Path) -> Mesh:
    data = path.read_bytes()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return _parse_stl_binary(path, data, count)
    if data[:5].lower() == b"solid":
        return _parse_stl_ascii(path, data)
    raise MalformedFile("not a valid binary or ascii STL", str(path), 0)


def _parse_stl_binary(path, data, count) -> Mesh:
    record = np.dtype(
        [("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2")]
    )
    table = np.frombuffer(data, record, count, 84)
    tri_verts = table["verts"].reshape(-1, 3).astype(np.float64)
    verts, faces = _weld_exact(tri_verts)
    return _build_mesh(path, verts, [list(f) for f in faces])


def _parse_stl_ascii(path, data) -> Mesh:
    tri_verts = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        line = raw.strip().lower()
        if line.startswith(b"vertex"):
            tokens = line.split()
            if len(tokens) != 4:
                raise MalformedFile("vertex line needs 3 coordinates", str(path), offset)
            try:
                tri_verts.append([float(t) for t in tokens[1:]])
            except ValueError:
                raise MalformedFile("bad vertex coordinate", str(path), offset) from None
        offset += len(raw)
    if len(tri_verts) % 3 != 0:
        raise MalformedFile(
            f"ascii STL has {len(tri_verts)} vertices, not a multiple of 3",
            str(path),
            offset,
        )
    arr = np.asarray(tri_verts, dtype=np.float64).reshape(-1, 3)
    verts, faces = _weld_exact(arr)
    return _build_mesh(path, verts, [list(f) for f in faces])


# -- OBJ ----------------------------------------------------------------------

def _load_obj(path: Path) -> Mesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    offset = 0
    data = path.read_bytes()
    for raw in data.splitlines(keepends=True):
        line = raw.strip()
        start = offset
        offset += len(raw)
        if not line or line.startswith(b"#"):
            continue
        tokens = line.split()
        tag = tokens[0]
        if tag == b"v":
            if len(tokens) < 4:
                raise MalformedFile("'v' record needs 3 coordinates", str(path), start)
            try:
                verts.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise MalformedFile("bad 'v' coordinate", str(path), start) from None
        elif tag == b"f":
            if len(tokens) < 4:
                raise MalformedFile("'f' record needs 3+ vertices", str(path), start)
            face = []
            for t in tokens[1:]:
                idx_text = t.split(b"/")[0]
                try:
                    idx = int(idx_text)
                except ValueError:
                    raise MalformedFile("bad 'f' index", str(path), start) from None
                # OBJ is 1-based; negatives count back from the current end.
                face.append(idx - 1 if idx > 0 else len(verts) + idx)
            faces.append(face)
    return _build_mesh(path, np.asarray(verts, dtype=np.float64).reshape(-1, 3), faces)
