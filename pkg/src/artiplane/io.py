"""File formats: ASCII PLY meshes/clouds, P5 PGM masks, raw float32 depth.

All writers are deterministic: the same value always serializes to the
same bytes, so exports can be checksummed and compared across runs.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .core import BinaryMask, DepthMap, PointCloud, TriMesh
from .errors import ContractViolation


def _fmt(x: float) -> str:
    # repr() of a Python float is the shortest round-tripping decimal.
    return repr(float(x))


def save_mesh_ply(mesh: TriMesh, path) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.vertices.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "property int part_id",
        "end_header",
    ]
    for v in mesh.vertices:
        lines.append(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    for f, p in zip(mesh.faces, mesh.face_part_id):
        lines.append(f"3 {f[0]} {f[1]} {f[2]} {p}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh_ply(path) -> TriMesh:
    verts, faces, parts = _parse_ply(path, want_faces=True)
    return TriMesh(verts, faces, parts)


def save_cloud_ply(cloud: PointCloud, path) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if cloud.pixel_index is not None:
        lines.append("property int64 pixel_index")
    lines.append("end_header")
    if cloud.pixel_index is not None:
        for p, i in zip(cloud.points, cloud.pixel_index):
            lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} {i}")
    else:
        for p in cloud.points:
            lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_cloud_ply(path) -> PointCloud:
    verts, _, extra = _parse_ply(path, want_faces=False)
    return PointCloud(verts, extra)


def _parse_ply(path, want_faces: bool):
    """Minimal ASCII PLY reader covering the subset this package writes."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ContractViolation(f"{path}: not a PLY file")
    n_vert = n_face = 0
    vert_props: list[str] = []
    in_vertex = False
    i = 1
    while i < len(text):
        tok = text[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ContractViolation(f"{path}: only ascii PLY is supported")
        if tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if tok[1] == "vertex":
                n_vert = int(tok[2])
            elif tok[1] == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and in_vertex and tok[1] != "list":
            vert_props.append(tok[2])
        elif tok[0] == "end_header":
            break
    body = text[i:]
    vrows = [body[k].split() for k in range(n_vert)]
    verts = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in vrows])
    pixel_index: Optional[np.ndarray] = None
    if "pixel_index" in vert_props:
        col = vert_props.index("pixel_index")
        pixel_index = np.array([int(r[col]) for r in vrows], dtype=np.int64)
    if not want_faces:
        return verts, None, pixel_index
    faces = np.zeros((n_face, 3), dtype=np.int64)
    parts = np.zeros(n_face, dtype=np.int64)
    for k in range(n_face):
        r = body[n_vert + k].split()
        if r[0] != "3":
            raise ContractViolation(f"{path}: only triangle faces are supported")
        faces[k] = [int(r[1]), int(r[2]), int(r[3])]
        parts[k] = int(r[4]) if len(r) > 4 else 0
    return verts, faces, parts


def save_depth(depth: DepthMap, path) -> None:
    """Write row-major little-endian float32 plus a {width, height} sidecar."""
    path = Path(path)
    h, w = depth.shape
    data = depth.values.astype("<f4").tobytes(order="C")
    path.write_bytes(data)
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps({"width": w, "height": h}) + "\n"
    )


def load_depth(path) -> DepthMap:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    w, h = meta["width"], meta["height"]
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if raw.size != w * h:
        raise ContractViolation(f"{path}: size does not match sidecar dimensions")
    return DepthMap(raw.reshape(h, w))


def save_mask_pgm(mask: BinaryMask, path) -> None:
    """Binary PGM (P5), 0 = unset, 255 = set."""
    h, w = mask.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.values * 255).astype(np.uint8).tobytes())


def load_mask_pgm(path) -> BinaryMask:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ContractViolation(f"{path}: not a P5 PGM")
    # Header: magic, width, height, maxval, then a single whitespace byte.
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1
    w, h, maxval = (int(f) for f in fields)
    pix = np.frombuffer(raw[pos : pos + w * h], dtype=np.uint8).reshape(h, w)
    return BinaryMask((pix > maxval // 2).astype(np.uint8))


def save_int_grid(grid: np.ndarray, path) -> None:
    """Row-major little-endian int32 grid with a {width, height} sidecar."""
    path = Path(path)
    h, w = grid.shape
    path.write_bytes(grid.astype("<i4").tobytes(order="C"))
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps({"width": w, "height": h}) + "\n"
    )


def load_int_grid(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    w, h = meta["width"], meta["height"]
    return np.frombuffer(path.read_bytes(), dtype="<i4").reshape(h, w).astype(np.int32)


def write_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
