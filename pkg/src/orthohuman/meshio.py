"""Mesh and map file I/O.

Meshes: OBJ (with the common `v x y z r g b` color extension) and PLY,
ASCII or binary little-endian, with per-vertex uchar RGB. Depth and
normal maps: PFM (float32 little-endian, bottom-up scanlines per the
format). Depth additionally exports to 16-bit PNG with the fixed scale
value = round(depth_norm * 65535); masks are 8-bit PNGs (255 = fg).
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import cv2
import numpy as np

from .errors import BadImage
from .geometry import Mesh


# ---------------------------------------------------------------- meshes

def save_obj(path, mesh: Mesh) -> None:
    path = Path(path)
    with path.open("w") as f:
        f.write("# orthohuman mesh\n")
        if mesh.vertex_colors is not None:
            for v, c in zip(mesh.vertices, mesh.vertex_colors):
                f.write(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g} {c[0]:.6g} {c[1]:.6g} {c[2]:.6g}\n")
        else:
            for v in mesh.vertices:
                f.write(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g}\n")
        for tri in mesh.faces:
            f.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")


def load_obj(path) -> Mesh:
    verts, colors, faces = [], [], []
    with Path(path).open() as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vals = [float(x) for x in parts[1:]]
                verts.append(vals[:3])
                if len(vals) >= 6:
                    colors.append(vals[3:6])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return Mesh(
        np.asarray(verts, dtype=np.float64),
        np.asarray(faces, dtype=np.int64) if faces else np.zeros((0, 3), dtype=np.int64),
        np.asarray(colors, dtype=np.float64) if len(colors) == len(verts) and colors else None,
    )


def save_ply(path, mesh: Mesh, binary: bool = True) -> None:
    path = Path(path)
    has_color = mesh.vertex_colors is not None
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {mesh.n_vertices}")
    header += ["property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append(f"element face {mesh.n_faces}")
    header.append("property list uchar int vertex_indices")
    header.append("end_header")

    if has_color:
        rgb = np.clip(np.round(mesh.vertex_colors * 255.0), 0, 255).astype(np.uint8)

    if binary:
        with path.open("wb") as f:
            f.write(("\n".join(header) + "\n").encode("ascii"))
            for i in range(mesh.n_vertices):
                f.write(struct.pack("<fff", *mesh.vertices[i]))
                if has_color:
                    f.write(struct.pack("<BBB", *rgb[i]))
            for tri in mesh.faces:
                f.write(struct.pack("<Biii", 3, int(tri[0]), int(tri[1]), int(tri[2])))
    else:
        with path.open("w") as f:
            f.write("\n".join(header) + "\n")
            for i in range(mesh.n_vertices):
                v = mesh.vertices[i]
                if has_color:
                    c = rgb[i]
                    f.write(f"{v[0]:.8g} {v[1]:.8g} {v[2]:.8g} {c[0]} {c[1]} {c[2]}\n")
                else:
                    f.write(f"{v[0]:.8g} {v[1]:.8g} {v[2]:.8g}\n")
            for tri in mesh.faces:
                f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")


def load_ply(path) -> Mesh:
    path = Path(path)
    with path.open("rb") as f:
        data = f.read()
    end = data.find(b"end_header")
    if end < 0:
        raise ValueError("not a PLY file")
    header_bytes = data[: end + len(b"end_header")]
    body = data[end + len(b"end_header") :].lstrip(b"\n")
    header = header_bytes.decode("ascii").splitlines()

    fmt = None
    n_vert = n_face = 0
    vert_props = []
    current = None
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vert = int(parts[2])
            elif current == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            vert_props.append((parts[-1], parts[1]))

    names = [n for n, _ in vert_props]
    has_color = "red" in names
    type_map = {"float": ("f", 4), "float32": ("f", 4), "double": ("d", 8), "uchar": ("B", 1), "uint8": ("B", 1)}

    if fmt == "ascii":
        lines = body.decode("ascii").splitlines()
        vert_lines, face_lines = lines[:n_vert], lines[n_vert : n_vert + n_face]
        verts = np.zeros((n_vert, 3))
        colors = np.zeros((n_vert, 3)) if has_color else None
        for i, line in enumerate(vert_lines):
            vals = line.split()
            rec = dict(zip(names, vals))
            verts[i] = [float(rec["x"]), float(rec["y"]), float(rec["z"])]
            if has_color:
                colors[i] = [int(rec["red"]) / 255.0, int(rec["green"]) / 255.0, int(rec["blue"]) / 255.0]
        faces = []
        for line in face_lines:
            vals = [int(x) for x in line.split()]
            idx = vals[1 : 1 + vals[0]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    elif fmt == "binary_little_endian":
        fmt_str = "<" + "".join(type_map[t][0] for _, t in vert_props)
        rec_size = struct.calcsize(fmt_str)
        verts = np.zeros((n_vert, 3))
        colors = np.zeros((n_vert, 3)) if has_color else None
        off = 0
        for i in range(n_vert):
            rec = dict(zip(names, struct.unpack_from(fmt_str, body, off)))
            verts[i] = [rec["x"], rec["y"], rec["z"]]
            if has_color:
                colors[i] = [rec["red"] / 255.0, rec["green"] / 255.0, rec["blue"] / 255.0]
            off += rec_size
        faces = []
        for _ in range(n_face):
            (count,) = struct.unpack_from("<B", body, off)
            off += 1
            idx = struct.unpack_from(f"<{count}i", body, off)
            off += 4 * count
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    else:
        raise ValueError(f"unsupported PLY format: {fmt}")

    return Mesh(
        verts,
        np.asarray(faces, dtype=np.int64) if faces else np.zeros((0, 3), dtype=np.int64),
        colors,
    )


def save_mesh(path, mesh: Mesh) -> None:
    """Dispatch on extension: .obj or .ply (binary)."""
    path = Path(path)
    if path.suffix.lower() == ".obj":
        save_obj(path, mesh)
    elif path.suffix.lower() == ".ply":
        save_ply(path, mesh, binary=True)
    else:
        raise ValueError(f"unsupported mesh format: {path.suffix}")


def load_mesh(path) -> Mesh:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return load_obj(path)
    if path.suffix.lower() == ".ply":
        return load_ply(path)
    raise ValueError(f"unsupported mesh format: {path.suffix}")


# ------------------------------------------------------------------ maps

def save_pfm(path, data: np.ndarray) -> None:
    """float32 little-endian PFM; data is (H,W) or (H,W,3), row 0 = top."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 3 and data.shape[2] == 3:
        header = "PF"
    elif data.ndim == 2:
        header = "Pf"
    else:
        raise ValueError("PFM supports (H,W) or (H,W,3) arrays")
    h, w = data.shape[:2]
    with Path(path).open("wb") as f:
        f.write(f"{header}\n{w} {h}\n-1.0\n".encode("ascii"))  # negative scale = little endian
        f.write(np.flipud(data).tobytes())  # PFM scanlines run bottom-up


def load_pfm(path) -> np.ndarray:
    with Path(path).open("rb") as f:
        header = f.readline().decode("ascii").strip()
        if header not in ("PF", "Pf"):
            raise ValueError("not a PFM file")
        dims = f.readline().decode("ascii")
        m = re.match(r"^(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError("malformed PFM dimensions")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode("ascii").strip())
        endian = "<" if scale < 0 else ">"
        count = w * h * (3 if header == "PF" else 1)
        data = np.frombuffer(f.read(count * 4), dtype=endian + "f4", count=count)
    shape = (h, w, 3) if header == "PF" else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32).copy()


def save_image(path, image: np.ndarray) -> None:
    """8-bit sRGB PNG from [0,1] float RGB (or grayscale)."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    u8 = np.round(img * 255.0).astype(np.uint8)
    if u8.ndim == 3:
        u8 = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), u8):
        raise OSError(f"failed to write {path}")


def load_image(path) -> np.ndarray:
    """[0,1] float RGB from an 8-bit image file."""
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise BadImage(f"cannot decode image: {path}")
    return cv2.cvtColor(raw, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def save_mask(path, mask: np.ndarray) -> None:
    if not cv2.imwrite(str(path), np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)):
        raise OSError(f"failed to write {path}")


def load_mask(path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise BadImage(f"cannot decode mask: {path}")
    return raw >= 128


def save_depth_png16(path, depth_norm: np.ndarray) -> None:
    """16-bit PNG export: value = round(depth_norm * 65535)."""
    d = np.clip(np.asarray(depth_norm, dtype=np.float64), 0.0, 1.0)
    if not cv2.imwrite(str(path), np.round(d * 65535.0).astype(np.uint16)):
        raise OSError(f"failed to write {path}")


def load_depth_png16(path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise BadImage(f"cannot decode depth png: {path}")
    return raw.astype(np.float64) / 65535.0
