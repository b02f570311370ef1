"""Software rasterizer for orthographic and perspective views.

Semantics are those of a per-pixel ray caster: for the orthographic
cameras every pixel center casts a ray along +z and keeps the nearest
(front) and farthest (back) triangle hits; the perspective renderer keeps
the nearest hit. Implementation rasterizes triangle bounding boxes with
edge functions, which visits exactly the same hit set.

Foreground coverage uses a half-open top-left fill rule so shared
triangle edges are hit exactly once; the front and back maps come from one
pass over one ray set, making their masks equal by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRender
from .geometry import (
    DepthMap,
    Mesh,
    NormalMap,
    OrthographicCamera,
    PerspectiveCamera,
    normalize_depth,
)


@dataclass
class OrthoHits:
    """Per-pixel nearest/farthest hits of the shared orthographic ray set."""

    z_near: np.ndarray  # (H,W) world z of nearest hit
    z_far: np.ndarray
    tri_near: np.ndarray  # (H,W) triangle index, -1 on background
    tri_far: np.ndarray
    bary_near: np.ndarray  # (H,W,3) barycentric coords of the hits
    bary_far: np.ndarray
    mask: np.ndarray


def _edge_coverage(px, py, tri_xy):
    """Signed-area barycentric weights of pixel centers against one 2D
    triangle, with a top-left rule for boundary pixels.

    px, py: (N,) pixel center coordinates. tri_xy: (3,2).
    Returns (inside (N,), bary (N,3)).
    """
    (x0, y0), (x1, y1), (x2, y2) = tri_xy
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if area == 0.0:
        return np.zeros(px.shape, dtype=bool), None
    # Orient consistently so the fill rule is winding-independent; the
    # barycentric columns are swapped back to input order afterwards.
    flipped = area < 0.0
    if flipped:
        (x1, y1), (x2, y2) = (x2, y2), (x1, y1)
        area = -area
    w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
    w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)

    def top_left(ax, ay, bx, by):
        # Edge from a to b in a frame where +y is up in world but rows grow
        # down; "top-left" here just needs any consistent tie-break.
        return (by - ay < 0) or (by == ay and bx - ax > 0)

    e0 = top_left(x1, y1, x2, y2)
    e1 = top_left(x2, y2, x0, y0)
    e2 = top_left(x0, y0, x1, y1)
    inside = (
        ((w0 > 0) | ((w0 == 0) & e0))
        & ((w1 > 0) | ((w1 == 0) & e1))
        & ((w2 > 0) | ((w2 == 0) & e2))
    )
    bary = np.stack([w0, w1, w2], axis=-1) / area
    if flipped:
        bary = bary[:, [0, 2, 1]]
    return inside, bary


def rasterize_ortho(mesh: Mesh, camera: OrthographicCamera) -> OrthoHits:
    """One pass over the shared orthographic ray set."""
    h, w = camera.resolution
    xs, ys = camera.pixel_centers()
    pitch_x, pitch_y = camera.pixel_pitch_xy

    z_near = np.full((h, w), np.inf)
    z_far = np.full((h, w), -np.inf)
    tri_near = np.full((h, w), -1, dtype=np.int64)
    tri_far = np.full((h, w), -1, dtype=np.int64)
    bary_near = np.zeros((h, w, 3))
    bary_far = np.zeros((h, w, 3))

    tris = mesh.triangles()
    x_min_frame, y_max_frame = xs[0] - 0.5 * pitch_x, ys[0] + 0.5 * pitch_y
    for t_idx in range(len(tris)):
        tri = tris[t_idx]
        txy = tri[:, :2]
        # Pixel-index bounding box of the triangle.
        c0 = int(np.floor((txy[:, 0].min() - x_min_frame) / pitch_x))
        c1 = int(np.ceil((txy[:, 0].max() - x_min_frame) / pitch_x))
        r0 = int(np.floor((y_max_frame - txy[:, 1].max()) / pitch_y))
        r1 = int(np.ceil((y_max_frame - txy[:, 1].min()) / pitch_y))
        c0, c1 = max(c0, 0), min(c1, w)
        r0, r1 = max(r0, 0), min(r1, h)
        if c0 >= c1 or r0 >= r1:
            continue
        px, py = np.meshgrid(xs[c0:c1], ys[r0:r1], indexing="xy")
        inside, bary = _edge_coverage(px.ravel(), py.ravel(), txy)
        if not inside.any():
            continue
        bary = bary[inside]
        z = bary @ tri[:, 2]
        rows, cols = np.divmod(np.nonzero(inside)[0], c1 - c0)
        rows += r0
        cols += c0

        nearer = z < z_near[rows, cols]
        if nearer.any():
            rn, cn = rows[nearer], cols[nearer]
            z_near[rn, cn] = z[nearer]
            tri_near[rn, cn] = t_idx
            bary_near[rn, cn] = bary[nearer]
        farther = z > z_far[rows, cols]
        if farther.any():
            rf, cf = rows[farther], cols[farther]
            z_far[rf, cf] = z[farther]
            tri_far[rf, cf] = t_idx
            bary_far[rf, cf] = bary[farther]

    mask = tri_near >= 0
    return OrthoHits(z_near, z_far, tri_near, tri_far, bary_near, bary_far, mask)


def render_depth_ortho(mesh: Mesh, camera: OrthographicCamera, side: str = "front") -> DepthMap:
    """Orthographic depth map of the nearest (front) or farthest (back)
    surface, both expressed in the front frame and normalized to (0,1)."""
    if side not in ("front", "back"):
        raise ValueError("side must be 'front' or 'back'")
    hits = rasterize_ortho(mesh, camera)
    if not hits.mask.any():
        raise EmptyRender("mesh does not cover any pixel")
    z = hits.z_near if side == "front" else hits.z_far
    values = np.zeros(hits.mask.shape)
    values[hits.mask] = normalize_depth(z[hits.mask])
    return DepthMap(values, hits.mask.copy())


def render_depth_pair(mesh: Mesh, camera: OrthographicCamera) -> tuple:
    """(front, back) depth maps from a single rasterization pass."""
    hits = rasterize_ortho(mesh, camera)
    if not hits.mask.any():
        raise EmptyRender("mesh does not cover any pixel")
    out = []
    for z in (hits.z_near, hits.z_far):
        values = np.zeros(hits.mask.shape)
        values[hits.mask] = normalize_depth(z[hits.mask])
        out.append(DepthMap(values, hits.mask.copy()))
    return out[0], out[1]


def _interpolate_vertex_attr(mesh: Mesh, attr: np.ndarray, tri_idx: np.ndarray, bary: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Barycentric interpolation of a per-vertex attribute at hit pixels."""
    h, w = mask.shape
    out = np.zeros((h, w, attr.shape[1]))
    rows, cols = np.nonzero(mask)
    corners = mesh.faces[tri_idx[rows, cols]]  # (N,3)
    vals = attr[corners]  # (N,3,C)
    out[rows, cols] = np.einsum("nk,nkc->nc", bary[rows, cols], vals)
    return out


def render_shadefree(mesh: Mesh, camera: OrthographicCamera, side: str = "front") -> tuple:
    """Albedo render: interpolated vertex color with no lighting term.

    Returns (image (H,W,3) in [0,1], mask). The ground-truth definition of
    a shade-removed image; invariant to any light set by construction.
    """
    if mesh.vertex_colors is None:
        raise ValueError("mesh has no vertex colors")
    hits = rasterize_ortho(mesh, camera)
    if not hits.mask.any():
        raise EmptyRender("mesh does not cover any pixel")
    tri_idx = hits.tri_near if side == "front" else hits.tri_far
    bary = hits.bary_near if side == "front" else hits.bary_far
    img = _interpolate_vertex_attr(mesh, mesh.vertex_colors, tri_idx, bary, hits.mask)
    return np.clip(img, 0.0, 1.0), hits.mask.copy()


def render_mesh_normals_ortho(mesh: Mesh, camera: OrthographicCamera, side: str = "front") -> NormalMap:
    """Face normal of the first (front) or last (back) hit per pixel.

    Meshes are assumed consistently outward-wound, so front hits carry
    n_z <= 0 and back hits n_z >= 0 in the shared frame.
    """
    hits = rasterize_ortho(mesh, camera)
    if not hits.mask.any():
        raise EmptyRender("mesh does not cover any pixel")
    tri_idx = hits.tri_near if side == "front" else hits.tri_far
    fn = mesh.face_normals()
    values = np.zeros(hits.mask.shape + (3,))
    rows, cols = np.nonzero(hits.mask)
    values[rows, cols] = fn[tri_idx[rows, cols]]
    return NormalMap(values, hits.mask.copy())


def render_perspective_image(mesh: Mesh, lights, camera: PerspectiveCamera) -> tuple:
    """Diffuse-shaded perspective render.

    Lambertian shading summed over the light set and clamped to [0,1];
    `lights` is a datagen.LightSet (or any object with a `lights` list of
    (direction, color) entries). Returns (image (H,W,3), mask).
    """
    if mesh.vertex_colors is None:
        raise ValueError("mesh has no vertex colors")
    h, w = camera.resolution
    right, up, forward = camera.basis()
    rel = mesh.vertices - camera.position
    xc = rel @ right
    yc = rel @ up
    zc = rel @ forward
    if (zc <= 1e-6).all():
        raise EmptyRender("mesh entirely behind the camera")

    f = camera.focal_px
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    # Guard points at/behind the eye plane; their triangles are skipped.
    z_safe = np.maximum(zc, 1e-6)
    px = cx + f * xc / z_safe
    py = cy - f * yc / z_safe
    screen = np.stack([px, py], axis=-1)

    if mesh.vertex_normals is None:
        mesh.compute_vertex_normals()

    # Per-vertex Lambertian radiance: albedo * sum_l max(0, -n.l) * color_l.
    shade = np.zeros((mesh.n_vertices, 3))
    for light in lights.lights:
        d = np.asarray(light["direction"], dtype=np.float64)
        lam = np.maximum(0.0, -(mesh.vertex_normals @ d))
        shade += lam[:, None] * np.asarray(light["color"], dtype=np.float64)
    radiance = np.clip(mesh.vertex_colors * shade, 0.0, 1.0)

    z_buf = np.full((h, w), np.inf)
    img = np.zeros((h, w, 3))
    mask = np.zeros((h, w), dtype=bool)
    for tri in mesh.faces:
        if (zc[tri] <= 1e-6).any():
            continue
        txy = screen[tri]
        c0 = max(int(np.floor(txy[:, 0].min())), 0)
        c1 = min(int(np.ceil(txy[:, 0].max())) + 1, w)
        r0 = max(int(np.floor(txy[:, 1].min())), 0)
        r1 = min(int(np.ceil(txy[:, 1].max())) + 1, h)
        if c0 >= c1 or r0 >= r1:
            continue
        pc, pr = np.meshgrid(np.arange(c0, c1, dtype=np.float64), np.arange(r0, r1, dtype=np.float64), indexing="xy")
        inside, bary = _edge_coverage(pc.ravel(), pr.ravel(), txy)
        if not inside.any():
            continue
        bary = bary[inside]
        # Perspective-correct interpolation.
        inv_z = 1.0 / zc[tri]
        denom = bary @ inv_z
        z = 1.0 / denom
        pw = bary * inv_z[None, :] / denom[:, None]
        rows, cols = np.divmod(np.nonzero(inside)[0], c1 - c0)
        rows += r0
        cols += c0
        nearer = z < z_buf[rows, cols]
        if not nearer.any():
            continue
        rn, cn = rows[nearer], cols[nearer]
        z_buf[rn, cn] = z[nearer]
        img[rn, cn] = pw[nearer] @ radiance[tri]
        mask[rn, cn] = True

    if not mask.any():
        raise EmptyRender("mesh does not cover any pixel")
    img[~mask] = 0.0
    return np.clip(img, 0.0, 1.0), mask
