"""Analytic test shapes: box, sphere, capsule, plane.

All constructors emit consistently outward-wound triangles centered on
the origin, sized to sit well inside the default orthographic frame and
depth box. Used by the demos, the toy training set and the test suite.
"""

from __future__ import annotations

import numpy as np

from .geometry import Mesh, rotate_mesh_y


def _with_colors(mesh: Mesh, color) -> Mesh:
    if color is not None:
        mesh.vertex_colors = np.tile(np.asarray(color, dtype=np.float64), (mesh.n_vertices, 1))
    return mesh


def make_box(size=(0.4, 0.8, 0.3), center=(0.0, 0.0, 0.0), color=(0.8, 0.6, 0.5)) -> Mesh:
    """Axis-aligned box; size = (x, y, z) extents in meters."""
    sx, sy, sz = np.asarray(size, dtype=np.float64) / 2.0
    cx, cy, cz = center
    v = np.array(
        [
            [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
            [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
        ]
    ) + np.array([cx, cy, cz])
    # Two triangles per face, outward winding.
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [3, 7, 6], [3, 6, 2],  # +y
            [0, 4, 7], [0, 7, 3],  # -x
            [1, 2, 6], [1, 6, 5],  # +x
        ]
    )
    return _with_colors(Mesh(v, f), color)


def make_uv_sphere(radius=0.3, center=(0.0, 0.0, 0.0), rings=24, segments=48, color=(0.6, 0.7, 0.9)) -> Mesh:
    """Latitude/longitude sphere."""
    verts = [np.array([0.0, radius, 0.0])]
    for i in range(1, rings):
        phi = np.pi * i / rings
        for j in range(segments):
            theta = 2.0 * np.pi * j / segments
            verts.append(
                radius * np.array([np.sin(phi) * np.cos(theta), np.cos(phi), np.sin(phi) * np.sin(theta)])
            )
    verts.append(np.array([0.0, -radius, 0.0]))
    v = np.asarray(verts) + np.asarray(center, dtype=np.float64)

    faces = []
    def ring_idx(i, j):
        return 1 + (i - 1) * segments + (j % segments)

    for j in range(segments):  # top cap (+y)
        faces.append([0, ring_idx(1, j + 1), ring_idx(1, j)])
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b = ring_idx(i, j), ring_idx(i, j + 1)
            c, d = ring_idx(i + 1, j), ring_idx(i + 1, j + 1)
            faces.append([a, d, c])
            faces.append([a, b, d])
    bottom = len(v) - 1
    for j in range(segments):
        faces.append([bottom, ring_idx(rings - 1, j), ring_idx(rings - 1, j + 1)])
    return _with_colors(Mesh(v, np.asarray(faces)), color)


def make_capsule(radius=0.18, half_height=0.27, center=(0.0, 0.0, 0.0), rings=16, segments=48, color=(0.85, 0.7, 0.6)) -> Mesh:
    """Capsule along +y: cylinder of half-length `half_height` capped by
    hemispheres; total height 2*(half_height + radius)."""
    verts = [np.array([0.0, half_height + radius, 0.0])]
    # Ring rows: upper hemisphere pole-to-equator, then lower hemisphere
    # equator-to-pole. The cylinder wall is the band between the two
    # equator rows.
    rows = []
    for i in range(1, rings + 1):
        phi = (np.pi / 2) * i / rings
        rows.append((radius * np.sin(phi), half_height + radius * np.cos(phi)))
    for i in range(rings, 0, -1):
        phi = (np.pi / 2) * i / rings
        rows.append((radius * np.sin(phi), -half_height - radius * np.cos(phi)))

    for r, y in rows:
        for j in range(segments):
            theta = 2.0 * np.pi * j / segments
            verts.append(np.array([r * np.cos(theta), y, r * np.sin(theta)]))
    verts.append(np.array([0.0, -half_height - radius, 0.0]))
    v = np.asarray(verts) + np.asarray(center, dtype=np.float64)

    n_rows = len(rows)
    faces = []
    def ring_idx(i, j):
        return 1 + i * segments + (j % segments)

    for j in range(segments):
        faces.append([0, ring_idx(0, j + 1), ring_idx(0, j)])
    for i in range(n_rows - 1):
        for j in range(segments):
            a, b = ring_idx(i, j), ring_idx(i, j + 1)
            c, d = ring_idx(i + 1, j), ring_idx(i + 1, j + 1)
            faces.append([a, d, c])
            faces.append([a, b, d])
    bottom = len(v) - 1
    for j in range(segments):
        faces.append([bottom, ring_idx(n_rows - 1, j), ring_idx(n_rows - 1, j + 1)])
    return _with_colors(Mesh(v, np.asarray(faces)), color)


def make_plane(width=0.5, height=0.5, z=0.0, normal_sign=-1, color=(1.0, 1.0, 1.0), subdivisions=1) -> Mesh:
    """Rectangle in the z=const plane facing the front camera by default
    (winding gives face normal (0,0,-1) for normal_sign=-1)."""
    n = subdivisions
    xs = np.linspace(-width / 2, width / 2, n + 1)
    ys = np.linspace(-height / 2, height / 2, n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    v = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))], axis=-1)
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b = a + 1
            c = a + (n + 1)
            d = c + 1
            if normal_sign < 0:
                faces.append([a, d, b])
                faces.append([a, c, d])
            else:
                faces.append([a, b, d])
                faces.append([a, d, c])
    return _with_colors(Mesh(v, np.asarray(faces)), color)


def make_ellipsoid(radii=(0.2, 0.4, 0.15), center=(0.0, 0.0, 0.0), rings=20, segments=40, color=(0.7, 0.7, 0.7)) -> Mesh:
    sphere = make_uv_sphere(1.0, (0, 0, 0), rings, segments, color)
    sphere.vertices = sphere.vertices * np.asarray(radii, dtype=np.float64)
    sphere.vertices += np.asarray(center, dtype=np.float64)
    return sphere


def random_convex_mesh(rng: np.random.Generator, color=None) -> Mesh:
    """A random box, ellipsoid or capsule, randomly rotated about y.

    Sized to stay inside the default 1.0 x 0.5 m orthographic frame.
    """
    kind = rng.choice(["box", "ellipsoid", "capsule"])
    if color is None:
        color = rng.uniform(0.2, 1.0, size=3)
    if kind == "box":
        size = rng.uniform([0.15, 0.3, 0.1], [0.3, 0.8, 0.25])
        mesh = make_box(size=size, color=color)
    elif kind == "ellipsoid":
        radii = rng.uniform([0.08, 0.15, 0.06], [0.16, 0.42, 0.14])
        mesh = make_ellipsoid(radii=radii, color=color)
    else:
        radius = rng.uniform(0.08, 0.16)
        half_height = rng.uniform(0.1, 0.28)
        mesh = make_capsule(radius=radius, half_height=half_height, color=color)
    return rotate_mesh_y(mesh, rng.uniform(0.0, 360.0))
