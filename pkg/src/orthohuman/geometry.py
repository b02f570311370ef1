"""Meshes, cameras, depth/normal maps and the conversions between them.

Coordinate conventions
----------------------
World space is right-handed and metric (meters). Models sit at the origin
with +y up. The front orthographic camera looks along +z, the back camera
along -z, and the perspective input camera sits at [0, 0, -1] looking at
the origin. Both orthographic cameras share one pixel grid: pixel (row,
col) of the front and back maps lie on the same world ray

    x = x_min + (col + 0.5) * pitch,   y = y_max - (row + 0.5) * pitch,

so row 0 is the top of the image (largest y) and columns grow with +x.
Back depth is expressed in the front frame: it stores the z of the
farthest surface along the shared ray, which makes the two maps bound the
body volume per pixel and lets fusion treat every pixel column
independently.

Depth is normalized for network I/O: world z in [DEPTH_NEAR, DEPTH_FAR] =
[-1, 1] m maps affinely to (0, 1), and background pixels hold exactly 0.
Normal maps store unit vectors in this shared frame; front-surface
normals face the front camera (n_z <= 0) and back-surface normals face
the back camera (n_z >= 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MaskMismatch, ShapeMismatch

# Fixed depth box mapped to (0,1); background stays exactly 0.
DEPTH_NEAR = -1.0
DEPTH_FAR = 1.0


def normalize_depth(z_meters: np.ndarray) -> np.ndarray:
    """Map world z in [DEPTH_NEAR, DEPTH_FAR] to the (0,1) network range."""
    return (z_meters - DEPTH_NEAR) / (DEPTH_FAR - DEPTH_NEAR)


def denormalize_depth(d: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize_depth` (only meaningful on foreground)."""
    return DEPTH_NEAR + d * (DEPTH_FAR - DEPTH_NEAR)


@dataclass
class Mesh:
    """Triangle mesh with optional per-vertex color and normals.

    vertices: (V,3) float, meters, model space. faces: (F,3) int index
    triples. vertex_colors: optional (V,3) RGB in [0,1]. vertex_normals:
    optional (V,3) unit vectors.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_colors: Optional[np.ndarray] = None
    vertex_normals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.vertex_colors is not None:
            self.vertex_colors = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
        if self.vertex_normals is not None:
            self.vertex_normals = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """(F,3,3) array of triangle corner positions."""
        return self.vertices[self.faces]

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        """(F,3) geometric face normals following the winding order."""
        tri = self.triangles()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if normalized:
            lengths = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.maximum(lengths, 1e-30)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalized=False), axis=1)

    def compute_vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals; also stored on the mesh."""
        fn = self.face_normals(normalized=False)  # area-weighted
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], fn)
        lengths = np.linalg.norm(vn, axis=1, keepdims=True)
        vn = vn / np.maximum(lengths, 1e-30)
        self.vertex_normals = vn
        return vn

    def validate(self, atol_normal: float = 1e-6) -> None:
        """Raise ValueError on out-of-range faces, degenerate triangles or
        non-unit stored normals."""
        if self.n_faces and (self.faces.min() < 0 or self.faces.max() >= self.n_vertices):
            raise ValueError("face index out of range")
        if self.n_faces and (self.face_areas() <= 0).any():
            raise ValueError("degenerate face (area <= 0)")
        if self.vertex_normals is not None and len(self.vertex_normals):
            err = np.abs(np.linalg.norm(self.vertex_normals, axis=1) - 1.0).max()
            if err > atol_normal:
                raise ValueError(f"vertex normals not unit length (err={err:g})")

    def copy(self) -> "Mesh":
        return Mesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.vertex_colors is None else self.vertex_colors.copy(),
            None if self.vertex_normals is None else self.vertex_normals.copy(),
        )


@dataclass
class PerspectiveCamera:
    """Pinhole camera for the input view. Defaults follow the data-capture
    setup: one meter in front of the model, 50 degree vertical FoV."""

    position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vertical_fov: float = 50.0
    resolution: tuple = (512, 256)  # (height, width)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        if not (0.0 < self.vertical_fov < 180.0):
            raise ValueError("vertical_fov must be in (0, 180)")
        if self.resolution[0] <= 0 or self.resolution[1] <= 0:
            raise ValueError("resolution must be positive")

    def basis(self) -> tuple:
        """(right, up, forward) world-space camera axes.

        Chosen so the default camera maps +x to +col and +y to -row, the
        same raster convention the orthographic cameras use.
        """
        forward = self.look_at - self.position
        forward = forward / np.linalg.norm(forward)
        world_up = np.array([0.0, 1.0, 0.0])
        if abs(forward @ world_up) > 0.999:
            world_up = np.array([0.0, 0.0, 1.0])
        right = np.cross(world_up, forward)
        right = right / np.linalg.norm(right)
        up = np.cross(forward, right)
        return right, up, forward

    @property
    def focal_px(self) -> float:
        return (self.resolution[0] / 2.0) / np.tan(np.deg2rad(self.vertical_fov) / 2.0)


@dataclass
class OrthographicCamera:
    """Parallel-ray target camera. Front (+z) and back (-z) instances share
    the same x/y frame so their pixels are ray-aligned."""

    view_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    frame: tuple = (1.0, 0.5)  # (height_m, width_m), centered on the origin
    resolution: tuple = (512, 256)  # (height, width) pixels
    near: float = DEPTH_NEAR
    far: float = DEPTH_FAR

    def __post_init__(self):
        self.view_direction = np.asarray(self.view_direction, dtype=np.float64)
        if self.far <= self.near:
            raise ValueError("far must exceed near")
        if self.resolution[0] <= 0 or self.resolution[1] <= 0:
            raise ValueError("resolution must be positive")

    @property
    def pixel_pitch(self) -> float:
        """Meters per pixel (requires square pixels, the default)."""
        py = self.frame[0] / self.resolution[0]
        px = self.frame[1] / self.resolution[1]
        if abs(px - py) > 1e-9 * max(px, py):
            raise ValueError("non-square pixels; use pixel_pitch_xy")
        return py

    @property
    def pixel_pitch_xy(self) -> tuple:
        return (self.frame[1] / self.resolution[1], self.frame[0] / self.resolution[0])

    def pixel_centers(self) -> tuple:
        """(xs, ys): world x per column and world y per row at pixel centers."""
        h, w = self.resolution
        fh, fw = self.frame
        px, py = fw / w, fh / h
        xs = -fw / 2.0 + (np.arange(w) + 0.5) * px
        ys = fh / 2.0 - (np.arange(h) + 0.5) * py
        return xs, ys

    def with_resolution(self, resolution: tuple) -> "OrthographicCamera":
        return OrthographicCamera(self.view_direction.copy(), self.frame, tuple(resolution), self.near, self.far)


@dataclass
class DepthMap:
    """Normalized orthographic depth map. Foreground values lie in (0,1)
    (z mapped over [DEPTH_NEAR, DEPTH_FAR]); background is exactly 0."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.mask.shape:
            raise ShapeMismatch("depth values and mask shapes differ")

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def meters(self) -> np.ndarray:
        """World z in meters on the foreground (background left at near)."""
        return denormalize_depth(self.values)

    def validate(self) -> None:
        if not np.all(self.values[~self.mask] == 0.0):
            raise ValueError("background depth must be exactly 0")
        fg = self.values[self.mask]
        if fg.size and not ((fg > 0.0).all() and (fg < 1.0).all()):
            raise ValueError("foreground depth must lie strictly in (0,1)")


@dataclass
class NormalMap:
    """Per-pixel unit normals in the shared front frame; background is 0."""

    values: np.ndarray  # (H, W, 3)
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape[:2] != self.mask.shape or self.values.shape[-1] != 3:
            raise ShapeMismatch("normal values must be (H,W,3) matching the mask")

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    def validate(self, atol: float = 1e-4) -> None:
        if not np.all(self.values[~self.mask] == 0.0):
            raise ValueError("background normals must be exactly 0")
        fg = self.values[self.mask]
        if fg.size:
            err = np.abs(np.linalg.norm(fg, axis=-1) - 1.0).max()
            if err > atol:
                raise ValueError(f"foreground normals not unit length (err={err:g})")


def rotation_y(degrees: float) -> np.ndarray:
    """3x3 right-hand-rule rotation about the +y axis."""
    t = np.deg2rad(degrees)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotate_mesh_y(mesh: Mesh, degrees: float) -> Mesh:
    """Rotate a mesh about the vertical axis through the origin.

    Colors and faces are untouched; stored vertex normals are rotated
    alongside the vertices.
    """
    r = rotation_y(degrees)
    out = mesh.copy()
    out.vertices = mesh.vertices @ r.T
    if mesh.vertex_normals is not None:
        out.vertex_normals = mesh.vertex_normals @ r.T
    return out


def depth_to_normal(depth: DepthMap, pixel_pitch: float, side: str = "front") -> NormalMap:
    """Derive a normal map from an orthographic depth map.

    Central differences on the interior, forward/backward at mask edges.
    Front normals are oriented toward the front camera (n_z <= 0), back
    normals toward the back camera (n_z >= 0), both expressed in the
    shared front frame. Isolated foreground pixels get the camera-facing
    default normal.
    """
    if side not in ("front", "back"):
        raise ValueError("side must be 'front' or 'back'")
    mask = depth.mask
    h, w = mask.shape
    z = denormalize_depth(depth.values)  # meters

    # Per-axis slope of z in meters per meter, masked so background never
    # contaminates a foreground derivative.
    def masked_slope(axis: int) -> np.ndarray:
        fwd = np.zeros((h, w))
        bwd = np.zeros((h, w))
        ok_f = np.zeros((h, w), dtype=bool)
        ok_b = np.zeros((h, w), dtype=bool)
        if axis == 1:  # along columns (+x)
            fwd[:, :-1] = z[:, 1:] - z[:, :-1]
            ok_f[:, :-1] = mask[:, 1:] & mask[:, :-1]
            bwd[:, 1:] = z[:, 1:] - z[:, :-1]
            ok_b[:, 1:] = mask[:, 1:] & mask[:, :-1]
        else:  # along rows
            fwd[:-1, :] = z[1:, :] - z[:-1, :]
            ok_f[:-1, :] = mask[1:, :] & mask[:-1, :]
            bwd[1:, :] = z[1:, :] - z[:-1, :]
            ok_b[1:, :] = mask[1:, :] & mask[:-1, :]
        both = ok_f & ok_b
        slope = np.zeros((h, w))
        slope[both] = 0.5 * (fwd[both] + bwd[both])
        only_f = ok_f & ~ok_b
        slope[only_f] = fwd[only_f]
        only_b = ok_b & ~ok_f
        slope[only_b] = bwd[only_b]
        return slope / pixel_pitch

    gx = masked_slope(1)
    # Row index grows downward while world y grows upward.
    gy = -masked_slope(0)

    # Surface z = f(x, y): normal is +-(df/dx, df/dy, -1) normalized; the
    # sign is fixed per side so normals face their camera.
    n = np.stack([gx, gy, -np.ones_like(gx)], axis=-1)
    if side == "back":
        n = -n
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    n[~mask] = 0.0
    return NormalMap(n, mask.copy())


def depth_pair_to_points(
    front: DepthMap,
    back: DepthMap,
    front_img: np.ndarray,
    back_img: np.ndarray,
    camera: OrthographicCamera,
) -> tuple:
    """Lift an aligned depth pair (plus color images) to a colored cloud.

    Returns (points (N,3) meters, colors (N,3)). One point per foreground
    pixel per side; back-side points take back-image colors.
    """
    if front.shape != back.shape:
        raise ShapeMismatch("front/back depth shapes differ")
    if not np.array_equal(front.mask, back.mask):
        raise MaskMismatch("front/back masks differ")
    front_img = np.asarray(front_img, dtype=np.float64)
    back_img = np.asarray(back_img, dtype=np.float64)
    if front_img.shape[:2] != front.shape or back_img.shape[:2] != front.shape:
        raise ShapeMismatch("color image shape differs from depth shape")

    xs, ys = camera.pixel_centers()
    rows, cols = np.nonzero(front.mask)
    pts, cols_rgb = [], []
    for depth, img in ((front, front_img), (back, back_img)):
        z = denormalize_depth(depth.values[rows, cols])
        pts.append(np.stack([xs[cols], ys[rows], z], axis=-1))
        cols_rgb.append(img[rows, cols])
    if not len(rows):
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(pts, axis=0), np.concatenate(cols_rgb, axis=0)
