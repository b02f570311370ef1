"""Depth-pair fusion into a single implicit volume and mesh extraction.

Because the front and back maps are pixel-aligned orthographic views,
every pixel (row, col) owns an independent z column of the volume: the
signed value along that column is

    v(z) = max(front - z, z - back)        (foreground columns)

which is negative exactly between the two surfaces, and +truncation on
background columns. Values are truncated to +-truncation voxels. The
zero level set is then polygonized by marching cubes and optionally
colorized by sampling the front/back shade-free images by vertex normal
direction.

By construction a column with four true surface crossings (for example
an arm in front of the torso) reconstructs only the first and last met
surfaces; the interior gap is filled. This is a property of double-sided
depth fusion, kept (and regression-tested), not worked around.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from skimage import measure

from .errors import MaskMismatch, NoSurface, OrderViolation
from .geometry import DEPTH_FAR, DEPTH_NEAR, DepthMap, Mesh, OrthographicCamera, denormalize_depth

log = logging.getLogger(__name__)


@dataclass
class ReconstructionConfig:
    z_resolution: int = 256
    iso_level: float = 0.0
    truncation: int = 3  # voxels
    colorize: bool = True
    mask_eps: float = 0.02  # foreground threshold on normalized depth
    allow_order_violations: bool = True  # clamp back < front columns

    def __post_init__(self):
        if self.z_resolution < 2:
            raise ValueError("z_resolution must be >= 2")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")


@dataclass
class VolumeGrid:
    """Signed scalar grid, negative inside. values[ix, iy, iz] sits at
    world origin + (ix, iy, iz) * voxel_size."""

    values: np.ndarray  # (X, Y, Z)
    voxel_size: tuple  # (dx, dy, dz) meters
    origin: np.ndarray  # world position of voxel (0,0,0)

    @property
    def shape(self) -> tuple:
        return self.values.shape


def carve_volume(
    front: DepthMap,
    back: DepthMap,
    camera: OrthographicCamera,
    cfg: ReconstructionConfig = None,
) -> VolumeGrid:
    """Carve the aligned depth pair into a signed volume.

    Grid x/y resolution equals the map resolution (one column per pixel);
    z spans the [near, far] depth box with cfg.z_resolution samples.
    """
    cfg = cfg or ReconstructionConfig()
    if front.shape != back.shape:
        raise MaskMismatch("front/back depth shapes differ")
    if not np.array_equal(front.mask, back.mask):
        raise MaskMismatch("front/back masks differ")

    mask = front.mask
    f = front.values
    b = back.values
    violations = int(np.count_nonzero((b < f) & mask))
    if violations:
        if not cfg.allow_order_violations:
            raise OrderViolation(f"back < front at {violations} pixels")
        log.warning("clamped %d back-before-front columns", violations)
        b = np.maximum(b, f)

    h, w = mask.shape
    zs = np.linspace(0.0, 1.0, cfg.z_resolution)  # normalized depth samples
    dz_norm = zs[1] - zs[0]
    trunc = cfg.truncation * dz_norm

    # Signed distance along each column in normalized depth units:
    # negative strictly between the two surfaces.
    f_col = np.where(mask, f, np.inf)[..., None]
    b_col = np.where(mask, b, -np.inf)[..., None]
    vals = np.maximum(f_col - zs[None, None, :], zs[None, None, :] - b_col)
    vals = np.clip(vals, -trunc, trunc)  # background (+inf) clips to +trunc

    # (row, col, z) -> (x, y, z) grid: columns map to +x, rows flip to +y.
    vals = np.transpose(vals[::-1, :, :], (1, 0, 2))

    xs, ys = camera.pixel_centers()
    pitch_x, pitch_y = camera.pixel_pitch_xy
    origin = np.array([xs[0], ys[-1], denormalize_depth(zs[0])])
    dz_m = dz_norm * (DEPTH_FAR - DEPTH_NEAR)
    return VolumeGrid(vals, (pitch_x, pitch_y, dz_m), origin)


def extract_surface(grid: VolumeGrid, iso: float = 0.0) -> Mesh:
    """Marching-cubes polygonization of the iso level, vertices in meters."""
    if grid.values.min() >= iso or grid.values.max() <= iso:
        raise NoSurface("volume contains no sign change at the iso level")
    verts, faces, _, _ = measure.marching_cubes(
        grid.values, level=iso, spacing=grid.voxel_size, gradient_direction="ascent"
    )
    verts = verts + grid.origin
    # Flip winding: with negative-inside fields the polygonizer's face
    # order comes out inward; outward winding is this package's contract.
    mesh = Mesh(verts, faces[:, ::-1].astype(np.int64))
    areas = mesh.face_areas()
    keep = areas > 1e-12
    if not keep.all():
        mesh = Mesh(mesh.vertices, mesh.faces[keep])
    return mesh


def _bilinear_sample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinear image lookup at fractional (row, col); clamps to borders."""
    h, w = image.shape[:2]
    rows = np.clip(rows, 0.0, h - 1.0)
    cols = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[:, None]
    top = image[r0, c0] * (1 - fc) + image[r0, c1] * fc
    bot = image[r1, c0] * (1 - fc) + image[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def colorize_mesh(
    mesh: Mesh,
    color_front: np.ndarray,
    color_back: np.ndarray,
    camera: OrthographicCamera,
) -> Mesh:
    """Assign vertex colors from the shade-free pair.

    Vertices whose outward normal faces the front camera (n_z < 0) sample
    the front image, the rest the back image, bilinearly at their (x, y).
    Out-of-frame vertices clamp to the nearest pixel.
    """
    if mesh.vertex_normals is None:
        mesh.compute_vertex_normals()
    h, w = camera.resolution
    fh, fw = camera.frame
    pitch_x, pitch_y = camera.pixel_pitch_xy
    cols = (mesh.vertices[:, 0] + fw / 2.0) / pitch_x - 0.5
    rows = (fh / 2.0 - mesh.vertices[:, 1]) / pitch_y - 0.5

    colors = np.zeros((mesh.n_vertices, 3))
    use_front = mesh.vertex_normals[:, 2] < 0.0
    for sel, img in ((use_front, color_front), (~use_front, color_back)):
        if sel.any():
            colors[sel] = _bilinear_sample(np.asarray(img, dtype=np.float64), rows[sel], cols[sel])
    out = mesh.copy()
    out.vertex_colors = np.clip(colors, 0.0, 1.0)
    return out


def maps_from_prediction(depths, mask_eps: float):
    """Threshold a predicted (2,H,W) depth pair into aligned DepthMaps.

    Foreground is where both sides clear mask_eps; values outside are
    zeroed to restore the background convention.
    """
    import torch

    if isinstance(depths, torch.Tensor):
        depths = depths.detach().cpu().numpy()
    depths = np.asarray(depths, dtype=np.float64)
    if depths.ndim == 4:
        if depths.shape[0] != 1:
            raise ValueError("expected a single prediction, got a batch")
        depths = depths[0]
    f, b = depths[0], depths[1]
    mask = (f > mask_eps) & (b > mask_eps)
    f = np.where(mask, np.clip(f, 1e-6, 1 - 1e-6), 0.0)
    b = np.where(mask, np.clip(b, 1e-6, 1 - 1e-6), 0.0)
    return DepthMap(f, mask), DepthMap(b, mask)


def reconstruct(pred, camera: OrthographicCamera, cfg: ReconstructionConfig = None) -> Mesh:
    """Full fusion path: threshold masks, carve, extract, colorize.

    `pred` is a networks.PipelineOutput (or any object with .depths and
    optionally .colors tensors shaped (1,2,H,W) / (1,6,H,W)).
    """
    import torch

    cfg = cfg or ReconstructionConfig()
    front, back = maps_from_prediction(pred.depths, cfg.mask_eps)
    if not front.mask.any():
        raise NoSurface("prediction is entirely background")
    grid = carve_volume(front, back, camera, cfg)
    mesh = extract_surface(grid, cfg.iso_level)
    colors = getattr(pred, "colors", None)
    if cfg.colorize and colors is not None:
        if isinstance(colors, torch.Tensor):
            colors = colors.detach().cpu().numpy()
        colors = np.asarray(colors, dtype=np.float64)
        if colors.ndim == 4:
            colors = colors[0]
        cf = np.transpose(colors[:3], (1, 2, 0))
        cb = np.transpose(colors[3:], (1, 2, 0))
        mesh = colorize_mesh(mesh, cf, cb, camera)
    return mesh
