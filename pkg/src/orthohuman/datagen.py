"""Training-sample generation.

Each sample pairs one perspective shaded input image (with a synthetic
background composited behind the model) with six pixel-aligned
orthographic targets: front/back normal maps, front/back shade-free
color images and front/back depth maps. Normal targets are derived from
the depth targets rather than rendered separately, and every target is
zeroed on the background so the networks learn foreground extraction
from the labels alone.

On disk one sample is a directory:
    input.png  mask.png  meta.json
    depth_f.pfm  depth_b.pfm  normal_f.pfm  normal_b.pfm
    color_f.png  color_b.png
and a dataset is a JSON-lines manifest, one record per sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from . import meshio
from .errors import ShapeMismatch
from .geometry import Mesh, OrthographicCamera, PerspectiveCamera, rotate_mesh_y, depth_to_normal
from .render import render_depth_pair, render_perspective_image, render_shadefree

# Channel statistics used to normalize network inputs (VGG preprocessing).
INPUT_MEAN = np.array([0.485, 0.456, 0.406])
INPUT_STD = np.array([0.229, 0.224, 0.225])

DEFAULT_ROTATIONS = tuple(range(-40, 50, 10))  # -40..40 step 10, 9 positions
DEFAULT_LIGHT_COUNT = 180


@dataclass
class LightSet:
    """Directional diffuse lights: unit direction + RGB color each."""

    lights: list

    def __len__(self):
        return len(self.lights)


def place_lights(count: int, seed: int) -> LightSet:
    """`count` diffuse lights spread around the model with random colors.

    Directions are drawn uniformly on the sphere (normalized Gaussians),
    colors uniformly in [0,1]^3; deterministic for a given seed.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(count, 3))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    colors = rng.uniform(0.0, 1.0, size=(count, 3))
    return LightSet([{"direction": d, "color": c} for d, c in zip(dirs, colors)])


def composite_background(foreground: np.ndarray, mask: np.ndarray, background: np.ndarray) -> np.ndarray:
    """out = mask ? foreground : background (shapes must already agree)."""
    foreground = np.asarray(foreground, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if foreground.shape != background.shape or foreground.shape[:2] != mask.shape:
        raise ShapeMismatch("foreground/background/mask shapes differ")
    return np.where(mask[..., None], foreground, background)


def fit_background(background: np.ndarray, resolution: tuple) -> np.ndarray:
    """Center-crop to the target aspect ratio, then resize to (H, W)."""
    h, w = resolution
    bh, bw = background.shape[:2]
    target_aspect = w / h
    if bw / bh > target_aspect:  # too wide
        new_w = int(round(bh * target_aspect))
        x0 = (bw - new_w) // 2
        background = background[:, x0 : x0 + new_w]
    else:
        new_h = int(round(bw / target_aspect))
        y0 = (bh - new_h) // 2
        background = background[y0 : y0 + new_h, :]
    return cv2.resize(background, (w, h), interpolation=cv2.INTER_AREA)


def normalize_input(image: np.ndarray) -> np.ndarray:
    """Per-channel (x - mean) / std with the fixed input statistics."""
    return (np.asarray(image, dtype=np.float64) - INPUT_MEAN) / INPUT_STD


def denormalize_input(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) * INPUT_STD + INPUT_MEAN


@dataclass
class Sample:
    """One training tuple; all targets share one foreground mask."""

    input_image: np.ndarray  # (H,W,3) in [0,1], background composited
    mask: np.ndarray  # (H,W) bool
    normal_front: np.ndarray  # (H,W,3)
    normal_back: np.ndarray
    color_front: np.ndarray  # (H,W,3)
    color_back: np.ndarray
    depth_front: np.ndarray  # (H,W)
    depth_back: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class DatasetManifest:
    records: list
    split: str = "train"
    units: str = "meters"

    @property
    def counts(self) -> int:
        return len(self.records)

    def save(self, path) -> None:
        with Path(path).open("w") as f:
            for rec in self.records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, split: str = "train") -> "DatasetManifest":
        records = []
        with Path(path).open() as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls(records, split=split)


def make_sample(
    mesh: Mesh,
    rotation_deg: float,
    background: np.ndarray,
    seed: int,
    resolution: tuple = (512, 256),
    light_count: int = DEFAULT_LIGHT_COUNT,
    meta: Optional[dict] = None,
) -> Sample:
    """Render one training sample at the given rotation.

    A fresh light set is drawn from `seed` for the shaded input; the
    orthographic targets have no lighting so they see only the rotation.
    """
    rotated = rotate_mesh_y(mesh, rotation_deg)
    rotated.compute_vertex_normals()

    persp = PerspectiveCamera(resolution=resolution)
    # Square pixels at any (H, W): the frame height is fixed at 1 m.
    ortho = OrthographicCamera(resolution=resolution, frame=(1.0, resolution[1] / resolution[0]))

    lights = place_lights(light_count, seed)
    shaded, pmask = render_perspective_image(rotated, lights, persp)
    background = fit_background(background, resolution)
    input_image = composite_background(shaded, pmask, background)

    depth_f, depth_b = render_depth_pair(rotated, ortho)
    color_f, _ = render_shadefree(rotated, ortho, "front")
    color_b, _ = render_shadefree(rotated, ortho, "back")
    normal_f = depth_to_normal(depth_f, ortho.pixel_pitch, side="front")
    normal_b = depth_to_normal(depth_b, ortho.pixel_pitch, side="back")

    info = dict(meta or {})
    info.update({"rotation_deg": float(rotation_deg), "seed": int(seed)})
    return Sample(
        input_image=input_image,
        mask=depth_f.mask,
        normal_front=normal_f.values,
        normal_back=normal_b.values,
        color_front=color_f,
        color_back=color_b,
        depth_front=depth_f.values,
        depth_back=depth_b.values,
        meta=info,
    )


def save_sample(sample: Sample, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meshio.save_image(out_dir / "input.png", sample.input_image)
    meshio.save_mask(out_dir / "mask.png", sample.mask)
    meshio.save_pfm(out_dir / "depth_f.pfm", sample.depth_front)
    meshio.save_pfm(out_dir / "depth_b.pfm", sample.depth_back)
    meshio.save_pfm(out_dir / "normal_f.pfm", sample.normal_front)
    meshio.save_pfm(out_dir / "normal_b.pfm", sample.normal_back)
    meshio.save_image(out_dir / "color_f.png", sample.color_front)
    meshio.save_image(out_dir / "color_b.png", sample.color_back)
    with (out_dir / "meta.json").open("w") as f:
        json.dump(sample.meta, f, sort_keys=True, indent=1)


def load_sample(sample_dir) -> Sample:
    d = Path(sample_dir)
    with (d / "meta.json").open() as f:
        meta = json.load(f)
    return Sample(
        input_image=meshio.load_image(d / "input.png"),
        mask=meshio.load_mask(d / "mask.png"),
        normal_front=meshio.load_pfm(d / "normal_f.pfm").astype(np.float64),
        normal_back=meshio.load_pfm(d / "normal_b.pfm").astype(np.float64),
        color_front=meshio.load_image(d / "color_f.png"),
        color_back=meshio.load_image(d / "color_b.png"),
        depth_front=meshio.load_pfm(d / "depth_f.pfm").astype(np.float64),
        depth_back=meshio.load_pfm(d / "depth_b.pfm").astype(np.float64),
        meta=meta,
    )


def build_dataset(
    meshes: dict,
    backgrounds: dict,
    out_dir,
    rotations=DEFAULT_ROTATIONS,
    seed: int = 0,
    resolution: tuple = (512, 256),
    light_count: int = DEFAULT_LIGHT_COUNT,
    split: str = "train",
) -> DatasetManifest:
    """One sample per (mesh, rotation) with a randomly assigned background.

    `meshes`: {mesh_id: Mesh}; `backgrounds`: {background_id: image}.
    Writes sample directories plus manifest.jsonl under `out_dir`.
    """
    if not meshes:
        raise ValueError("no meshes given")
    if not backgrounds:
        raise ValueError("no backgrounds given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    bg_ids = sorted(backgrounds)
    rng = np.random.default_rng(seed)
    records = []
    for mesh_id in sorted(meshes):
        for rot in rotations:
            bg_id = bg_ids[rng.integers(len(bg_ids))]
            sample_seed = int(rng.integers(2**31 - 1))
            name = f"{mesh_id}_rot{int(rot):+04d}"
            sample = make_sample(
                meshes[mesh_id],
                rot,
                backgrounds[bg_id],
                sample_seed,
                resolution=resolution,
                light_count=light_count,
                meta={"mesh_id": mesh_id, "background_id": bg_id},
            )
            save_sample(sample, out_dir / name)
            records.append(
                {
                    "sample_dir": name,
                    "mesh_id": mesh_id,
                    "rotation_deg": float(rot),
                    "background_id": bg_id,
                    "seed": sample_seed,
                    "split": split,
                }
            )
    manifest = DatasetManifest(records, split=split)
    manifest.save(out_dir / "manifest.jsonl")
    with (out_dir / "dataset.json").open("w") as f:
        json.dump(
            {
                "units": "meters",
                "resolution": list(resolution),
                "rotations": [float(r) for r in rotations],
                "count": manifest.counts,
                "seed": seed,
            },
            f,
            indent=1,
            sort_keys=True,
        )
    return manifest
