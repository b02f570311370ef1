"""Loss stack: masked-by-labels L1, windowed SSIM, Gram-matrix perceptual
loss, depth-gradient terms, and the weighted total.

Conventions shared by every term:
  * maps are torch tensors shaped (C,H,W) or (B,C,H,W);
  * targets carry zeros on background pixels, and the L1 sum runs over
    ALL pixels, so nonzero background predictions are penalized and the
    networks learn foreground extraction from the labels alone;
  * front/back map pairs are averaged, not summed, so the loss weights
    keep their meaning regardless of how many sides are predicted.

SSIM uses plain (box) means and variances over a 5x5 window with
reflect-padded borders and constants c1 = 0.01^2, c2 = 0.03^2; inputs are
assumed normalized to (0,1). Signed gradient maps are affinely brought
into that range via (clamp(g,-1,1)+1)/2 before their SSIM term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ExtractorUnavailable, ShapeMismatch

SSIM_WINDOW = 5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

# Loss weights in order: normal L1, normal SSIM, color L1, color
# perceptual, depth L1, depth SSIM, depth-gradient L1, depth-gradient SSIM.
DEFAULT_WEIGHTS = (0.9, 0.1, 0.85, 0.15, 0.45, 0.05, 0.45, 0.05)


@dataclass
class LossWeights:
    normal_l1: float = DEFAULT_WEIGHTS[0]
    normal_ssim: float = DEFAULT_WEIGHTS[1]
    color_l1: float = DEFAULT_WEIGHTS[2]
    color_perceptual: float = DEFAULT_WEIGHTS[3]
    depth_l1: float = DEFAULT_WEIGHTS[4]
    depth_ssim: float = DEFAULT_WEIGHTS[5]
    grad_l1: float = DEFAULT_WEIGHTS[6]
    grad_ssim: float = DEFAULT_WEIGHTS[7]

    def as_tuple(self):
        return (
            self.normal_l1, self.normal_ssim, self.color_l1, self.color_perceptual,
            self.depth_l1, self.depth_ssim, self.grad_l1, self.grad_ssim,
        )

    def __post_init__(self):
        if any(w < 0 for w in self.as_tuple()):
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossReport:
    """Total plus per-term breakdown; total reproduces the weighted sum."""

    total: float
    terms: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"total": self.total, **self.terms}


def _as_batched(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        return x.unsqueeze(0)
    if x.dim() == 4:
        return x
    raise ShapeMismatch(f"expected (C,H,W) or (B,C,H,W), got {tuple(x.shape)}")


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(1/N) sum_p ||pred_p - target_p||_1 over every pixel.

    N counts pixels (and batch entries), not channels: the channel
    differences are summed per pixel.
    """
    if pred.shape != target.shape:
        raise ShapeMismatch("l1_loss shape mismatch")
    p, t = _as_batched(pred), _as_batched(target)
    return (p - t).abs().sum(dim=1).mean()


def _box_filter(x: torch.Tensor, window: int) -> torch.Tensor:
    pad = window // 2
    x = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    return F.avg_pool2d(x, window, stride=1)


def ssim_loss(pred: torch.Tensor, target: torch.Tensor, window: int = SSIM_WINDOW) -> torch.Tensor:
    """1 - mean SSIM with box-window local statistics (population variance)."""
    if pred.shape != target.shape:
        raise ShapeMismatch("ssim_loss shape mismatch")
    p, t = _as_batched(pred), _as_batched(target)
    mu_p = _box_filter(p, window)
    mu_t = _box_filter(t, window)
    var_p = _box_filter(p * p, window) - mu_p * mu_p
    var_t = _box_filter(t * t, window) - mu_t * mu_t
    cov = _box_filter(p * t, window) - mu_p * mu_t
    ssim = ((2 * mu_p * mu_t + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_p * mu_p + mu_t * mu_t + SSIM_C1) * (var_p + var_t + SSIM_C2)
    )
    return 1.0 - ssim.mean()


def spatial_gradient(x: torch.Tensor) -> tuple:
    """Forward differences (d/dcol, d/drow); last column/row zero-padded."""
    xb = _as_batched(x)
    if xb.shape[-1] < 2 or xb.shape[-2] < 2:
        raise ShapeMismatch("spatial_gradient needs H,W >= 2")
    gx = torch.zeros_like(xb)
    gy = torch.zeros_like(xb)
    gx[..., :, :-1] = xb[..., :, 1:] - xb[..., :, :-1]
    gy[..., :-1, :] = xb[..., 1:, :] - xb[..., :-1, :]
    if x.dim() == 3:
        return gx[0], gy[0]
    return gx, gy


def gram_matrix(features: torch.Tensor) -> torch.Tensor:
    """G = F^T F / (H*W*C) for the (H*W) x C flattening of a (C,H,W) map.

    Batched input gives (B,C,C).
    """
    f = _as_batched(features)
    b, c, h, w = f.shape
    flat = f.reshape(b, c, h * w)
    g = torch.bmm(flat, flat.transpose(1, 2)) / (h * w * c)
    return g[0] if features.dim() == 3 else g


def rescale_signed(g: torch.Tensor) -> torch.Tensor:
    """Map signed values into (0,1) for SSIM: (clamp(g,-1,1)+1)/2."""
    return (torch.clamp(g, -1.0, 1.0) + 1.0) / 2.0


# ---------------------------------------------------------------- extractor

class RandomFeatureExtractor(nn.Module):
    """Frozen random-weight convolutional stack used when pretrained
    weights are unavailable (and in tests). Exposes three post-activation
    stages at 1x, 1/2x and 1/4x resolution, mirroring the default
    pretrained layer set."""

    def __init__(self, widths=(16, 32, 64), seed: int = 0, dtype=torch.float32):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        w0, w1, w2 = widths
        self.stage1 = nn.Sequential(nn.Conv2d(3, w0, 3, padding=1), nn.ReLU(), nn.Conv2d(w0, w0, 3, padding=1), nn.ReLU())
        self.stage2 = nn.Sequential(nn.MaxPool2d(2), nn.Conv2d(w0, w1, 3, padding=1), nn.ReLU(), nn.Conv2d(w1, w1, 3, padding=1), nn.ReLU())
        self.stage3 = nn.Sequential(nn.MaxPool2d(2), nn.Conv2d(w1, w2, 3, padding=1), nn.ReLU(), nn.Conv2d(w2, w2, 3, padding=1), nn.ReLU())
        for p in self.parameters():
            with torch.no_grad():
                p.copy_(torch.empty_like(p).normal_(0.0, 0.2, generator=gen))
            p.requires_grad_(False)
        self.to(dtype)

    def forward(self, x: torch.Tensor) -> list:
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        return [f1, f2, f3]


class VGG16Features(nn.Module):
    """Pretrained VGG16 stages relu1_2, relu2_2, relu3_3 with the standard
    channel normalization applied to the (0,1) input."""

    def __init__(self):
        super().__init__()
        try:
            from torchvision.models import VGG16_Weights, vgg16

            feats = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
        except Exception as exc:  # missing torchvision or weights download
            raise ExtractorUnavailable(f"cannot build pretrained VGG16 extractor: {exc}") from exc
        self.stage1 = feats[:4]
        self.stage2 = feats[4:9]
        self.stage3 = feats[9:16]
        for p in self.parameters():
            p.requires_grad_(False)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x: torch.Tensor) -> list:
        x = (x - self.mean) / self.std
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        return [f1, f2, f3]


def make_feature_extractor(kind: str = "auto", dtype=torch.float32, seed: int = 0) -> nn.Module:
    """kind: 'vgg16' (raises ExtractorUnavailable on failure), 'random',
    or 'auto' (pretrained when possible, random fallback)."""
    if kind == "vgg16":
        return VGG16Features()
    if kind == "random":
        return RandomFeatureExtractor(seed=seed, dtype=dtype)
    if kind == "auto":
        try:
            return VGG16Features()
        except ExtractorUnavailable:
            return RandomFeatureExtractor(seed=seed, dtype=dtype)
    raise ValueError(f"unknown extractor kind: {kind}")


def perceptual_loss(pred_img: torch.Tensor, gt_img: torch.Tensor, extractor: nn.Module) -> torch.Tensor:
    """Sum over extractor stages of the L1 gap between Gram matrices."""
    if pred_img.shape != gt_img.shape:
        raise ShapeMismatch("perceptual_loss shape mismatch")
    p, t = _as_batched(pred_img), _as_batched(gt_img)
    loss = pred_img.new_zeros(())
    for fp, ft in zip(extractor(p), extractor(t)):
        loss = loss + (gram_matrix(fp) - gram_matrix(ft)).abs().sum(dim=(-2, -1)).mean()
    return loss


# -------------------------------------------------------------- total loss

def _pair_mean(fn, pred_pair, target_pair, *args):
    """Apply a per-map loss to (front, back) channel halves and average."""
    c = pred_pair.shape[-3] // 2
    front = fn(pred_pair[..., :c, :, :], target_pair[..., :c, :, :], *args)
    back = fn(pred_pair[..., c:, :, :], target_pair[..., c:, :, :], *args)
    return 0.5 * (front + back)


def _grad_pair(pair: torch.Tensor) -> torch.Tensor:
    """(front|back) map pair -> (front dx,dy | back dx,dy) gradient pair,
    keeping the side split on the channel midpoint."""
    c = pair.shape[-3] // 2
    sides = []
    for half in (pair[..., :c, :, :], pair[..., c:, :, :]):
        gx, gy = spatial_gradient(half)
        sides.append(torch.cat([gx, gy], dim=-3))
    return torch.cat(sides, dim=-3)


def total_loss(pred, target, weights: LossWeights = None, extractor: nn.Module = None) -> tuple:
    """Weighted sum of the per-network losses.

    `pred` / `target` expose .normals/.colors/.depths as 2C-channel
    (front|back) tensors; any map the prediction lacks (ablation modes)
    contributes zero. Returns (total tensor, LossReport).
    """
    weights = weights or LossWeights()
    zero = None
    terms = {}

    def register(name, value, weight):
        terms[name] = float(value.detach())
        return weight * value

    total = None
    if getattr(pred, "normals", None) is not None:
        n_l1 = _pair_mean(l1_loss, pred.normals, target.normals)
        n_ssim = _pair_mean(ssim_loss, pred.normals, target.normals)
        loss_n = register("normal_l1", n_l1, weights.normal_l1) + register("normal_ssim", n_ssim, weights.normal_ssim)
        terms["L_N"] = float(loss_n.detach())
        total = loss_n if total is None else total + loss_n
    if getattr(pred, "colors", None) is not None:
        if extractor is None:
            raise ValueError("color loss requires a feature extractor")
        c_l1 = _pair_mean(l1_loss, pred.colors, target.colors)
        c_per = _pair_mean(lambda a, b: perceptual_loss(a, b, extractor), pred.colors, target.colors)
        loss_c = register("color_l1", c_l1, weights.color_l1) + register("color_perceptual", c_per, weights.color_perceptual)
        terms["L_C"] = float(loss_c.detach())
        total = loss_c if total is None else total + loss_c
    if getattr(pred, "depths", None) is not None:
        d_l1 = _pair_mean(l1_loss, pred.depths, target.depths)
        d_ssim = _pair_mean(ssim_loss, pred.depths, target.depths)
        pg, tg = _grad_pair(pred.depths), _grad_pair(target.depths)
        g_l1 = _pair_mean(l1_loss, pg, tg)
        g_ssim = _pair_mean(ssim_loss, rescale_signed(pg), rescale_signed(tg))
        loss_d = (
            register("depth_l1", d_l1, weights.depth_l1)
            + register("depth_ssim", d_ssim, weights.depth_ssim)
            + register("grad_l1", g_l1, weights.grad_l1)
            + register("grad_ssim", g_ssim, weights.grad_ssim)
        )
        terms["L_D"] = float(loss_d.detach())
        total = loss_d if total is None else total + loss_d
    if total is None:
        raise ValueError("prediction carries no maps to score")
    return total, LossReport(total=float(total.detach()), terms=terms)
