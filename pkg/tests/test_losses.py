import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from orthohuman.losses import (
    SSIM_C1,
    SSIM_C2,
    SSIM_WINDOW,
    LossReport,
    LossWeights,
    RandomFeatureExtractor,
    gram_matrix,
    l1_loss,
    perceptual_loss,
    rescale_signed,
    spatial_gradient,
    ssim_loss,
)

# ------------------------------------------------------------- oracles
# Naive, loop-based reimplementations kept deliberately independent of
# the tensor implementations they check.


def l1_oracle(pred, target):
    pred, target = np.asarray(pred), np.asarray(target)
    c, h, w = pred.shape
    acc = 0.0
    for i in range(h):
        for j in range(w):
            acc += sum(abs(pred[k, i, j] - target[k, i, j]) for k in range(c))
    return acc / (h * w)


def _reflect(i, n):
    # numpy/torch 'reflect' padding: edge not repeated.
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def ssim_oracle(pred, target, window=SSIM_WINDOW):
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    c, h, w = pred.shape
    r = window // 2
    total = 0.0
    for k in range(c):
        for i in range(h):
            for j in range(w):
                ps, ts = [], []
                for di in range(-r, r + 1):
                    for dj in range(-r, r + 1):
                        ii, jj = _reflect(i + di, h), _reflect(j + dj, w)
                        ps.append(pred[k, ii, jj])
                        ts.append(target[k, ii, jj])
                ps, ts = np.array(ps), np.array(ts)
                mp, mt = ps.mean(), ts.mean()
                vp, vt = ps.var(), ts.var()  # population variance
                cov = (ps * ts).mean() - mp * mt
                total += ((2 * mp * mt + SSIM_C1) * (2 * cov + SSIM_C2)) / (
                    (mp**2 + mt**2 + SSIM_C1) * (vp + vt + SSIM_C2)
                )
    return 1.0 - total / (c * h * w)


def gram_oracle(features):
    f = np.asarray(features)
    c, h, w = f.shape
    g = np.zeros((c, c))
    for a in range(c):
        for b in range(c):
            for i in range(h):
                for j in range(w):
                    g[a, b] += f[a, i, j] * f[b, i, j]
    return g / (h * w * c)


def gradient_oracle(x):
    x = np.asarray(x)
    gx, gy = np.zeros_like(x), np.zeros_like(x)
    gx[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    gy[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    return gx, gy


def central_difference_grad(fn, x, eps=1e-6):
    x = x.clone().detach().double()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(fn(x))
        flat[i] = orig - eps
        lo = float(fn(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_grad_error(analytic, numeric):
    denom = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
    return (analytic - numeric).norm().item() / denom


# ------------------------------------------------------------------ L1

def test_l1_zero_on_equal():
    x = torch.rand(3, 5, 7)
    assert float(l1_loss(x, x)) == 0.0


def test_l1_constant_case():
    # pred 0.5 vs target 0.25 -> 0.25 per channel, summed over channels.
    for c in (1, 3):
        pred = torch.full((c, 6, 4), 0.5)
        target = torch.full((c, 6, 4), 0.25)
        assert abs(float(l1_loss(pred, target)) - 0.25 * c) < 1e-7


def test_l1_zero_labels_penalize_background():
    # All-background target (zero labels): constant prediction c scores |c|.
    pred = torch.full((1, 8, 8), -0.37)
    target = torch.zeros(1, 8, 8)
    assert abs(float(l1_loss(pred, target)) - 0.37) < 1e-7


def test_l1_matches_oracle_random():
    rng = np.random.default_rng(11)
    for _ in range(10):
        shape = (int(rng.integers(1, 4)), int(rng.integers(2, 16)), int(rng.integers(2, 16)))
        p, t = rng.normal(size=shape), rng.normal(size=shape)
        got = float(l1_loss(torch.tensor(p), torch.tensor(t)))
        assert abs(got - l1_oracle(p, t)) < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_l1_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p = torch.tensor(rng.normal(size=(2, 4, 4)))
    t = torch.tensor(rng.normal(size=(2, 4, 4)))
    assert float(l1_loss(p, t)) >= 0.0
    assert abs(float(l1_loss(p, t)) - float(l1_loss(t, p))) < 1e-12


# ---------------------------------------------------------------- SSIM

def test_ssim_zero_on_identical():
    x = torch.rand(2, 9, 9)
    assert abs(float(ssim_loss(x, x))) < 1e-7


def test_ssim_constant_closed_form():
    # pred=0 vs target=1: SSIM = c1/(1+c1), loss = 1 - c1/(1+c1).
    pred = torch.zeros(1, 8, 8, dtype=torch.float64)
    target = torch.ones(1, 8, 8, dtype=torch.float64)
    expected = 1.0 - SSIM_C1 / (1.0 + SSIM_C1)
    assert abs(float(ssim_loss(pred, target)) - expected) < 1e-9


def test_ssim_matches_oracle_random():
    rng = np.random.default_rng(23)
    for _ in range(5):
        shape = (2, 16, 16)
        p, t = rng.uniform(size=shape), rng.uniform(size=shape)
        got = float(ssim_loss(torch.tensor(p), torch.tensor(t)))
        assert abs(got - ssim_oracle(p, t)) < 1e-6


def test_ssim_symmetric():
    rng = np.random.default_rng(29)
    p = torch.tensor(rng.uniform(size=(1, 10, 10)))
    t = torch.tensor(rng.uniform(size=(1, 10, 10)))
    assert abs(float(ssim_loss(p, t)) - float(ssim_loss(t, p))) < 1e-12


# ---------------------------------------------------------------- Gram

def test_gram_one_hot_channels_diagonal():
    # Channels with disjoint support have orthogonal flattenings, so the
    # Gram matrix is diagonal with entries sum(f_c^2)/(H*W*C).
    f = torch.zeros(3, 4, 4)
    f[0, 0, 0] = 1.0
    f[1, 1, 1] = 2.0
    f[2, 2, 2] = 3.0
    g = gram_matrix(f)
    expected = torch.diag(torch.tensor([1.0, 4.0, 9.0])) / (16 * 3)
    torch.testing.assert_close(g, expected)


def test_gram_identical_channels_offdiagonal():
    rng = np.random.default_rng(31)
    base = rng.normal(size=(4, 4))
    f = torch.tensor(np.stack([base, base, rng.normal(size=(4, 4))]))
    g = gram_matrix(f)
    assert abs(float(g[0, 1] - g[0, 0])) < 1e-12


def test_gram_matches_oracle_random():
    rng = np.random.default_rng(37)
    f = rng.normal(size=(3, 4, 4))
    got = gram_matrix(torch.tensor(f)).numpy()
    np.testing.assert_allclose(got, gram_oracle(f), atol=1e-7)
    # symmetric PSD
    np.testing.assert_allclose(got, got.T, atol=1e-12)
    assert np.linalg.eigvalsh(got).min() > -1e-10


# ------------------------------------------------------------- gradient

def test_gradient_constant_zero():
    gx, gy = spatial_gradient(torch.full((1, 5, 5), 3.3))
    assert float(gx.abs().max()) == 0.0 and float(gy.abs().max()) == 0.0


def test_gradient_ramp():
    u = torch.arange(6, dtype=torch.float64).repeat(5, 1).unsqueeze(0) * 0.2
    gx, gy = spatial_gradient(u)
    torch.testing.assert_close(gx[:, :, :-1], torch.full((1, 5, 5), 0.2, dtype=torch.float64))
    assert float(gx[:, :, -1].abs().max()) == 0.0
    assert float(gy[:, :-1, :].abs().max()) < 1e-12


def test_gradient_matches_oracle():
    rng = np.random.default_rng(41)
    x = rng.normal(size=(2, 7, 9))
    gx, gy = spatial_gradient(torch.tensor(x))
    ox, oy = gradient_oracle(x)
    np.testing.assert_array_equal(gx.numpy(), ox)
    np.testing.assert_array_equal(gy.numpy(), oy)


# ------------------------------------------------------------ perceptual

def test_perceptual_zero_on_equal():
    ext = RandomFeatureExtractor(dtype=torch.float64)
    x = torch.rand(3, 8, 8, dtype=torch.float64)
    assert float(perceptual_loss(x, x, ext)) == 0.0


def test_perceptual_nonnegative():
    ext = RandomFeatureExtractor(dtype=torch.float64)
    rng = np.random.default_rng(43)
    for _ in range(3):
        p = torch.tensor(rng.uniform(size=(3, 8, 8)))
        t = torch.tensor(rng.uniform(size=(3, 8, 8)))
        assert float(perceptual_loss(p, t, ext)) >= 0.0


def test_perceptual_matches_hand_composition():
    # Two-layer toy extractor composed by hand: the loss must equal the
    # sum of Gram L1 gaps of the manually propagated features.
    torch.manual_seed(7)

    class Toy(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.c1 = torch.nn.Conv2d(3, 4, 3, padding=1).double()
            self.c2 = torch.nn.Conv2d(4, 6, 3, padding=1).double()

        def forward(self, x):
            f1 = torch.relu(self.c1(x))
            f2 = torch.relu(self.c2(f1))
            return [f1, f2]

    ext = Toy()
    p = torch.rand(3, 8, 8, dtype=torch.float64)
    t = torch.rand(3, 8, 8, dtype=torch.float64)
    got = float(perceptual_loss(p, t, ext))
    expected = 0.0
    fp1 = torch.relu(ext.c1(p.unsqueeze(0)))
    ft1 = torch.relu(ext.c1(t.unsqueeze(0)))
    expected += float((gram_matrix(fp1[0]) - gram_matrix(ft1[0])).abs().sum())
    fp2 = torch.relu(ext.c2(fp1))
    ft2 = torch.relu(ext.c2(ft1))
    expected += float((gram_matrix(fp2[0]) - gram_matrix(ft2[0])).abs().sum())
    assert abs(got - expected) < 1e-6


# ---------------------------------------------------------- grad checks

def test_l1_gradcheck():
    rng = np.random.default_rng(53)
    t = torch.tensor(rng.uniform(size=(2, 8, 8)))
    x = torch.tensor(rng.uniform(size=(2, 8, 8)), requires_grad=True)
    loss = l1_loss(x, t)
    loss.backward()
    numeric = central_difference_grad(lambda v: l1_loss(v, t), x.detach())
    assert relative_grad_error(x.grad, numeric) < 1e-3


def test_ssim_gradcheck():
    rng = np.random.default_rng(59)
    t = torch.tensor(rng.uniform(0.2, 0.8, size=(1, 8, 8)))
    x = torch.tensor(rng.uniform(0.2, 0.8, size=(1, 8, 8)), requires_grad=True)
    loss = ssim_loss(x, t)
    loss.backward()
    numeric = central_difference_grad(lambda v: ssim_loss(v, t), x.detach())
    assert relative_grad_error(x.grad, numeric) < 1e-3


def test_perceptual_gradcheck():
    ext = RandomFeatureExtractor(widths=(4, 8, 8), dtype=torch.float64)
    rng = np.random.default_rng(61)
    t = torch.tensor(rng.uniform(size=(3, 8, 8)))
    x = torch.tensor(rng.uniform(size=(3, 8, 8)), requires_grad=True)
    loss = perceptual_loss(x, t, ext)
    loss.backward()
    numeric = central_difference_grad(lambda v: perceptual_loss(v, t, ext), x.detach())
    assert relative_grad_error(x.grad, numeric) < 1e-3


# -------------------------------------------------------------- weights

def test_default_weights_exact():
    assert LossWeights().as_tuple() == (0.9, 0.1, 0.85, 0.15, 0.45, 0.05, 0.45, 0.05)


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        LossWeights(depth_l1=-0.1)


def test_rescale_signed_range():
    g = torch.tensor([-2.0, -1.0, 0.0, 1.0, 2.0])
    torch.testing.assert_close(rescale_signed(g), torch.tensor([0.0, 0.0, 0.5, 1.0, 1.0]))
