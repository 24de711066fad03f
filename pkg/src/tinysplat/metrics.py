"""Image quality metrics and the training loss.

SSIM uses the 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03 on a
unit dynamic range, evaluated per channel on the valid interior (no
padding) and averaged. The loss is (1-lambda)*L1 + lambda*(1-SSIM) with
an analytic image gradient; both pieces run in float64.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeMismatchError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
C1 = (K1 * 1.0) ** 2
C2 = (K2 * 1.0) ** 2


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def psnr(a, b) -> float:
    """10*log10(1/MSE) for unit-range images; +inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"psnr shapes {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _filter_valid(img, w):
    """Separable window filter; returns only the fully-supported interior."""
    r = len(w) // 2
    out = correlate1d(img, w, axis=0, mode="constant")
    out = correlate1d(out, w, axis=1, mode="constant")
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def _filter_transpose(field, shape, w):
    """Adjoint of _filter_valid: embed the interior field and filter again."""
    r = len(w) // 2
    canvas = np.zeros(shape)
    canvas[r:shape[0] - r, r:shape[1] - r] = field
    out = correlate1d(canvas, w, axis=0, mode="constant")
    return correlate1d(out, w, axis=1, mode="constant")


def _ssim_channel(x, y, w, need_grad: bool):
    mu_x = _filter_valid(x, w)
    mu_y = _filter_valid(y, w)
    xx = _filter_valid(x * x, w)
    yy = _filter_valid(y * y, w)
    xy = _filter_valid(x * y, w)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y

    A1 = 2.0 * mu_x * mu_y + C1
    A2 = 2.0 * cov + C2
    B1 = mu_x * mu_x + mu_y * mu_y + C1
    B2 = var_x + var_y + C2
    S = (A1 * A2) / (B1 * B2)
    if not need_grad:
        return float(S.mean()), None

    n = S.size
    dA1 = A2 / (B1 * B2)
    dA2 = A1 / (B1 * B2)
    dB1 = -S / B1
    dB2 = -S / B2
    # fields multiplying the filtered moments of x
    g_mu = 2.0 * mu_y * dA1 - 2.0 * mu_y * dA2 + 2.0 * mu_x * dB1 - 2.0 * mu_x * dB2
    g_xy = 2.0 * dA2    # weight on w*(x*y)
    g_xx = dB2          # weight on w*(x*x)
    grad = _filter_transpose(g_mu, x.shape, w)
    grad += _filter_transpose(g_xy, x.shape, w) * y
    grad += _filter_transpose(g_xx, x.shape, w) * (2.0 * x)
    return float(S.mean()), grad / n


def ssim(a, b) -> float:
    """Mean structural similarity over channels (unit-range images)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim shapes {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    w = gaussian_window()
    vals = [_ssim_channel(a[..., c], b[..., c], w, False)[0] for c in range(a.shape[-1])]
    return float(np.mean(vals))


def ssim_and_grad(a, b):
    """(ssim, d ssim / d a) with the gradient taken per channel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = gaussian_window()
    grad = np.zeros_like(a)
    vals = []
    nch = a.shape[-1]
    for c in range(nch):
        v, g = _ssim_channel(a[..., c], b[..., c], w, True)
        vals.append(v)
        grad[..., c] = g / nch
    return float(np.mean(vals)), grad


def loss_and_grad(rendered, target, lam: float):
    """Training loss (1-lam)*L1 + lam*(1-SSIM) and its image gradient."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ShapeMismatchError(f"loss shapes {rendered.shape} vs {target.shape}")
    diff = rendered - target
    l1 = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size * (1.0 - lam)
    loss = (1.0 - lam) * l1
    if lam != 0.0:
        s, s_grad = ssim_and_grad(rendered, target)
        loss += lam * (1.0 - s)
        grad = grad - lam * s_grad
    return loss, grad
