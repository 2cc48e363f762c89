"""Baseline and mask-refined objectives on rendered/ground-truth pairs.

Pure measurement: no optimizer. SSIM follows the universal convention
(11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, unit data range) with
reflect padding so a per-pixel score exists everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ImageBuffer

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossReport:
    l1_refined: float
    ssim_refined: float
    normal_refined: float
    total: float
    mask_coverage: float

    def as_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in vars(self).items())


def _mask_plane(mask):
    if hasattr(mask, "mask"):        # EdgeMask
        return mask.mask.plane(0).astype(np.float64)
    if isinstance(mask, ImageBuffer):
        return mask.plane(0).astype(np.float64)
    return np.asarray(mask, dtype=np.float64)


def _check_dims(a: ImageBuffer, b: ImageBuffer):
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("image dimensions differ")


def _gauss_kernel():
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2.0
    k = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _filter2(plane, kernel):
    r = len(kernel) // 2
    pad = np.pad(plane, r, mode="reflect")
    tmp = np.zeros((plane.shape[0] + 2 * r, plane.shape[1]))
    for i, k in enumerate(kernel):
        tmp += k * pad[:, i:i + plane.shape[1]]
    out = np.zeros_like(plane)
    for i, k in enumerate(kernel):
        out += k * tmp[i:i + plane.shape[0], :]
    return out


def ssim_map(render: ImageBuffer, gt: ImageBuffer) -> np.ndarray:
    """Per-pixel SSIM averaged over channels, (H,W) float64."""
    _check_dims(render, gt)
    k = _gauss_kernel()
    maps = []
    for c in range(render.channels):
        x = render.plane(c).astype(np.float64)
        y = gt.plane(c).astype(np.float64)
        mx, my = _filter2(x, k), _filter2(y, k)
        sxx = _filter2(x * x, k) - mx * mx
        syy = _filter2(y * y, k) - my * my
        sxy = _filter2(x * y, k) - mx * my
        num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
        den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
        maps.append(num / den)
    return np.mean(maps, axis=0)


def baseline_loss(render: ImageBuffer, gt: ImageBuffer, mix: float) -> float:
    """mix * mean L1 + (1 - mix) * (1 - SSIM)."""
    _check_dims(render, gt)
    if not 0.0 <= mix <= 1.0:
        raise ValueError("mix outside [0,1]")
    l1 = float(np.mean(np.abs(render.data.astype(np.float64) - gt.data.astype(np.float64))))
    ssim = float(np.mean(ssim_map(render, gt)))
    return mix * l1 + (1.0 - mix) * (1.0 - ssim)


def _per_pixel_l1(render, gt):
    diff = np.abs(render.data.astype(np.float64) - gt.data.astype(np.float64))
    return diff.mean(axis=2)


def masked_l1(render: ImageBuffer, gt: ImageBuffer, mask, eps: float) -> float:
    """Mask-averaged L1: sum(m * |r - g|) / (sum(m) + eps)."""
    _check_dims(render, gt)
    m = _mask_plane(mask)
    return float((m * _per_pixel_l1(render, gt)).sum() / (m.sum() + eps))


def masked_ssim(render: ImageBuffer, gt: ImageBuffer, mask, eps: float) -> float:
    """Mask-averaged structural dissimilarity, same windows as baseline_loss."""
    _check_dims(render, gt)
    m = _mask_plane(mask)
    return float((m * (1.0 - ssim_map(render, gt))).sum() / (m.sum() + eps))


def masked_normal_loss(rendered_normals: ImageBuffer, depth_normals: ImageBuffer,
                       mask, eps: float) -> float:
    """Mask-weighted normal alignment: 1 - clip(n . n_depth, -1, 1).

    Zero-normal (sentinel) pixels in either map are excluded entirely; on
    the remaining pixels both maps must hold unit normals.
    """
    _check_dims(rendered_normals, depth_normals)
    if rendered_normals.channels != 3 or depth_normals.channels != 3:
        raise ValueError("normal maps need 3 channels")
    n1 = rendered_normals.data.astype(np.float64)
    n2 = depth_normals.data.astype(np.float64)
    len1 = np.linalg.norm(n1, axis=2)
    len2 = np.linalg.norm(n2, axis=2)
    valid = (len1 > 0.5) & (len2 > 0.5)
    for name, lens in (("rendered", len1), ("depth", len2)):
        sel = lens[valid]
        if sel.size and (sel.min() < 0.99 or sel.max() > 1.01):
            raise ValueError(f"non-unit normals in {name} map")
    m = _mask_plane(mask) * valid
    dots = np.clip((n1 * n2).sum(axis=2), -1.0, 1.0)
    return float((m * (1.0 - dots)).sum() / (m.sum() + eps))


def depth_to_normals(depth: ImageBuffer, view) -> ImageBuffer:
    """World-space unit normals from a depth map by central differences.

    Back-projects the four axis neighbors, crosses the two tangents and
    orients the normal toward the camera. Pixels with any sentinel-depth
    neighbor (and the one-pixel border) get a zero normal.
    """
    d = depth.plane(0).astype(np.float64)
    H, W = d.shape
    K = view.intrinsics
    fx, fy, cx, cy = K[0, 0], K[1, 1], K[0, 2], K[1, 2]
    jj, ii = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    X = (jj - cx) / fx * d
    Y = (ii - cy) / fy * d
    P = np.stack([X, Y, d], axis=2)

    tx = np.zeros_like(P)
    ty = np.zeros_like(P)
    tx[:, 1:-1] = P[:, 2:] - P[:, :-2]
    ty[1:-1, :] = P[2:, :] - P[:-2, :]

    valid = d > 0
    ok = np.zeros_like(valid)
    ok[1:-1, 1:-1] = (valid[1:-1, 1:-1] & valid[1:-1, :-2] & valid[1:-1, 2:]
                      & valid[:-2, 1:-1] & valid[2:, 1:-1])

    n_cam = np.cross(tx.reshape(-1, 3), ty.reshape(-1, 3)).reshape(H, W, 3)
    length = np.linalg.norm(n_cam, axis=2)
    ok &= length > 1e-12
    n_cam = n_cam / np.maximum(length, 1e-12)[:, :, None]
    # orient toward the camera: flip where n . p > 0
    flip = (n_cam * P).sum(axis=2) > 0
    n_cam[flip] = -n_cam[flip]
    n_world = n_cam @ view.rotation   # R^T applied row-wise
    n_world[~ok] = 0.0
    return ImageBuffer(W, H, 3, n_world.astype(np.float32))


def total_loss(render, gt, rendered_normals, depth_normals, mask, config) -> LossReport:
    """Weighted sum of the three mask-refined terms."""
    w1, w2, w3 = config.loss_weights
    eps = config.loss_epsilon
    l1 = masked_l1(render, gt, mask, eps)
    ss = masked_ssim(render, gt, mask, eps)
    nl = masked_normal_loss(rendered_normals, depth_normals, mask, eps)
    m = _mask_plane(mask)
    return LossReport(
        l1_refined=l1, ssim_refined=ss, normal_refined=nl,
        total=w1 * l1 + w2 * ss + w3 * nl,
        mask_coverage=float(m.mean()),
    )
