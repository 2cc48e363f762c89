"""Per-view binary edge masks from rendered normal maps.

Chain: quadratic-regularized denoising, unnormalized 3x3 Sobel gradient
magnitude with reflect-padded borders, strict threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .render import render_maps
from .scene import ImageBuffer, validate_scene


@dataclass(frozen=True)
class EdgeMask:
    view_id: int
    mask: ImageBuffer            # 1 channel, entries in {0,1}
    threshold_used: float

    def pixel_count(self) -> int:
        return int(self.mask.data.sum())

    def check(self, view=None):
        bad = self.mask.check(role="mask")
        if view is not None and (self.mask.width != view.width or self.mask.height != view.height):
            bad.append("mask dimensions differ from view")
        return bad


def tv_energy(u, ref, lam) -> float:
    """Discrete smoothing energy: sum |grad u|^2 + lam * sum (u - ref)^2."""
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    gx = u[:, 1:] - u[:, :-1]
    gy = u[1:, :] - u[:-1, :]
    return float((gx ** 2).sum() + (gy ** 2).sum() + lam * ((u - ref) ** 2).sum())


def tv_denoise(image: ImageBuffer, lam: float, iterations: int) -> ImageBuffer:
    """Quadratic-fidelity smoothing by fixed-step gradient descent.

    Minimizes sum(|grad u|^2 + lam |u - I|^2) per channel with Neumann
    boundaries; the step 0.2/(4+lam) keeps the descent monotone.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not np.all(np.isfinite(image.data)):
        raise ValueError("non-finite pixels")
    step = 0.2 / (4.0 + lam)
    out = np.empty_like(image.data, dtype=np.float64)
    for c in range(image.channels):
        ref = image.plane(c).astype(np.float64)
        u = ref.copy()
        for _ in range(iterations):
            lap = _laplacian(u)
            u = u + step * (lap - lam * (u - ref))
        out[:, :, c] = u
    return ImageBuffer(image.width, image.height, image.channels, out.astype(np.float32))


def _laplacian(u):
    lap = np.zeros_like(u)
    lap[:, 1:] += u[:, :-1] - u[:, 1:]
    lap[:, :-1] += u[:, 1:] - u[:, :-1]
    lap[1:, :] += u[:-1, :] - u[1:, :]
    lap[:-1, :] += u[1:, :] - u[:-1, :]
    return lap


# Sobel taps in scan order; accumulation order is part of the contract so
# that a naive per-pixel convolution reproduces results bit-for-bit.
_SOBEL_X = ((-1, -1, -1.0), (-1, 1, 1.0), (0, -1, -2.0), (0, 1, 2.0), (1, -1, -1.0), (1, 1, 1.0))
_SOBEL_Y = ((-1, -1, -1.0), (-1, 0, -2.0), (-1, 1, -1.0), (1, -1, 1.0), (1, 0, 2.0), (1, 1, 1.0))


def gradient_magnitude(image: ImageBuffer) -> ImageBuffer:
    """Unnormalized Sobel gradient magnitude, reflect-padded.

    Multi-channel images reduce by the Euclidean norm across the per-channel
    magnitudes.
    """
    if image.width < 3 or image.height < 3:
        raise ValueError("image smaller than 3x3")
    sq = None
    for c in range(image.channels):
        plane = image.plane(c).astype(np.float64)
        pad = np.pad(plane, 1, mode="reflect")
        gx = _correlate(pad, _SOBEL_X, image.height, image.width)
        gy = _correlate(pad, _SOBEL_Y, image.height, image.width)
        mag2 = gx * gx + gy * gy
        sq = mag2 if sq is None else sq + mag2
    out = np.sqrt(sq)
    return ImageBuffer(image.width, image.height, 1, out.astype(np.float32)[:, :, None])


def _correlate(pad, taps, h, w):
    out = None
    for di, dj, k in taps:
        window = pad[1 + di:1 + di + h, 1 + dj:1 + dj + w]
        term = k * window
        out = term if out is None else out + term
    return out


def threshold_mask(magnitude: ImageBuffer, thresh: float, view_id: int = -1) -> EdgeMask:
    """Binary mask of pixels whose magnitude strictly exceeds the threshold."""
    if not thresh > 0:
        raise ValueError("threshold must be positive")
    mask = (magnitude.plane(0) > thresh).astype(np.float32)
    buf = ImageBuffer(magnitude.width, magnitude.height, 1, mask[:, :, None])
    return EdgeMask(view_id=view_id, mask=buf, threshold_used=float(thresh))


def extract_masks(primitives, views, config, renders=None):
    """Edge mask per view from the frozen primitive set.

    `renders` may carry pre-rendered RenderMaps (one per view) to avoid
    re-rendering; otherwise normal maps are rendered here.
    """
    report = validate_scene(primitives, views)
    if not report.ok:
        raise ValueError(f"scene does not validate:\n{report}")
    masks = []
    for i, view in enumerate(views):
        normal = renders[i].normal if renders is not None else render_maps(primitives, view, config).normal
        smooth = tv_denoise(normal, config.tv_lambda, config.tv_iterations)
        mag = gradient_magnitude(smooth)
        masks.append(threshold_mask(mag, config.edge_threshold, view_id=view.view_id))
    return masks
