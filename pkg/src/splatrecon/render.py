"""Forward splat rendering: project Gaussians to 2D footprints and
front-to-back alpha-composite color, normal and depth rasters.

No gradients, no tiling; plain numpy over per-splat windows. Depth is the
alpha-weighted mean of per-splat camera-space z, normals are composited in
world space and renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ImageBuffer

ALPHA_FLOOR = 1.0 / 255.0     # standard splatting contribution floor
ACCUM_EPS = 1e-4              # below this accumulated alpha a pixel stays sentinel


@dataclass(frozen=True)
class Splat2D:
    center2d: np.ndarray   # (2,) pixels
    cov2d: np.ndarray      # (2,2) pixels^2, positive-definite
    depth: float           # camera-space z, > 0
    source_id: int

    def check(self):
        bad = []
        if not self.depth > 0:
            bad.append("non-positive depth")
        c = self.cov2d
        if c[0, 0] <= 0 or np.linalg.det(c) <= 0:
            bad.append("cov2d not positive-definite")
        return bad


def evaluate_gaussian(primitive, x) -> float:
    """exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)); 1 exactly at the center."""
    cov = primitive.covariance
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 0 or eig[-1] / eig[0] > 1e12:
        raise ValueError(f"near-singular covariance on primitive {primitive.id}")
    d = np.asarray(x, dtype=np.float64) - primitive.center
    q = float(d @ np.linalg.solve(cov, d))
    return float(np.exp(-0.5 * q))


def project_splat(primitive, view, cutoff) -> Splat2D | None:
    """Project one Gaussian to its elliptical splat; None when culled."""
    K, R, t = view.intrinsics, view.rotation, view.translation
    xc = R @ primitive.center + t
    z = float(xc[2])
    if z <= 0:
        return None
    fx, fy = K[0, 0], K[1, 1]
    u = fx * xc[0] / z + K[0, 2]
    v = fy * xc[1] / z + K[1, 2]
    # Jacobian of (u,v) wrt world position at the center
    J = np.array([[fx / z, 0.0, -fx * xc[0] / z ** 2],
                  [0.0, fy / z, -fy * xc[1] / z ** 2]]) @ R
    cov2d = J @ primitive.covariance @ J.T
    r = cutoff * np.sqrt(np.maximum(np.diag(cov2d), 0.0))
    if (u + r[0] < 0 or u - r[0] > view.width - 1
            or v + r[1] < 0 or v - r[1] > view.height - 1):
        return None
    return Splat2D(center2d=np.array([u, v]), cov2d=cov2d, depth=z,
                   source_id=primitive.id)


def composite_pixel(depths, alphas, attributes):
    """Front-to-back compositing of depth-sorted contributions.

    Returns (composited attribute vector, final transmittance). Rejects
    unsorted depths and alphas outside [0,1].
    """
    depths = np.asarray(depths, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    attributes = np.atleast_2d(np.asarray(attributes, dtype=np.float64))
    if np.any(np.diff(depths) < 0):
        raise ValueError("contributions must be sorted by ascending depth")
    if np.any(alphas < 0) or np.any(alphas > 1):
        raise ValueError("effective alpha outside [0,1]")
    out = np.zeros(attributes.shape[1])
    T = 1.0
    for a, attr in zip(alphas, attributes):
        out += T * a * attr
        T *= 1.0 - a
    return out, T


@dataclass
class RenderMaps:
    color: ImageBuffer
    normal: ImageBuffer
    depth: ImageBuffer
    empty: bool = False    # warning flag: no primitive touched the image


def render_maps(primitives, view, config) -> RenderMaps:
    """Render color/normal/depth rasters of a primitive set for one view."""
    H, W = view.height, view.width
    color_acc = np.zeros((H, W, 3))
    normal_acc = np.zeros((H, W, 3))
    depth_acc = np.zeros((H, W))
    alpha_acc = np.zeros((H, W))
    transmit = np.ones((H, W))

    splats = []
    for p in primitives:
        s = project_splat(p, view, config.splat_cutoff_sigmas)
        if s is not None:
            splats.append((s, p))
    splats.sort(key=lambda sp: sp[0].depth)

    cols = np.arange(W, dtype=np.float64)
    rows = np.arange(H, dtype=np.float64)
    rendered_any = False
    for s, p in splats:
        u, v = s.center2d
        c00, c01, c11 = s.cov2d[0, 0], s.cov2d[0, 1], s.cov2d[1, 1]
        det = c00 * c11 - c01 * c01
        if det <= 1e-24:
            continue
        i00, i01, i11 = c11 / det, -c01 / det, c00 / det
        rx = config.splat_cutoff_sigmas * np.sqrt(c00)
        ry = config.splat_cutoff_sigmas * np.sqrt(c11)
        j0, j1 = max(0, int(np.ceil(u - rx))), min(W - 1, int(np.floor(u + rx)))
        i0, i1 = max(0, int(np.ceil(v - ry))), min(H - 1, int(np.floor(v + ry)))
        if j0 > j1 or i0 > i1:
            continue
        dx = cols[j0:j1 + 1] - u
        dy = rows[i0:i1 + 1] - v
        q = (i00 * dx[None, :] ** 2
             + 2.0 * i01 * dy[:, None] * dx[None, :]
             + i11 * dy[:, None] ** 2)
        a = p.opacity * np.exp(-0.5 * q)
        a[a < ALPHA_FLOOR] = 0.0
        if not np.any(a):
            continue
        rendered_any = True
        sub = (slice(i0, i1 + 1), slice(j0, j1 + 1))
        w = transmit[sub] * a
        color_acc[sub] += w[:, :, None] * p.color
        normal_acc[sub] += w[:, :, None] * p.normal
        depth_acc[sub] += w * s.depth
        alpha_acc[sub] += w
        transmit[sub] *= 1.0 - a

    valid = alpha_acc > ACCUM_EPS
    depth = np.where(valid, depth_acc / np.maximum(alpha_acc, ACCUM_EPS), 0.0)
    nrm = np.linalg.norm(normal_acc, axis=2)
    unit = normal_acc / np.maximum(nrm, 1e-12)[:, :, None]
    normal = np.where((valid & (nrm > 1e-12))[:, :, None], unit, 0.0)

    return RenderMaps(
        color=ImageBuffer.from_array(color_acc),
        normal=ImageBuffer.from_array(normal),
        depth=ImageBuffer.from_array(depth[:, :, None]),
        empty=not rendered_any,
    )
