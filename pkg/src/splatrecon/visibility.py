"""Depth-constrained 3D-2D visibility validation.

A point is visible in a view when its projection lands in bounds and the
expected camera-space depth agrees with the bilinearly sampled depth map
within an absolute-plus-relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class VisibilityRecord:
    point_id: int
    visible_views: list = field(default_factory=list)  # (view_id, pixel(2,), d_exp, d_img)


def sample_depth_bilinear(depth, pixel):
    """Bilinear depth sample; None when a contributing texel is sentinel 0.

    Texels with zero interpolation weight do not count as contributing, so
    exact integer coordinates read a single texel.
    """
    u, v = float(pixel[0]), float(pixel[1])
    W, H = depth.width, depth.height
    if not (0.0 <= u <= W - 1 and 0.0 <= v <= H - 1):
        raise ValueError(f"pixel ({u},{v}) outside [0,{W - 1}]x[0,{H - 1}]")
    d = depth.plane(0)
    j0, i0 = int(np.floor(u)), int(np.floor(v))
    j1, i1 = min(j0 + 1, W - 1), min(i0 + 1, H - 1)
    fu, fv = u - j0, v - i0
    weights = ((1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv)
    texels = (d[i0, j0], d[i0, j1], d[i1, j0], d[i1, j1])
    total = 0.0
    for w, t in zip(weights, texels):
        if w == 0.0:
            continue
        if t == 0.0:
            return None
        total += w * float(t)
    return total


def expected_depth(x, view) -> float:
    """Camera-space z of a world point; the depth convention of the renderer."""
    xc = view.rotation @ np.asarray(x, dtype=np.float64) + view.translation
    z = float(xc[2])
    if z <= 0:
        raise ValueError("point does not project in front of the camera")
    return z


def depth_consistent(d_exp, d_img, config) -> bool:
    return abs(d_exp - d_img) <= config.depth_eps_abs + config.depth_eps_rel * d_exp


def validate_visibility(points, views, depths, config):
    """Accepted (point, view) pairs under the depth-consistency test.

    Every point gets a record (possibly with no visible views); pairs are
    visited and recorded in (point, view) order, so output is deterministic.
    """
    if len(views) != len(depths):
        raise ValueError("one depth map per view required")
    records = []
    for pid, p in enumerate(points):
        rec = VisibilityRecord(point_id=pid)
        p = np.asarray(p, dtype=np.float64)
        for view, depth in zip(views, depths):
            xc = view.rotation @ p + view.translation
            z = float(xc[2])
            if z <= 0:
                continue
            K = view.intrinsics
            u = K[0, 0] * xc[0] / z + K[0, 2]
            v = K[1, 1] * xc[1] / z + K[1, 2]
            if not (0.0 <= u <= view.width - 1 and 0.0 <= v <= view.height - 1):
                continue
            d_img = sample_depth_bilinear(depth, (u, v))
            if d_img is None:
                continue
            if depth_consistent(z, d_img, config):
                rec.visible_views.append((view.view_id, np.array([u, v]), z, d_img))
        records.append(rec)
    return records


def save_records(path, records):
    with open(path, "w") as fh:
        fh.write("# point_id view_id px py d_exp d_img\n")
        for rec in records:
            for view_id, px, d_exp, d_img in rec.visible_views:
                fh.write(f"{rec.point_id} {view_id} {float(px[0])!r} {float(px[1])!r} "
                         f"{float(d_exp)!r} {float(d_img)!r}\n")
