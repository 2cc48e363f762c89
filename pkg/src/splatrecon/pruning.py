"""Multi-view edge-consistency scoring and pruning.

Each primitive's edge score is the fraction of ALL views in which its
projection lands on a masked edge pixel and passes the depth-consistency
test; primitives scoring strictly below tau are pruned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .visibility import depth_consistent, sample_depth_bilinear


@dataclass
class EdgeScoreTable:
    scores: dict                 # primitive id -> e_i in [0,1]
    per_view_hits: dict          # primitive id -> [(view_id, 0/1), ...]
    view_count: int

    def hit_count(self, pid) -> int:
        return sum(v for _, v in self.per_view_hits[pid])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("# id e_i hit_count view_count\n")
            for pid, e in self.scores.items():
                fh.write(f"{pid} {e!r} {self.hit_count(pid)} {self.view_count}\n")


def project_point(x, view):
    """Pinhole projection to pixels; None behind the camera or out of bounds."""
    xc = view.rotation @ np.asarray(x, dtype=np.float64) + view.translation
    z = float(xc[2])
    if z <= 0:
        return None
    K = view.intrinsics
    u = K[0, 0] * xc[0] / z + K[0, 2]
    v = K[1, 1] * xc[1] / z + K[1, 2]
    if not (0.0 <= u <= view.width - 1 and 0.0 <= v <= view.height - 1):
        return None
    return np.array([u, v])


def edge_visibility(primitive, view, mask, depth, config) -> int:
    """Per-view indicator: projected onto a masked pixel and depth-consistent."""
    px = project_point(primitive.center, view)
    if px is None:
        return 0
    j = int(round(float(px[0])))
    i = int(round(float(px[1])))
    if mask.mask.plane(0)[i, j] != 1.0:
        return 0
    d_img = sample_depth_bilinear(depth, px)
    if d_img is None:
        return 0
    xc = view.rotation @ primitive.center + view.translation
    return 1 if depth_consistent(float(xc[2]), d_img, config) else 0


def score_all(primitives, views, masks, depths, config) -> EdgeScoreTable:
    """Edge scores for every primitive over every view.

    Vectorized over primitives per view; equivalent to looping
    edge_visibility over all (primitive, view) pairs. The denominator is
    the total view count, including views where a primitive is invisible.
    """
    if not (len(views) == len(masks) == len(depths)):
        raise ValueError("views, masks and depths must align one-to-one")
    n = len(primitives)
    centers = np.array([p.center for p in primitives], dtype=np.float64).reshape(n, 3)
    hits = np.zeros((n, len(views)), dtype=np.int8)
    for vi, (view, mask, depth) in enumerate(zip(views, masks, depths)):
        K = view.intrinsics
        fx, fy, cx, cy = K[0, 0], K[1, 1], K[0, 2], K[1, 2]
        xc = centers @ view.rotation.T + view.translation
        z = xc[:, 2]
        ok = z > 0
        zz = np.where(ok, z, 1.0)
        u = fx * xc[:, 0] / zz + cx
        v = fy * xc[:, 1] / zz + cy
        ok &= (u >= 0) & (u <= view.width - 1) & (v >= 0) & (v <= view.height - 1)
        if not ok.any():
            continue
        uu = np.where(ok, u, 0.0)
        vv = np.where(ok, v, 0.0)
        mplane = mask.mask.plane(0)
        ok &= mplane[np.round(vv).astype(int), np.round(uu).astype(int)] == 1.0
        # bilinear depth with sentinel refusal, matching sample_depth_bilinear
        dplane = depth.plane(0).astype(np.float64)
        j0 = np.floor(uu).astype(int)
        i0 = np.floor(vv).astype(int)
        j1 = np.minimum(j0 + 1, view.width - 1)
        i1 = np.minimum(i0 + 1, view.height - 1)
        fu = uu - j0
        fv = vv - i0
        ws = ((1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv)
        ts = (dplane[i0, j0], dplane[i0, j1], dplane[i1, j0], dplane[i1, j1])
        d_img = np.zeros(n)
        sentinel = np.zeros(n, dtype=bool)
        for w, t in zip(ws, ts):
            contributing = w != 0.0
            sentinel |= contributing & (t == 0.0)
            d_img += np.where(contributing, w * t, 0.0)
        ok &= ~sentinel
        ok &= np.abs(z - d_img) <= config.depth_eps_abs + config.depth_eps_rel * z
        hits[:, vi] = ok
    view_ids = [v.view_id for v in views]
    scores, per_view = {}, {}
    for idx, p in enumerate(primitives):
        scores[p.id] = float(hits[idx].sum() / len(views))
        per_view[p.id] = [(view_ids[vi], int(hits[idx, vi])) for vi in range(len(views))]
    return EdgeScoreTable(scores=scores, per_view_hits=per_view, view_count=len(views))


def prune(primitives, table: EdgeScoreTable, tau: float):
    """Partition primitives into (kept, pruned); pruned means e_i < tau strictly."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau outside [0,1]")
    kept, pruned = [], []
    for p in primitives:
        (pruned if table.scores[p.id] < tau else kept).append(p)
    return kept, pruned
