"""Reconstruction metrics: vertex-to-nearest-triangle RMSE plus counts.

Nearest-triangle queries run through an axis-aligned BVH with best-first
traversal and exact leaf tests, so results equal exhaustive search.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .scene import TriangleMesh


@dataclass
class EvalReport:
    rmse: float
    face_count: int
    vertex_count: int
    wall_time: float
    per_vertex_distances: np.ndarray | None = None

    def as_text(self):
        lines = [f"rmse={self.rmse!r}", f"face_count={self.face_count}",
                 f"vertex_count={self.vertex_count}", f"wall_time={self.wall_time!r}"]
        return "\n".join(lines)


def point_triangle_distance(p, tri):
    """Exact distance from a point to a closed triangle and the witness point.

    Region tests follow the standard closest-point-on-triangle construction
    (face interior, edges, vertices).
    """
    a, b, c = (np.asarray(v, dtype=np.float64) for v in tri)
    p = np.asarray(p, dtype=np.float64)
    if np.linalg.norm(np.cross(b - a, c - a)) <= 2e-12:
        raise ValueError("degenerate triangle")

    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0 and d2 <= 0:
        w = a
    else:
        bp = p - b
        d3 = ab @ bp
        d4 = ac @ bp
        if d3 >= 0 and d4 <= d3:
            w = b
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0 and d1 >= 0 and d3 <= 0:
                w = a + ab * (d1 / (d1 - d3))
            else:
                cp = p - c
                d5 = ab @ cp
                d6 = ac @ cp
                if d6 >= 0 and d5 <= d6:
                    w = c
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0 and d2 >= 0 and d6 <= 0:
                        w = a + ac * (d2 / (d2 - d6))
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
                            w = b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)))
                        else:
                            denom = va + vb + vc
                            v = vb / denom
                            u = vc / denom
                            w = a + ab * v + ac * u
    return float(np.linalg.norm(p - w)), w


class TriangleBVH:
    """Median-split AABB tree over triangles with exact best-first queries."""

    LEAF_SIZE = 4

    def __init__(self, mesh: TriangleMesh):
        if not len(mesh.triangles):
            raise ValueError("empty mesh")
        self.mesh = mesh
        tris = mesh.triangles
        corners = mesh.vertices[tris]                    # (F,3,3)
        self.lo = corners.min(axis=1)
        self.hi = corners.max(axis=1)
        centers = corners.mean(axis=1)
        self.nodes = []                                  # (lo, hi, left, right, tri_ids)
        order = np.arange(len(tris))
        self.root = self._build(order, centers)

    def _build(self, ids, centers):
        lo = self.lo[ids].min(axis=0)
        hi = self.hi[ids].max(axis=0)
        node_id = len(self.nodes)
        self.nodes.append([lo, hi, -1, -1, None])
        if len(ids) <= self.LEAF_SIZE:
            self.nodes[node_id][4] = ids
            return node_id
        axis = int(np.argmax(hi - lo))
        med = np.argsort(centers[ids, axis])
        half = len(ids) // 2
        left = self._build(ids[med[:half]], centers)
        right = self._build(ids[med[half:]], centers)
        self.nodes[node_id][2] = left
        self.nodes[node_id][3] = right
        return node_id

    def _box_dist2(self, node_id, p):
        lo, hi = self.nodes[node_id][0], self.nodes[node_id][1]
        d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
        return float(d @ d)

    def nearest(self, p):
        """(distance, triangle id, witness point) of the closest triangle."""
        p = np.asarray(p, dtype=np.float64)
        best = (np.inf, -1, None)
        heap = [(self._box_dist2(self.root, p), self.root)]
        verts = self.mesh.vertices
        tris = self.mesh.triangles
        while heap:
            d2, node_id = heapq.heappop(heap)
            if d2 >= best[0] ** 2:
                break
            lo, hi, left, right, ids = self.nodes[node_id]
            if ids is not None:
                for ti in ids:
                    dist, w = point_triangle_distance(p, verts[tris[ti]])
                    if dist < best[0]:
                        best = (dist, int(ti), w)
            else:
                for child in (left, right):
                    cd2 = self._box_dist2(child, p)
                    if cd2 < best[0] ** 2:
                        heapq.heappush(heap, (cd2, child))
        return best


def rmse(rec: TriangleMesh, gt: TriangleMesh, keep_distances=False) -> EvalReport:
    """Root mean square distance from every rec vertex to its nearest GT triangle."""
    if not len(rec.triangles) or not len(gt.triangles):
        raise ValueError("empty mesh")
    start = time.perf_counter()
    bvh = TriangleBVH(gt)
    dists = np.empty(len(rec.vertices))
    for i, v in enumerate(rec.vertices):
        dists[i], _, _ = bvh.nearest(v)
    value = float(np.sqrt(np.mean(dists ** 2)))
    return EvalReport(
        rmse=value,
        face_count=len(rec.triangles),
        vertex_count=len(rec.vertices),
        wall_time=time.perf_counter() - start,
        per_vertex_distances=dists if keep_distances else None,
    )


def append_csv_row(path, scene, method, report: EvalReport, time_s=None):
    """Append one results row; writes the header when the file is new."""
    import os
    new = not os.path.exists(path)
    with open(path, "a") as fh:
        if new:
            fh.write("scene,method,faces,vertices,time_s,rmse\n")
        t = report.wall_time if time_s is None else time_s
        fh.write(f"{scene},{method},{report.face_count},{report.vertex_count},{t:.3f},{report.rmse}\n")
