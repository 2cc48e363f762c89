"""Incremental Delaunay tetrahedralization.

Bowyer-Watson insertion with ghost tetrahedra over the convex hull and
exact-sign predicates everywhere a decision is made, so the strict empty
circumsphere property holds for every output tetrahedron. Cospherical ties
resolve to "not in conflict", which keeps the non-strict Delaunay property
and provably never creates degenerate cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predicates import GHOST, incircle_coplanar, insphere_sign, orient3d

# facet k is opposite vertex k, ordered with outward normal for a
# positively oriented tetrahedron (orient3d(v0,v1,v2,v3) > 0)
FACET_VERTS = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


@dataclass
class TetMesh:
    """Tetrahedralization plus the derived data downstream stages need."""

    vertices: np.ndarray       # (n,3) float64, identical to the input points
    tetrahedra: np.ndarray     # (T,4) int64, positively oriented
    adjacency: np.ndarray      # (T,4) int64; entry -1 marks a hull facet
    circumcenters: np.ndarray  # (T,3) float64
    vertex_tet: np.ndarray     # (n,) int64, one incident tetrahedron per vertex

    @property
    def tet_count(self):
        return len(self.tetrahedra)

    def facet_vertices(self, t, k):
        vs = self.tetrahedra[t]
        i, j, l = FACET_VERTS[k]
        return vs[i], vs[j], vs[l]

    def hull_facets(self):
        """(tet, slot) pairs whose facet lies on the convex hull."""
        out = []
        for t in range(len(self.tetrahedra)):
            for k in range(4):
                if self.adjacency[t, k] == -1:
                    out.append((t, k))
        return out


class _Builder:
    def __init__(self, points):
        self.pts = [tuple(map(float, p)) for p in points]
        self.tets = []       # 4-lists of vertex ids; ghosts keep GHOST at slot 3
        self.nbr = []        # 4-lists of tet ids
        self.alive = []
        self.hint = 0

    # -- construction helpers ------------------------------------------------

    def _add_tet(self, vs):
        self.tets.append(list(vs))
        self.nbr.append([-1, -1, -1, -1])
        self.alive.append(True)
        return len(self.tets) - 1

    def _is_ghost(self, t):
        return self.tets[t][3] == GHOST

    def _facet(self, t, k):
        vs = self.tets[t]
        i, j, l = FACET_VERTS[k]
        return vs[i], vs[j], vs[l]

    def _facet_key(self, t, k):
        return tuple(sorted(self._facet(t, k)))

    def init_simplex(self):
        pts = self.pts
        n = len(pts)
        i0 = 0
        i1 = next((i for i in range(n) if pts[i] != pts[i0]), None)
        if i1 is None:
            raise ValueError("fewer than 4 distinct points")
        i2 = next((i for i in range(n) if i not in (i0, i1)
                   and not _collinear(pts[i0], pts[i1], pts[i])), None)
        if i2 is None:
            raise ValueError("all points coplanar")
        i3 = next((i for i in range(n) if i not in (i0, i1, i2)
                   and orient3d(pts[i0], pts[i1], pts[i2], pts[i]) != 0), None)
        if i3 is None:
            raise ValueError("all points coplanar")
        if orient3d(pts[i0], pts[i1], pts[i2], pts[i3]) < 0:
            i0, i1 = i1, i0
        t = self._add_tet((i0, i1, i2, i3))
        ghosts = []
        for k in range(4):
            f = self._facet(t, k)
            g = self._add_tet((f[0], f[1], f[2], GHOST))
            self.nbr[t][k] = g
            self.nbr[g][3] = t
            ghosts.append(g)
        # ghost edge-facets pair up across the initial hull
        pending = {}
        for g in ghosts:
            for k in range(3):
                key = self._facet_key(g, k)
                if key in pending:
                    og, ok = pending.pop(key)
                    self.nbr[g][k] = og
                    self.nbr[og][ok] = g
                else:
                    pending[key] = (g, k)
        assert not pending
        self.hint = t
        return i0, i1, i2, i3

    # -- point location ------------------------------------------------------

    def locate(self, p):
        t = self.hint
        if not self.alive[t]:
            t = next(i for i in range(len(self.tets) - 1, -1, -1) if self.alive[i])
        if self._is_ghost(t):
            t = self.nbr[t][3]
        while True:
            vs = self.tets[t]
            if vs[3] == GHOST:
                return t
            moved = False
            for k in range(4):
                a, b, c = (self.pts[v] for v in self._facet(t, k))
                if orient3d(a, b, c, p) > 0:
                    t = self.nbr[t][k]
                    moved = True
                    break
            if not moved:
                return t

    # -- conflict test ---------------------------------------------------------

    def conflicts(self, t, p):
        vs = self.tets[t]
        if vs[3] == GHOST:
            a, b, c = self.pts[vs[0]], self.pts[vs[1]], self.pts[vs[2]]
            s = orient3d(a, b, c, p)
            if s != 0:
                return s > 0
            return incircle_coplanar(a, b, c, p) > 0
        a, b, c, d = (self.pts[v] for v in vs)
        return insphere_sign(a, b, c, d, p) < 0

    # -- insertion -------------------------------------------------------------

    def insert(self, pid):
        p = self.pts[pid]
        seed = self.locate(p)
        for v in self.tets[seed]:
            if v != GHOST and self.pts[v] == p:
                raise ValueError(f"duplicate point at index {pid}")

        conflict = {seed}
        queue = [seed]
        while queue:
            t = queue.pop()
            for nb in self.nbr[t]:
                if nb not in conflict and self.conflicts(nb, p):
                    conflict.add(nb)
                    queue.append(nb)

        boundary = []
        for t in conflict:
            for k in range(4):
                nb = self.nbr[t][k]
                if nb not in conflict:
                    boundary.append((t, k, nb))

        for t in conflict:
            self.alive[t] = False

        pending = {}
        for t, k, nb in boundary:
            vs = self.tets[t]
            if vs[3] == GHOST and k < 3:
                # silhouette edge in hull-facet cycle order; the fan facet
                # (u, v, pid) inherits the outward orientation
                u, v = ((vs[1], vs[2]), (vs[2], vs[0]), (vs[0], vs[1]))[k]
                nt = (u, v, pid, GHOST)
                shared_slot = 2
            else:
                f = self._facet(t, k)
                nt = (f[1], f[0], f[2], pid)
                shared_slot = 3
            ti = self._add_tet(nt)
            self.nbr[ti][shared_slot] = nb
            for j in range(4):
                if self.nbr[nb][j] == t:
                    self.nbr[nb][j] = ti
                    break
            else:
                raise AssertionError("boundary neighbor lost its back-pointer")
            for s in range(4):
                if s == shared_slot:
                    continue
                key = self._facet_key(ti, s)
                if key in pending:
                    tj, sj = pending.pop(key)
                    self.nbr[ti][s] = tj
                    self.nbr[tj][sj] = ti
                else:
                    pending[key] = (ti, s)
        if pending:
            raise AssertionError("cavity boundary did not close")
        self.hint = len(self.tets) - 1

    # -- output ------------------------------------------------------------

    def finish(self):
        keep = [t for t in range(len(self.tets))
                if self.alive[t] and not self._is_ghost(t)]
        remap = {t: i for i, t in enumerate(keep)}
        tetra = np.array([self.tets[t] for t in keep], dtype=np.int64)
        adj = np.full((len(keep), 4), -1, dtype=np.int64)
        for i, t in enumerate(keep):
            for k in range(4):
                nb = self.nbr[t][k]
                if nb != -1 and self.alive[nb] and not self._is_ghost(nb):
                    adj[i, k] = remap[nb]
        verts = np.asarray(self.pts, dtype=np.float64)
        vertex_tet = np.full(len(verts), -1, dtype=np.int64)
        for i in range(len(keep)):
            for v in tetra[i]:
                vertex_tet[v] = i
        return TetMesh(verts, tetra, adj, _circumcenters(verts, tetra), vertex_tet)


def _collinear(a, b, c):
    from fractions import Fraction
    ux = Fraction(b[0]) - Fraction(a[0])
    uy = Fraction(b[1]) - Fraction(a[1])
    uz = Fraction(b[2]) - Fraction(a[2])
    vx = Fraction(c[0]) - Fraction(a[0])
    vy = Fraction(c[1]) - Fraction(a[1])
    vz = Fraction(c[2]) - Fraction(a[2])
    return (uy * vz == uz * vy) and (uz * vx == ux * vz) and (ux * vy == uy * vx)


def _circumcenters(verts, tetra):
    if not len(tetra):
        return np.zeros((0, 3))
    a = verts[tetra[:, 0]]
    rows = np.stack([verts[tetra[:, k]] - a for k in (1, 2, 3)], axis=1)  # (T,3,3)
    rhs = 0.5 * np.einsum("tij,tij->ti", rows, rows)
    centers = np.empty((len(tetra), 3))
    try:
        centers[:] = a + np.linalg.solve(rows, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for i in range(len(tetra)):
            try:
                centers[i] = a[i] + np.linalg.solve(rows[i], rhs[i])
            except np.linalg.LinAlgError:
                centers[i] = a[i] + np.linalg.lstsq(rows[i], rhs[i], rcond=None)[0]
    return centers


def tetrahedralize(points) -> TetMesh:
    """Delaunay tetrahedralization of a point set.

    Points are inserted in input order (after the seed simplex), so the
    result is deterministic. Raises ValueError for fewer than 4 points, a
    fully coplanar set, or exactly repeated coordinates.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < 4:
        raise ValueError("fewer than 4 points")
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite point coordinates")
    builder = _Builder(points)
    used = set(builder.init_simplex())
    seen = {builder.pts[i] for i in used}
    for pid in range(len(points)):
        if pid in used:
            continue
        if builder.pts[pid] in seen:
            raise ValueError(f"duplicate point at index {pid}")
        seen.add(builder.pts[pid])
        builder.insert(pid)
    return builder.finish()
