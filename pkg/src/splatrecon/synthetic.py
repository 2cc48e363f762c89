"""Procedural test assets: parametric buildings, spiral camera paths,
analytic depth/normal renders, and surface-sampled Gaussian primitive sets
with optional interior clutter.

Everything is seed-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import CameraView, GaussianPrimitive, ImageBuffer, TriangleMesh

FRAME_COVERAGE = 0.92   # fraction of the half-frame the fit radius occupies


@dataclass(frozen=True)
class BuildingSpec:
    width: float = 4.0
    depth: float = 3.0
    wall_height: float = 2.5
    roof: str = "gable"          # "flat" or "gable"
    ridge_height: float = 1.0
    seed: int = 0

    def check(self):
        bad = []
        if min(self.width, self.depth, self.wall_height) <= 0:
            bad.append("dimensions must be positive")
        if self.roof not in ("flat", "gable"):
            bad.append("roof must be flat or gable")
        if self.roof == "gable" and self.ridge_height <= 0:
            bad.append("gable ridge_height must be positive")
        return bad


@dataclass(frozen=True)
class TrajectorySpec:
    view_count: int = 80
    radius: float = 12.5
    elevation: tuple = (1.25, 5.0)   # world-z sweep endpoints
    turns: float = 1.5
    resolution: int = 1000

    def check(self):
        bad = []
        if self.view_count < 2:
            bad.append("view_count must be >= 2")
        if self.radius <= 0 or self.resolution < 8:
            bad.append("radius/resolution out of range")
        return bad


def _quad(a, b, c, d):
    return [(a, b, c), (a, c, d)]


def generate_building(spec: BuildingSpec) -> TriangleMesh:
    """Watertight triangulated building with outward-facing normals."""
    bad = spec.check()
    if bad:
        raise ValueError("; ".join(bad))
    hw, hd, h = spec.width / 2.0, spec.depth / 2.0, spec.wall_height
    verts = [
        (-hw, -hd, 0.0), (hw, -hd, 0.0), (hw, hd, 0.0), (-hw, hd, 0.0),
        (-hw, -hd, h), (hw, -hd, h), (hw, hd, h), (-hw, hd, h),
    ]
    tris = []
    tris += _quad(0, 3, 2, 1)            # floor, -z
    tris += _quad(0, 1, 5, 4)            # wall y = -hd
    tris += _quad(2, 3, 7, 6)            # wall y = +hd
    tris += _quad(1, 2, 6, 5)            # wall x = +hw
    tris += _quad(0, 4, 7, 3)            # wall x = -hw
    if spec.roof == "flat":
        tris += _quad(4, 5, 6, 7)        # roof, +z
    else:
        r = spec.ridge_height
        verts += [(-hw, 0.0, h + r), (hw, 0.0, h + r)]   # ridge along x
        tris += _quad(4, 5, 9, 8)        # roof slope y < 0
        tris += _quad(6, 7, 8, 9)        # roof slope y > 0
        tris += [(5, 6, 9), (7, 4, 8)]   # gable triangles
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(tris, dtype=np.int64))


def building_center(spec: BuildingSpec) -> np.ndarray:
    top = spec.wall_height + (spec.ridge_height if spec.roof == "gable" else 0.0)
    return np.array([0.0, 0.0, top / 2.0])


def building_circumradius(spec: BuildingSpec) -> float:
    mesh = generate_building(spec)
    return float(np.linalg.norm(mesh.vertices - building_center(spec), axis=1).max())


def face_normals(mesh: TriangleMesh) -> np.ndarray:
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    n = np.cross(b - a, c - a)
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)


def crease_edges(mesh: TriangleMesh, angle_tol=1e-6):
    """Segments (p0, p1) of edges whose adjacent faces are not coplanar."""
    normals = face_normals(mesh)
    owners = {}
    for f, tri in enumerate(mesh.triangles.tolist()):
        for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            owners.setdefault(tuple(sorted(e)), []).append(f)
    segs = []
    for (i, j), faces in sorted(owners.items()):
        if len(faces) != 2:
            continue
        if abs(float(normals[faces[0]] @ normals[faces[1]])) < 1.0 - angle_tol:
            segs.append((mesh.vertices[i].copy(), mesh.vertices[j].copy()))
    return segs


def spiral_trajectory(spec: TrajectorySpec, target, fit_radius=None):
    """Cameras on a helix around the target, optical axis through the target."""
    bad = spec.check()
    if bad:
        raise ValueError("; ".join(bad))
    target = np.asarray(target, dtype=np.float64)
    W = H = int(spec.resolution)
    cx = cy = (W - 1) / 2.0
    if fit_radius is None:
        fit_radius = spec.radius / 2.5
    views = []
    for i in range(spec.view_count):
        frac = i / (spec.view_count - 1)
        az = 2.0 * np.pi * spec.turns * i / spec.view_count
        z = spec.elevation[0] + frac * (spec.elevation[1] - spec.elevation[0])
        pos = np.array([target[0] + spec.radius * np.cos(az),
                        target[1] + spec.radius * np.sin(az), z])
        f = target - pos
        dist = np.linalg.norm(f)
        f = f / dist
        up = np.array([0.0, 0.0, 1.0])
        if abs(f @ up) > 0.999:
            up = np.array([0.0, 1.0, 0.0])
        right = np.cross(f, up)
        right /= np.linalg.norm(right)
        down = np.cross(f, right)
        R = np.stack([right, down, f])
        t = -R @ pos
        focal = FRAME_COVERAGE * (W - 1) / 2.0 * dist / fit_radius
        K = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
        views.append(CameraView(intrinsics=K, rotation=R, translation=t,
                                width=W, height=H, view_id=i))
    return views


def render_ground_truth(mesh: TriangleMesh, view: CameraView):
    """Exact nearest-hit ray-triangle depth and face-normal rasters.

    Depth is camera-space z with sentinel 0 on misses; normals are
    world-space face normals.
    """
    W, H = view.width, view.height
    K = view.intrinsics
    jj, ii = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    d_cam = np.stack([(jj - K[0, 2]) / K[0, 0], (ii - K[1, 2]) / K[1, 1], np.ones_like(jj)], axis=2)
    dirs = d_cam.reshape(-1, 3) @ view.rotation   # R^T per row; unit camera-z scaling
    origin = view.camera_center

    best_t = np.full(len(dirs), np.inf)
    best_f = np.full(len(dirs), -1, dtype=np.int64)
    normals = face_normals(mesh)
    eps = 1e-12
    for f, tri in enumerate(mesh.triangles):
        a = mesh.vertices[tri[0]]
        e1 = mesh.vertices[tri[1]] - a
        e2 = mesh.vertices[tri[2]] - a
        h = np.cross(dirs, e2)
        det = h @ e1
        ok = np.abs(det) > eps
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = origin - a
        u = (h @ s) * inv
        q = np.cross(s[None, :], e1)[0]
        v = (dirs @ q) * inv
        t = (e2 @ q) * inv
        hit = ok & (u >= -1e-10) & (v >= -1e-10) & (u + v <= 1.0 + 1e-10) & (t > 1e-9)
        closer = hit & (t < best_t)
        best_t[closer] = t[closer]
        best_f[closer] = f

    depth = np.where(np.isfinite(best_t), best_t, 0.0).reshape(H, W)
    nrm = np.zeros((len(dirs), 3))
    hit_mask = best_f >= 0
    nrm[hit_mask] = normals[best_f[hit_mask]]
    return (ImageBuffer(W, H, 1, depth.astype(np.float32)[:, :, None]),
            ImageBuffer(W, H, 3, nrm.reshape(H, W, 3).astype(np.float32)))


def sample_counts(mesh: TriangleMesh, density, edge_bias, clutter_fraction):
    """(surface, edge, clutter) sample counts used by sample_primitives."""
    areas = _areas(mesh)
    base = int(round(density * float(areas.sum())))
    edge = 0
    if edge_bias > 0:
        crease_len = sum(np.linalg.norm(p1 - p0) for p0, p1 in crease_edges(mesh))
        edge = int(round(density * crease_len * 2.0 * edge_bias))
    clutter = int(round(clutter_fraction * base))
    return base, edge, clutter


def _areas(mesh):
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_primitives(mesh: TriangleMesh, density, edge_bias, clutter_fraction, seed):
    """Surface-sampled Gaussian primitives with optional crease bias and clutter.

    Layout is deterministic: area-weighted surface samples first, then
    crease-biased samples, then box-interior clutter; ids are sequential.
    Surface samples are stratified (jittered per-face lattice) so coverage
    holes stay bounded, and opacities sit close to 1: both emulate a
    converged field whose walls composite opaque. Tangent sigma is 0.6x the
    mean sample spacing, normal sigma 10% of it.
    """
    if not density > 0:
        raise ValueError("density must be positive")
    rng = np.random.default_rng(seed)
    n_base, n_edge, n_clutter = sample_counts(mesh, density, edge_bias, clutter_fraction)
    areas = _areas(mesh)
    normals = face_normals(mesh)
    sigma_t = 0.6 / np.sqrt(density)
    prims = []

    def add(point, frame_normal, tangent1):
        t2 = np.cross(frame_normal, tangent1)
        cov = (sigma_t ** 2 * (np.outer(tangent1, tangent1) + np.outer(t2, t2))
               + (0.1 * sigma_t) ** 2 * np.outer(frame_normal, frame_normal))
        prims.append(GaussianPrimitive(
            center=point, covariance=cov,
            opacity=float(rng.uniform(0.97, 0.995)),
            color=rng.uniform(0.0, 1.0, 3),
            normal=frame_normal, id=len(prims)))

    # largest-remainder split of the sample budget across faces
    quota = n_base * areas / areas.sum()
    counts = np.floor(quota).astype(int)
    order = np.argsort(-(quota - counts))
    for f in order[: n_base - counts.sum()]:
        counts[f] += 1
    for f, cnt in enumerate(counts):
        if cnt == 0:
            continue
        tri = mesh.triangles[f]
        a = mesh.vertices[tri[0]]
        e1 = mesh.vertices[tri[1]] - a
        e2 = mesh.vertices[tri[2]] - a
        t1 = e1 / np.linalg.norm(e1)
        # jittered lattice with physically square cells (anisotropic cell
        # pitch leaves striped coverage holes on elongated triangles)
        pitch = np.sqrt(areas[f] / cnt)
        n1 = max(1, int(np.ceil(np.linalg.norm(e1) / pitch)))
        n2 = max(1, int(np.ceil(np.linalg.norm(e2) / pitch)))
        pts = []
        for ci in range(n1):
            for cj in range(n2):
                if (ci + 0.5) / n1 + (cj + 0.5) / n2 > 1.0:
                    continue
                uu = (ci + rng.random()) / n1
                vv = (cj + rng.random()) / n2
                if uu + vv > 1.0:
                    uu, vv = 1.0 - uu, 1.0 - vv
                pts.append((uu, vv))
        if len(pts) > cnt:
            pts = [pts[k] for k in rng.permutation(len(pts))[:cnt]]
        while len(pts) < cnt:
            uu, vv = rng.random(), rng.random()
            if uu + vv > 1.0:
                uu, vv = 1.0 - uu, 1.0 - vv
            pts.append((uu, vv))
        for uu, vv in pts:
            add(a + uu * e1 + vv * e2, normals[f], t1)

    if n_edge:
        segs = crease_edges(mesh)
        edge_faces = _crease_adjacent_faces(mesh, segs)
        lens = np.array([np.linalg.norm(p1 - p0) for p0, p1 in segs])
        pick = rng.choice(len(segs), size=n_edge, p=lens / lens.sum())
        for si in pick:
            p0, p1 = segs[si]
            f = edge_faces[si][int(rng.integers(len(edge_faces[si])))]
            ed = (p1 - p0) / np.linalg.norm(p1 - p0)
            point = p0 + rng.random() * (p1 - p0)
            centroid = mesh.vertices[mesh.triangles[f]].mean(axis=0)
            w = centroid - point
            w_perp = w - (w @ ed) * ed
            nw = np.linalg.norm(w_perp)
            if nw > 1e-12:
                point = point + w_perp / nw * (rng.random() * edge_bias)
            add(point, normals[f], ed)

    if n_clutter:
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        for _ in range(n_clutter):
            point = lo + rng.random(3) * (hi - lo)
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            t1 = np.cross(n, [1.0, 0.0, 0.0])
            if np.linalg.norm(t1) < 1e-6:
                t1 = np.cross(n, [0.0, 1.0, 0.0])
            t1 /= np.linalg.norm(t1)
            add(point, n, t1)
    return prims


def _crease_adjacent_faces(mesh, segs):
    normals = face_normals(mesh)
    owners = {}
    for f, tri in enumerate(mesh.triangles.tolist()):
        for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            owners.setdefault(tuple(sorted(e)), []).append(f)
    out = []
    for p0, p1 in segs:
        # recover the vertex ids by coordinate match
        i = int(np.argmin(np.linalg.norm(mesh.vertices - p0, axis=1)))
        j = int(np.argmin(np.linalg.norm(mesh.vertices - p1, axis=1)))
        out.append(owners[tuple(sorted((i, j)))])
    return out
