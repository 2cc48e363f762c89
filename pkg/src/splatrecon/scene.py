"""Core domain types shared by every pipeline stage.

Primitives, cameras, rasters, meshes and the global configuration are all
immutable after construction so they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

ROTATION_DET_TOL = 1e-9
NORMAL_NORM_TOL = 1e-6


@dataclass(frozen=True)
class GaussianPrimitive:
    """Anisotropic 3D Gaussian scene element."""

    center: np.ndarray          # (3,) scene units
    covariance: np.ndarray      # (3,3) symmetric positive-definite, scene units^2
    opacity: float              # in [0,1]
    color: np.ndarray           # (3,) in [0,1]
    normal: np.ndarray          # (3,) unit vector
    id: int

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=np.float64).reshape(3))

    def check(self):
        """Return a list of violated invariants, empty when valid."""
        bad = []
        if not np.all(np.isfinite(self.center)):
            bad.append("center not finite")
        cov = self.covariance
        if not np.all(np.isfinite(cov)):
            bad.append("covariance not finite")
        elif not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            bad.append("covariance not symmetric")
        else:
            eigvals = np.linalg.eigvalsh(cov)
            if np.min(eigvals) <= 0:
                bad.append("covariance not positive-definite")
        if not (0.0 <= self.opacity <= 1.0):
            bad.append("opacity outside [0,1]")
        if np.any(self.color < 0) or np.any(self.color > 1):
            bad.append("color outside [0,1]")
        if abs(float(np.linalg.norm(self.normal)) - 1.0) > NORMAL_NORM_TOL:
            bad.append("normal not unit length")
        return bad


@dataclass(frozen=True)
class CameraView:
    """Calibrated pinhole view; world-to-camera is x_cam = R x + t."""

    intrinsics: np.ndarray      # (3,3) upper-triangular, pixels
    rotation: np.ndarray        # (3,3) orthonormal, det +1
    translation: np.ndarray     # (3,)
    width: int
    height: int
    view_id: int

    def __post_init__(self):
        object.__setattr__(self, "intrinsics", np.asarray(self.intrinsics, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def projection(self) -> np.ndarray:
        """3x4 projection matrix K [R | t]."""
        return self.intrinsics @ np.hstack([self.rotation, self.translation[:, None]])

    @property
    def camera_center(self) -> np.ndarray:
        """World-space optical center, -R^T t."""
        return -self.rotation.T @ self.translation

    def check(self):
        bad = []
        R = self.rotation
        if not np.allclose(R @ R.T, np.eye(3), rtol=0, atol=1e-9):
            bad.append("rotation not orthonormal")
        elif abs(float(np.linalg.det(R)) - 1.0) > ROTATION_DET_TOL:
            bad.append("not a proper rotation")
        K = self.intrinsics
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            bad.append("non-positive focal length")
        if abs(K[1, 0]) > 0 or abs(K[2, 0]) > 0 or abs(K[2, 1]) > 0:
            bad.append("intrinsics lower triangle not zero")
        if self.width <= 0 or self.height <= 0:
            bad.append("non-positive resolution")
        if np.linalg.matrix_rank(self.projection) != 3:
            bad.append("projection matrix rank-deficient")
        return bad


class ImageBuffer:
    """H x W x C float32 raster.

    Value semantics depend on role: color in [0,1], normal components in
    [-1,1], depth in scene units with 0 as the empty sentinel, masks in {0,1}.
    """

    __slots__ = ("width", "height", "channels", "data")

    def __init__(self, width, height, channels, data=None):
        if channels < 1 or channels > 3:
            raise ValueError("channels must be 1..3")
        self.width = int(width)
        self.height = int(height)
        self.channels = int(channels)
        if data is None:
            self.data = np.zeros((self.height, self.width, self.channels), dtype=np.float32)
        else:
            arr = np.asarray(data, dtype=np.float32).reshape(self.height, self.width, self.channels)
            self.data = arr

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(w, h, c, arr)

    def plane(self, c=0) -> np.ndarray:
        return self.data[:, :, c]

    def check(self, role=None):
        bad = []
        if self.data.shape != (self.height, self.width, self.channels):
            bad.append("data shape mismatch")
        if not np.all(np.isfinite(self.data)):
            bad.append("non-finite entries")
        if role == "mask":
            vals = np.unique(self.data)
            if not np.all(np.isin(vals, [0.0, 1.0])):
                bad.append("mask entries outside {0,1}")
        return bad

    def __eq__(self, other):
        return (
            isinstance(other, ImageBuffer)
            and self.width == other.width
            and self.height == other.height
            and self.channels == other.channels
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface."""

    vertices: np.ndarray    # (V,3) float64
    triangles: np.ndarray   # (F,3) int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def check(self):
        bad = []
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                bad.append("triangle index out of range")
            a, b, c = self.triangles.T
            if np.any(a == b) or np.any(b == c) or np.any(a == c):
                bad.append("triangle repeats a vertex")
            keys = {tuple(sorted(tri)) for tri in self.triangles.tolist()}
            if len(keys) != len(self.triangles):
                bad.append("duplicate triangle")
        if not np.all(np.isfinite(self.vertices)):
            bad.append("non-finite vertex")
        return bad

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (E,2) index array."""
        if not len(self.triangles):
            return np.zeros((0, 2), dtype=np.int64)
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


@dataclass(frozen=True)
class PipelineConfig:
    """Every free parameter of the reconstruction pipeline.

    Defaults are calibrated on the synthetic scenes; all values can be
    overridden via a key=value config file or CLI flags.
    """

    tv_lambda: float = 0.5            # smoothing-vs-fidelity balance of the denoiser
    tv_iterations: int = 60
    edge_threshold: float = 0.5       # gradient-magnitude threshold for edge masks
    loss_weights: tuple = (0.8, 0.2, 0.05)
    loss_epsilon: float = 1e-8
    prune_tau: float = 0.1            # edge-score pruning threshold
    depth_eps_abs: float = 0.01
    depth_eps_rel: float = 0.01
    graphcut_beta: float = 1.0        # weight of the geometric facet cost
    vis_sigma: float = 1.0            # visibility kernel decay, scene units
    vis_alpha: float = 1.0            # capacity contributed per supporting ray
    postfilter_edge_factor: float = 5.0
    splat_cutoff_sigmas: float = 3.0

    def check(self):
        bad = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "loss_weights":
                if len(v) != 3 or any(w < 0 for w in v):
                    bad.append("loss_weights must be 3 non-negative scalars")
                continue
            if not v > 0:
                bad.append(f"{f.name} must be positive")
        if not (0.0 <= self.prune_tau <= 1.0):
            bad.append("prune_tau outside [0,1]")
        return bad


@dataclass
class ValidationReport:
    ok: bool
    violations: list = field(default_factory=list)   # (kind, id, message)

    def __str__(self):
        if self.ok:
            return "scene valid"
        return "\n".join(f"{kind} {ident}: {msg}" for kind, ident, msg in self.violations)


def validate_scene(primitives, views) -> ValidationReport:
    """Check every primitive and view invariant; report violations by id."""
    violations = []
    if not primitives:
        violations.append(("scene", -1, "empty primitive list"))
    if not views:
        violations.append(("scene", -1, "empty view list"))
    for p in primitives:
        for msg in p.check():
            violations.append(("primitive", p.id, msg))
    for v in views:
        for msg in v.check():
            violations.append(("view", v.view_id, msg))
    return ValidationReport(ok=not violations, violations=violations)
