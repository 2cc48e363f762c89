"""On-disk formats: primitive sets, cameras, SFR1 rasters, OBJ meshes, configs.

Text formats print float64 values with repr so that a write/read round trip
is bit-identical. Rasters are raw float32 and round-trip by construction.
"""

from __future__ import annotations

import struct
from dataclasses import fields

import numpy as np

from .scene import CameraView, GaussianPrimitive, ImageBuffer, PipelineConfig, TriangleMesh

SFR_MAGIC = b"SFR1"


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# primitive sets: one primitive per line,
# id cx cy cz s11 s12 s13 s22 s23 s33 alpha r g b nx ny nz

def save_primitives(path, primitives):
    with open(path, "w") as fh:
        fh.write("# id cx cy cz s11 s12 s13 s22 s23 s33 alpha r g b nx ny nz\n")
        for p in primitives:
            c = p.center
            S = p.covariance
            vals = [c[0], c[1], c[2], S[0, 0], S[0, 1], S[0, 2], S[1, 1], S[1, 2], S[2, 2],
                    p.opacity, p.color[0], p.color[1], p.color[2],
                    p.normal[0], p.normal[1], p.normal[2]]
            fh.write(str(p.id) + " " + " ".join(_fmt(v) for v in vals) + "\n")


def load_primitives(path):
    prims = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 17:
                raise ValueError(f"primitive line needs 17 fields, got {len(parts)}: {line!r}")
            pid = int(parts[0])
            v = [float(x) for x in parts[1:]]
            cov = np.array([[v[3], v[4], v[5]],
                            [v[4], v[6], v[7]],
                            [v[5], v[7], v[8]]])
            prims.append(GaussianPrimitive(
                center=np.array(v[0:3]), covariance=cov, opacity=v[9],
                color=np.array(v[10:13]), normal=np.array(v[13:16]), id=pid))
    return prims


# ---------------------------------------------------------------------------
# cameras: blocks of key-value lines, one block per view

def save_cameras(path, views):
    with open(path, "w") as fh:
        for v in views:
            K, R, t = v.intrinsics, v.rotation, v.translation
            fh.write(f"view {v.view_id}\n")
            fh.write(f"fx {_fmt(K[0, 0])}\nfy {_fmt(K[1, 1])}\ncx {_fmt(K[0, 2])}\ncy {_fmt(K[1, 2])}\n")
            fh.write("rotation " + " ".join(_fmt(x) for x in R.reshape(-1)) + "\n")
            fh.write("translation " + " ".join(_fmt(x) for x in t) + "\n")
            fh.write(f"width {v.width}\nheight {v.height}\n\n")


def load_cameras(path):
    views = []
    cur = {}

    def flush():
        if not cur:
            return
        K = np.array([[cur["fx"], 0.0, cur["cx"]],
                      [0.0, cur["fy"], cur["cy"]],
                      [0.0, 0.0, 1.0]])
        views.append(CameraView(
            intrinsics=K,
            rotation=np.array(cur["rotation"]).reshape(3, 3),
            translation=np.array(cur["translation"]),
            width=int(cur["width"]), height=int(cur["height"]),
            view_id=int(cur["view"])))
        cur.clear()

    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, rest = line.split(None, 1)
            if key == "view":
                flush()
                cur["view"] = rest
            elif key in ("rotation", "translation"):
                cur[key] = [float(x) for x in rest.split()]
            else:
                cur[key] = float(rest)
    flush()
    return views


# ---------------------------------------------------------------------------
# SFR1 rasters: magic, u32 width/height/channels, float32 data,
# row-major, channel-interleaved, little-endian

def save_raster(path, buf: ImageBuffer):
    with open(path, "wb") as fh:
        fh.write(SFR_MAGIC)
        fh.write(struct.pack("<III", buf.width, buf.height, buf.channels))
        fh.write(buf.data.astype("<f4").tobytes())


def load_raster(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SFR_MAGIC:
            raise ValueError(f"bad raster magic {magic!r}")
        w, h, c = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(w * h * c * 4), dtype="<f4").reshape(h, w, c)
    return ImageBuffer(w, h, c, data.copy())


def save_pgm(path, buf: ImageBuffer):
    """8-bit PGM export of a single-channel buffer, for eyeballing masks."""
    plane = buf.plane(0)
    lo, hi = float(plane.min()), float(plane.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = ((plane - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{buf.width} {buf.height}\n255\n".encode())
        fh.write(img.tobytes())


# ---------------------------------------------------------------------------
# meshes: ASCII OBJ, v/f records only

def save_obj(path, mesh: TriangleMesh):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_obj(path) -> TriangleMesh:
    verts, tris = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(idx) != 3:
                    raise ValueError("only triangle faces are supported")
                tris.append(idx)
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(tris, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# config: flat key=value mirroring PipelineConfig fields

def save_config(path, config: PipelineConfig):
    with open(path, "w") as fh:
        for f in fields(config):
            v = getattr(config, f.name)
            if f.name == "loss_weights":
                fh.write(f"loss_weights={_fmt(v[0])},{_fmt(v[1])},{_fmt(v[2])}\n")
            elif f.name == "tv_iterations":
                fh.write(f"{f.name}={int(v)}\n")
            else:
                fh.write(f"{f.name}={_fmt(v)}\n")


def load_config(path) -> PipelineConfig:
    kwargs = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, val = line.split("=", 1)
            kwargs[key.strip()] = val.strip()
    return config_from_strings(kwargs)


def config_from_strings(kwargs) -> PipelineConfig:
    """Build a config from a str->str mapping; unknown keys are an error."""
    known = {f.name: f for f in fields(PipelineConfig)}
    typed = {}
    for key, val in kwargs.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if key == "loss_weights":
            parts = [float(x) for x in str(val).split(",")]
            typed[key] = tuple(parts)
        elif key == "tv_iterations":
            typed[key] = int(val)
        else:
            typed[key] = float(val)
    return PipelineConfig(**typed)
