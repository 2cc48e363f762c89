import numpy as np
import pytest

from splatrecon.scene import CameraView, GaussianPrimitive, PipelineConfig


def make_camera(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101,
                rotation=None, translation=None, view_id=0):
    K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
    return CameraView(intrinsics=K, rotation=R, translation=t,
                      width=width, height=height, view_id=view_id)


def make_primitive(center, sigma=0.1, opacity=0.9, normal=(0.0, 0.0, 1.0),
                   color=(0.5, 0.5, 0.5), pid=0, covariance=None):
    cov = covariance if covariance is not None else np.eye(3) * sigma ** 2
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    return GaussianPrimitive(center=np.asarray(center, dtype=float), covariance=cov,
                             opacity=opacity, color=np.asarray(color, dtype=float),
                             normal=n, id=pid)


def random_spd(rng, dim=3, scale=1.0):
    A = rng.normal(size=(dim, dim))
    return A @ A.T * scale + np.eye(dim) * 1e-3 * scale


@pytest.fixture
def default_config():
    return PipelineConfig()
