"""Grayscale rendering of solid scenes and image comparison.

A perspective camera at (20, 20, 20) looks at the origin; body meshes are
rasterized with a z-buffer and flat Lambertian shading from a directional
light along the view direction.  Background is white (1.0), surfaces map
into [0.1, 0.9].  Images are float arrays in [0, 1], written as 8-bit
binary PGM (P5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .errors import DimensionMismatchError, EmptySceneError
from .geometry import SolidScene

DEFAULT_EYE = (20.0, 20.0, 20.0)
DEFAULT_VFOV_DEG = 40.0
DEFAULT_IMAGE_SIZE = (128, 128)
MAX_IMAGE_SIZE = (512, 512)

BACKGROUND = 1.0
SHADE_MIN = 0.1
SHADE_SPAN = 0.8


@dataclass(frozen=True)
class Camera:
    """Perspective camera defined by eye point, target, up hint and fov."""

    eye: tuple[float, float, float] = DEFAULT_EYE
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    vfov_deg: float = DEFAULT_VFOV_DEG

    def __post_init__(self):
        eye = np.array(self.eye, dtype=float)
        target = np.array(self.target, dtype=float)
        up = np.array(self.up, dtype=float)
        forward = target - eye
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise ValueError("camera eye and target coincide")
        forward = forward / norm
        up_norm = up / np.linalg.norm(up)
        if abs(float(np.dot(forward, up_norm))) > 1.0 - 1e-9:
            raise ValueError("camera up vector is parallel to the view direction")
        if not 0.0 < self.vfov_deg < 180.0:
            raise ValueError(f"vertical field of view {self.vfov_deg} outside (0, 180)")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(eye, right, true up, forward) as unit world vectors."""
        eye = np.array(self.eye, dtype=float)
        forward = np.array(self.target, dtype=float) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.array(self.up, dtype=float))
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return eye, right, true_up, forward


@dataclass(frozen=True)
class Image:
    """Grayscale raster with pixel values in [0, 1]."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be a 2D array, got shape {arr.shape}")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def render(scene: SolidScene | None, camera: Camera | None = None,
           size: tuple[int, int] = DEFAULT_IMAGE_SIZE) -> Image:
    """Rasterize a scene's meshes into a shaded grayscale image.

    Deterministic: identical inputs give bit-identical pixels.  A scene
    with no bodies renders as an all-white frame.
    """
    if scene is None:
        raise EmptySceneError("no scene to render")
    width, height = size
    if width < 1 or height < 1:
        raise ValueError(f"image size {size} must be positive")
    if width > MAX_IMAGE_SIZE[0] or height > MAX_IMAGE_SIZE[1]:
        raise ValueError(f"image size {size} exceeds maximum {MAX_IMAGE_SIZE}")
    camera = camera or Camera()
    frame = np.full((height, width), BACKGROUND, dtype=float)
    triangles = scene.all_triangles()
    if len(triangles) == 0:
        return Image(frame)

    eye, right, true_up, forward = camera.basis()
    rel = triangles.reshape(-1, 3) - eye
    cam = np.column_stack((rel @ right, rel @ true_up, rel @ forward)).reshape(-1, 3, 3)

    f = 1.0 / math.tan(math.radians(camera.vfov_deg) / 2.0)
    aspect = width / height
    light = -forward  # from the scene toward the eye

    zbuf = np.full((height, width), np.inf)
    near = 1e-3
    for tri_world, tri_cam in zip(triangles, cam):
        z = tri_cam[:, 2]
        if np.any(z <= near):
            continue
        ndc_x = (f / aspect) * tri_cam[:, 0] / z
        ndc_y = f * tri_cam[:, 1] / z
        px = (ndc_x + 1.0) * 0.5 * width
        py = (1.0 - ndc_y) * 0.5 * height

        x_min = max(int(math.floor(px.min())), 0)
        x_max = min(int(math.ceil(px.max())), width - 1)
        y_min = max(int(math.floor(py.min())), 0)
        y_max = min(int(math.ceil(py.max())), height - 1)
        if x_min > x_max or y_min > y_max:
            continue

        xs = np.arange(x_min, x_max + 1) + 0.5
        ys = np.arange(y_min, y_max + 1) + 0.5
        gx, gy = np.meshgrid(xs, ys)

        x0, y0 = px[0], py[0]
        x1, y1 = px[1], py[1]
        x2, y2 = px[2], py[2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        w0 = ((x1 - gx) * (y2 - gy) - (y1 - gy) * (x2 - gx)) / area
        w1 = ((x2 - gx) * (y0 - gy) - (y2 - gy) * (x0 - gx)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue

        inv_z = w0 / z[0] + w1 / z[1] + w2 / z[2]
        depth = np.where(inv_z > 0, 1.0 / np.where(inv_z > 0, inv_z, 1.0), np.inf)

        normal = np.cross(tri_world[1] - tri_world[0], tri_world[2] - tri_world[0])
        norm = np.linalg.norm(normal)
        if norm == 0.0:
            continue
        shade = SHADE_MIN + SHADE_SPAN * abs(float(np.dot(normal / norm, light)))

        window_z = zbuf[y_min:y_max + 1, x_min:x_max + 1]
        window_f = frame[y_min:y_max + 1, x_min:x_max + 1]
        hit = inside & (depth < window_z)
        window_z[hit] = depth[hit]
        window_f[hit] = shade
    return Image(np.clip(frame, 0.0, 1.0))


def image_mse(a: Image, b: Image) -> float:
    """Mean squared pixel error; symmetric, zero iff images are equal."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatchError(
            f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )
    diff = a.pixels - b.pixels
    return float(np.mean(diff * diff))


def write_pgm(path: str | Path, image: Image) -> None:
    """Write an 8-bit binary PGM (P5), pixel = round(value * 255)."""
    data = np.round(image.pixels * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: str | Path) -> Image:
    """Read an 8-bit binary PGM written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        return _read_pgm_stream(fh)


def _read_pgm_stream(fh: IO[bytes]) -> Image:
    def token() -> bytes:
        out = b""
        while True:
            ch = fh.read(1)
            if not ch:
                raise ValueError("truncated PGM header")
            if ch.isspace():
                if out:
                    return out
                continue
            if ch == b"#":
                while fh.read(1) not in (b"\n", b""):
                    pass
                continue
            out += ch

    magic = token()
    if magic != b"P5":
        raise ValueError(f"not a binary PGM file (magic {magic!r})")
    width = int(token())
    height = int(token())
    maxval = int(token())
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    data = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    if data.size != width * height:
        raise ValueError("truncated PGM pixel data")
    return Image(data.reshape(height, width).astype(float) / 255.0)
