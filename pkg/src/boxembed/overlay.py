"""Colour overlays of instance label maps as binary PPM (P6) images."""

from __future__ import annotations

import colorsys

import numpy as np

from .maps import InstanceLabelMap

_GOLDEN = 0.618033988749895


def instance_color(k: int) -> tuple[int, int, int]:
    """Deterministic colour for instance ``k``; 0 (background) is black.

    Hues step by the golden ratio so consecutive ids land far apart.
    """
    if k == 0:
        return (0, 0, 0)
    hue = (k * _GOLDEN) % 1.0
    sat = 0.55 + 0.35 * ((k * 0.37) % 1.0)
    r, g, b = colorsys.hsv_to_rgb(hue, sat, 0.95)
    return (round(r * 255), round(g * 255), round(b * 255))


def render_overlay(labels: InstanceLabelMap) -> np.ndarray:
    """RGB uint8 image, shape ``(H, W, 3)``."""
    ids = np.unique(labels.data)
    palette = np.zeros((int(ids.max()) + 1 if ids.size else 1, 3), dtype=np.uint8)
    for k in ids:
        palette[k] = instance_color(int(k))
    return palette[labels.data]


def ppm_bytes(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a P6 image as written by :func:`ppm_bytes`."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError("not a P6 image with maxval 255")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
