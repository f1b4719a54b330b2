"""Deterministic raster output: binary PPM (P6) grayscale heatmaps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HeatmapGrid:
    """Cell values ``values[iy, ix]`` on axes ``x`` (columns) and ``y`` (rows)."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    vmin: float | None = None
    vmax: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if v.shape != (len(self.y), len(self.x)):
            raise ValueError(f"values shape {v.shape} does not match axes ({len(self.y)}, {len(self.x)})")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap values must be finite")

    @property
    def value_range(self):
        lo = float(self.values.min()) if self.vmin is None else self.vmin
        hi = float(self.values.max()) if self.vmax is None else self.vmax
        return lo, hi


def to_gray(grid: HeatmapGrid):
    """8-bit levels ``floor(255 (v - vmin)/(vmax - vmin))``; top row is the largest ``y``."""
    lo, hi = grid.value_range
    if hi > lo:
        levels = np.floor(255.0 * (grid.values - lo) / (hi - lo))
    else:
        levels = np.zeros_like(grid.values)
    levels = np.clip(levels, 0, 255).astype(np.uint8)
    order = np.argsort(grid.y, kind="stable")[::-1]
    return levels[order]


def ppm_bytes(grid: HeatmapGrid, scale=1):
    gray = to_gray(grid)
    if scale > 1:
        gray = np.repeat(np.repeat(gray, scale, axis=0), scale, axis=1)
    h, w = gray.shape
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def write_ppm(path, grid: HeatmapGrid, scale=1):
    data = ppm_bytes(grid, scale)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def read_ppm(path):
    """Return the gray levels of a P6 file written by :func:`write_ppm`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = map(int, parts[1].split())
    rgb = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
    return rgb[:, :, 0]
