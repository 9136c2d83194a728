"""Discrete line transform between image space and (theta, rho) space.

Conventions, fixed across the package:
  * x is the column, y the row, origin at the top-left pixel center.
  * A line is x*cos(theta) + y*sin(theta) = rho with theta in [0, 180)
    degrees, so theta is the direction of the line's normal.
  * Quantization always uses floor(v + 0.5) (round half up), both when a
    pixel votes for a rho bin and when a cell is rasterized back to
    pixels.  Using one rule on both sides is what makes the forward and
    inverse transforms agree to within a pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoDetectionError, ValidationError


def _deg_cos_sin(theta_deg: np.ndarray):
    """cos/sin of angles in degrees, snapped at exact axis alignments."""
    rad = np.deg2rad(theta_deg)
    c = np.cos(rad)
    s = np.sin(rad)
    for arr in (c, s):
        arr[np.abs(arr) < 1e-14] = 0.0
        arr[np.abs(arr - 1.0) < 1e-15] = 1.0
        arr[np.abs(arr + 1.0) < 1e-15] = -1.0
    return c, s


@dataclass(frozen=True)
class HoughGrid:
    """Discretization of (theta, rho) for one image size."""

    image_h: int
    image_w: int
    theta_step: float = 1.0
    rho_step: float = 1.0
    theta_bins: int = field(init=False)
    rho_bins: int = field(init=False)
    rho_offset: int = field(init=False)

    def __post_init__(self):
        if self.image_h < 1 or self.image_w < 1:
            raise ValidationError("image dimensions must be positive")
        if not (0 < self.theta_step <= 180):
            raise ValidationError(f"theta_step out of range: {self.theta_step}")
        if self.rho_step <= 0:
            raise ValidationError(f"rho_step must be positive: {self.rho_step}")
        object.__setattr__(self, "theta_bins", math.ceil(180.0 / self.theta_step))
        diag = math.hypot(self.image_h, self.image_w)
        half = math.ceil(diag / self.rho_step)
        object.__setattr__(self, "rho_bins", 2 * half + 1)
        object.__setattr__(self, "rho_offset", half)

    def thetas_deg(self) -> np.ndarray:
        return np.arange(self.theta_bins) * self.theta_step

    def theta_trig(self):
        return _deg_cos_sin(self.thetas_deg())

    def shape(self):
        return (self.theta_bins, self.rho_bins)


@dataclass(frozen=True)
class HoughMap:
    """Two-channel Hough-space image: shaft peak and tip curve."""

    shaft: np.ndarray = field(repr=False)
    tip: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.shaft.shape != self.tip.shape:
            raise ValidationError(
                f"channel shapes differ: {self.shaft.shape} vs {self.tip.shape}"
            )


def hough_transform(feature: np.ndarray, grid: HoughGrid) -> np.ndarray:
    """Soft-voting line transform of a non-negative feature image.

    Every pixel adds its value to exactly one rho bin per theta column,
    so each theta column sums to the total feature mass (vote
    conservation).  Returns a (theta_bins, rho_bins) float64 image.
    """
    feat = np.asarray(feature, dtype=np.float64)
    if feat.shape != (grid.image_h, grid.image_w):
        raise ValidationError(
            f"feature shape {feat.shape} does not match grid "
            f"{(grid.image_h, grid.image_w)}"
        )
    weights = feat.ravel()
    xs = np.arange(grid.image_w, dtype=np.float64)
    ys = np.arange(grid.image_h, dtype=np.float64)
    cos_t, sin_t = grid.theta_trig()
    inv_step = 1.0 / grid.rho_step
    acc = np.empty(grid.shape(), dtype=np.float64)
    for i in range(grid.theta_bins):
        rho_units = (cos_t[i] * inv_step) * xs[None, :] + (sin_t[i] * inv_step) * ys[:, None]
        idx = np.floor(rho_units + 0.5).astype(np.intp).ravel() + grid.rho_offset
        acc[i] = np.bincount(idx, weights=weights, minlength=grid.rho_bins)
    return acc


def line_from_cell(grid: HoughGrid, theta_idx: int, rho_idx: int):
    """Bin-center (theta_deg, rho_px) of one grid cell."""
    if not (0 <= theta_idx < grid.theta_bins and 0 <= rho_idx < grid.rho_bins):
        raise ValidationError(
            f"cell ({theta_idx}, {rho_idx}) outside grid {grid.shape()}"
        )
    return (theta_idx * grid.theta_step,
            (rho_idx - grid.rho_offset) * grid.rho_step)


def render_shaft_gt(grid: HoughGrid, theta: float, rho: float,
                    sigma: float = 2.0) -> np.ndarray:
    """Isotropic Gaussian peak at the (continuous) cell of a target line.

    Distances are measured in bin units on both axes; the peak reaches
    exactly 1 when the target sits on a bin center.  No wrap-around in
    theta: a target near the 0/180 seam blurs toward one side only.
    """
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    tc = theta / grid.theta_step
    rc = rho / grid.rho_step + grid.rho_offset
    ti = np.arange(grid.theta_bins, dtype=np.float64)
    ri = np.arange(grid.rho_bins, dtype=np.float64)
    d2 = (ti - tc)[:, None] ** 2 + (ri - rc)[None, :] ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def render_tip_gt(grid: HoughGrid, tip_x: float, tip_y: float,
                  sigma: float = 2.0) -> np.ndarray:
    """Blurred sinusoid of a tip point: one 1-D Gaussian per theta row.

    Each row's Gaussian is centered on the bin nearest rho(theta) (the
    same floor(v + 0.5) quantization the forward transform uses), so
    every row attains exactly 1.0 there.
    """
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if not (0 <= tip_x <= grid.image_w - 1 and 0 <= tip_y <= grid.image_h - 1):
        raise ValidationError(
            f"tip ({tip_x}, {tip_y}) outside image "
            f"{grid.image_w}x{grid.image_h}"
        )
    cos_t, sin_t = grid.theta_trig()
    rho_units = (tip_x * cos_t + tip_y * sin_t) / grid.rho_step
    centers = np.floor(rho_units + 0.5) + grid.rho_offset
    ri = np.arange(grid.rho_bins, dtype=np.float64)
    d2 = (ri[None, :] - centers[:, None]) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def shaft_from_hough(shaft_channel: np.ndarray, grid: HoughGrid):
    """Decode the global argmax cell to (theta_deg, rho_px).

    Ties break toward the smallest (theta_idx, rho_idx); an all-zero
    channel raises NoDetectionError.
    """
    chan = np.asarray(shaft_channel)
    if chan.shape != grid.shape():
        raise ValidationError(
            f"channel shape {chan.shape} does not match grid {grid.shape()}"
        )
    if not chan.any():
        raise NoDetectionError("all-zero shaft channel")
    flat = int(np.argmax(chan))
    ti, ri = divmod(flat, grid.rho_bins)
    return line_from_cell(grid, ti, ri)


def _raster_cell(grid: HoughGrid, c: float, s: float, rho: float):
    """Pixel coordinates of a cell's 1-px line, forward-consistent.

    Steps per column when the line is closer to horizontal (sin >= |cos|)
    and per row otherwise, rounding the free coordinate with
    floor(v + 0.5).  Returns (xs, ys) integer arrays inside the image.
    """
    if s >= abs(c):
        xs = np.arange(grid.image_w)
        ys = np.floor((rho - xs * c) / s + 0.5).astype(np.intp)
        keep = (ys >= 0) & (ys < grid.image_h)
        return xs[keep], ys[keep]
    ys = np.arange(grid.image_h)
    xs = np.floor((rho - ys * s) / c + 0.5).astype(np.intp)
    keep = (xs >= 0) & (xs < grid.image_w)
    return xs[keep], ys[keep]


def _raster_line(grid: HoughGrid, theta_idx: int, rho_idx: int):
    cos_t, sin_t = grid.theta_trig()
    rho = (rho_idx - grid.rho_offset) * grid.rho_step
    return _raster_cell(grid, float(cos_t[theta_idx]), float(sin_t[theta_idx]), rho)


def inverse_hough_accumulate(cells, grid: HoughGrid) -> np.ndarray:
    """Sum of weighted rasterized lines for (theta_idx, rho_idx, weight).

    Linear in the weights; an empty cell list yields a zero image.
    """
    acc = np.zeros((grid.image_h, grid.image_w), dtype=np.float64)
    cos_t, sin_t = grid.theta_trig()
    for theta_idx, rho_idx, weight in cells:
        if not (0 <= theta_idx < grid.theta_bins and 0 <= rho_idx < grid.rho_bins):
            raise ValidationError(
                f"cell ({theta_idx}, {rho_idx}) outside grid {grid.shape()}"
            )
        rho = (rho_idx - grid.rho_offset) * grid.rho_step
        xs, ys = _raster_cell(grid, float(cos_t[theta_idx]), float(sin_t[theta_idx]), rho)
        acc[ys, xs] += weight
    return acc


def tip_from_hough(tip_channel: np.ndarray, grid: HoughGrid,
                   top_p: float = 1.0):
    """Probability-weighted inverse transform of the strongest cells.

    Takes the ceil(top_p% of cells) highest-intensity cells (stable
    order, so equal intensities prefer smaller (theta_idx, rho_idx)),
    rasterizes each weighted by its intensity, and returns the argmax
    pixel of the accumulator as (tip_x, tip_y).  Ties break toward the
    smallest (y, then x).
    """
    if not (0 < top_p <= 100):
        raise ValidationError(f"top_p must be in (0, 100], got {top_p}")
    chan = np.asarray(tip_channel, dtype=np.float64)
    if chan.shape != grid.shape():
        raise ValidationError(
            f"channel shape {chan.shape} does not match grid {grid.shape()}"
        )
    if not chan.any():
        raise NoDetectionError("all-zero tip channel")
    flat = chan.ravel()
    n_top = math.ceil(top_p / 100.0 * flat.size)
    order = np.argsort(-flat, kind="stable")[:n_top]
    cos_t, sin_t = grid.theta_trig()
    acc = np.zeros((grid.image_h, grid.image_w), dtype=np.float64)
    for cell in order:
        ti, ri = divmod(int(cell), grid.rho_bins)
        rho = (ri - grid.rho_offset) * grid.rho_step
        xs, ys = _raster_cell(grid, float(cos_t[ti]), float(sin_t[ti]), rho)
        acc[ys, xs] += flat[cell]
    best = int(np.argmax(acc))
    y, x = divmod(best, grid.image_w)
    return float(x), float(y)


def render_truth_map(grid: HoughGrid, theta: float, rho: float,
                     tip_x: float, tip_y: float,
                     shaft_sigma: float = 2.0, tip_sigma: float = 2.0) -> HoughMap:
    """Rendered two-channel ground truth for scoring a prediction."""
    return HoughMap(
        shaft=render_shaft_gt(grid, theta, rho, shaft_sigma),
        tip=render_tip_gt(grid, tip_x, tip_y, tip_sigma),
    )
