"""Per-pixel line attraction fields and the operations defined on them.

A field pair holds, for every pixel, the distance to the closest point on
any segment (DF) and the orientation modulo pi of that closest segment
(AF). Values live at pixel centers: the array entry (iy, ix) describes the
image point (ix + 0.5, iy + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .geometry import LineSegment

__all__ = [
    "ScalarField",
    "FieldPair",
    "render_fields",
    "df_normalize",
    "field_losses",
    "surrogate_gradient",
    "orient_angles",
    "bilinear_sample",
]

# Raw distances are clamped here before the log normalization so that
# pixels lying exactly on a line still produce finite normalized values.
_DF_FLOOR_SCALE = math.exp(-20.0)


@dataclass(frozen=True)
class ScalarField:
    """Dense (height, width) float64 grid with all values finite."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("field data must be a non-empty 2-D array")
        if not np.all(np.isfinite(data)):
            raise ValueError("field data must be finite")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FieldPair:
    """Distance field and angle field of one scene, plus the band radius r."""

    df: ScalarField
    af: ScalarField
    r: float

    def __post_init__(self) -> None:
        if self.df.data.shape != self.af.data.shape:
            raise ValueError("distance and angle fields must share a shape")
        if not (math.isfinite(self.r) and self.r > 0.0):
            raise ValueError("band radius r must be positive and finite")
        object.__setattr__(self, "r", float(self.r))

    @property
    def height(self) -> int:
        return self.df.height

    @property
    def width(self) -> int:
        return self.df.width


def render_fields(
    lines: Sequence[LineSegment], width: int, height: int, r: float = 5.0
) -> FieldPair:
    """Rasterize exact attraction fields for a set of segments.

    Every pixel gets the distance from its center to the closest segment
    point, and the orientation (mod pi) of the segment realizing it. Exact
    distance ties go to the segment with the lowest index.

    Raises:
        ValueError: on an empty segment list or non-positive dimensions.
    """
    if len(lines) == 0:
        raise ValueError("cannot render fields without segments")
    width = int(width)
    height = int(height)
    if width < 1 or height < 1:
        raise ValueError("field dimensions must be positive")
    px = np.arange(width, dtype=float) + 0.5
    py = (np.arange(height, dtype=float) + 0.5)[:, None]
    best_df = np.full((height, width), np.inf)
    best_af = np.zeros((height, width))
    for seg in lines:
        x1, y1 = seg.p1
        dx = seg.p2.x - x1
        dy = seg.p2.y - y1
        # Same arithmetic as geometry.point_segment_distance, vectorized.
        t = ((px - x1) * dx + (py - y1) * dy) / (dx * dx + dy * dy)
        t = np.clip(t, 0.0, 1.0)
        cx = x1 + t * dx
        cy = y1 + t * dy
        d = np.sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy))
        closer = d < best_df
        best_df[closer] = d[closer]
        best_af[closer] = seg.angle
    return FieldPair(ScalarField(best_df), ScalarField(best_af), float(r))


def df_normalize(value, r: float, direction: Literal["forward", "inverse"] = "forward"):
    """Map raw distances to the compressed representation and back.

    forward: x -> -log(x / r), defined for 0 < x <= r.
    inverse: y -> r * exp(-y), defined for y >= 0.

    Accepts scalars or arrays and returns the matching kind.
    """
    if not (math.isfinite(r) and r > 0.0):
        raise ValueError("band radius r must be positive and finite")
    arr = np.asarray(value, dtype=float)
    if direction == "forward":
        if np.any(arr <= 0.0) or np.any(arr > r):
            raise ValueError("forward normalization needs values in (0, r]")
        out = -np.log(arr / r)
    elif direction == "inverse":
        if np.any(arr < 0.0):
            raise ValueError("inverse normalization needs non-negative values")
        out = r * np.exp(-arr)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if np.isscalar(value) or np.ndim(value) == 0:
        return float(out)
    return out


def field_losses(
    pred: FieldPair, gt: FieldPair, mask: np.ndarray
) -> tuple[float, float]:
    """Supervision-band losses between a predicted and a reference pair.

    Returns (loss_df, loss_af): the mean absolute difference of the
    log-normalized distances, and the RMS of the angular differences taken
    modulo pi, both over the masked pixels.

    Raises:
        ValueError: on shape mismatch or an empty mask.
    """
    if pred.df.data.shape != gt.df.data.shape:
        raise ValueError("field pairs must share a shape")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gt.df.data.shape:
        raise ValueError("mask must match the field shape")
    if not mask.any():
        raise ValueError("supervision mask is empty")

    floor_p = pred.r * _DF_FLOOR_SCALE
    floor_g = gt.r * _DF_FLOOR_SCALE
    dn_pred = -np.log(np.maximum(pred.df.data[mask], floor_p) / pred.r)
    dn_gt = -np.log(np.maximum(gt.df.data[mask], floor_g) / gt.r)
    loss_df = float(np.mean(np.abs(dn_pred - dn_gt)))

    diff = np.abs(pred.af.data[mask] - gt.af.data[mask]) % math.pi
    circ = np.minimum(diff, math.pi - diff)
    loss_af = float(math.sqrt(np.mean(circ * circ)))
    return loss_df, loss_af


def surrogate_gradient(fp: FieldPair) -> tuple[ScalarField, ScalarField]:
    """Convert a field pair into detector inputs.

    Returns the magnitude M = max(0, r - DF) and the angle theta = AF - pi/2
    reduced into (-pi/2, pi/2], i.e. the normal direction of the local line.
    """
    mag = np.maximum(0.0, fp.r - fp.df.data)
    af = np.mod(fp.af.data, math.pi)
    theta = af - 0.5 * math.pi
    theta = np.where(theta <= -0.5 * math.pi, theta + math.pi, theta)
    return ScalarField(mag), ScalarField(theta)


def orient_angles(theta: ScalarField, image_grad_angle: ScalarField) -> ScalarField:
    """Disambiguate mod-pi normal angles with image gradient directions.

    Per pixel the output is theta when theta is circularly (period 2*pi)
    closer to the reference than theta - pi, and theta - pi otherwise,
    wrapped into [-pi, pi).
    """
    if theta.data.shape != image_grad_angle.data.shape:
        raise ValueError("angle fields must share a shape")
    t = theta.data
    ref = image_grad_angle.data

    def circ2pi(a: np.ndarray) -> np.ndarray:
        d = np.mod(a, 2.0 * math.pi)
        return np.minimum(d, 2.0 * math.pi - d)

    keep = circ2pi(t - ref) < circ2pi(t - math.pi - ref)
    out = np.where(keep, t, t - math.pi)
    out = np.mod(out + math.pi, 2.0 * math.pi) - math.pi
    return ScalarField(out)


def _bilinear_corners(
    shape: tuple[int, int], xs: np.ndarray, ys: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    h, w = shape
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x0 = np.clip(x0, 0, max(w - 2, 0))
    y0 = np.clip(y0, 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = xs - x0
    wy = ys - y0
    return x0, y0, x1, y1, wx, wy


def _bilinear_many(
    data: np.ndarray, xs: np.ndarray, ys: np.ndarray, circular: bool
) -> np.ndarray:
    """Vectorized bilinear lookup at grid coordinates (no bounds checks)."""
    x0, y0, x1, y1, wx, wy = _bilinear_corners(data.shape, xs, ys)
    v00 = data[y0, x0]
    v01 = data[y0, x1]
    v10 = data[y1, x0]
    v11 = data[y1, x1]
    # Two-sided weights: exact at wx/wy of 0 and 1, which clipped border
    # coordinates hit, so sampling on the grid reproduces stored values.
    ax = 1.0 - wx
    ay = 1.0 - wy
    if not circular:
        top = ax * v00 + wx * v01
        bot = ax * v10 + wx * v11
        return ay * top + wy * bot
    # Angles mod pi interpolate on the doubled circle so that values just
    # below pi and just above 0 blend as neighbors.
    cs = np.cos(2.0 * v00), np.cos(2.0 * v01), np.cos(2.0 * v10), np.cos(2.0 * v11)
    sn = np.sin(2.0 * v00), np.sin(2.0 * v01), np.sin(2.0 * v10), np.sin(2.0 * v11)
    c = ay * (ax * cs[0] + wx * cs[1]) + wy * (ax * cs[2] + wx * cs[3])
    s = ay * (ax * sn[0] + wx * sn[1]) + wy * (ax * sn[2] + wx * sn[3])
    ang = 0.5 * np.arctan2(s, c)
    return np.where(ang < 0.0, ang + math.pi, ang)


def bilinear_sample(
    field: ScalarField,
    p: Sequence[float],
    mode: Literal["linear", "circular_pi"] = "linear",
) -> float:
    """Interpolate a field at a grid coordinate.

    ``p`` = (x, y) indexes the grid directly: (0, 0) is the first stored
    sample and (width - 1, height - 1) the last, so an image point (u, v)
    is sampled at (u - 0.5, v - 0.5). circular_pi blends angles on the
    doubled circle and returns a value in [0, pi).

    Raises:
        ValueError: if p falls outside the grid.
    """
    x, y = float(p[0]), float(p[1])
    h, w = field.data.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise ValueError(
            f"sample point ({x}, {y}) outside grid [0, {w - 1}] x [0, {h - 1}]"
        )
    if mode not in ("linear", "circular_pi"):
        raise ValueError(f"unknown interpolation mode {mode!r}")
    out = _bilinear_many(
        field.data, np.array([x]), np.array([y]), circular=(mode == "circular_pi")
    )
    return float(out[0])
