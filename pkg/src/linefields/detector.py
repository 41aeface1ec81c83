"""Line segment extraction from gradient-like inputs.

The extractor follows the classic a-contrario recipe: pixels are seeded in
decreasing magnitude order (bucket pseudo-sort), regions grow through
8-connected neighbors whose angle stays within a circular tolerance of the
running region direction, a magnitude-weighted rectangle is fitted to each
region, low-density rectangles trigger tolerance and radius reductions,
and a candidate survives only when the number of angle-aligned pixels
inside its rectangle is too large to happen by accident (binomial tail
test against (width * height)^(5/2) hypothetical tests).

Two input flavors are supported: classical image gradients, and surrogate
magnitude/angle grids derived from attraction fields. Both feed the same
extractor; only the grid placement differs (a 2x2 gradient estimate sits
at the block center, a field value at the pixel center).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import gammaln, logsumexp

from .fields import (
    FieldPair,
    ScalarField,
    _bilinear_many,
    orient_angles,
    surrogate_gradient,
)
from .geometry import (
    TWO_PI,
    LineSegment,
    Point2,
    circular_distance,
    clip_segment_to_rect,
)

__all__ = [
    "DetectorParams",
    "FilterParams",
    "image_gradient",
    "lsd_extract",
    "filter_lines",
    "detect",
]


@dataclass(frozen=True)
class DetectorParams:
    """Knobs of the region-growing extractor."""

    mag_threshold: float = 3.0  # pixels weaker than this never seed or join
    angle_tolerance: float = math.pi / 8.0  # 22.5 deg growing tolerance
    density_threshold: float = 0.7  # minimum region fill of the rectangle
    log_nfa_max: float = 0.0  # accept when log10(NFA) <= this
    n_bins: int = 1024  # magnitude buckets for seed ordering
    angle_period: float = TWO_PI  # 2*pi oriented angles, pi unoriented

    def __post_init__(self) -> None:
        if self.mag_threshold < 0.0:
            raise ValueError("mag_threshold must be non-negative")
        if not (0.0 < self.angle_tolerance < 0.5 * math.pi):
            raise ValueError("angle_tolerance must lie in (0, pi/2)")
        if not (0.0 < self.density_threshold <= 1.0):
            raise ValueError("density_threshold must lie in (0, 1]")
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")
        if self.angle_period <= 0.0:
            raise ValueError("angle_period must be positive")


@dataclass(frozen=True)
class FilterParams:
    """Acceptance test of detections against a reference field pair."""

    n_samples: int = 50  # points checked along each candidate
    eta_df: float = 1.5  # max distance-field value at an agreeing sample
    eta_theta: float = math.pi / 9.0  # max angular deviation, 20 deg
    min_inlier_frac: float = 0.5  # keep when this fraction of samples agrees

    def __post_init__(self) -> None:
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.eta_df <= 0.0:
            raise ValueError("eta_df must be positive")
        if not (0.0 < self.eta_theta <= 0.5 * math.pi):
            raise ValueError("eta_theta must lie in (0, pi/2]")
        if not (0.0 < self.min_inlier_frac <= 1.0):
            raise ValueError("min_inlier_frac must lie in (0, 1]")


def image_gradient(image: np.ndarray) -> tuple[ScalarField, ScalarField]:
    """2x2 finite-difference gradient of a grayscale image.

    gx(x, y) averages the horizontal differences of the 2x2 block whose
    top-left pixel is (x, y); gy the vertical ones. The returned angle is
    atan2(gy, gx). The last row and column have no full block and get
    magnitude zero.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("image must be a 2-D array of at least 2x2 pixels")
    if not np.all(np.isfinite(img)):
        raise ValueError("image must be finite")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    a = img[:-1, :-1]
    b = img[:-1, 1:]
    c = img[1:, :-1]
    d = img[1:, 1:]
    gx[:-1, :-1] = ((b + d) - (a + c)) * 0.5
    gy[:-1, :-1] = ((c + d) - (a + b)) * 0.5
    mag = np.sqrt(gx * gx + gy * gy)
    ang = np.arctan2(gy, gx)
    return ScalarField(mag), ScalarField(ang)


class _Rect:
    """Fitted rectangle in image coordinates."""

    __slots__ = (
        "cx",
        "cy",
        "theta",
        "ux",
        "uy",
        "lmin",
        "lmax",
        "wmin",
        "wmax",
        "length",
        "width",
    )

    def __init__(self, cx, cy, theta, lmin, lmax, wmin, wmax):
        self.cx = cx
        self.cy = cy
        self.theta = theta
        self.ux = math.cos(theta)
        self.uy = math.sin(theta)
        self.lmin = lmin
        self.lmax = lmax
        self.wmin = wmin
        self.wmax = wmax
        self.length = lmax - lmin
        self.width = max(wmax - wmin, 1.0)


def _log10_binomial_tail(n: int, k: int, p: float) -> float:
    """log10 of P[Bin(n, p) >= k]."""
    if k <= 0:
        return 0.0
    if k > n:
        return -math.inf
    j = np.arange(k, n + 1)
    log_terms = (
        gammaln(n + 1.0)
        - gammaln(j + 1.0)
        - gammaln(n - j + 1.0)
        + j * math.log(p)
        + (n - j) * math.log1p(-p)
    )
    return float(logsumexp(log_terms)) / math.log(10.0)


def _fit_rect(
    xs: np.ndarray,
    ys: np.ndarray,
    weights: np.ndarray,
    reg_angle: float,
    period: float,
) -> _Rect | None:
    total = weights.sum()
    cx = float((weights * xs).sum() / total)
    cy = float((weights * ys).sum() / total)
    dx = xs - cx
    dy = ys - cy
    ixx = float((weights * dy * dy).sum() / total)
    iyy = float((weights * dx * dx).sum() / total)
    ixy = -float((weights * dx * dy).sum() / total)
    lam = 0.5 * ((ixx + iyy) - math.sqrt((ixx - iyy) ** 2 + 4.0 * ixy * ixy))
    if abs(ixx) > abs(iyy):
        theta = math.atan2(lam - ixx, ixy)
    else:
        theta = math.atan2(ixy, lam - iyy)
    # The principal axis has no preferred sign; align it with the region
    # direction when orientation matters.
    if period > 1.5 * math.pi and circular_distance(theta, reg_angle, TWO_PI) > 0.5 * math.pi:
        theta += math.pi
    ux = math.cos(theta)
    uy = math.sin(theta)
    pl = dx * ux + dy * uy
    pw = -dx * uy + dy * ux
    rect = _Rect(
        cx,
        cy,
        theta,
        float(pl.min()),
        float(pl.max()),
        float(pw.min()),
        float(pw.max()),
    )
    if rect.length < 1e-12:
        return None
    return rect


def _count_in_rect(
    rect: _Rect,
    ldir: np.ndarray,
    usable: np.ndarray,
    tol: float,
    period: float,
    offset: float,
) -> tuple[int, int]:
    """Pixels whose center lies in the rectangle, and the aligned subset."""
    h, w = ldir.shape
    corner_l = np.array([rect.lmin, rect.lmin, rect.lmax, rect.lmax])
    corner_w = np.array([rect.wmin, rect.wmax, rect.wmin, rect.wmax])
    cxs = rect.cx + corner_l * rect.ux - corner_w * rect.uy
    cys = rect.cy + corner_l * rect.uy + corner_w * rect.ux
    x_lo = max(int(math.floor(cxs.min() - offset)), 0)
    x_hi = min(int(math.ceil(cxs.max() - offset)), w - 1)
    y_lo = max(int(math.floor(cys.min() - offset)), 0)
    y_hi = min(int(math.ceil(cys.max() - offset)), h - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return 0, 0
    gx = np.arange(x_lo, x_hi + 1, dtype=float) + offset - rect.cx
    gy = (np.arange(y_lo, y_hi + 1, dtype=float) + offset - rect.cy)[:, None]
    pl = gx * rect.ux + gy * rect.uy
    pw = -gx * rect.uy + gy * rect.ux
    inside = (pl >= rect.lmin) & (pl <= rect.lmax) & (pw >= rect.wmin) & (pw <= rect.wmax)
    n = int(inside.sum())
    if n == 0:
        return 0, 0
    sub_dir = ldir[y_lo : y_hi + 1, x_lo : x_hi + 1]
    diff = np.mod(sub_dir - rect.theta, period)
    circ = np.minimum(diff, period - diff)
    aligned = inside & (circ <= tol) & usable[y_lo : y_hi + 1, x_lo : x_hi + 1]
    return n, int(aligned.sum())


def lsd_extract(
    magnitude: ScalarField,
    angle: ScalarField,
    params: DetectorParams | None = None,
    *,
    grid_offset: float = 0.5,
) -> list[LineSegment]:
    """Extract line segments from a magnitude/angle grid.

    ``angle`` uses the gradient convention: the local line direction is the
    given angle plus pi/2. Comparisons are circular with period
    ``params.angle_period`` (2*pi keeps orientation, pi ignores it).
    ``grid_offset`` places grid entry (ix, iy) at image point
    (ix + offset, iy + offset); emitted segments are in image coordinates.
    Output is deterministic: no randomness is involved.
    """
    params = params or DetectorParams()
    if magnitude.data.shape != angle.data.shape:
        raise ValueError("magnitude and angle grids must share a shape")
    h, w = magnitude.data.shape
    period = params.angle_period
    tol = params.angle_tolerance
    half = 0.5 * period
    # Circular angle statistics need unit vectors of k*angle where k wraps
    # the native period onto the full circle.
    k = TWO_PI / period

    mag = magnitude.data
    ldir2d = np.mod(angle.data + 0.5 * math.pi, period)
    usable2d = mag >= params.mag_threshold
    max_mag = float(mag.max(initial=0.0))
    if max_mag <= 0.0 or not usable2d.any():
        return []

    p_align = 2.0 * tol / period
    if p_align >= 1.0:
        raise ValueError("angle tolerance too wide for the angle period")
    log_nt = 2.5 * math.log10(float(w) * float(h))
    min_region_size = max(int(-log_nt / math.log10(p_align)), 2)

    flat_mag = mag.ravel()
    flat_usable = usable2d.ravel()
    usable_idx = np.flatnonzero(flat_usable)
    bins = np.minimum(
        (flat_mag[usable_idx] / max_mag * params.n_bins).astype(int),
        params.n_bins - 1,
    )
    seed_order = usable_idx[np.lexsort((usable_idx, -bins))]

    ldir = ldir2d.ravel().tolist()
    cos_k = np.cos(k * ldir2d).ravel().tolist()
    sin_k = np.sin(k * ldir2d).ravel().tolist()
    # status: 0 free, 1 taken (either in a region or below the threshold)
    status = bytearray(np.where(flat_usable, 0, 1).astype(np.uint8).tobytes())

    def grow(seed: int, grow_tol: float) -> tuple[list[int], float]:
        region = [seed]
        status[seed] = 1
        sx = cos_k[seed]
        sy = sin_k[seed]
        ang = ldir[seed]
        head = 0
        while head < len(region):
            p = region[head]
            head += 1
            py, px = divmod(p, w)
            y0 = py - 1 if py > 0 else 0
            y1 = py + 1 if py < h - 1 else h - 1
            x0 = px - 1 if px > 0 else 0
            x1 = px + 1 if px < w - 1 else w - 1
            for ny in range(y0, y1 + 1):
                base = ny * w
                for q in range(base + x0, base + x1 + 1):
                    if status[q]:
                        continue
                    d = (ldir[q] - ang) % period
                    if d > half:
                        d = period - d
                    if d <= grow_tol:
                        status[q] = 1
                        region.append(q)
                        sx += cos_k[q]
                        sy += sin_k[q]
                        ang = math.atan2(sy, sx) / k
        return region, ang

    def release(pixels: Sequence[int]) -> None:
        for q in pixels:
            status[q] = 0

    def fit(region: list[int], reg_angle: float):
        idx = np.asarray(region)
        iy, ix = np.divmod(idx, w)
        xs = ix.astype(float) + grid_offset
        ys = iy.astype(float) + grid_offset
        rect = _fit_rect(xs, ys, flat_mag[idx], reg_angle, period)
        return rect, xs, ys

    def local_tolerance(region, xs, ys, seed, width) -> float:
        sy, sx = divmod(seed, w)
        sxc = sx + grid_offset
        syc = sy + grid_offset
        near = (xs - sxc) ** 2 + (ys - syc) ** 2 <= width * width
        if not near.any():
            return tol
        ref = ldir[seed]
        diffs = []
        for q, close in zip(region, near):
            if close:
                d = (ldir[q] - ref) % period
                if d > half:
                    d -= period
                diffs.append(d)
        arr = np.asarray(diffs)
        two_std = 2.0 * math.sqrt(float(np.mean(arr * arr)))
        return max(min(two_std, 0.5 * period - 1e-9), 1e-6)

    results: list[LineSegment] = []
    usable_aligned = usable2d  # alignment counting ignores sub-threshold pixels

    for seed in seed_order:
        seed = int(seed)
        if status[seed]:
            continue
        region, reg_angle = grow(seed, tol)
        if len(region) < min_region_size:
            continue
        rect, xs, ys = fit(region, reg_angle)
        ok = rect is not None and len(region) / (rect.length * rect.width) >= params.density_threshold

        if not ok and rect is not None:
            # First retry: re-grow with a tolerance taken from the local
            # angle spread around the seed.
            tol2 = local_tolerance(region, xs, ys, seed, rect.width)
            release(region)
            region, reg_angle = grow(seed, tol2)
            if len(region) < min_region_size:
                continue
            rect, xs, ys = fit(region, reg_angle)
            ok = rect is not None and len(region) / (rect.length * rect.width) >= params.density_threshold

        if not ok and rect is not None:
            # Then shrink the region around the seed, 75% radius steps.
            sy, sx = divmod(seed, w)
            sxc = sx + grid_offset
            syc = sy + grid_offset
            d2 = (xs - sxc) ** 2 + (ys - syc) ** 2
            radius = math.sqrt(float(d2.max()))
            arr_region = np.asarray(region)
            for _ in range(5):
                radius *= 0.75
                keep = d2 <= radius * radius
                dropped = arr_region[~keep]
                release(dropped.tolist())
                arr_region = arr_region[keep]
                xs = xs[keep]
                ys = ys[keep]
                d2 = d2[keep]
                if len(arr_region) < min_region_size:
                    break
                region = arr_region.tolist()
                rect2 = _fit_rect(xs, ys, flat_mag[arr_region], reg_angle, period)
                if rect2 is None:
                    continue
                rect = rect2
                if len(region) / (rect.length * rect.width) >= params.density_threshold:
                    ok = True
                    break
            if len(arr_region) < min_region_size:
                continue

        if not ok or rect is None:
            continue

        n_in, k_in = _count_in_rect(rect, ldir2d, usable_aligned, tol, period, grid_offset)
        if n_in == 0:
            continue
        log_nfa = log_nt + _log10_binomial_tail(n_in, k_in, p_align)
        if log_nfa > params.log_nfa_max:
            continue
        results.append(
            LineSegment(
                Point2(rect.cx + rect.lmin * rect.ux, rect.cy + rect.lmin * rect.uy),
                Point2(rect.cx + rect.lmax * rect.ux, rect.cy + rect.lmax * rect.uy),
            )
        )
    return results


def filter_lines(
    lines: Sequence[LineSegment],
    fp: FieldPair,
    params: FilterParams | None = None,
) -> list[LineSegment]:
    """Keep lines that a field pair supports.

    Each candidate is sampled at n equally spaced points (endpoints
    included, after clipping to the sampleable area); a sample agrees when
    the interpolated distance stays below eta_df and the interpolated angle
    stays within eta_theta of the line orientation. Deterministic and
    idempotent.
    """
    params = params or FilterParams()
    h, head_w = fp.height, fp.width
    xmin, ymin = 0.5, 0.5
    xmax, ymax = head_w - 0.5, h - 0.5
    ts = np.linspace(0.0, 1.0, params.n_samples)
    kept: list[LineSegment] = []
    for seg in lines:
        clipped = clip_segment_to_rect(seg, xmin, ymin, xmax, ymax)
        if clipped is None:
            continue
        xs = clipped.p1.x + ts * (clipped.p2.x - clipped.p1.x)
        ys = clipped.p1.y + ts * (clipped.p2.y - clipped.p1.y)
        df_s = _bilinear_many(fp.df.data, xs - 0.5, ys - 0.5, circular=False)
        af_s = _bilinear_many(fp.af.data, xs - 0.5, ys - 0.5, circular=True)
        diff = np.mod(np.abs(af_s - seg.angle), math.pi)
        circ = np.minimum(diff, math.pi - diff)
        agrees = (df_s < params.eta_df) & (circ < params.eta_theta)
        if float(agrees.mean()) >= params.min_inlier_frac:
            kept.append(seg)
    return kept


_PRESCALE_FACTOR = 0.8
_PRESCALE_SIGMA = 0.6 / 0.8


def _downscale(img: np.ndarray, factor: float) -> np.ndarray:
    smooth = gaussian_filter(img, sigma=_PRESCALE_SIGMA, mode="nearest")
    nh = max(int(round(img.shape[0] * factor)), 2)
    nw = max(int(round(img.shape[1] * factor)), 2)
    xs = (np.arange(nw) + 0.5) / factor - 0.5
    ys = (np.arange(nh) + 0.5) / factor - 0.5
    xs = np.clip(xs, 0.0, img.shape[1] - 1.0)
    ys = np.clip(ys, 0.0, img.shape[0] - 1.0)
    gx, gy = np.meshgrid(xs, ys)
    vals = _bilinear_many(smooth, gx.ravel(), gy.ravel(), circular=False)
    return vals.reshape(nh, nw)


def detect(
    source: FieldPair | np.ndarray,
    params: DetectorParams | None = None,
    filter_params: FilterParams | None = None,
    *,
    image: np.ndarray | None = None,
    apply_filter: bool = True,
    prescale: bool = False,
) -> list[LineSegment]:
    """Detect line segments in an image or an attraction field pair.

    Field mode (``source`` is a FieldPair) converts the fields into a
    surrogate magnitude/angle grid; when a companion ``image`` of the same
    size is given, its gradient directions orient the angles and the full
    2*pi period applies, otherwise matching falls back to period pi.
    Detections are then checked against the fields unless
    ``apply_filter=False``. Image mode runs the classical gradient path;
    ``prescale`` optionally smooths and downsamples by 0.8 first.
    """
    params = params or DetectorParams()
    if isinstance(source, FieldPair):
        mag, theta = surrogate_gradient(source)
        if image is not None:
            img = np.asarray(image, dtype=float)
            if img.shape != mag.data.shape:
                raise ValueError("companion image must match the field size")
            _, grad_angle = image_gradient(img)
            theta = orient_angles(theta, grad_angle)
            period = params.angle_period
        else:
            period = math.pi
        if period != params.angle_period:
            params = replace(params, angle_period=period)
        lines = lsd_extract(mag, theta, params, grid_offset=0.5)
        if apply_filter:
            lines = filter_lines(lines, source, filter_params)
        return lines

    img = np.asarray(source, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be a 2-D grayscale array")
    if prescale:
        small = _downscale(img, _PRESCALE_FACTOR)
        lines = detect(small, params, prescale=False)
        inv = 1.0 / _PRESCALE_FACTOR
        return [
            LineSegment(
                Point2(seg.p1.x * inv, seg.p1.y * inv),
                Point2(seg.p2.x * inv, seg.p2.y * inv),
            )
            for seg in lines
        ]
    mag, ang = image_gradient(img)
    return lsd_extract(mag, ang, params, grid_offset=1.0)
