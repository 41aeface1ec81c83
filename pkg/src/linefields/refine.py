"""Joint refinement of line segments against attraction fields.

A line is scored by sampling the fields along it: an angular agreement
term, a mean distance term, and optionally the distance to an associated
vanishing point. Each line is optimized over two degrees of freedom
(rotation about its midpoint and lateral translation, length fixed) with a
damped Newton scheme that only ever accepts downhill steps. Joint
refinement alternates line refinement, vanishing point re-estimation, and
re-association.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import FieldPair, _bilinear_many
from .geometry import LineSegment, Point2, _d_vp_many, d_vp
from .vp import VanishingPoint, VpAssignment, VpParams, fit_vps, refine_vp

__all__ = [
    "RefineParams",
    "line_cost",
    "refine_line",
    "refine_joint",
]


@dataclass(frozen=True)
class RefineParams:
    """Cost weights and optimizer configuration."""

    lambda_df: float = 1.0  # weight of the mean sampled distance
    lambda_af: float = 1.0  # weight of the angular agreement term
    lambda_vp: float = 0.2  # weight of the vanishing point distance
    n_opt: int = 10  # samples along the line, endpoints included
    k_alternations: int = 5  # joint refinement rounds
    t_vp: float = 1.5  # vanishing point association gate, pixels
    max_lateral_step: float = 5.0  # per-iteration translation clamp, pixels
    fd_step: float = 0.05  # central-difference probe size, pixels
    max_iter: int = 50  # optimizer iterations per line
    tol: float = 1e-6  # step-size convergence threshold

    def __post_init__(self) -> None:
        if self.n_opt < 2:
            raise ValueError("n_opt must be at least 2")
        if min(self.lambda_df, self.lambda_af, self.lambda_vp) < 0.0:
            raise ValueError("cost weights must be non-negative")
        if self.t_vp <= 0.0 or self.max_lateral_step <= 0.0 or self.fd_step <= 0.0:
            raise ValueError("t_vp, max_lateral_step and fd_step must be positive")
        if self.k_alternations < 1 or self.max_iter < 1:
            raise ValueError("iteration counts must be positive")


def _batch_costs(
    fp: FieldPair,
    thetas: np.ndarray,
    mxs: np.ndarray,
    mys: np.ndarray,
    half_len: float,
    v_vec: np.ndarray | None,
    params: RefineParams,
) -> np.ndarray:
    """Cost of several (theta, midpoint) line configurations at once.

    Configurations whose endpoints leave the sampleable area get +inf.
    """
    h, w = fp.height, fp.width
    ux = np.cos(thetas)
    uy = np.sin(thetas)
    x1 = mxs - half_len * ux
    y1 = mys - half_len * uy
    x2 = mxs + half_len * ux
    y2 = mys + half_len * uy
    lo_x, hi_x = 0.5, w - 0.5
    lo_y, hi_y = 0.5, h - 0.5
    ok = (
        (x1 >= lo_x)
        & (x1 <= hi_x)
        & (x2 >= lo_x)
        & (x2 <= hi_x)
        & (y1 >= lo_y)
        & (y1 <= hi_y)
        & (y2 >= lo_y)
        & (y2 <= hi_y)
    )
    ts = np.linspace(0.0, 1.0, params.n_opt)
    xs = x1[:, None] + ts[None, :] * (x2 - x1)[:, None]
    ys = y1[:, None] + ts[None, :] * (y2 - y1)[:, None]
    # Clip so out-of-bounds rows stay evaluable; their cost is overridden.
    gx = np.clip(xs - 0.5, 0.0, w - 1.0).ravel()
    gy = np.clip(ys - 0.5, 0.0, h - 1.0).ravel()
    df_s = _bilinear_many(fp.df.data, gx, gy, circular=False).reshape(xs.shape)
    af_s = _bilinear_many(fp.af.data, gx, gy, circular=True).reshape(xs.shape)

    delta = np.mod(af_s - thetas[:, None], math.pi)
    delta = np.where(delta > 0.5 * math.pi, delta - math.pi, delta)
    c_af = np.mean(1.0 - np.cos(delta), axis=1)
    c_df = np.mean(df_s, axis=1)
    cost = params.lambda_af * c_af + params.lambda_df * c_df
    if v_vec is not None:
        mids = np.stack([mxs, mys], axis=1)
        e1 = np.stack([x1, y1], axis=1)
        e2 = np.stack([x2, y2], axis=1)
        cost = cost + params.lambda_vp * _d_vp_many(mids, e1, e2, v_vec)
    return np.where(ok, cost, np.inf)


def line_cost(
    l: LineSegment,
    fp: FieldPair,
    v: VanishingPoint | None = None,
    params: RefineParams | None = None,
) -> float:
    """Field-agreement cost of one line.

    The angular term averages 1 - cos of the sampled angle deviations
    (taken modulo pi into (-pi/2, pi/2]); the distance term averages the
    sampled distance field; the vanishing point term contributes d_vp only
    when ``v`` is given and lies within t_vp of the line.

    Raises:
        ValueError: when a sample point falls outside the field.
    """
    params = params or RefineParams()
    h, w = fp.height, fp.width
    for p in (l.p1, l.p2):
        if not (0.5 <= p.x <= w - 0.5 and 0.5 <= p.y <= h - 0.5):
            raise ValueError(f"line endpoint {tuple(p)} falls outside the field")
    use_v = v is not None and d_vp(l, v) <= params.t_vp
    mx, my = l.midpoint
    out = _batch_costs(
        fp,
        np.array([l.oriented_angle]),
        np.array([mx]),
        np.array([my]),
        0.5 * l.length,
        v.v if use_v else None,
        params,
    )
    return float(out[0])


def refine_line(
    l: LineSegment,
    fp: FieldPair,
    v: VanishingPoint | None = None,
    params: RefineParams | None = None,
    *,
    full_output: bool = False,
):
    """Optimize one line against the fields, keeping its length fixed.

    Two degrees of freedom: rotation about the midpoint and translation
    along the current normal. Damped Newton steps with central-difference
    derivatives (probe size fd_step, the angle probe scaled to move the
    endpoints by the same amount); uphill steps are rejected, so the final
    cost never exceeds the initial one. The vanishing point constraint is
    gated once at entry (dropped when d_vp(l, v) > t_vp).

    Returns the refined line; with ``full_output=True`` returns
    (line, cost, converged). Lines whose cost cannot be evaluated (samples
    outside the field) are returned unchanged and flagged not converged.
    """
    params = params or RefineParams()
    use_v = v is not None and d_vp(l, v) <= params.t_vp
    v_vec = v.v if use_v else None
    half_len = 0.5 * l.length

    theta = l.oriented_angle
    mx, my = l.midpoint

    def costs(cfg: list[tuple[float, float, float]]) -> np.ndarray:
        arr = np.asarray(cfg)
        return _batch_costs(fp, arr[:, 0], arr[:, 1], arr[:, 2], half_len, v_vec, params)

    f0 = float(costs([(theta, mx, my)])[0])
    if not math.isfinite(f0):
        if full_output:
            return l, f0, False
        return l

    h_t = params.fd_step
    h_a = params.fd_step / max(half_len, params.fd_step)
    mu = 1e-3
    converged = False

    for _ in range(params.max_iter):
        nx = -math.sin(theta)
        ny = math.cos(theta)

        def shifted(da: float, dt: float) -> tuple[float, float, float]:
            return (theta + da, mx + dt * nx, my + dt * ny)

        probes = costs(
            [
                shifted(h_a, 0.0),
                shifted(-h_a, 0.0),
                shifted(0.0, h_t),
                shifted(0.0, -h_t),
                shifted(h_a, h_t),
                shifted(h_a, -h_t),
                shifted(-h_a, h_t),
                shifted(-h_a, -h_t),
            ]
        )
        if not np.all(np.isfinite(probes)):
            break  # probing across the border: stop at the current line
        fa_p, fa_m, ft_p, ft_m, fpp, fpm, fmp, fmm = map(float, probes)
        g = np.array([(fa_p - fa_m) / (2.0 * h_a), (ft_p - ft_m) / (2.0 * h_t)])
        haa = (fa_p - 2.0 * f0 + fa_m) / (h_a * h_a)
        htt = (ft_p - 2.0 * f0 + ft_m) / (h_t * h_t)
        hat = (fpp - fpm - fmp + fmm) / (4.0 * h_a * h_t)
        hess = np.array([[haa, hat], [hat, htt]])
        damp = np.diag(np.maximum(np.abs(np.diag(hess)), 1e-8))

        stepped = False
        for _boost in range(14):
            try:
                delta = np.linalg.solve(hess + mu * damp, -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            if abs(delta[1]) > params.max_lateral_step:
                delta[1] = math.copysign(params.max_lateral_step, delta[1])
            trial_cfg = shifted(float(delta[0]), float(delta[1]))
            trial = float(costs([trial_cfg])[0])
            if math.isfinite(trial) and trial < f0:
                theta, mx, my = trial_cfg
                improvement = f0 - trial
                f0 = trial
                mu = max(mu / 3.0, 1e-12)
                stepped = True
                if (
                    float(np.hypot(delta[0] * max(half_len, 1.0), delta[1]))
                    < params.tol
                    or improvement < 1e-14 * max(f0, 1.0)
                ):
                    converged = True
                break
            mu *= 10.0
        if not stepped:
            converged = True  # no downhill step at any damping level
            break
        if converged:
            break

    refined = LineSegment(
        Point2(mx - half_len * math.cos(theta), my - half_len * math.sin(theta)),
        Point2(mx + half_len * math.cos(theta), my + half_len * math.sin(theta)),
    )
    if full_output:
        return refined, f0, converged
    return refined


def refine_joint(
    lines: Sequence[LineSegment],
    fp: FieldPair,
    params: RefineParams | None = None,
    vp_params: VpParams | None = None,
) -> tuple[list[LineSegment], list[VanishingPoint], VpAssignment]:
    """Alternate line refinement, VP refinement, and re-association.

    Vanishing points are fitted once up front, then k_alternations rounds
    run: every line is refined (its VP term active only while the
    association stays within t_vp), each VP is re-estimated from its
    currently assigned lines, and lines are re-assigned to their closest
    VP. Deterministic given the VP seed.
    """
    params = params or RefineParams()
    current = list(lines)
    n = len(current)
    if n == 0:
        return [], [], []

    if n >= 2:
        vps, assignment = fit_vps(current, vp_params)
    else:
        vps, assignment = [], [None] * n

    for _ in range(params.k_alternations):
        for i in range(n):
            j = assignment[i]
            v = vps[j] if j is not None else None
            if v is not None and d_vp(current[i], v) > params.t_vp:
                v = None
            current[i] = refine_line(current[i], fp, v, params)
        if vps:
            for j in range(len(vps)):
                members = [current[i] for i in range(n) if assignment[i] == j]
                if len(members) >= 2:
                    vps[j] = refine_vp(vps[j], members)
            for i in range(n):
                best_j = None
                best_d = params.t_vp
                for j, vp_j in enumerate(vps):
                    dd = d_vp(current[i], vp_j)
                    if dd < best_d:
                        best_d = dd
                        best_j = j
                assignment[i] = best_j
    return current, vps, assignment
