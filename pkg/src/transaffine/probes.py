"""Sampling probes for pseudoconvexity and disprisonment of horizontal geodesics.

A base box ``K`` stands for a transversely compact set (its saturation is the
preimage of ``K`` under the submersion).  Verdicts are evidence only:
"supported", "refuted" or "inconclusive".
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .checks import check_transverse_affine
from .connection import AffineConnection, NotTransverseAffineError, recalibrate
from .dynamics import LEFT_DOMAIN, REACHED_END, GeodesicTrajectory, integrate_geodesic, integrate_geodesics
from .geometry import GENERATOR_NAME, FoliatedDomain

SUPPORTED, REFUTED, INCONCLUSIVE = "supported", "refuted", "inconclusive"
HULL_GROWTH = 0.01
SPEED_BOUND = 1e3


@dataclass
class ProbeSpec:
    K: Sequence[tuple[float, float]]
    t_max: float
    step: float = 0.01
    direction_grid: Sequence[int] = (16,)
    grid_points: int = 3
    escape_radius: float | None = None
    starts: int = 8
    seed: int = 0

    def __post_init__(self):
        self.K = [tuple(map(float, b)) for b in self.K]
        if any(not a <= b for a, b in self.K):
            raise ValueError("K intervals must be ordered")
        if self.escape_radius is not None and self.escape_radius <= self.diameter:
            raise ValueError("escape_radius must exceed the diameter of K")

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (a + b) for a, b in self.K])

    @property
    def diameter(self) -> float:
        return float(math.sqrt(sum((b - a) ** 2 for a, b in self.K)))


@dataclass
class Violation:
    x0: list[float]
    v0: list[float]
    direction: int
    t_max: float
    step: float
    final_x: list[float]
    final_v: list[float]
    excursion: float
    reason: str = "stayed in a bounded base region for the full time with bounded speed"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ProbeReport:
    probe: str
    verdict: str
    sampled_segments: int
    K: list
    seed: int
    t_max: float
    step: float
    K_star_estimate: list | None = None
    K_star_doubled: list | None = None
    growth: float | None = None
    escape_radius: float | None = None
    violations: list[Violation] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    generator: str = GENERATOR_NAME

    def to_dict(self) -> dict:
        return {
            "probe": self.probe,
            "verdict": self.verdict,
            "sampled_segments": self.sampled_segments,
            "K": [list(b) for b in self.K],
            "K_star_estimate": self.K_star_estimate,
            "K_star_doubled": self.K_star_doubled,
            "growth": self.growth,
            "escape_radius": self.escape_radius,
            "violations": [v.to_dict() for v in self.violations],
            "counts": dict(self.counts),
            "seed": self.seed,
            "generator": self.generator,
            "t_max": self.t_max,
            "step": self.step,
        }


def _require_transverse_affine(conn, dom):
    rep = check_transverse_affine(conn, dom, samples=32, seed=0)
    if not rep.passed:
        raise NotTransverseAffineError(f"connection is not transverse affine (residual {rep.max_residual:.3e})")


def unit_directions(q: int, grid: Sequence[int]) -> np.ndarray:
    """Unit vectors in R^q from an angular grid (one count per angular dimension)."""
    if q == 1:
        return np.array([[1.0], [-1.0]])
    grid = list(grid) + [grid[-1] if grid else 8] * max(0, q - 1 - len(grid))
    # the first angle runs over the full circle, the rest over (0, pi)
    axes = [np.arange(grid[0]) * (2 * np.pi / grid[0])]
    for m in grid[1 : q - 1]:
        axes.append((np.arange(m) + 0.5) * (np.pi / m))
    out = []
    for angles in itertools.product(*axes):
        phi, polar = angles[0], angles[1:]
        v = np.empty(q)
        s = 1.0
        for i, th in enumerate(reversed(polar)):
            v[q - 1 - i] = s * math.cos(th)
            s *= math.sin(th)
        v[0] = s * math.cos(phi)
        v[1] = s * math.sin(phi)
        out.append(v)
    return np.array(out)


def _base_path(dom: FoliatedDomain, traj: GeodesicTrajectory) -> np.ndarray:
    return dom.submersion_batch(traj.xs)


def _in_box(u: np.ndarray, box, slack: float = 1e-12) -> np.ndarray:
    lo = np.array([a for a, _ in box]) - slack
    hi = np.array([b for _, b in box]) + slack
    return np.all((u >= lo) & (u <= hi), axis=-1)


def _grid_points(K, m: int) -> np.ndarray:
    axes = [np.linspace(a, b, m) if m > 1 else np.array([0.5 * (a + b)]) for a, b in K]
    return np.array(list(itertools.product(*axes)))


def _hull(segments: list[np.ndarray]) -> list[list[float]] | None:
    if not segments:
        return None
    pts = np.vstack(segments)
    return [[float(a), float(b)] for a, b in zip(pts.min(axis=0), pts.max(axis=0))]


def _retained_hull(conn, dom, spec: ProbeSpec, t_max: float, pts, dirs):
    segments, count, exits = [], 0, 0
    bbox = dom.estimated_base_box()
    X0, V0 = [], []
    for u0 in pts:
        x0 = dom.section_at(u0)
        if not dom.contains(x0):
            continue
        L = dom.lift_at(x0)
        for w in dirs:
            X0.append(x0)
            V0.append(L @ w)
    if X0:
        # the box is a reporting boundary here: a segment may leave it and come back over K
        for traj in integrate_geodesics(conn, X0, V0, (0.0, t_max), spec.step, dom, stop_at_box=False):
            u = _base_path(dom, traj)
            inside = np.nonzero(_in_box(u, spec.K))[0]
            last = int(inside[-1]) if len(inside) else 0
            count += 1
            seg = u[: last + 1]
            segments.append(seg)
            if not np.all(_in_box(seg, bbox, slack=0.0)):
                exits += 1
    return _hull(segments), count, exits


def probe_pseudoconvexity(conn: AffineConnection, dom: FoliatedDomain, spec: ProbeSpec, verify: bool = True) -> ProbeReport:
    """Hull of horizontal geodesic segments with both ends over K, and its stability when t_max doubles."""
    if verify:
        _require_transverse_affine(conn, dom)
    shoot = recalibrate(conn, dom)
    pts = _grid_points(spec.K, spec.grid_points)
    dirs = unit_directions(dom.q, spec.direction_grid)
    hull, count, exits = _retained_hull(shoot, dom, spec, spec.t_max, pts, dirs)
    hull2, count2, exits2 = _retained_hull(shoot, dom, spec, 2 * spec.t_max, pts, dirs)
    report = ProbeReport(
        "pseudoconvexity", INCONCLUSIVE, count + count2, spec.K, spec.seed, spec.t_max, spec.step,
        hull, hull2, None, None, [], {"segments": count, "segments_doubled": count2, "box_exits": exits + exits2},
    )
    if hull is None:
        return report
    widths = np.array([max(b - a, 1e-300) for a, b in spec.K])
    growth = float(np.max((np.array([b - a for a, b in hull2]) - np.array([b - a for a, b in hull])) / widths))
    report.growth = growth
    bbox = dom.estimated_base_box()
    periodic = dom.base_periodic
    strictly_inside = all(
        per or (lo < a and b < hi) for (a, b), (lo, hi), per in zip(hull2, bbox, periodic)
    )
    if exits + exits2:
        report.verdict = REFUTED
    elif strictly_inside and growth <= HULL_GROWTH:
        report.verdict = SUPPORTED
    return report


def _excursion(dom: FoliatedDomain, u: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = np.abs(u - center)
    bbox = dom.estimated_base_box()
    for i, per in enumerate(dom.base_periodic):
        if per:
            period = bbox[i][1] - bbox[i][0]
            d[:, i] = np.minimum(np.mod(d[:, i], period), period - np.mod(d[:, i], period))
    return np.max(d, axis=1)


def _random_starts(dom: FoliatedDomain, spec: ProbeSpec):
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    lo = np.array([a for a, _ in spec.K])
    hi = np.array([b for _, b in spec.K])
    us = lo + (hi - lo) * rng.random((spec.starts, len(spec.K)))
    ws = rng.standard_normal((spec.starts, dom.q))
    ws /= np.linalg.norm(ws, axis=1, keepdims=True)
    return us, ws


def replay(conn: AffineConnection, dom: FoliatedDomain, v: Violation) -> GeodesicTrajectory:
    """Re-integrate a violation's run (geodesics of the recalibrated connection)."""
    return integrate_geodesic(recalibrate(conn, dom), v.x0, v.v0, (0.0, v.direction * v.t_max), v.step, dom)


def probe_disprisonment(conn: AffineConnection, dom: FoliatedDomain, spec: ProbeSpec, verify: bool = True) -> ProbeReport:
    """Forward and backward runs from seeded starts over K; a run that neither escapes nor leaves is a violation."""
    if verify:
        _require_transverse_affine(conn, dom)
    radius = spec.escape_radius if spec.escape_radius is not None else 2.0 * spec.diameter + 1.0
    shoot = recalibrate(conn, dom)
    us, ws = _random_starts(dom, spec)
    counts = {"escaped": 0, "left_domain": 0, "imprisoned": 0, "unresolved": 0}
    violations = []
    runs = 0
    X0 = np.array([dom.section_at(u0) for u0 in us])
    V0 = np.array([dom.lift_at(x0) @ w for x0, w in zip(X0, ws)])
    sweeps = {d: integrate_geodesics(shoot, X0, V0, (0.0, d * spec.t_max), spec.step, dom) for d in (1, -1)}
    for i, (x0, v0, w) in enumerate(zip(X0, V0, ws)):
        base_speed0 = float(np.linalg.norm(w))
        for direction in (1, -1):
            runs += 1
            traj = sweeps[direction][i]
            exc = _excursion(dom, _base_path(dom, traj), spec.center)
            peak = float(np.max(exc))
            if peak > radius:
                counts["escaped"] += 1
            elif traj.termination == LEFT_DOMAIN:
                counts["left_domain"] += 1
            elif traj.termination == REACHED_END and (
                np.linalg.norm(dom.ds_at(traj.xs[-1]) @ traj.vs[-1]) <= SPEED_BOUND * base_speed0
            ):
                counts["imprisoned"] += 1
                violations.append(
                    Violation(
                        x0=[float(c) for c in x0],
                        v0=[float(c) for c in v0],
                        direction=direction,
                        t_max=float(spec.t_max),
                        step=float(spec.step),
                        final_x=[float(c) for c in traj.xs[-1]],
                        final_v=[float(c) for c in traj.vs[-1]],
                        excursion=peak,
                    )
                )
            else:
                counts["unresolved"] += 1
    if violations:
        verdict = REFUTED
    elif counts["unresolved"] == 0:
        verdict = SUPPORTED
    else:
        verdict = INCONCLUSIVE
    return ProbeReport(
        "disprisonment", verdict, runs, spec.K, spec.seed, spec.t_max, spec.step,
        escape_radius=float(radius), violations=violations, counts=counts,
    )
