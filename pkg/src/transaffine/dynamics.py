"""Fixed-step RK4 integration of geodesics and Jacobi fields, and the residuals built on them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .connection import AffineConnection, PointFrame, contract, curvature_apply, gamma_matrix, riemann_from_arrays
from .expr import compile_exprs, differentiate
from .geometry import FoliatedDomain, VectorField

REACHED_END = "reached_end"
LEFT_DOMAIN = "left_domain"
NAN_DETECTED = "nan_detected"


class DynamicsError(ValueError):
    pass


class MismatchedConnectionError(DynamicsError):
    pass


class VerticalTangentError(DynamicsError):
    pass


@dataclass
class GeodesicTrajectory:
    times: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    step: float
    termination: str
    connection: AffineConnection | None = None
    accelerations: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    def accelerations_or_ode(self) -> np.ndarray:
        if self.accelerations is not None:
            return self.accelerations
        if self.connection is None:
            raise DynamicsError("trajectory has neither stored accelerations nor a carrier connection")
        return np.array([-contract(self.connection.gamma_at(x), v, v) for x, v in zip(self.xs, self.vs)])


@dataclass
class JacobiSolution:
    along: GeodesicTrajectory
    J: np.ndarray
    DJ: np.ndarray
    start_index: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.along.times[self.start_index : self.start_index + len(self.J)]


# generic fixed-step driver


def _time_grid(t0: float, t1: float, step: float) -> np.ndarray:
    if step <= 0:
        raise ValueError("step must be positive")
    span = t1 - t0
    count = int(math.floor(abs(span) / step + 1e-9))
    sign = 1.0 if span >= 0 else -1.0
    grid = t0 + sign * step * np.arange(count + 1)
    if abs(grid[-1] - t1) > 1e-12 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _march(f, grid, y0, n, dom: FoliatedDomain | None):
    """Integrate on ``grid``; the first n entries of the state are the position."""
    ys = [np.array(y0, dtype=float)]
    termination = REACHED_END
    for k in range(len(grid) - 1):
        try:
            with np.errstate(all="ignore"):
                y = rk4_step(f, grid[k], ys[-1], grid[k + 1] - grid[k])
        except (OverflowError, ZeroDivisionError, ArithmeticError):
            termination = NAN_DETECTED
            break
        if not np.all(np.isfinite(y)):
            termination = NAN_DETECTED
            break
        if dom is not None:
            y[:n] = dom.wrap(y[:n])
            if not dom.contains(y[:n]):
                termination = LEFT_DOMAIN
                break
        ys.append(y)
    return np.array(ys), termination


def _geodesic_rhs(conn: AffineConnection, n: int):
    def f(t, y):
        x, v = y[:n], y[n:]
        return np.concatenate([v, -contract(conn.gamma_at(x), v, v)])

    return f


def integrate_geodesic(
    conn: AffineConnection,
    x0,
    v0,
    t_span: Sequence[float],
    step: float,
    dom: FoliatedDomain | None = None,
) -> GeodesicTrajectory:
    """Classical RK4 on x' = v, v' = -Gamma(v, v); stops at the end, a box exit or a non-finite state."""
    n = conn.n
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if x0.shape != (n,) or v0.shape != (n,):
        raise ValueError(f"x0 and v0 must have length {n}")
    if dom is not None and not dom.contains(x0):
        raise DynamicsError(f"initial point {x0.tolist()} is outside the domain box")
    grid = _time_grid(float(t_span[0]), float(t_span[1]), float(step))
    ys, term = _march(_geodesic_rhs(conn, n), grid, np.concatenate([x0, v0]), n, dom)
    xs, vs = ys[:, :n], ys[:, n:]
    accs = np.array([-contract(conn.gamma_at(x), v, v) for x, v in zip(xs, vs)])
    return GeodesicTrajectory(grid[: len(ys)], xs, vs, float(step), term, conn, accs)


def integrate_geodesics(
    conn: AffineConnection,
    X0,
    V0,
    t_span: Sequence[float],
    step: float,
    dom: FoliatedDomain | None = None,
    stop_at_box: bool = True,
) -> list[GeodesicTrajectory]:
    """Many geodesics at once on a shared grid; each run stops independently.

    With ``stop_at_box=False`` the domain only wraps periodic coordinates and
    runs continue outside the box until ``t_span`` ends or the state blows up.
    """
    n = conn.n
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    V0 = np.atleast_2d(np.asarray(V0, dtype=float))
    m = len(X0)
    grid = _time_grid(float(t_span[0]), float(t_span[1]), float(step))

    def f(Y):
        X, V = Y[:, :n], Y[:, n:]
        G = conn.gamma_batch(X)
        return np.concatenate([V, -np.einsum("plnm,pm,pn->pl", G, V, V)], axis=1)

    states = np.full((len(grid), m, 2 * n), np.nan)
    states[0] = np.concatenate([X0, V0], axis=1)
    last = np.zeros(m, dtype=int)
    term = [REACHED_END] * m
    active = np.arange(m)
    if dom is not None and stop_at_box:
        bad = ~dom.contains_batch(X0)
        if np.any(bad):
            raise DynamicsError(f"initial point {X0[bad][0].tolist()} is outside the domain box")
    for k in range(len(grid) - 1):
        if not len(active):
            break
        h = grid[k + 1] - grid[k]
        Y = states[k, active]
        with np.errstate(all="ignore"):
            k1 = f(Y)
            k2 = f(Y + 0.5 * h * k1)
            k3 = f(Y + 0.5 * h * k2)
            k4 = f(Y + h * k3)
            Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        finite = np.all(np.isfinite(Y), axis=1)
        keep = finite.copy()
        if dom is not None:
            Y[:, :n] = dom.wrap_batch(Y[:, :n])
        if dom is not None and stop_at_box:
            inside = dom.contains_batch(Y[:, :n])
            for i in active[finite & ~inside]:
                term[i] = LEFT_DOMAIN
            keep &= inside
        for i in active[~finite]:
            term[i] = NAN_DETECTED
        active = active[keep]
        states[k + 1, active] = Y[keep]
        last[active] = k + 1
    out = []
    for i in range(m):
        ys = states[: last[i] + 1, i]
        xs, vs = ys[:, :n], ys[:, n:]
        accs = -np.einsum("plnm,pm,pn->pl", conn.gamma_batch(xs), vs, vs)
        out.append(GeodesicTrajectory(grid[: last[i] + 1], xs, vs, float(step), term[i], conn, accs))
    return out


# Jacobi fields


def _jacobi_rhs(conn: AffineConnection, n: int, fields: int):
    def f(t, y):
        x, v = y[:n], y[n : 2 * n]
        G = conn.gamma_at(x)
        R = riemann_from_arrays(G, conn.dgamma_at(x))
        Gv = gamma_matrix(G, v)
        out = [v, -Gv @ v]
        for k in range(fields):
            base = 2 * n + 2 * n * k
            J, P = y[base : base + n], y[base + n : base + 2 * n]
            out.append(P - Gv @ J)
            out.append(-curvature_apply(R, J, v, v) - Gv @ P)
        return np.concatenate(out)

    return f


def _jacobi_states(conn, traj, start, J0s, DJ0s, dom=None):
    if traj.connection is not conn:
        raise MismatchedConnectionError("Jacobi fields must be integrated with the trajectory's own connection")
    n = traj.n
    y0 = [traj.xs[start], traj.vs[start]]
    for J0, DJ0 in zip(J0s, DJ0s):
        y0 += [np.asarray(J0, float), np.asarray(DJ0, float)]
    grid = traj.times[start:]
    ys, _ = _march(_jacobi_rhs(conn, n, len(J0s)), grid, np.concatenate(y0), n, dom)
    return ys


def integrate_jacobi(conn: AffineConnection, traj: GeodesicTrajectory, J0, DJ0, start_index: int = 0) -> JacobiSolution:
    """RK4 on D^2 J/dt^2 + R(J, v) v = 0 along ``traj`` (DJ/dt = J' + Gamma(v) J)."""
    n = traj.n
    ys = _jacobi_states(conn, traj, start_index, [J0], [DJ0])
    return JacobiSolution(traj, ys[:, 2 * n : 3 * n], ys[:, 3 * n : 4 * n], start_index)


def _ordinary_jacobi_derivatives(carrier: AffineConnection, xs, vs, accs, J, P):
    """J' and J'' (plain time derivatives) from the Jacobi system of the carrier connection."""
    Jt = np.empty_like(J)
    Jtt = np.empty_like(J)
    for k, (x, v, a) in enumerate(zip(xs, vs, accs)):
        G = carrier.gamma_at(x)
        dG = carrier.dgamma_at(x)
        R = riemann_from_arrays(G, dG)
        Gv = gamma_matrix(G, v)
        jt = P[k] - Gv @ J[k]
        pt = -curvature_apply(R, J[k], v, v) - Gv @ P[k]
        dGv = np.einsum("lnmk,k,m,n->l", dG, v, v, J[k])
        Jt[k] = jt
        Jtt[k] = pt - (dGv + contract(G, a, J[k]) + contract(G, v, jt))
    return Jt, Jtt


def jacobi_defect_along(conn: AffineConnection, dom: FoliatedDomain, xs, vs, accs, J, Jt, Jtt) -> np.ndarray:
    """Per-point ||ds(J.. + R(J, v) v)||_inf, with J.. the second covariant derivative of ``conn``."""
    out = np.empty(len(xs))
    for k, (x, v, a) in enumerate(zip(xs, vs, accs)):
        G = conn.gamma_at(x)
        dG = conn.dgamma_at(x)
        R = riemann_from_arrays(G, dG)
        first = Jt[k] + contract(G, v, J[k])
        second = Jtt[k] + np.einsum("lnmk,k,m,n->l", dG, v, v, J[k]) + contract(G, a, J[k]) + contract(G, v, Jt[k])
        second = second + contract(G, v, first)
        W = second + curvature_apply(R, J[k], v, v)
        out[k] = float(np.max(np.abs(dom.ds_at(x) @ W), initial=0.0))
    return out


def transverse_jacobi_residual(conn: AffineConnection, dom: FoliatedDomain, traj: GeodesicTrajectory, J: JacobiSolution) -> float:
    """max ||ds(J.. + R^(J, v) v)|| over the grid, J.. taken covariantly for ``conn``."""
    sl = slice(J.start_index, J.start_index + len(J.J))
    xs, vs = traj.xs[sl], traj.vs[sl]
    accs = traj.accelerations_or_ode()[sl]
    Jt, Jtt = _ordinary_jacobi_derivatives(traj.connection, xs, vs, accs, J.J, J.DJ)
    return float(np.max(jacobi_defect_along(conn, dom, xs, vs, accs, J.J, Jt, Jtt), initial=0.0))


def _field_jets(V: VectorField, n: int):
    first = compile_exprs([differentiate(c, k) for c in V.components for k in range(n)])
    second = compile_exprs(
        [differentiate(differentiate(c, k), j) for c in V.components for k in range(n) for j in range(n)]
    )
    return first, second


def vertical_field_jet(V: VectorField, traj: GeodesicTrajectory):
    """(J, J', J'') for the field V restricted to the curve."""
    n = traj.n
    first, second = _field_jets(V, n)
    accs = traj.accelerations_or_ode()
    J = V.batch(traj.xs)
    Jt = np.empty_like(J)
    Jtt = np.empty_like(J)
    for k, (x, v, a) in enumerate(zip(traj.xs, traj.vs, accs)):
        D1 = first(x).reshape(n, n)
        D2 = second(x).reshape(n, n, n)
        Jt[k] = D1 @ v
        Jtt[k] = np.einsum("lkj,k,j->l", D2, v, v) + D1 @ a
    return J, Jt, Jtt


def vertical_field_jacobi_residual(conn: AffineConnection, dom: FoliatedDomain, traj: GeodesicTrajectory, V: VectorField) -> float:
    J, Jt, Jtt = vertical_field_jet(V, traj)
    return float(np.max(jacobi_defect_along(conn, dom, traj.xs, traj.vs, traj.accelerations_or_ode(), J, Jt, Jtt), initial=0.0))


# transverse geodesics


def check_nowhere_vertical(dom: FoliatedDomain, traj: GeodesicTrajectory, ratio: float = 1e-6) -> None:
    for x, v in zip(traj.xs, traj.vs):
        h = v - dom.vproj_at(x) @ v
        if np.linalg.norm(h) < ratio * np.linalg.norm(v):
            raise VerticalTangentError(f"trajectory is vertical at {x.tolist()}")


def transverse_geodesic_defects(conn: AffineConnection, dom: FoliatedDomain, traj: GeodesicTrajectory) -> np.ndarray:
    accs = traj.accelerations_or_ode()
    return np.array(
        [
            float(np.max(np.abs(dom.ds_at(x) @ (a + contract(conn.gamma_at(x), v, v))), initial=0.0))
            for x, v, a in zip(traj.xs, traj.vs, accs)
        ]
    )


def transverse_geodesic_residual(conn: AffineConnection, dom: FoliatedDomain, traj: GeodesicTrajectory) -> float:
    """max ||ds(nabla_{g'} g')||_inf along the trajectory."""
    check_nowhere_vertical(dom, traj)
    return float(np.max(transverse_geodesic_defects(conn, dom, traj), initial=0.0))


def lift_base_geodesic(
    dom: FoliatedDomain,
    base_conn: AffineConnection,
    x0,
    w0,
    t_span: Sequence[float],
    step: float,
) -> tuple[GeodesicTrajectory, GeodesicTrajectory]:
    """Horizontal lift through x0 of the base geodesic starting at s(x0) with velocity w0.

    Returns ``(lift, base)``; the lift carries exact accelerations so it can be
    checked against any connection.
    """
    n, q = dom.n, dom.q
    x0 = np.asarray(x0, float)
    u0 = dom.submersion_at(x0)
    w0 = np.asarray(w0, float)

    def f(t, y):
        x, u, w = y[:n], y[n : n + q], y[n + q :]
        return np.concatenate([dom.lift_at(x) @ w, w, -contract(base_conn.gamma_at(u), w, w)])

    grid = _time_grid(float(t_span[0]), float(t_span[1]), float(step))
    ys, term = _march(f, grid, np.concatenate([x0, u0, w0]), n, dom)
    xs, us, ws = ys[:, :n], ys[:, n : n + q], ys[:, n + q :]
    vs, accs, bacc = [], [], []
    for x, u, w in zip(xs, us, ws):
        L = dom.lift_at(x)
        dL = dom.dlift_at(x)
        v = L @ w
        wdot = -contract(base_conn.gamma_at(u), w, w)
        vs.append(v)
        accs.append(np.einsum("lak,k,a->l", dL, v, w) + L @ wdot)
        bacc.append(wdot)
    times = grid[: len(ys)]
    lift = GeodesicTrajectory(times, xs, np.array(vs), float(step), term, None, np.array(accs))
    base = GeodesicTrajectory(times, us, ws, float(step), term, base_conn, np.array(bacc))
    return lift, base


# the D operator and vertical transport


def mathfrak_D(conn: AffineConnection, dom: FoliatedDomain, traj: GeodesicTrajectory, E, Edot) -> np.ndarray:
    """D(E) = V((VE)') + 2 A_{g'} HE - T_{VE} g' for a field E along the curve with time derivative Edot."""
    out = np.empty_like(np.asarray(E, float))
    for k, (x, v) in enumerate(zip(traj.xs, traj.vs)):
        pf = PointFrame.at(conn, dom, x)
        e, ed = E[k], Edot[k]
        ve = pf.PV @ e
        ve_dot = np.einsum("lmk,k,m->l", pf.dPV, v, e) + pf.PV @ ed
        ve_prime = ve_dot + contract(pf.G, v, ve)
        out[k] = pf.PV @ ve_prime + 2.0 * pf.A(v, pf.PH @ e) - pf.T(ve, v)
    return out


def integrate_transport(conn: AffineConnection, dom: FoliatedDomain, traj: GeodesicTrajectory, E0):
    """Solve E' = A_{g'} E + T_E g' along the trajectory; returns (E, Edot)."""
    if traj.connection is None:
        raise DynamicsError("transport needs a trajectory with a carrier connection")
    n = traj.n
    carrier = traj.connection

    def f(t, y):
        x, v, E = y[:n], y[n : 2 * n], y[2 * n :]
        pf = PointFrame.at(conn, dom, x)
        Edot = pf.A(v, E) + pf.T(E, v) - contract(pf.G, v, E)
        return np.concatenate([v, -contract(carrier.gamma_at(x), v, v), Edot])

    y0 = np.concatenate([traj.xs[0], traj.vs[0], np.asarray(E0, float)])
    ys, _ = _march(f, traj.times, y0, n, dom)
    E = ys[:, 2 * n :]
    Edot = np.array([f(t, y)[2 * n :] for t, y in zip(traj.times, ys)])
    return E, Edot


# conjugate points


@dataclass
class ConjugacyReport:
    parameters: list[tuple[float, int]]
    determinant_trace: list[tuple[float, float]]
    window: tuple[float, float]
    method: str = "base-projection determinant"
    base_parameters: list[tuple[float, int]] | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "window": list(self.window),
            "parameters": [{"t": t, "order": k} for t, k in self.parameters],
            "determinant_trace": [{"t": t, "det": v} for t, v in self.determinant_trace],
        }
        if self.base_parameters is not None:
            d["base_parameters"] = [{"t": t, "order": k} for t, k in self.base_parameters]
        d.update(self.extra)
        return d


DET_FLOOR = 1e-10
BISECT_TOL = 1e-8
KERNEL_RATIO = 1e-7
TRACE_POINTS = 201


def _conjugacy_matrix(dom: FoliatedDomain, y, n, q):
    x = y[:n]
    D = dom.ds_at(x)
    cols, dnorm = [], 1.0
    for k in range(q):
        base = 2 * n + 2 * n * k
        cols.append(D @ y[base : base + n])
        dnorm *= max(float(np.linalg.norm(y[base + n : base + 2 * n])), 1e-300)
    M = np.array(cols).T.reshape(q, q)
    return M, float(np.linalg.det(M)) / dnorm


def detect_transverse_conjugate(
    conn: AffineConnection,
    dom: FoliatedDomain,
    traj: GeodesicTrajectory,
    window: Sequence[float],
    tol: float = 1e-6,
    compare_base: bool = False,
) -> ConjugacyReport:
    """Parameters t* in (a, b] where some Jacobi field with J(a) = 0 has ds J(t*) = 0.

    The q fields start with DJ/dt(a) running over the horizontal frame.  The
    determinant of M(t) = [ds J_k(t)], normalised by prod ||DJ_k(t)||, is scanned
    for sign changes and dips below 1e-10; hits are refined by bisection using a
    single RK4 sub-step from the preceding grid state.
    """
    a, b = float(window[0]), float(window[1])
    if traj.connection is None:
        raise DynamicsError("conjugacy detection needs a trajectory with a carrier connection")
    carrier = traj.connection
    times = traj.times
    hits = np.nonzero(np.abs(times - a) <= 1e-9 * max(1.0, abs(a)))[0]
    if not len(hits):
        raise DynamicsError(f"window start {a} is not on the trajectory grid")
    i0 = int(hits[0])
    stop = int(np.searchsorted(times, b + 1e-12, side="right"))
    sub = GeodesicTrajectory(
        times[i0:stop], traj.xs[i0:stop], traj.vs[i0:stop], traj.step, traj.termination, carrier,
        None if traj.accelerations is None else traj.accelerations[i0:stop],
    )
    check_nowhere_vertical(dom, sub)
    if dom.n > dom.q:
        r = float(np.max(transverse_geodesic_defects(conn, dom, sub), initial=0.0))
        if r > tol:
            raise DynamicsError(f"trajectory is not a transverse geodesic on the window (residual {r:.3e})")
    n, q = dom.n, dom.q
    Hs = [H.at(sub.xs[0]) for H in dom.horizontal_frame]
    ys = _jacobi_states(carrier, sub, 0, [np.zeros(n)] * q, Hs)
    rhs = _jacobi_rhs(carrier, n, q)
    tgrid = sub.times[: len(ys)]
    mats, dets = [], []
    for y in ys:
        M, d = _conjugacy_matrix(dom, y, n, q)
        mats.append(M)
        dets.append(d)
    dets = np.array(dets)
    scale = max((float(np.linalg.svd(M, compute_uv=False)[0]) for M in mats), default=1.0) or 1.0

    def det_at(k: int, t: float) -> tuple[float, np.ndarray]:
        if t == tgrid[k]:
            return dets[k], mats[k]
        y = rk4_step(rhs, tgrid[k], ys[k], t - tgrid[k])
        M, d = _conjugacy_matrix(dom, y, n, q)
        return d, M

    found: list[tuple[float, int]] = []

    def add(t: float, M: np.ndarray):
        s = np.linalg.svd(M, compute_uv=False)
        order = int(np.sum(s < KERNEL_RATIO * scale))
        order = min(max(order, 1), q)
        if not found or abs(t - found[-1][0]) > 10 * BISECT_TOL:
            found.append((float(t), order))

    # t = a is skipped: M(a) = 0 by construction
    for k in range(2, len(tgrid)):
        lo_d, hi_d = dets[k - 1], dets[k]
        if np.sign(lo_d) * np.sign(hi_d) < 0:
            lo, hi = tgrid[k - 1], tgrid[k]
            slo = np.sign(lo_d)
            while abs(hi - lo) > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                if np.sign(det_at(k - 1, mid)[0]) == slo:
                    lo = mid
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
            add(t, det_at(k - 1, t)[1])
        elif abs(hi_d) < DET_FLOOR and abs(lo_d) >= abs(hi_d) and (k + 1 == len(tgrid) or abs(dets[k + 1]) >= abs(hi_d)):
            add(float(tgrid[k]), mats[k])
    idx = np.unique(np.linspace(0, len(tgrid) - 1, min(TRACE_POINTS, len(tgrid))).astype(int))
    trace = [(float(tgrid[i]), float(dets[i])) for i in idx]
    report = ConjugacyReport(found, trace, (a, b))
    if compare_base:
        from .connection import pushforward_connection

        base_conn = pushforward_connection(conn, dom, verify=False)
        base_dom = dom.base_domain()
        u0 = dom.submersion_at(sub.xs[0])
        w0 = dom.ds_at(sub.xs[0]) @ sub.vs[0]
        btraj = integrate_geodesic(base_conn, u0, w0, (a, float(tgrid[-1])), traj.step, None)
        report.base_parameters = detect_transverse_conjugate(base_conn, base_dom, btraj, (a, b), tol=tol).parameters
    return report


# CSV export


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(traj: GeodesicTrajectory, path) -> None:
    n = traj.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)])
        for t, x, v in zip(traj.times, traj.xs, traj.vs):
            w.writerow([_fmt(t)] + [_fmt(c) for c in x] + [_fmt(c) for c in v])


def write_jacobi_csv(sol: JacobiSolution, path) -> None:
    traj = sol.along
    n = traj.n
    s = sol.start_index
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["t"]
            + [f"x_{i}" for i in range(n)]
            + [f"v_{i}" for i in range(n)]
            + [f"J_{i}" for i in range(n)]
            + [f"DJdt_{i}" for i in range(n)]
        )
        for k in range(len(sol.J)):
            row = [traj.times[s + k]] + list(traj.xs[s + k]) + list(traj.vs[s + k]) + list(sol.J[k]) + list(sol.DJ[k])
            w.writerow([_fmt(c) for c in row])


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = (data.shape[1] - 1) // 2
    return data[:, 0], data[:, 1 : 1 + n], data[:, 1 + n : 1 + 2 * n]
