"""Sampled numerical verdicts for the defining identities of foliated connections.

Every check reduces to a list of symbolic residual fields, evaluated on seeded
sample points of the domain box.  The report keeps the overall worst residual
and, per identity, a witness entry (label, worst residual, point, value there).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .connection import (
    AffineConnection,
    MetricField,
    covariant_derivative,
    coordinate_fields,
    curvature,
    lie_derivative_of_connection,
    partner,
    partner_curvature,
    torsion,
)
from .expr import Expr, compile_exprs, mul, total
from .geometry import GENERATOR_NAME, FoliatedDomain, VectorField, lie_bracket

DEFAULT_TOL = 1e-8


@dataclass
class Witness:
    identity: str
    label: str
    max_residual: float
    worst_point: list[float]
    value: list[float]

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "label": self.label,
            "max_residual": self.max_residual,
            "worst_point": self.worst_point,
            "value": self.value,
        }


@dataclass
class CheckReport:
    name: str
    max_residual: float
    worst_point: list[float]
    samples: int
    seed: int
    tolerance: float
    details: list[Witness] = field(default_factory=list)
    generator: str = GENERATOR_NAME

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def witness(self, label: str) -> Witness:
        for w in self.details:
            if w.label == label:
                return w
        raise KeyError(label)

    def failures(self) -> list[Witness]:
        return [w for w in self.details if w.max_residual > self.tolerance]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "max_residual": self.max_residual,
            "worst_point": self.worst_point,
            "samples": self.samples,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "generator": self.generator,
            "details": [w.to_dict() for w in self.details],
        }


@dataclass
class _Item:
    identity: str
    label: str
    exprs: tuple[Expr, ...]


def _evaluate(name: str, items: Sequence[_Item], dom: FoliatedDomain, samples: int, seed: int, tol: float) -> CheckReport:
    pts = dom.sample(samples, seed)
    flat = [e for it in items for e in it.exprs]
    if flat:
        values = compile_exprs(flat).batch(pts)
        if values.ndim == 1:
            values = values.reshape(len(pts), -1)
    else:
        values = np.zeros((len(pts), 0))
    details = []
    worst, worst_p = 0.0, pts[0].tolist() if len(pts) else []
    col = 0
    for it in items:
        k = len(it.exprs)
        block = values[:, col : col + k]
        col += k
        norms = np.max(np.abs(block), axis=1) if k else np.zeros(len(pts))
        norms = np.where(np.isfinite(norms), norms, np.inf)
        i = int(np.argmax(norms)) if len(norms) else 0
        r = float(norms[i]) if len(norms) else 0.0
        details.append(Witness(it.identity, it.label, r, pts[i].tolist(), block[i].tolist() if k else []))
        if r > worst:
            worst, worst_p = r, pts[i].tolist()
    return CheckReport(name, worst, worst_p, samples, seed, tol, details)


def _d(dom: FoliatedDomain, mu: int) -> str:
    return f"d/d{dom.coord_names[mu]}"


def _ds(dom: FoliatedDomain, W: VectorField) -> tuple[Expr, ...]:
    return dom.pushforward(W)


def check_bundle_like(
    conn: AffineConnection, dom: FoliatedDomain, samples: int = 100, seed: int = 0, tol: float = DEFAULT_TOL
) -> CheckReport:
    """Projectability of nabla_{X*_a} X*_b for lifts of the base coordinate fields."""
    lifts = dom.base_lifts
    items = []
    for a in range(dom.q):
        for b in range(dom.q):
            W = covariant_derivative(conn, lifts[a], lifts[b])
            for i, V in enumerate(dom.vertical_frame):
                items.append(
                    _Item(
                        "projectable",
                        f"[V[{i}], nabla_(X*[{a}]) X*[{b}]]",
                        _ds(dom, lie_bracket(V, W)),
                    )
                )
    return _evaluate("bundle_like", items, dom, samples, seed, tol)


def check_transverse_affine(
    conn: AffineConnection, dom: FoliatedDomain, samples: int = 100, seed: int = 0, tol: float = DEFAULT_TOL
) -> CheckReport:
    """Transverse affine axioms with the partner derived as omega_X V = V(nabla_X V).

    Identities, each on coordinate fields d_mu, d_nu and vertical frame fields V_i:
      vertical_derivative   ds(nabla_{d_mu} V_i) = 0
      partner_relation      nabla_{V_i} d_mu - [V_i, d_mu] - omega_{d_mu} V_i = 0
      partner_torsion_free  omega_{V_i} V_j - omega_{V_j} V_i - [V_i, V_j] = 0
      lie_derivative_vertical  ds((L_{V_i} nabla)(d_mu, d_nu)) = 0
    """
    n = dom.n
    d = coordinate_fields(n)
    Vs = dom.vertical_frame
    items = []
    for i, V in enumerate(Vs):
        for mu in range(n):
            items.append(
                _Item("vertical_derivative", f"nabla_({_d(dom, mu)}) V[{i}]", _ds(dom, covariant_derivative(conn, d[mu], V)))
            )
    for i, V in enumerate(Vs):
        for mu in range(n):
            W = covariant_derivative(conn, V, d[mu]) - lie_bracket(V, d[mu]) - partner(conn, dom, d[mu], V)
            items.append(_Item("partner_relation", f"nabla_(V[{i}]) {_d(dom, mu)} - [V[{i}], {_d(dom, mu)}] - omega", W.components))
    for i in range(len(Vs)):
        for j in range(i + 1, len(Vs)):
            W = partner(conn, dom, Vs[i], Vs[j]) - partner(conn, dom, Vs[j], Vs[i]) - lie_bracket(Vs[i], Vs[j])
            items.append(_Item("partner_torsion_free", f"omega torsion (V[{i}], V[{j}])", W.components))
    for i, V in enumerate(Vs):
        for mu in range(n):
            for nu in range(n):
                W = lie_derivative_of_connection(conn, V, d[mu], d[nu])
                items.append(
                    _Item("lie_derivative_vertical", f"(L_V[{i}] nabla)({_d(dom, mu)}, {_d(dom, nu)})", _ds(dom, W))
                )
    return _evaluate("transverse_affine", items, dom, samples, seed, tol)


def transverse_metric(metric: MetricField, dom: FoliatedDomain):
    """g_T(Y, Z) := g(HY, HZ) as a symbolic matrix."""
    H, g, n = dom.hproj, metric.g, dom.n
    gH = [[total(mul(g[i][k], H[k][j]) for k in range(n)) for j in range(n)] for i in range(n)]
    return [[total(mul(H[k][i], gH[k][j]) for k in range(n)) for j in range(n)] for i in range(n)]


def _compatibility_items(conn: AffineConnection, metric: MetricField, dom: FoliatedDomain) -> list[_Item]:
    from .expr import differentiate

    n = dom.n
    gT = transverse_metric(metric, dom)
    G = conn.symbol
    items = []
    for mu in range(n):
        exprs = []
        for nu in range(n):
            for rho in range(nu, n):
                e = differentiate(gT[nu][rho], mu)
                e = e - total(mul(G(lam, nu, mu), gT[lam][rho]) for lam in range(n))
                e = e - total(mul(G(lam, rho, mu), gT[nu][lam]) for lam in range(n))
                exprs.append(e)
        items.append(_Item("compatibility", f"{_d(dom, mu)} g_T - g_T(nabla ., .) - g_T(., nabla .)", tuple(exprs)))
    return items


def check_fundamental_pair(
    conn: AffineConnection,
    metric: MetricField,
    dom: FoliatedDomain,
    samples: int = 100,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> CheckReport:
    """Torsion takes vertical values, and X g_T(Y, Z) = g_T(nabla_X Y, Z) + g_T(Y, nabla_X Z)."""
    d = coordinate_fields(dom.n)
    items = []
    for mu in range(dom.n):
        for nu in range(mu + 1, dom.n):
            items.append(
                _Item("torsion_vertical", f"Tor({_d(dom, mu)}, {_d(dom, nu)})", _ds(dom, torsion(conn, d[mu], d[nu])))
            )
    items.extend(_compatibility_items(conn, metric, dom))
    return _evaluate("fundamental_pair", items, dom, samples, seed, tol)


def check_torsion_identity(
    conn: AffineConnection, dom: FoliatedDomain, samples: int = 100, seed: int = 0, tol: float = DEFAULT_TOL
) -> CheckReport:
    """Tor(X, Y) = -V[HX, HY] on coordinate pairs."""
    d = coordinate_fields(dom.n)
    items = []
    for mu in range(dom.n):
        for nu in range(mu + 1, dom.n):
            rhs = -dom.vertical(lie_bracket(dom.horizontal(d[mu]), dom.horizontal(d[nu])))
            W = torsion(conn, d[mu], d[nu]) - rhs
            items.append(_Item("torsion_identity", f"Tor({_d(dom, mu)}, {_d(dom, nu)}) + V[H., H.]", W.components))
    return _evaluate("torsion_identity", items, dom, samples, seed, tol)


def check_vertical_torsion(
    conn: AffineConnection, dom: FoliatedDomain, samples: int = 100, seed: int = 0, tol: float = DEFAULT_TOL
) -> CheckReport:
    """Tor(V, X) = 0 for vertical frame fields V and coordinate fields X."""
    d = coordinate_fields(dom.n)
    items = [
        _Item("vertical_torsion", f"Tor(V[{i}], {_d(dom, mu)})", torsion(conn, V, d[mu]).components)
        for i, V in enumerate(dom.vertical_frame)
        for mu in range(dom.n)
    ]
    return _evaluate("vertical_torsion", items, dom, samples, seed, tol)


def check_curvature_identities(
    conn: AffineConnection, dom: FoliatedDomain, samples: int = 100, seed: int = 0, tol: float = 1e-7
) -> CheckReport:
    """Curvature with vertical arguments expressed through the partner connection.

    two_vertical  R(V_i, V_j) d_mu = R^omega(V_i, d_mu) V_j - R^omega(V_j, d_mu) V_i
    one_vertical  R(V_i, d_mu) d_nu = (L_V nabla)(d_mu, d_nu) + omega_{nabla_mu d_nu} V_i - omega_mu omega_nu V_i
    """
    d = coordinate_fields(dom.n)
    Vs = dom.vertical_frame
    om = lambda X, Y: partner(conn, dom, X, Y)  # noqa: E731
    items = []
    for i in range(len(Vs)):
        for j in range(i + 1, len(Vs)):
            for mu in range(dom.n):
                W = (
                    curvature(conn, Vs[i], Vs[j], d[mu])
                    - partner_curvature(conn, dom, Vs[i], d[mu], Vs[j])
                    + partner_curvature(conn, dom, Vs[j], d[mu], Vs[i])
                )
                items.append(_Item("two_vertical", f"R(V[{i}], V[{j}]) {_d(dom, mu)}", W.components))
    for i, V in enumerate(Vs):
        for mu in range(dom.n):
            for nu in range(dom.n):
                W = (
                    curvature(conn, V, d[mu], d[nu])
                    - lie_derivative_of_connection(conn, V, d[mu], d[nu])
                    - om(covariant_derivative(conn, d[mu], d[nu]), V)
                    + om(d[mu], om(d[nu], V))
                )
                items.append(_Item("one_vertical", f"R(V[{i}], {_d(dom, mu)}) {_d(dom, nu)}", W.components))
    return _evaluate("curvature_identities", items, dom, samples, seed, tol)
