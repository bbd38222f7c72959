"""Affine connections given by Christoffel symbols and the constructions built from them.

Index convention: ``nabla_{d_mu} d_nu = Gamma^lam_{nu mu} d_lam``.  The sparse
symbol table is keyed by ``(lam, nu, mu)``, so the *last* index is the
differentiating direction.  With it

    (nabla_X Y)^lam = X(Y^lam) + Gamma^lam_{nu mu} X^mu Y^nu
    R^lam_{sig mu nu} = d_mu G^lam_{sig nu} - d_nu G^lam_{sig mu}
                        + G^lam_{rho mu} G^rho_{sig nu} - G^lam_{rho nu} G^rho_{sig mu}

and ``R(X, Y) Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import linalg
from .expr import ZERO, Expr, as_expr, compile_exprs, const, differentiate, mul, substitute, to_string, total
from .geometry import (
    DomainError,
    FoliatedDomain,
    VectorField,
    lie_bracket,
    sample_points,
)

Index = tuple[int, int, int]


class ConnectionError_(ValueError):
    pass


class NotTransverseAffineError(ConnectionError_):
    pass


class NonBasicError(ConnectionError_):
    pass


class NotOrthogonalError(ConnectionError_):
    pass


class MetricError(ConnectionError_):
    pass


@dataclass(frozen=True, eq=False)
class AffineConnection:
    n: int
    gamma: Mapping[Index, Expr] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        clean = {}
        for key, e in dict(self.gamma).items():
            lam, nu, mu = (int(k) for k in key)
            if not all(0 <= k < self.n for k in (lam, nu, mu)):
                raise ValueError(f"Christoffel index {key} out of range for n={self.n}")
            e = as_expr(e)
            if not e.is_zero():
                clean[(lam, nu, mu)] = e
        object.__setattr__(self, "gamma", dict(sorted(clean.items())))

    @classmethod
    def flat(cls, n: int) -> "AffineConnection":
        return cls(n, {}, "flat")

    @classmethod
    def from_array(cls, arr, name: str = "") -> "AffineConnection":
        """From a nested [lam][nu][mu] array of expressions."""
        n = len(arr)
        return cls(n, {(l, a, b): arr[l][a][b] for l in range(n) for a in range(n) for b in range(n)}, name)

    def symbol(self, lam: int, nu: int, mu: int) -> Expr:
        return self.gamma.get((lam, nu, mu), ZERO)

    def is_flat(self) -> bool:
        return not self.gamma

    def shifted(self, tensor: Mapping[Index, Expr], name: str = "") -> "AffineConnection":
        """This connection plus a (1,2)-tensor field given in the same index layout."""
        out = dict(self.gamma)
        for k, e in tensor.items():
            out[k] = out.get(k, ZERO) + as_expr(e)
        return AffineConnection(self.n, out, name or self.name)

    def to_json(self, names: Sequence[str]) -> dict[str, str]:
        return {f"{l},{a},{b}": to_string(e, names) for (l, a, b), e in self.gamma.items()}

    # numerics

    @cached_property
    def _keys(self):
        return list(self.gamma)

    @cached_property
    def _fn(self):
        return compile_exprs(list(self.gamma.values()))

    @cached_property
    def _dfn(self):
        return compile_exprs([differentiate(e, k) for e in self.gamma.values() for k in range(self.n)])

    @cached_property
    def _index(self):
        if not self._keys:
            return (np.zeros(0, int),) * 3
        return tuple(np.array(c) for c in zip(*self._keys))

    def gamma_at(self, p) -> np.ndarray:
        """Array G[lam, nu, mu] at p."""
        G = np.zeros((self.n,) * 3)
        if self._keys:
            G[self._index] = self._fn(p)
        return G

    def dgamma_at(self, p) -> np.ndarray:
        """Array dG[lam, nu, mu, k] = d_k Gamma^lam_{nu mu} at p."""
        dG = np.zeros((self.n,) * 4)
        if self._keys:
            dG[self._index] = self._dfn(p).reshape(len(self._keys), self.n)
        return dG

    def gamma_batch(self, points) -> np.ndarray:
        """Array G[p, lam, nu, mu] for a stack of points."""
        points = np.asarray(points, dtype=float)
        G = np.zeros((len(points),) + (self.n,) * 3)
        if self._keys:
            vals = self._fn.batch(points, strict=False).reshape(len(points), len(self._keys))
            G[(slice(None),) + self._index] = vals
        return G

    def curvature_at(self, p) -> np.ndarray:
        """R[lam, sig, mu, nu] at p."""
        return riemann_from_arrays(self.gamma_at(p), self.dgamma_at(p))


def contract(G: np.ndarray, u, w) -> np.ndarray:
    """Gamma(u, w)^lam = G^lam_{nu mu} u^mu w^nu (u is the direction)."""
    return np.einsum("lnm,m,n->l", G, u, w)


def gamma_matrix(G: np.ndarray, u) -> np.ndarray:
    """Matrix M[lam, nu] = G^lam_{nu mu} u^mu."""
    return np.einsum("lnm,m->ln", G, u)


def riemann_from_arrays(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    # dG[l, s, nu, k] = d_k G^l_{s nu}, so the derivative part is dG[l,s,n,m] - dG[l,s,m,n]
    R = dG.transpose(0, 1, 3, 2) - dG
    R = R + np.einsum("lrm,rsn->lsmn", G, G) - np.einsum("lrn,rsm->lsmn", G, G)
    return R


def curvature_apply(R: np.ndarray, x, y, z) -> np.ndarray:
    """R(x, y) z = R^lam_{sig mu nu} z^sig x^mu y^nu."""
    return np.einsum("lsmn,s,m,n->l", R, z, x, y)


# symbolic calculus


def covariant_derivative(conn: AffineConnection, X: VectorField, Y: VectorField) -> VectorField:
    n = conn.n
    if X.n != n or Y.n != n:
        raise ValueError("dimension mismatch")
    comps = [X.apply(Y[lam]) for lam in range(n)]
    for (lam, nu, mu), g in conn.gamma.items():
        if X[mu].is_zero() or Y[nu].is_zero():
            continue
        comps[lam] = comps[lam] + mul(g, mul(X[mu], Y[nu]))
    return VectorField(tuple(comps))


def torsion(conn: AffineConnection, X: VectorField, Y: VectorField) -> VectorField:
    return covariant_derivative(conn, X, Y) - covariant_derivative(conn, Y, X) - lie_bracket(X, Y)


def riemann_symbols(conn: AffineConnection) -> dict[tuple[int, int, int, int], Expr]:
    """Sparse R^lam_{sig mu nu} (antisymmetric in mu, nu)."""
    n, G = conn.n, conn.symbol
    out = {}
    for lam in range(n):
        for sig in range(n):
            for mu in range(n):
                for nu in range(mu + 1, n):
                    e = differentiate(G(lam, sig, nu), mu) - differentiate(G(lam, sig, mu), nu)
                    e = e + total(mul(G(lam, r, mu), G(r, sig, nu)) for r in range(n))
                    e = e - total(mul(G(lam, r, nu), G(r, sig, mu)) for r in range(n))
                    if not e.is_zero():
                        out[(lam, sig, mu, nu)] = e
                        out[(lam, sig, nu, mu)] = -e
    return out


def curvature(conn: AffineConnection, X: VectorField, Y: VectorField, Z: VectorField) -> VectorField:
    comps = [ZERO] * conn.n
    for (lam, sig, mu, nu), r in _riemann_cached(conn).items():
        if Z[sig].is_zero() or X[mu].is_zero() or Y[nu].is_zero():
            continue
        comps[lam] = comps[lam] + mul(r, mul(Z[sig], mul(X[mu], Y[nu])))
    return VectorField(tuple(comps))


def _riemann_cached(conn: AffineConnection):
    cache = conn.__dict__.get("_riemann")
    if cache is None:
        cache = riemann_symbols(conn)
        object.__setattr__(conn, "_riemann", cache)
    return cache


def lie_derivative_of_connection(conn: AffineConnection, V: VectorField, X: VectorField, Y: VectorField) -> VectorField:
    """(L_V nabla)(X, Y) = [V, nabla_X Y] - nabla_[V,X] Y - nabla_X [V, Y]."""
    nab = lambda A, B: covariant_derivative(conn, A, B)  # noqa: E731
    return lie_bracket(V, nab(X, Y)) - nab(lie_bracket(V, X), Y) - nab(X, lie_bracket(V, Y))


def coordinate_fields(n: int) -> tuple[VectorField, ...]:
    return tuple(VectorField.coordinate(n, i) for i in range(n))


def connection_from_operator(n: int, op, name: str = "") -> AffineConnection:
    """Read off Christoffels of a connection given as ``op(X, Y) = nabla_X Y`` on coordinate fields."""
    d = coordinate_fields(n)
    gamma = {}
    for mu in range(n):
        for nu in range(n):
            W = op(d[mu], d[nu])
            for lam in range(n):
                gamma[(lam, nu, mu)] = W[lam]
    return AffineConnection(n, gamma, name)


# O'Neill-type tensors


def oneill_T(conn: AffineConnection, dom: FoliatedDomain, E: VectorField, F: VectorField) -> VectorField:
    """T_E F = H(nabla_{VE} VF) + V(nabla_{VE} HF)."""
    VE = dom.vertical(E)
    return dom.horizontal(covariant_derivative(conn, VE, dom.vertical(F))) + dom.vertical(
        covariant_derivative(conn, VE, dom.horizontal(F))
    )


def oneill_A(conn: AffineConnection, dom: FoliatedDomain, E: VectorField, F: VectorField) -> VectorField:
    """A_E F = H(nabla_{HE} VF) + V(nabla_{HE} HF)."""
    HE = dom.horizontal(E)
    return dom.horizontal(covariant_derivative(conn, HE, dom.vertical(F))) + dom.vertical(
        covariant_derivative(conn, HE, dom.horizontal(F))
    )


@dataclass(frozen=True)
class PointFrame:
    """Projectors, their derivatives and the Christoffels at one point."""

    PV: np.ndarray
    PH: np.ndarray
    dPV: np.ndarray  # dPV[l, m, k] = d_k PV[l, m]
    G: np.ndarray

    @classmethod
    def at(cls, conn: AffineConnection, dom: FoliatedDomain, p) -> "PointFrame":
        PV = dom.vproj_at(p)
        return cls(PV, np.eye(dom.n) - PV, dom.dvproj_at(p), conn.gamma_at(p))

    def nabla_proj(self, u, vertical: bool, f) -> np.ndarray:
        """nabla_u of the field p -> P(p) f (f held constant), for P = PV or PH."""
        dP = self.dPV if vertical else -self.dPV
        P = self.PV if vertical else self.PH
        return np.einsum("lmk,k,m->l", dP, u, f) + contract(self.G, u, P @ f)

    def T(self, e, f) -> np.ndarray:
        ve = self.PV @ e
        return self.PH @ self.nabla_proj(ve, True, f) + self.PV @ self.nabla_proj(ve, False, f)

    def A(self, e, f) -> np.ndarray:
        he = self.PH @ e
        return self.PH @ self.nabla_proj(he, True, f) + self.PV @ self.nabla_proj(he, False, f)


def oneill_T_at(conn, dom, p, e, f) -> np.ndarray:
    return PointFrame.at(conn, dom, p).T(np.asarray(e, float), np.asarray(f, float))


def oneill_A_at(conn, dom, p, e, f) -> np.ndarray:
    return PointFrame.at(conn, dom, p).A(np.asarray(e, float), np.asarray(f, float))


# recalibration


def _hcols(dom: FoliatedDomain) -> tuple[VectorField, ...]:
    """H d_mu for each coordinate direction."""
    Hm = dom.hproj
    return tuple(VectorField(tuple(Hm[lam][mu] for lam in range(dom.n))) for mu in range(dom.n))


def recalibration_tensor(conn: AffineConnection, dom: FoliatedDomain, X: VectorField, Y: VectorField) -> VectorField:
    """Omega(X, Y) = -1/2 V(nabla_{HX} HY + nabla_{HY} HX)."""
    HX, HY = dom.horizontal(X), dom.horizontal(Y)
    s = covariant_derivative(conn, HX, HY) + covariant_derivative(conn, HY, HX)
    return dom.vertical(s).scale(const(-0.5))


def recalibration_symbols(conn: AffineConnection, dom: FoliatedDomain) -> dict[Index, Expr]:
    """Omega^lam_{nu mu} = Omega(d_mu, d_nu)^lam."""
    Hc = _hcols(dom)
    n = dom.n
    out = {}
    for mu in range(n):
        for nu in range(mu, n):
            if Hc[mu].is_zero() or Hc[nu].is_zero():
                continue
            s = covariant_derivative(conn, Hc[mu], Hc[nu]) + covariant_derivative(conn, Hc[nu], Hc[mu])
            W = dom.vertical(s).scale(const(-0.5))
            for lam in range(n):
                if not W[lam].is_zero():
                    out[(lam, nu, mu)] = W[lam]
                    out[(lam, mu, nu)] = W[lam]
    return out


def recalibrate(conn: AffineConnection, dom: FoliatedDomain) -> AffineConnection:
    return conn.shifted(recalibration_symbols(conn, dom), name=(conn.name + "+recalibrated").lstrip("+"))


# metrics and Levi-Civita


@dataclass(frozen=True, eq=False)
class MetricField:
    g: linalg.Matrix

    def __post_init__(self):
        g = linalg.as_matrix([[as_expr(e) for e in row] for row in self.g])
        n = len(g)
        if any(len(r) != n for r in g):
            raise MetricError("metric must be square")
        for i in range(n):
            for j in range(i + 1, n):
                if g[i][j] is not g[j][i]:
                    raise MetricError(f"metric is not symmetric at ({i},{j})")
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return len(self.g)

    @cached_property
    def inverse(self) -> linalg.Matrix:
        inv, _ = linalg.inverse(self.g)
        return inv

    @cached_property
    def _fn(self):
        return compile_exprs([e for row in self.g for e in row])

    def at(self, p) -> np.ndarray:
        return self._fn(p).reshape(self.n, self.n)

    def inner(self, X: VectorField, Y: VectorField) -> Expr:
        return total(mul(self.g[i][j], mul(X[i], Y[j])) for i in range(self.n) for j in range(self.n))

    def validate(self, box, samples: int = 64, seed: int = 0) -> None:
        for p in sample_points(box, samples, seed):
            c = float(np.linalg.cond(self.at(p)))
            if not np.isfinite(c) or c > 1e8:
                raise MetricError(f"metric is singular near {p.tolist()} (condition {c:.3e})")


def levi_civita(metric: MetricField) -> AffineConnection:
    """Gamma^lam_{nu mu} = 1/2 g^{lam rho} (d_mu g_{rho nu} + d_nu g_{rho mu} - d_rho g_{mu nu})."""
    g, gi, n = metric.g, metric.inverse, metric.n
    dg = [[[differentiate(g[i][j], k) for k in range(n)] for j in range(n)] for i in range(n)]
    gamma = {}
    for mu in range(n):
        for nu in range(mu, n):
            lower = [dg[r][nu][mu] + dg[r][mu][nu] - dg[mu][nu][r] for r in range(n)]
            for lam in range(n):
                e = mul(const(0.5), total(mul(gi[lam][r], lower[r]) for r in range(n)))
                gamma[(lam, nu, mu)] = e
                gamma[(lam, mu, nu)] = e
    return AffineConnection(n, gamma, "levi_civita")


def check_orthogonal_complement(metric: MetricField, dom: FoliatedDomain, samples: int = 64, seed: int = 0, tol: float = 1e-9):
    worst = 0.0
    for p in dom.sample(samples, seed):
        g = metric.at(p)
        for V in dom.vertical_frame:
            v = V.at(p)
            for H in dom.horizontal_frame:
                worst = max(worst, abs(float(v @ g @ H.at(p))))
    if worst > tol:
        raise NotOrthogonalError(f"horizontal frame is not g-orthogonal to the leaves (max |g(V,H)| = {worst:.3e})")


def bundle_like_defect(metric: MetricField, dom: FoliatedDomain, samples: int = 64, seed: int = 0) -> float:
    """Worst |V(g(X*_a, X*_b))| over vertical frame fields and lifted base coordinate fields."""
    lifts = dom.base_lifts
    fns = []
    for a in range(dom.q):
        for b in range(a, dom.q):
            h = metric.inner(lifts[a], lifts[b])
            fns.extend(V.apply(h) for V in dom.vertical_frame)
    if not fns:
        return 0.0
    f = compile_exprs(fns)
    return float(max(np.max(np.abs(f(p))) for p in dom.sample(samples, seed)))


def connection_from_bundle_like_metric(
    metric: MetricField, dom: FoliatedDomain, samples: int = 64, seed: int = 0
) -> AffineConnection:
    """nabla^_X Y = V(nabla_X VY) + [VX, HY] + V(nabla_{HY} VX) + H(nabla_{HX} HY), nabla Levi-Civita of g."""
    if metric.n != dom.n:
        raise MetricError("metric dimension does not match the domain")
    check_orthogonal_complement(metric, dom, samples, seed)
    defect = bundle_like_defect(metric, dom, samples, seed)
    if defect > 1e-8:
        warnings.warn(f"metric does not look bundle-like (transverse defect {defect:.3e})", stacklevel=2)
    lc = levi_civita(metric)
    nab = lambda A, B: covariant_derivative(lc, A, B)  # noqa: E731
    V, H = dom.vertical, dom.horizontal

    def op(X, Y):
        VX, VY, HX, HY = V(X), V(Y), H(X), H(Y)
        return V(nab(X, VY)) + lie_bracket(VX, HY) + V(nab(HY, VX)) + H(nab(HX, HY))

    return connection_from_operator(dom.n, op, "bundle_like_metric")


# partner connection


def partner(conn: AffineConnection, dom: FoliatedDomain, X: VectorField, W: VectorField) -> VectorField:
    """omega_X W := V(nabla_X VW)."""
    return dom.vertical(covariant_derivative(conn, X, dom.vertical(W)))


def partner_curvature(conn, dom, V: VectorField, Z: VectorField, W: VectorField) -> VectorField:
    """R^omega(V, Z) W = omega_V omega_Z W - omega_Z omega_V W - omega_[V,Z] W."""
    om = lambda X, Y: partner(conn, dom, X, Y)  # noqa: E731
    return om(V, om(Z, W)) - om(Z, om(V, W)) - om(lie_bracket(V, Z), W)


def partner_coefficients(conn: AffineConnection, dom: FoliatedDomain) -> dict[tuple[int, int, int], Expr]:
    """omega^i_{j lam} with omega_{d_lam} V_j = omega^i_{j lam} V_i."""
    k = dom.n - dom.q
    Fi = dom.frame_inverse
    out = {}
    for lam, d in enumerate(coordinate_fields(dom.n)):
        for j, Vj in enumerate(dom.vertical_frame):
            W = partner(conn, dom, d, Vj)
            for i in range(k):
                c = total(mul(Fi[i][m], W[m]) for m in range(dom.n))
                if not c.is_zero():
                    out[(i, j, lam)] = c
    return out


# push and pull


def pushforward_connection(
    conn: AffineConnection,
    dom: FoliatedDomain,
    samples: int = 64,
    seed: int = 0,
    tol: float = 1e-8,
    verify: bool = True,
) -> AffineConnection:
    """Base connection with F_*(nabla_{X*} Y*) = nabla-bar_{X} Y, expressed in base coordinates."""
    if verify:
        from .checks import check_transverse_affine

        rep = check_transverse_affine(conn, dom, samples=samples, seed=seed, tol=tol)
        if not rep.passed:
            raise NotTransverseAffineError(
                f"connection is not transverse affine on this domain (residual {rep.max_residual:.3e})"
            )
    if dom.section is None:
        raise DomainError("pushforward needs a section of the submersion")
    q = dom.q
    lifts = dom.base_lifts
    total_space = {}
    for a in range(q):
        for b in range(q):
            W = dom.pushforward(covariant_derivative(conn, lifts[a], lifts[b]))
            for c in range(q):
                if not W[c].is_zero():
                    total_space[(c, b, a)] = W[c]
    if total_space:
        checks = [V.apply(e) for e in total_space.values() for V in dom.vertical_frame]
        if checks:
            f = compile_exprs(checks)
            worst = max(float(np.max(np.abs(f(p)), initial=0.0)) for p in dom.sample(samples, seed))
            if worst > tol:
                raise NonBasicError(f"pushed-forward Christoffels vary along leaves (defect {worst:.3e})")
    base = {k: substitute(e, dom.section) for k, e in total_space.items()}
    return AffineConnection(q, base, "pushforward")


def pullback_connection(
    base_conn: AffineConnection, dom: FoliatedDomain, auxiliary: AffineConnection | None = None
) -> AffineConnection:
    """Transverse affine connection on ``dom`` whose pushforward is ``base_conn``.

    nabla^_X Y = V(D_X VY) + [VX, HY] + V(D_{HY} VX) + nabla~_{HX} HY, with D the
    auxiliary connection and nabla~ built from the lifts of the base coordinate fields.
    """
    n, q = dom.n, dom.q
    if base_conn.n != q:
        raise ValueError("base connection dimension must equal the codimension")
    aux = auxiliary if auxiliary is not None else AffineConnection.flat(n)
    if not all(aux.symbol(l, a, b) is aux.symbol(l, b, a) for (l, a, b) in aux.gamma):
        raise ConnectionError_("auxiliary connection must be torsion-free (symmetric Christoffels)")
    lifts = dom.base_lifts
    ds = dom.ds
    gbar = {k: substitute(e, dom.submersion) for k, e in base_conn.gamma.items()}
    V, H = dom.vertical, dom.horizontal
    D = lambda A, B: covariant_derivative(aux, A, B)  # noqa: E731

    def tilde(mu: int, nu: int) -> VectorField:
        # H d_mu = ds[a][mu] X*_a
        f = [ds[a][mu] for a in range(q)]
        g = [ds[b][nu] for b in range(q)]
        Xmu = _combine(f, lifts, n)
        coeffs = [Xmu.apply(g[b]) for b in range(q)]
        for (c, b, a), e in gbar.items():
            coeffs[c] = coeffs[c] + mul(f[a], mul(g[b], e))
        return _combine(coeffs, lifts, n)

    d = coordinate_fields(n)
    gamma = {}
    for mu in range(n):
        for nu in range(n):
            X, Y = d[mu], d[nu]
            VX, VY, HY = V(X), V(Y), H(Y)
            W = V(D(X, VY)) + lie_bracket(VX, HY) + V(D(HY, VX)) + tilde(mu, nu)
            for lam in range(n):
                gamma[(lam, nu, mu)] = W[lam]
    return AffineConnection(n, gamma, "pullback")


def _combine(coeffs, fields, n) -> VectorField:
    comps = [ZERO] * n
    for c, f in zip(coeffs, fields):
        if c.is_zero():
            continue
        for lam in range(n):
            if not f[lam].is_zero():
                comps[lam] = comps[lam] + mul(c, f[lam])
    return VectorField(tuple(comps))


def symmetric_vertical_tensor(dom: FoliatedDomain, coefficients) -> dict[Index, Expr]:
    """S(X, Y) = sum_i c_i[mu, nu] X^mu Y^nu V_i with symmetric constant c_i."""
    out: dict[Index, Expr] = {}
    n = dom.n
    for i, Vi in enumerate(dom.vertical_frame):
        c = np.asarray(coefficients[i], dtype=float)
        c = 0.5 * (c + c.T)
        for mu in range(n):
            for nu in range(n):
                if c[mu, nu] == 0.0:
                    continue
                for lam in range(n):
                    if Vi[lam].is_zero():
                        continue
                    out[(lam, nu, mu)] = out.get((lam, nu, mu), ZERO) + mul(const(c[mu, nu]), Vi[lam])
    return out
