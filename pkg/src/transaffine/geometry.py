"""Foliated coordinate domains: submersion, frames, projectors, brackets and lifts."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linalg
from .expr import (
    ONE,
    ZERO,
    Expr,
    as_expr,
    compile_exprs,
    const,
    coord,
    differentiate,
    mul,
    parse_value,
    substitute,
    total,
)

GENERATOR_NAME = "numpy.random.PCG64"
MAX_CONDITION = 1e8


class DomainError(ValueError):
    pass


class SingularFrameError(DomainError):
    def __init__(self, condition: float, point=None, what: str = "frame"):
        self.condition = float(condition)
        self.point = None if point is None else [float(x) for x in point]
        super().__init__(f"singular {what} (condition number estimate {self.condition:.3e}) at {self.point}")


def sample_points(box: Sequence[tuple[float, float]], count: int, seed: int) -> np.ndarray:
    """``count`` uniform points in ``box`` from a PCG64 stream seeded with ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    return lo + (hi - lo) * rng.random((count, len(box)))


@dataclass(frozen=True)
class VectorField:
    """A vector field given by one expression per coordinate direction."""

    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(as_expr(c) for c in self.components))

    @classmethod
    def parse(cls, items, coord_names: Sequence[str]) -> "VectorField":
        return cls(tuple(parse_value(v, coord_names) for v in items))

    @classmethod
    def zero(cls, n: int) -> "VectorField":
        return cls((ZERO,) * n)

    @classmethod
    def coordinate(cls, n: int, i: int) -> "VectorField":
        return cls(tuple(ONE if k == i else ZERO for k in range(n)))

    @property
    def n(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> Expr:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_dim(self, other)
        return VectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_dim(self, other)
        return VectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def __neg__(self) -> "VectorField":
        return VectorField(tuple(-a for a in self.components))

    def scale(self, f) -> "VectorField":
        f = as_expr(f)
        return VectorField(tuple(mul(f, a) for a in self.components))

    def apply(self, f: Expr) -> Expr:
        """Directional derivative X(f)."""
        return total(mul(c, differentiate(f, mu)) for mu, c in enumerate(self.components) if not c.is_zero())

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    @cached_property
    def _compiled(self):
        return compile_exprs(self.components)

    def at(self, p) -> np.ndarray:
        return self._compiled(p)

    def batch(self, points) -> np.ndarray:
        return self._compiled.batch(points)


def _same_dim(a: VectorField, b: VectorField):
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")


def combine(coeffs: Sequence[Expr], fields: Sequence[VectorField]) -> VectorField:
    """Sum of coeffs[k] * fields[k]."""
    n = fields[0].n
    comps = [ZERO] * n
    for c, f in zip(coeffs, fields):
        if c.is_zero():
            continue
        for lam in range(n):
            comps[lam] = comps[lam] + mul(c, f[lam])
    return VectorField(tuple(comps))


def apply_matrix(m: linalg.Matrix, X: VectorField) -> VectorField:
    return VectorField(linalg.matvec(m, X.components))


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]^l = X(Y^l) - Y(X^l)."""
    _same_dim(X, Y)
    return VectorField(tuple(X.apply(Y[lam]) - Y.apply(X[lam]) for lam in range(X.n)))


@dataclass(frozen=True)
class ProjectorPair:
    point: np.ndarray
    V_mat: np.ndarray
    H_mat: np.ndarray
    condition: float


@dataclass(frozen=True)
class ProjectabilityReport:
    projectable: bool
    max_residual: float
    worst_point: list[float]
    samples: int
    seed: int
    tolerance: float
    generator: str = GENERATOR_NAME

    def to_dict(self) -> dict:
        return {
            "projectable": self.projectable,
            "max_residual": self.max_residual,
            "worst_point": self.worst_point,
            "samples": self.samples,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "generator": self.generator,
        }


@dataclass(frozen=True, eq=False)
class FoliatedDomain:
    """A foliation of a coordinate box given by a global submersion ``s: U -> R^q``.

    ``vertical_frame`` must span ``ker ds`` and ``horizontal_frame`` spans the
    chosen complement.  Base coordinates are named by ``base_coord_names``;
    ``section`` (n expressions in base coordinates) maps base points back into
    the domain and defaults to "other coordinates at the box midpoint" when the
    submersion is a plain coordinate projection.
    """

    coord_names: tuple[str, ...]
    submersion: tuple[Expr, ...]
    vertical_frame: tuple[VectorField, ...]
    horizontal_frame: tuple[VectorField, ...]
    box: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...] = ()
    base_coord_names: tuple[str, ...] = ()
    section: tuple[Expr, ...] | None = None
    base_box: tuple[tuple[float, float], ...] | None = None
    name: str = ""

    def __post_init__(self):
        n = len(self.coord_names)
        q = len(self.submersion)
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("coord_names", tuple(self.coord_names))
        set_("submersion", tuple(as_expr(e) for e in self.submersion))
        set_("vertical_frame", tuple(self.vertical_frame))
        set_("horizontal_frame", tuple(self.horizontal_frame))
        set_("box", tuple((float(a), float(b)) for a, b in self.box))
        if len(self.vertical_frame) != n - q or len(self.horizontal_frame) != q:
            raise DomainError(
                f"need {n - q} vertical and {q} horizontal fields, got {len(self.vertical_frame)} and {len(self.horizontal_frame)}"
            )
        for f in self.vertical_frame + self.horizontal_frame:
            if f.n != n:
                raise DomainError("frame field dimension does not match the coordinates")
        if len(self.box) != n or any(not a < b for a, b in self.box):
            raise DomainError("box must give one non-empty interval per coordinate")
        set_("periodic", tuple(bool(x) for x in self.periodic) if self.periodic else (False,) * n)
        if len(self.periodic) != n:
            raise DomainError("periodic flags must match the coordinates")
        proj = self.projection_indices
        if not self.base_coord_names:
            if proj is not None:
                names = tuple(self.coord_names[i] for i in proj)
            else:
                names = tuple(f"u{a}" for a in range(q))
            set_("base_coord_names", names)
        if len(self.base_coord_names) != q:
            raise DomainError("base_coord_names must have one entry per submersion component")
        if self.section is None and proj is not None:
            sec = [const(0.5 * (a + b)) for a, b in self.box]
            for a, i in enumerate(proj):
                sec[i] = coord(a)
            set_("section", tuple(sec))
        elif self.section is not None:
            set_("section", tuple(as_expr(e) for e in self.section))
            if len(self.section) != n:
                raise DomainError("section must have one expression per coordinate")
        if self.base_box is None and proj is not None:
            set_("base_box", tuple(self.box[i] for i in proj))

    # basic shape

    @property
    def n(self) -> int:
        return len(self.coord_names)

    @property
    def q(self) -> int:
        return len(self.submersion)

    @cached_property
    def projection_indices(self) -> tuple[int, ...] | None:
        """Coordinate indices if the submersion is a plain coordinate projection."""
        if all(e.op == "coord" for e in self.submersion):
            return tuple(e.value for e in self.submersion)
        return None

    @property
    def base_periodic(self) -> tuple[bool, ...]:
        proj = self.projection_indices
        if proj is None:
            return (False,) * self.q
        return tuple(self.periodic[i] for i in proj)

    # symbolic structure

    @cached_property
    def ds(self) -> linalg.Matrix:
        return tuple(tuple(differentiate(s, mu) for mu in range(self.n)) for s in self.submersion)

    @cached_property
    def frame(self) -> linalg.Matrix:
        cols = self.vertical_frame + self.horizontal_frame
        return tuple(tuple(cols[k][lam] for k in range(self.n)) for lam in range(self.n))

    @cached_property
    def frame_inverse(self) -> linalg.Matrix:
        inv, _ = linalg.inverse(self.frame)
        return inv

    @cached_property
    def vproj(self) -> linalg.Matrix:
        """Symbolic vertical projector F diag(1_{n-q}, 0_q) F^-1."""
        F, Fi, k = self.frame, self.frame_inverse, self.n - self.q
        return tuple(
            tuple(total(mul(F[lam][i], Fi[i][mu]) for i in range(k)) for mu in range(self.n)) for lam in range(self.n)
        )

    @cached_property
    def hproj(self) -> linalg.Matrix:
        F, Fi, k = self.frame, self.frame_inverse, self.n - self.q
        return tuple(
            tuple(total(mul(F[lam][i], Fi[i][mu]) for i in range(k, self.n)) for mu in range(self.n))
            for lam in range(self.n)
        )

    def vertical(self, X: VectorField) -> VectorField:
        return apply_matrix(self.vproj, X)

    def horizontal(self, X: VectorField) -> VectorField:
        return apply_matrix(self.hproj, X)

    def pushforward(self, X: VectorField) -> tuple[Expr, ...]:
        """ds(X) as q expressions on the total space."""
        return linalg.matvec(self.ds, X.components)

    @cached_property
    def lift_matrix(self) -> linalg.Matrix:
        """n x q matrix whose columns are the horizontal lifts of the base coordinate fields."""
        Hm = tuple(tuple(self.horizontal_frame[b][lam] for b in range(self.q)) for lam in range(self.n))
        dsH = linalg.matmul(self.ds, Hm)
        inv, _ = linalg.inverse(dsH)
        return linalg.matmul(Hm, inv)

    @cached_property
    def base_lifts(self) -> tuple[VectorField, ...]:
        L = self.lift_matrix
        return tuple(VectorField(tuple(L[lam][a] for lam in range(self.n))) for a in range(self.q))

    # compiled numerics

    @cached_property
    def _ds_fn(self):
        return compile_exprs([e for row in self.ds for e in row])

    @cached_property
    def _frame_fn(self):
        return compile_exprs([e for row in self.frame for e in row])

    @cached_property
    def _vproj_fn(self):
        return compile_exprs([e for row in self.vproj for e in row])

    @cached_property
    def _dvproj_fn(self):
        n = self.n
        return compile_exprs([differentiate(self.vproj[l][m], k) for l in range(n) for m in range(n) for k in range(n)])

    @cached_property
    def _lift_fn(self):
        return compile_exprs([e for row in self.lift_matrix for e in row])

    @cached_property
    def _dlift_fn(self):
        L, n, q = self.lift_matrix, self.n, self.q
        return compile_exprs([differentiate(L[l][a], k) for l in range(n) for a in range(q) for k in range(n)])

    def ds_at(self, p) -> np.ndarray:
        return self._ds_fn(p).reshape(self.q, self.n)

    def frame_at(self, p) -> np.ndarray:
        return self._frame_fn(p).reshape(self.n, self.n)

    def vproj_at(self, p) -> np.ndarray:
        """Vertical projector from the symbolic formula (fast path used by the integrators)."""
        return self._vproj_fn(p).reshape(self.n, self.n)

    def dvproj_at(self, p) -> np.ndarray:
        """d(P_V)[l, m, k] = partial_k P_V[l, m]."""
        n = self.n
        return self._dvproj_fn(p).reshape(n, n, n)

    def lift_at(self, p) -> np.ndarray:
        return self._lift_fn(p).reshape(self.n, self.q)

    def dlift_at(self, p) -> np.ndarray:
        return self._dlift_fn(p).reshape(self.n, self.q, self.n)

    def section_at(self, u) -> np.ndarray:
        if self.section is None:
            raise DomainError("this domain has no section; supply one in the scenario")
        return compile_exprs(self.section)(u)

    def submersion_at(self, p) -> np.ndarray:
        return self._submersion_fn(p)

    def submersion_batch(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self._submersion_fn.batch(points).reshape(len(points), self.q)

    @cached_property
    def _submersion_fn(self):
        return compile_exprs(self.submersion)

    # box handling

    def contains(self, p, slack: float = 0.0) -> bool:
        for x, (a, b), per in zip(p, self.box, self.periodic):
            if per:
                continue
            if not (a - slack <= x <= b + slack):
                return False
        return True

    def contains_batch(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        ok = np.all(np.isfinite(points), axis=1)
        for i, ((a, b), per) in enumerate(zip(self.box, self.periodic)):
            if not per:
                ok &= (points[:, i] >= a) & (points[:, i] <= b)
        return ok

    def wrap_batch(self, points) -> np.ndarray:
        out = np.array(points, dtype=float)
        for i, ((a, b), per) in enumerate(zip(self.box, self.periodic)):
            if per:
                out[:, i] = a + np.mod(out[:, i] - a, b - a)
        return out

    def wrap(self, p: np.ndarray) -> np.ndarray:
        if not any(self.periodic):
            return p
        out = np.array(p, dtype=float)
        for i, ((a, b), per) in enumerate(zip(self.box, self.periodic)):
            if per:
                out[i] = a + np.mod(out[i] - a, b - a)
        return out

    def sample(self, count: int, seed: int) -> np.ndarray:
        return sample_points(self.box, count, seed)

    def estimated_base_box(self, count: int = 4096, seed: int = 0) -> tuple[tuple[float, float], ...]:
        if self.base_box is not None:
            return self.base_box
        img = np.array([self.submersion_at(p) for p in self.sample(count, seed)])
        return tuple((float(lo), float(hi)) for lo, hi in zip(img.min(axis=0), img.max(axis=0)))

    def base_domain(self) -> "FoliatedDomain":
        """The base R^q as a trivially foliated domain (no vertical directions)."""
        q = self.q
        return FoliatedDomain(
            coord_names=self.base_coord_names,
            submersion=tuple(coord(a) for a in range(q)),
            vertical_frame=(),
            horizontal_frame=tuple(VectorField.coordinate(q, a) for a in range(q)),
            box=self.estimated_base_box(),
            periodic=self.base_periodic,
            name=f"{self.name}:base" if self.name else "base",
        )

    def validate(self, samples: int = 64, seed: int = 0, tol: float = 1e-9) -> None:
        """Check that the vertical frame spans ker ds and the full frame is well conditioned."""
        for p in self.sample(samples, seed):
            D = self.ds_at(p)
            for k, V in enumerate(self.vertical_frame):
                r = float(np.max(np.abs(D @ V.at(p)), initial=0.0))
                if r > tol:
                    raise DomainError(f"vertical field {k} is not in ker ds at {p.tolist()} (residual {r:.3e})")
            projectors_at(self, p)


def projectors_at(dom: FoliatedDomain, p) -> ProjectorPair:
    """Numerical vertical/horizontal projectors at ``p``."""
    p = np.asarray(p, dtype=float)
    F = dom.frame_at(p)
    cond = float(np.linalg.cond(F)) if dom.n else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFrameError(cond, p)
    k = dom.n - dom.q
    Fi = np.linalg.inv(F)
    V = F[:, :k] @ Fi[:k, :]
    H = np.eye(dom.n) - V
    return ProjectorPair(point=p, V_mat=V, H_mat=H, condition=cond)


def horizontal_lift(dom: FoliatedDomain, base_field: VectorField) -> VectorField:
    """The unique horizontal field X* with ds(X*) = base_field o s."""
    if base_field.n != dom.q:
        raise ValueError("base field must have q components")
    composed = [substitute(c, dom.submersion) for c in base_field.components]
    L = dom.lift_matrix
    return VectorField(tuple(total(mul(L[lam][a], composed[a]) for a in range(dom.q)) for lam in range(dom.n)))


def is_vertical(dom: FoliatedDomain, p, v, tol: float = 1e-8) -> tuple[bool, float]:
    """Whether tangent vector ``v`` at ``p`` lies in ker ds; returns (verdict, ||ds v||_inf)."""
    v = np.asarray(v, dtype=float)
    r = float(np.max(np.abs(dom.ds_at(p) @ v), initial=0.0))
    return r <= tol * (1.0 + float(np.max(np.abs(v), initial=0.0))), r


def is_projectable(
    dom: FoliatedDomain, X: VectorField, sample_count: int = 100, seed: int = 0, tol: float = 1e-8
) -> ProjectabilityReport:
    """Sampled necessary condition: [V_i, X] vertical for every vertical frame field."""
    pts = dom.sample(sample_count, seed)
    brackets = [lie_bracket(V, X) for V in dom.vertical_frame]
    worst, worst_p, ok = 0.0, pts[0] if len(pts) else np.zeros(dom.n), True
    for p in pts:
        for B in brackets:
            passed, r = is_vertical(dom, p, B.at(p), tol)
            ok = ok and passed
            if r > worst:
                worst, worst_p = r, p
    return ProjectabilityReport(
        projectable=ok,
        max_residual=worst,
        worst_point=[float(x) for x in worst_p],
        samples=sample_count,
        seed=seed,
        tolerance=tol,
    )
