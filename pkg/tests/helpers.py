"""Shared test domains and an independent symbolic oracle built on sympy."""

import numpy as np
import sympy as sp

from transaffine.scenario import build_scenario

TNY = ["t", "x", "y"]

FOUR_D = {
    "name": "four_d",
    "coord_names": ["t", "x", "y", "z"],
    "dim": 4,
    "codim": 2,
    "submersion": ["t", "x"],
    "vertical_frame": [["0", "0", "1", "0"], ["0", "0", "z", "1"]],
    "horizontal_frame": [["1", "0", "cos(t)", "x"], ["0", "1", "0", "t*x"]],
    "box": [[-1, 1], [-1, 1], [-1, 1], [-1, 1]],
    "connection": {
        "kind": "pullback",
        "base_symbols": {"0,0,0": "t*x", "1,0,1": "sin(t)", "1,1,0": "sin(t)"},
        "auxiliary": {
            "kind": "christoffel",
            "symbols": {"2,3,3": "sin(y)", "3,2,3": "y*z/5", "3,3,2": "y*z/5", "2,0,2": "x", "2,2,0": "x"},
        },
    },
}

# dt^2 + dx^2 + f (dy + x dt)^2 with horizontal space {d_t - x d_y, d_x}
TWISTED = {
    "name": "twisted",
    "coord_names": TNY,
    "dim": 3,
    "codim": 2,
    "submersion": ["t", "x"],
    "vertical_frame": [["0", "0", "1"]],
    "horizontal_frame": [["1", "0", "-x"], ["0", "1", "0"]],
    "box": [[-2, 2], [-2, 2], [-2, 2]],
    "connection": {
        "kind": "bundle_like_metric",
        "metric": [
            ["1 + x^2 * (2 + sin(t))", "0", "x * (2 + sin(t))"],
            ["0", "1", "0"],
            ["x * (2 + sin(t))", "0", "2 + sin(t)"],
        ],
    },
}


def build(doc, kind=None, **conn):
    doc = dict(doc)
    if kind is not None:
        doc["connection"] = {"kind": kind, **conn}
    return build_scenario(doc)


def sym(s, names):
    syms = sp.symbols(names)
    return sp.sympify(str(s).replace("^", "**"), locals=dict(zip(names, syms))), syms


def christoffel_oracle(metric_rows, names):
    """Levi-Civita symbols as a lambdified (n, n, n) array G[lam, nu, mu]."""
    syms = sp.symbols(names)
    loc = dict(zip(names, syms))
    g = sp.Matrix([[sp.sympify(str(e).replace("^", "**"), locals=loc) for e in row] for row in metric_rows])
    gi = g.inv()
    n = len(names)
    G = sp.MutableDenseNDimArray.zeros(n, n, n)
    for lam in range(n):
        for nu in range(n):
            for mu in range(n):
                G[lam, nu, mu] = sp.simplify(
                    sum(
                        gi[lam, r] * (sp.diff(g[r, nu], syms[mu]) + sp.diff(g[r, mu], syms[nu]) - sp.diff(g[mu, nu], syms[r]))
                        for r in range(n)
                    )
                    / 2
                )
    f = sp.lambdify(syms, G.tolist(), "numpy")
    return lambda p: np.array(f(*p), dtype=float)


def riemann_oracle(gamma_strs, names):
    """R[l, s, m, n] of (R(d_m, d_n) d_s)^l for symbols given as {(lam, nu, mu): str}."""
    syms = sp.symbols(names)
    loc = dict(zip(names, syms))
    n = len(names)
    G = [[[sp.Integer(0)] * n for _ in range(n)] for _ in range(n)]
    for (lam, nu, mu), e in gamma_strs.items():
        G[lam][nu][mu] = sp.sympify(str(e).replace("^", "**"), locals=loc)
    R = sp.MutableDenseNDimArray.zeros(n, n, n, n)
    for l in range(n):
        for s in range(n):
            for m in range(n):
                for k in range(n):
                    # nabla_m nabla_k d_s - nabla_k nabla_m d_s
                    e = sp.diff(G[l][s][k], syms[m]) - sp.diff(G[l][s][m], syms[k])
                    e += sum(G[l][r][m] * G[r][s][k] - G[l][r][k] * G[r][s][m] for r in range(n))
                    R[l, s, m, k] = e
    f = sp.lambdify(syms, R.tolist(), "numpy")
    return lambda p: np.array(f(*p), dtype=float)
