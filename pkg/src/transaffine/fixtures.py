"""Built-in scenarios.

``paraboloid`` is a negative control: the flat connection with the flat-normal
horizontal distribution of the level sets of ``z - x^2 - y^2`` is not transverse
affine (nabla_{d/dx} V_1 = 2 d/dz is not tangent to the leaves).  Its
bundle-like status is disputed: printed intermediate values for nabla_H H carry
the opposite sign from a direct computation, and the direct computation gives a
non-vertical bracket with V_1.  The tool reports what it computes.
"""

from __future__ import annotations

import copy
import math

_TNY = ["t", "x", "y"]

FLAT_PRODUCT = {
    "name": "flat_product",
    "coord_names": _TNY,
    "dim": 3,
    "codim": 2,
    "submersion": ["t", "x"],
    "vertical_frame": [["0", "0", "1"]],
    "horizontal_frame": [["1", "0", "0"], ["0", "1", "0"]],
    "box": [[-20, 20], [-20, 20], [-20, 20]],
    "connection": {"kind": "flat"},
    "seed": 7,
    "step": 0.01,
    "samples": 100,
    "tasks": [
        {"kind": "check_transverse_affine"},
        {"kind": "check_bundle_like"},
        {"kind": "geodesic", "x0": [0, 0, 0], "v0": [1, 0.5, 0], "t_span": [0, 3]},
        {"kind": "conjugacy", "x0": [0, 0, 0], "v0": [1, 0.5, 0], "window": [0, 4]},
        {"kind": "pseudoconvexity", "K": [[-1, 1], [-1, 1]], "direction_grid": [16], "t_max": 4},
        {"kind": "disprisonment", "K": [[-1, 1], [-1, 1]], "escape_radius": 6, "starts": 8, "t_max": 20},
    ],
}

COSINE_SHEAR = {
    "name": "cosine_shear",
    "coord_names": _TNY,
    "dim": 3,
    "codim": 2,
    "submersion": ["t", "x"],
    "vertical_frame": [["0", "0", "1"]],
    "horizontal_frame": [["1", "0", "cos(t)"], ["0", "1", "0"]],
    "box": [[-20, 20], [-20, 20], [-20, 20]],
    "connection": {"kind": "flat"},
    "seed": 11,
    "step": 0.001,
    "samples": 100,
    "tasks": [
        {"kind": "check_transverse_affine"},
        {"kind": "geodesic", "x0": [0, 0, 0], "v0": [1, 0, 1], "t_span": [0, 3]},
        {"kind": "conjugacy", "x0": [0, 0, 0], "v0": [1, 0, 1], "window": [0, 3]},
        {"kind": "pseudoconvexity", "K": [[-1, 1], [-1, 1]], "direction_grid": [16], "t_max": 4, "step": 0.01},
        {
            "kind": "disprisonment",
            "K": [[-1, 1], [-1, 1]],
            "escape_radius": 6,
            "starts": 8,
            "t_max": 20,
            "step": 0.01,
        },
    ],
}

PARABOLOID = {
    "name": "paraboloid",
    "coord_names": ["x", "y", "z"],
    "dim": 3,
    "codim": 1,
    "submersion": ["z - x^2 - y^2"],
    "vertical_frame": [["1", "0", "2*x"], ["0", "1", "2*y"]],
    "horizontal_frame": [["-2*x", "-2*y", "1"]],
    "box": [[-2, 2], [-2, 2], [-2, 2]],
    "base_coord_names": ["u"],
    "section": ["0", "0", "u"],
    "base_box": [[-2, 2]],
    "connection": {"kind": "flat"},
    "seed": 3,
    "samples": 100,
    "tasks": [{"kind": "check_transverse_affine"}],
}

SPHERE_FIBER = {
    "name": "sphere_fiber",
    "coord_names": ["th", "ph", "y"],
    "dim": 3,
    "codim": 2,
    "submersion": ["th", "ph"],
    "vertical_frame": [["0", "0", "1"]],
    "horizontal_frame": [["1", "0", "0"], ["0", "1", "cos(th)"]],
    "box": [[0.3, math.pi - 0.3], [-10, 10], [-20, 20]],
    "connection": {
        "kind": "pullback",
        "base_symbols": {
            "0,1,1": "-(sin(th) * cos(th))",
            "1,0,1": "cos(th) / sin(th)",
            "1,1,0": "cos(th) / sin(th)",
        },
        "auxiliary": {"kind": "flat"},
    },
    "seed": 5,
    "step": 0.001,
    "samples": 100,
    "tasks": [
        {"kind": "check_transverse_affine"},
        {"kind": "geodesic", "x0": [math.pi / 2, 0, 0], "base_v0": [0, 1], "t_span": [0, 4]},
        {"kind": "conjugacy", "x0": [math.pi / 2, 0, 0], "base_v0": [0, 1], "window": [0, 4]},
        {
            "kind": "pseudoconvexity",
            "K": [[math.pi / 2 - 0.1, math.pi / 2 + 0.1], [-0.1, 0.1]],
            "direction_grid": [12],
            "t_max": 1.0,
        },
    ],
}

WARPED_PRODUCT = {
    "name": "warped_product",
    "coord_names": _TNY,
    "dim": 3,
    "codim": 2,
    "submersion": ["t", "x"],
    "vertical_frame": [["0", "0", "1"]],
    "horizontal_frame": [["1", "0", "0"], ["0", "1", "0"]],
    "box": [[-3, 3], [-3, 3], [-3, 3]],
    "connection": {
        "kind": "bundle_like_metric",
        "metric": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "2 + sin(t) * cos(x)"]],
    },
    "seed": 13,
    "step": 0.01,
    "samples": 100,
    "tasks": [
        {"kind": "check_transverse_affine"},
        {"kind": "check_fundamental_pair"},
        {"kind": "geodesic", "x0": [0, 0, 0], "v0": [1, 0.3, 0], "t_span": [0, 2]},
    ],
}

TORUS_PRISON = {
    "name": "torus_prison",
    "coord_names": _TNY,
    "dim": 3,
    "codim": 2,
    "submersion": ["t", "x"],
    "vertical_frame": [["0", "0", "1"]],
    "horizontal_frame": [["1", "0", "0"], ["0", "1", "0"]],
    "box": [[0, 2 * math.pi], [0, 2 * math.pi], [-1, 1]],
    "periodic": [True, True, False],
    "connection": {"kind": "flat"},
    "seed": 17,
    "step": 0.01,
    "samples": 100,
    "tasks": [
        {"kind": "check_transverse_affine"},
        {"kind": "disprisonment", "K": [[2.6, 3.6], [2.6, 3.6]], "escape_radius": 4, "starts": 6, "t_max": 30},
    ],
}

FIXTURES = {
    d["name"]: d for d in (FLAT_PRODUCT, COSINE_SHEAR, PARABOLOID, SPHERE_FIBER, WARPED_PRODUCT, TORUS_PRISON)
}


def names() -> list[str]:
    return list(FIXTURES)


def get(name: str) -> dict:
    try:
        return copy.deepcopy(FIXTURES[name])
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}") from None
