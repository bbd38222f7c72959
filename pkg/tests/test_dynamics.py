import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import recalibrated, scenario
from helpers import FOUR_D, TWISTED, build
from transaffine.connection import AffineConnection, contract, levi_civita, pushforward_connection, recalibrate, symmetric_vertical_tensor
from transaffine.dynamics import (
    LEFT_DOMAIN,
    NAN_DETECTED,
    REACHED_END,
    DynamicsError,
    MismatchedConnectionError,
    VerticalTangentError,
    detect_transverse_conjugate,
    integrate_geodesic,
    integrate_geodesics,
    integrate_jacobi,
    integrate_transport,
    lift_base_geodesic,
    mathfrak_D,
    read_trajectory_csv,
    rk4_step,
    transverse_geodesic_residual,
    transverse_jacobi_residual,
    vertical_field_jacobi_residual,
    write_jacobi_csv,
    write_trajectory_csv,
)
from transaffine.expr import parse_expression
from transaffine.geometry import VectorField

HALF_PI = math.pi / 2


def shear_error(step, t1=3.0):
    sc = scenario("cosine_shear")
    tr = integrate_geodesic(recalibrated("cosine_shear"), [0, 0, 0], [1, 0, 1], (0, t1), step, sc.domain)
    s = tr.times
    return float(np.max(np.abs(tr.xs - np.stack([s, 0 * s, np.sin(s)], axis=1))))


def test_rk4_step_exact_for_cubic_rhs():
    # y' = t^3 integrates exactly under Simpson weights
    y = rk4_step(lambda t, y: np.array([t**3]), 0.0, np.array([0.0]), 1.0)
    assert y[0] == pytest.approx(0.25, abs=1e-15)


def test_cosine_shear_closed_form():
    assert shear_error(1e-3) <= 1e-6


@pytest.mark.parametrize("h", [0.1, 0.05, 0.025, 0.01])
def test_rk4_order_on_cosine_shear(h):
    assert shear_error(h) / shear_error(h / 2) >= 12


def test_flat_geodesic_is_straight_line():
    sc = scenario("flat_product")
    x0, v0 = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.1])
    tr = integrate_geodesic(sc.connection, x0, v0, (0, 5), 0.01, sc.domain)
    assert tr.termination == REACHED_END
    np.testing.assert_allclose(tr.xs, x0 + tr.times[:, None] * v0, atol=1e-12)
    np.testing.assert_array_equal(tr.vs, np.broadcast_to(v0, tr.vs.shape))


def test_sphere_equator_period():
    sc = scenario("sphere_fiber")
    rc = recalibrated("sphere_fiber")
    x0 = np.array([HALF_PI, 0.0, 0.0])
    tr = integrate_geodesic(rc, x0, sc.domain.lift_at(x0) @ [0, 1], (0, 2 * math.pi), 1e-3, sc.domain)
    u = sc.domain.submersion_batch(tr.xs)
    assert np.max(np.abs(u[:, 0] - HALF_PI)) <= 1e-12
    assert abs(u[-1, 1] - 2 * math.pi) <= 1e-4


def test_agrees_with_independent_ode_solver():
    sc = build(TWISTED, "levi_civita", metric=TWISTED["connection"]["metric"])
    conn = sc.connection
    x0, v0 = np.array([0.1, -0.2, 0.3]), np.array([0.5, 0.4, -0.3])
    tr = integrate_geodesic(conn, x0, v0, (0, 1.5), 0.005, sc.domain)

    def f(t, y):
        return np.concatenate([y[3:], -contract(conn.gamma_at(y[:3]), y[3:], y[3:])])

    ref = solve_ivp(f, (0, 1.5), np.concatenate([x0, v0]), t_eval=tr.times, rtol=1e-12, atol=1e-12, method="DOP853")
    np.testing.assert_allclose(tr.xs, ref.y[:3].T, atol=1e-9)


def test_termination_reasons():
    sc = scenario("flat_product")
    tr = integrate_geodesic(sc.connection, [18.95, 0, 0], [1.0, 0, 0], (0, 5), 0.1, sc.domain)
    assert tr.termination == LEFT_DOMAIN and tr.times[-1] == pytest.approx(1.0) and sc.domain.contains(tr.xs[-1])
    blow = AffineConnection(1, {(0, 0, 0): parse_expression("-x", ["x"])})
    tr = integrate_geodesic(blow, [1.0], [10.0], (0, 10), 0.1)
    assert tr.termination == NAN_DETECTED and np.all(np.isfinite(tr.xs))
    with pytest.raises(DynamicsError):
        integrate_geodesic(sc.connection, [30.0, 0, 0], [1, 0, 0], (0, 1), 0.1, sc.domain)


def test_backward_integration_and_partial_last_step():
    sc = scenario("flat_product")
    tr = integrate_geodesic(sc.connection, [0, 0, 0], [1, 0, 0], (0, -0.25), 0.1, sc.domain)
    np.testing.assert_allclose(tr.times, [0, -0.1, -0.2, -0.25])
    assert tr.xs[-1][0] == pytest.approx(-0.25)


def test_batch_matches_single_runs():
    sc = scenario("cosine_shear")
    rc = recalibrated("cosine_shear")
    X0 = [[0, 0, 0], [0.5, 1, 0], [19.5, 0, 0]]
    V0 = [[1, 0, 1], [0.2, -1, 0.3], [1, 0, 0]]
    many = integrate_geodesics(rc, X0, V0, (0, 2), 0.01, sc.domain)
    for x0, v0, tr in zip(X0, V0, many):
        one = integrate_geodesic(rc, x0, v0, (0, 2), 0.01, sc.domain)
        assert tr.termination == one.termination
        np.testing.assert_allclose(tr.xs, one.xs, atol=1e-13)


def test_transnormality_of_recalibrated_geodesics():
    for name in ("cosine_shear", "sphere_fiber", "warped_product"):
        sc = scenario(name)
        rc = recalibrated(name)
        dom = sc.domain
        x0 = dom.sample(1, 3)[0]
        v0 = dom.lift_at(x0) @ np.array([0.8, -0.6])
        tr = integrate_geodesic(rc, x0, v0, (0, 1), 0.01, dom)
        for x, v in zip(tr.xs, tr.vs):
            assert np.linalg.norm(dom.vproj_at(x) @ v) <= 1e-6 * np.linalg.norm(v)
        assert transverse_geodesic_residual(sc.connection, dom, tr) <= 1e-8


def test_geodesic_residual_class_invariant_and_vertical_error():
    sc = scenario("cosine_shear")
    dom = sc.domain
    tr = integrate_geodesic(recalibrated("cosine_shear"), [0, 0, 0], [1, 0, 1], (0, 3), 0.01, dom)
    rng = np.random.default_rng(2)
    shifted = sc.connection.shifted(symmetric_vertical_tensor(dom, [rng.normal(size=(3, 3))]))
    a = transverse_geodesic_residual(sc.connection, dom, tr)
    b = transverse_geodesic_residual(shifted, dom, tr)
    assert abs(a - b) <= 1e-12
    vert = integrate_geodesic(sc.connection, [0, 0, 0], [0, 0, 1], (0, 1), 0.1, dom)
    with pytest.raises(VerticalTangentError):
        transverse_geodesic_residual(sc.connection, dom, vert)


def test_flat_jacobi_is_affine_in_time():
    sc = scenario("flat_product")
    tr = integrate_geodesic(sc.connection, [0, 0, 0], [1, 0.5, 0], (0, 3), 0.01, sc.domain)
    J0, DJ0 = np.array([0.1, 0.2, 0.3]), np.array([1.0, -1.0, 2.0])
    sol = integrate_jacobi(sc.connection, tr, J0, DJ0)
    np.testing.assert_allclose(sol.J, J0 + tr.times[:, None] * DJ0, atol=1e-12)
    assert transverse_jacobi_residual(sc.connection, sc.domain, tr, sol) <= 1e-12


def sphere_equator(t1=4.0, step=1e-3):
    sc = scenario("sphere_fiber")
    rc = recalibrated("sphere_fiber")
    x0 = np.array([HALF_PI, 0.0, 0.0])
    tr = integrate_geodesic(rc, x0, sc.domain.lift_at(x0) @ [0, 1], (0, t1), step, sc.domain)
    return sc, rc, tr


def test_sphere_jacobi_field_matches_sine():
    sc, rc, tr = sphere_equator(3.5, 1e-3)
    sol = integrate_jacobi(rc, tr, np.zeros(3), sc.domain.horizontal_frame[0].at(tr.xs[0]))
    base = np.array([np.linalg.norm(sc.domain.ds_at(x) @ J) for x, J in zip(tr.xs, sol.J)])
    np.testing.assert_allclose(base, np.abs(np.sin(tr.times)), atol=1e-5)
    assert transverse_jacobi_residual(sc.connection, sc.domain, tr, sol) <= 1e-6


def test_jacobi_needs_the_trajectory_connection():
    sc, rc, tr = sphere_equator(0.5, 0.01)
    with pytest.raises(MismatchedConnectionError):
        integrate_jacobi(sc.connection, tr, np.zeros(3), np.ones(3))


CASES = [
    ("flat_product", None, [1, 0.5, 0]),
    ("cosine_shear", None, [1, 0, 1]),
    ("sphere_fiber", [HALF_PI, 0, 0], None),
    ("warped_product", None, [1, 0.3, 0]),
    ("torus_prison", [3, 3, 0], [1, 0.4, 0]),
    ("four_d", None, None),
]


def _case(name, x0, v0):
    sc = build(FOUR_D) if name == "four_d" else scenario(name)
    dom = sc.domain
    x0 = np.zeros(dom.n) if x0 is None else np.asarray(x0, float)
    v0 = dom.lift_at(x0) @ np.array([0.7, 0.4]) if v0 is None else np.asarray(v0, float)
    rc = recalibrate(sc.connection, dom)
    return sc, integrate_geodesic(rc, x0, v0, (0, 2), 0.01, dom)


@pytest.mark.parametrize("name,x0,v0", CASES)
def test_vertical_frame_fields_are_transverse_jacobi(name, x0, v0):
    sc, tr = _case(name, x0, v0)
    dom = sc.domain
    rng = np.random.default_rng(8)
    shifted = sc.connection.shifted(symmetric_vertical_tensor(dom, [rng.normal(size=(dom.n, dom.n)) for _ in dom.vertical_frame]))
    for V in dom.vertical_frame:
        a = vertical_field_jacobi_residual(sc.connection, dom, tr, V)
        b = vertical_field_jacobi_residual(shifted, dom, tr, V)
        assert a <= 1e-6 and abs(a - b) <= 1e-9


def test_horizontal_constant_field_is_not_jacobi_on_sphere():
    sc, rc, tr = sphere_equator(2.0, 0.01)
    assert vertical_field_jacobi_residual(sc.connection, sc.domain, tr, VectorField.coordinate(3, 0)) == pytest.approx(1.0)


def test_jacobi_residual_class_invariant():
    sc, rc, tr = sphere_equator(2.0, 0.01)
    dom = sc.domain
    sol = integrate_jacobi(rc, tr, np.array([0.1, 0, 0.2]), np.array([0.3, 0.5, 1.0]))
    rng = np.random.default_rng(4)
    shifted = sc.connection.shifted(symmetric_vertical_tensor(dom, [rng.normal(size=(3, 3))]))
    a = transverse_jacobi_residual(sc.connection, dom, tr, sol)
    b = transverse_jacobi_residual(shifted, dom, tr, sol)
    assert a <= 1e-6 and abs(a - b) <= 1e-9


def test_lifted_base_geodesic_is_transverse_geodesic():
    for sc in (scenario("sphere_fiber"), build(FOUR_D)):
        dom = sc.domain
        base = pushforward_connection(sc.connection, dom)
        x0 = dom.sample(1, 0)[0] * 0.5 if dom.n == 4 else np.array([1.2, 0.3, 0.1])
        lift, btraj = lift_base_geodesic(dom, base, x0, [0.4, 0.6], (0, 1.5), 0.005)
        assert transverse_geodesic_residual(sc.connection, dom, lift) <= 1e-6
        ref = integrate_geodesic(base, dom.submersion_at(x0), [0.4, 0.6], (0, 1.5), 0.005)
        m = len(lift)
        np.testing.assert_allclose(dom.submersion_batch(lift.xs), ref.xs[:m], atol=1e-5)
        np.testing.assert_allclose(btraj.xs, ref.xs[:m], atol=1e-12)


def test_pullback_horizontal_geodesic_projects_to_base_geodesic():
    sc = scenario("sphere_fiber")
    dom = sc.domain
    base = pushforward_connection(sc.connection, dom)
    x0 = np.array([1.0, 0.2, 0.0])
    v0 = dom.lift_at(x0) @ np.array([0.3, 0.8])
    tr = integrate_geodesic(recalibrated("sphere_fiber"), x0, v0, (0, 2), 0.005, dom)
    ref = integrate_geodesic(base, dom.submersion_at(x0), [0.3, 0.8], (0, 2), 0.005)
    np.testing.assert_allclose(dom.submersion_batch(tr.xs), ref.xs, atol=1e-5)


def test_D_operator_flat_product():
    sc = scenario("flat_product")
    tr = integrate_geodesic(sc.connection, [0, 0, 0], [1, 0.5, 0], (0, 1), 0.01, sc.domain)
    t = tr.times[:, None]
    E = np.hstack([np.ones_like(t), 2 * np.ones_like(t), np.sin(t)])
    Ed = np.hstack([0 * t, 0 * t, np.cos(t)])
    D = mathfrak_D(sc.connection, sc.domain, tr, E, Ed)
    np.testing.assert_allclose(D, np.hstack([0 * t, 0 * t, np.cos(t)]), atol=1e-14)
    Eh = np.tile([1.0, -2.0, 0.0], (len(tr), 1))
    np.testing.assert_allclose(mathfrak_D(sc.connection, sc.domain, tr, Eh, 0 * Eh), 0, atol=1e-15)


@pytest.mark.parametrize("which", ["four_d", "twisted", "warped_product"])
def test_transport_keeps_vertical_fields_vertical_with_zero_D(which):
    sc = {"four_d": lambda: build(FOUR_D), "twisted": lambda: build(TWISTED)}.get(which, lambda: scenario(which))()
    dom = sc.domain
    rc = recalibrate(sc.connection, dom)
    x0 = np.zeros(dom.n)
    tr = integrate_geodesic(rc, x0, dom.lift_at(x0) @ np.array([1.0, 0.4]), (0, 1), 0.01, dom)
    for V in dom.vertical_frame:
        E, Ed = integrate_transport(sc.connection, dom, tr, V.at(x0))
        assert np.max(np.abs(mathfrak_D(sc.connection, dom, tr, E, Ed))) <= 1e-6
        assert max(np.max(np.abs(dom.ds_at(x) @ e)) for x, e in zip(tr.xs, E)) <= 1e-9


def test_transport_of_horizontal_start_leaves_vertical_space():
    sc = build(TWISTED, "levi_civita", metric=TWISTED["connection"]["metric"])
    dom = sc.domain
    rc = recalibrate(sc.connection, dom)
    x0 = np.zeros(3)
    tr = integrate_geodesic(rc, x0, dom.lift_at(x0) @ np.array([1.0, 0.4]), (0, 1), 0.01, dom)
    E, Ed = integrate_transport(sc.connection, dom, tr, dom.horizontal_frame[1].at(x0))
    assert max(np.max(np.abs(dom.ds_at(x) @ e)) for x, e in zip(tr.xs, E)) > 0.1


def test_sphere_conjugate_point_matches_base():
    sc, rc, tr = sphere_equator(4.0, 1e-3)
    rep = detect_transverse_conjugate(sc.connection, sc.domain, tr, (0, 4), compare_base=True)
    assert len(rep.parameters) == 1
    t, order = rep.parameters[0]
    assert abs(t - math.pi) <= 1e-4 and order == 1
    assert len(rep.base_parameters) == 1
    assert abs(rep.base_parameters[0][0] - t) <= 1e-6 and rep.base_parameters[0][1] == 1


def test_round_sphere_as_trivial_foliation():
    # the normal Jacobi field vanishes at pi, the tangential one t*v never does
    g = [["1", "0"], ["0", "sin(th)^2"]]
    from transaffine.connection import MetricField

    conn = levi_civita(MetricField(tuple(tuple(parse_expression(e, ["th", "ph"]) for e in r) for r in g)))
    dom = build(
        {
            "name": "s2",
            "coord_names": ["th", "ph"],
            "dim": 2,
            "codim": 2,
            "submersion": ["th", "ph"],
            "vertical_frame": [],
            "horizontal_frame": [["1", "0"], ["0", "1"]],
            "box": [[0.3, 2.8], [-10, 10]],
            "connection": {"kind": "flat"},
        }
    ).domain
    tr = integrate_geodesic(conn, [HALF_PI, 0], [0, 1], (0, 4), 1e-3, dom)
    rep = detect_transverse_conjugate(conn, dom, tr, (0, 4))
    assert [round(t, 4) for t, _ in rep.parameters] == [round(math.pi, 4)]
    assert rep.parameters[0][1] == 1


@pytest.mark.parametrize("name,v0,window", [("flat_product", [1, 0.5, 0], 4.0), ("cosine_shear", [1, 0, 1], 3.0)])
def test_flat_bases_have_no_conjugate_points(name, v0, window):
    sc = scenario(name)
    rc = recalibrated(name)
    tr = integrate_geodesic(rc, [0, 0, 0], v0, (0, window), sc.step, sc.domain)
    rep = detect_transverse_conjugate(sc.connection, sc.domain, tr, (0, window), compare_base=True)
    assert rep.parameters == [] and rep.base_parameters == []
    assert all(1 <= k <= sc.domain.q for _, k in rep.parameters)
    assert rep.to_dict()["method"] == "base-projection determinant"


def test_conjugacy_rejects_non_geodesic_and_off_grid_window():
    sc = scenario("cosine_shear")
    flat_tr = integrate_geodesic(sc.connection, [0, 0, 0], [1, 0, 1], (0, 1), 0.01, sc.domain)
    with pytest.raises(DynamicsError):
        detect_transverse_conjugate(sc.connection, sc.domain, flat_tr, (0.005, 1))


def test_csv_round_trip(tmp_path):
    sc, rc, tr = sphere_equator(0.3, 0.01)
    path = tmp_path / "g.csv"
    write_trajectory_csv(tr, path)
    t, xs, vs = read_trajectory_csv(path)
    np.testing.assert_array_equal(t, tr.times)
    np.testing.assert_array_equal(xs, tr.xs)
    np.testing.assert_array_equal(vs, tr.vs)
    assert path.read_text().splitlines()[0] == "t,x_0,x_1,x_2,v_0,v_1,v_2"
    sol = integrate_jacobi(rc, tr, np.zeros(3), np.ones(3))
    write_jacobi_csv(sol, tmp_path / "j.csv")
    head = (tmp_path / "j.csv").read_text().splitlines()
    assert head[0].endswith("J_2,DJdt_0,DJdt_1,DJdt_2") and len(head) == len(tr) + 1
