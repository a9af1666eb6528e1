import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from chernweil import dual
from chernweil.charclasses import (ConnectionField, InvariantPolynomial, ProductFibration,
                                   bismut_vertical_char_form, char_form, connection_from_id,
                                   fiber_integration, leading_order_char_form,
                                   maurer_cartan_connection, maurer_cartan_form, monopole,
                                   multiplication_family, pfaffian, random_connection,
                                   relative_cs_form, sphere_embedding, su2_embedding,
                                   trace_power_form)
from chernweil.errors import ArgumentError
from chernweil.forms import (QuadratureSpec, exterior_derivative_numeric, integrate, pullback,
                             volume_form, wedge)
from chernweil.geometry import Chart, ChartAtlas, euclidean, round_sphere, su2_biinvariant
from chernweil.groups import su2

S2 = round_sphere(2).atlas
SU2 = su2_biinvariant().atlas
Q64 = QuadratureSpec(nodes=64)


def _s2_points(rng, n):
    return rng.uniform([0.2, 0.2], [2.9, 6.0], size=(n, 2))


def _su2_points(rng, n):
    return rng.uniform([0.2, 0.2, 0.2], [2.9, 6.0, 12.0], size=(n, 3))


# -- closed-form oracles ----------------------------------------------------

def _su2_tr_theta3_oracle():
    """Exact int_{SU(2)} tr((g^-1 dg)^3) in Euler angles, via sympy."""
    th, ph, ps = sp.symbols("theta phi psi", real=True)
    c, s = sp.cos(th / 2), sp.sin(th / 2)
    g = sp.Matrix([[sp.exp(sp.I * (ph + ps) / 2) * c, sp.exp(sp.I * (ph - ps) / 2) * s],
                   [-sp.exp(-sp.I * (ph - ps) / 2) * s, sp.exp(-sp.I * (ph + ps) / 2) * c]])
    ginv = g.H  # unitary
    A = [sp.simplify(ginv * g.diff(v)) for v in (th, ph, ps)]
    # tr(theta^3)(e1, e2, e3) = 3 (tr A1 A2 A3 - tr A1 A3 A2)
    density = sp.simplify(3 * ((A[0] * A[1] * A[2]).trace() - (A[0] * A[2] * A[1]).trace()))
    return complex(sp.integrate(density, (th, 0, sp.pi), (ph, 0, 2 * sp.pi), (ps, 0, 4 * sp.pi)))


@pytest.fixture(scope="module")
def tr_theta3():
    theta = maurer_cartan_connection("SU(2)").connection_form()
    return wedge(wedge(theta, theta), theta).map_values(
        lambda a: np.trace(a, axis1=-2, axis2=-1), "scalar")


def test_sympy_oracle_matches_winding_normalisation():
    assert _su2_tr_theta3_oracle() == pytest.approx(-24 * np.pi ** 2, abs=1e-9)


def test_su2_tr_theta3_integral(tr_theta3):
    value = integrate(tr_theta3).value
    assert value == pytest.approx(_su2_tr_theta3_oracle(), rel=1e-9)


def test_cs_of_flat_to_maurer_cartan_is_tr_theta3(tr_theta3, rng):
    triv = ConnectionField.trivial(SU2, 2)
    mc = maurer_cartan_connection("SU(2)")
    pts = _su2_points(rng, 5)
    cs = relative_cs_form(triv, mc, 2).coefficients(None, pts)
    raw = relative_cs_form(triv, mc, 2, raw=True).coefficients(None, pts)
    t3 = tr_theta3.coefficients(None, pts)
    assert np.allclose(cs, -t3 / 3, atol=1e-10)
    assert np.allclose(raw, -t3 / 6, atol=1e-10)


# -- connections and Chern-Weil forms ---------------------------------------

@pytest.mark.parametrize("n", [-2, -1, 1, 2])
def test_monopole_chern_number(n):
    value = integrate(char_form(monopole(n), InvariantPolynomial.chern(1)), Q64).value
    assert value == pytest.approx(n, abs=1e-6)


def test_monopole_curvature_closed_form(rng):
    pts = _s2_points(rng, 10)
    F = monopole(3).curvature_components(None, pts)[:, 0, 0, 0]
    assert np.allclose(F, -1.5j * np.sin(pts[:, 0]), atol=1e-14)


def test_gauss_bonnet():
    lc = ConnectionField.levi_civita(round_sphere(2))
    value = integrate(char_form(lc, InvariantPolynomial("pfaffian", 1, 1 / (2 * np.pi))), Q64).value
    assert value == pytest.approx(2.0, abs=1e-6)


def test_flat_connection_gives_zero_form(rng):
    triv = ConnectionField.trivial(euclidean(4).atlas, 2)
    f = char_form(triv, InvariantPolynomial.trace_power(2))
    assert np.all(f.coefficients(None, rng.uniform(0.1, 0.9, (5, 4))) == 0)


def test_maurer_cartan_connection_is_flat(rng):
    F = maurer_cartan_connection("SU(2)").curvature_components(None, _su2_points(rng, 20))
    assert np.abs(F).max() < 1e-12


def test_connection_independence():
    c1 = monopole(1) + random_connection(S2, 1, sphere_embedding, 1)
    c2 = monopole(1) + random_connection(S2, 1, sphere_embedding, 2)
    v = [integrate(char_form(c, InvariantPolynomial.chern(1)), Q64).value for c in (c1, c2)]
    assert abs(v[0] - v[1]) < 1e-6


@pytest.mark.parametrize("seed", [3, 4])
def test_curvature_antisymmetric_and_skew_hermitian(seed, rng):
    conn = random_connection(SU2, 2, su2_embedding, seed)
    F = conn.curvature_components(None, _su2_points(rng, 20))
    assert np.abs(F + np.conj(np.swapaxes(F, -1, -2))).max() < 1e-12
    pts = _su2_points(rng, 1)
    curv = conn.curvature()
    u, v = rng.normal(size=(2, 3))
    assert np.allclose(curv(None, pts[0], u, v), -curv(None, pts[0], v, u), atol=1e-13)


def test_char_forms_closed(rng):
    conn = random_connection(SU2, 2, su2_embedding, 9)
    for k in (1,):
        d = exterior_derivative_numeric(trace_power_form(conn, k))
        assert np.abs(d.coefficients(None, _su2_points(rng, 50))).max() < 1e-5
    E5 = euclidean(5).atlas
    conn5 = random_connection(E5, 2, lambda c, x: list(x), 10, scale=0.8)
    d = exterior_derivative_numeric(trace_power_form(conn5, 2))
    assert np.abs(d.coefficients(None, rng.uniform(0.1, 0.9, (50, 5)))).max() < 1e-5


def test_naturality_under_pullback(rng):
    conn = monopole(1) + random_connection(S2, 1, sphere_embedding, 11)
    square = euclidean(2).atlas

    def f(c, x):
        return [0.3 + 2.0 * x[0], 1.0 + 3.0 * x[1] + x[0] * x[0]]

    p = InvariantPolynomial.chern(1)
    lhs = char_form(conn.pullback(f, square), p)
    rhs = pullback(char_form(conn, p), f, square)
    pts = rng.uniform(0.05, 0.95, (30, 2))
    assert np.abs(lhs.coefficients(None, pts) - rhs.coefficients(None, pts)).max() < 1e-9


# -- invariant polynomials --------------------------------------------------

def _random_unitary(rng, n):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q


@pytest.mark.parametrize("p", [InvariantPolynomial.trace_power(1),
                               InvariantPolynomial.trace_power(3),
                               InvariantPolynomial("a-hat", 4),
                               InvariantPolynomial("chern-character", 4)])
def test_conjugation_invariance(p, rng):
    for _ in range(100):
        A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        g = _random_unitary(rng, 4)
        val = p.evaluate(A)
        assert abs(p.evaluate(g @ A @ g.conj().T) - val) < 1e-10 * max(1, abs(val))


def test_pfaffian_conjugation_invariance(rng):
    p = InvariantPolynomial("pfaffian")
    for _ in range(100):
        A = rng.normal(size=(4, 4))
        A = A - A.T
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        assert abs(p.evaluate(q @ A @ q.T) - p.evaluate(A)) < 1e-10


def test_pfaffian_rank_two():
    assert pfaffian(np.array([[0.0, 2.5], [-2.5, 0.0]])) == 2.5


@given(st.integers(0, 10_000))
def test_pfaffian_squared_is_det(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    A = A - A.T
    det = np.linalg.det(A)
    assert abs(pfaffian(A) ** 2 - det) < 1e-10 * max(1.0, abs(det))
    g = rng.normal(size=(4, 4))
    pf = pfaffian(g @ A @ g.T)
    expect = np.linalg.det(g) * pfaffian(A)
    assert abs(pf - expect) < 1e-10 * max(1.0, abs(expect))


def test_pfaffian_errors():
    with pytest.raises(ArgumentError):
        pfaffian(np.zeros((3, 3)))
    with pytest.raises(ArgumentError):
        pfaffian(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_a_hat_degree_four_part(rng):
    conn = random_connection(euclidean(4).atlas, 2, lambda c, x: list(x), 5)
    parts = char_form(conn, InvariantPolynomial("a-hat", 4))
    pts = rng.uniform(0.1, 0.9, (3, 4))
    expect = (-1 / 48) * trace_power_form(conn, 2).coefficients(None, pts)
    assert np.allclose(parts[4].coefficients(None, pts), expect, atol=1e-12)
    assert np.allclose(parts[0].coefficients(None, pts), 1.0)


def test_a_hat_is_one_in_low_dimension():
    conn = monopole(1)
    assert set(char_form(conn, InvariantPolynomial("a-hat", 4))) == {0}


# -- transgression ------------------------------------------------------------

def test_cs_of_equal_connections_vanishes(rng):
    c = random_connection(SU2, 2, su2_embedding, 3)
    cs = relative_cs_form(c, c, 1)
    assert np.all(cs.coefficients(None, _su2_points(rng, 5)) == 0)


def _transgression_residual(c0, c1, k, pts):
    dcs = exterior_derivative_numeric(relative_cs_form(c0, c1, k))
    diff = trace_power_form(c1, k) - trace_power_form(c0, k)
    return np.abs(dcs.coefficients(None, pts) - diff.coefficients(None, pts)).max()


def test_transgression_on_s2(rng):
    c0 = monopole(1) + random_connection(S2, 1, sphere_embedding, 1)
    c1 = monopole(1) + random_connection(S2, 1, sphere_embedding, 2)
    assert _transgression_residual(c0, c1, 1, _s2_points(rng, 50)) < 1e-5


def test_transgression_on_su2(rng):
    c0 = random_connection(SU2, 2, su2_embedding, 4)
    c1 = random_connection(SU2, 2, su2_embedding, 3)
    assert _transgression_residual(c0, c1, 1, _su2_points(rng, 50)) < 1e-5


def test_transgression_second_chern_form(rng):
    E4 = euclidean(4).atlas
    c0 = random_connection(E4, 2, lambda c, x: list(x), 5, scale=0.8)
    c1 = random_connection(E4, 2, lambda c, x: list(x), 6, scale=0.8)
    assert _transgression_residual(c0, c1, 2, rng.uniform(0.1, 0.9, (50, 4))) < 1e-5


def test_cs_rank_mismatch():
    with pytest.raises(ArgumentError):
        relative_cs_form(ConnectionField.trivial(SU2, 2), ConnectionField.trivial(SU2, 3), 1)


# -- Maurer-Cartan ------------------------------------------------------------

def test_maurer_cartan_u1():
    assert maurer_cartan_form("U(1)", [0.3], [1.0]) == pytest.approx(np.array([[1j]]))


def test_maurer_cartan_at_identity():
    xi = maurer_cartan_form("SU(2)", [0.0, 0.0, 0.0], [1.0, 2.0, 0.0])
    sigma2 = np.array([[0, -1j], [1j, 0]])
    sigma3 = np.diag([1, -1])
    assert np.allclose(xi, 0.5j * sigma2 + 0.5j * sigma3 * 2)


def test_maurer_cartan_left_invariance(rng):
    G = su2()
    for _ in range(10):
        p, p0 = _su2_points(rng, 2)
        v = rng.normal(size=3)
        g0 = G.matrix(p0)[0]

        def translate(c, x):
            g = G.element(x)
            entries = [[sum((g0[i, k] * g[k][j] for k in range(2)), 0.0) for j in range(2)]
                       for i in range(2)]
            return G.inverse(entries[0][0], entries[0][1])

        x = dual.variables(p[None], order=1)
        y = translate(None, x)
        q = np.array([yi.val[0] for yi in y])
        w = np.array([yi.grad[0] for yi in y]) @ v
        assert np.allclose(maurer_cartan_form(G, q, w), maurer_cartan_form(G, p, v), atol=1e-10)


def test_maurer_cartan_outside_chart():
    with pytest.raises(ArgumentError):
        maurer_cartan_form("SU(2)", [4.0, 0.0, 0.0], [1, 0, 0])


# -- fiber integration and families -----------------------------------------

B3 = euclidean(3).atlas
POINT = ChartAtlas("pt", (Chart("pt", ()),))


def _monopole_on(atlas, n):
    return ConnectionField.from_potential(
        atlas, 1, lambda c, x: [0.0, dual.times(-0.5j * n * (1 - dual.cos(x[0])), np.eye(1))]
        + [0.0] * (atlas.dim - 2))


def test_fiber_integral_of_area_form(rng):
    fib = ProductFibration(S2, B3)
    vol = pullback(volume_form(round_sphere(2)), fib.fiber_projection(), fib.total)
    out = fiber_integration(vol, fib, Q64)
    assert np.allclose(out.coefficients(None, rng.uniform(0.1, 0.9, (4, 3))), 4 * np.pi,
                       atol=1e-6)


@pytest.mark.parametrize("n", [1, -2, 3])
def test_families_index_point_base(n):
    fib = ProductFibration(S2, POINT)
    ch1 = trace_power_form(_monopole_on(fib.total, n), 1, 1j / (2 * np.pi))
    val = fiber_integration(ch1, fib, Q64).coefficients(None, np.zeros((1, 0)))
    assert val[0, 0] == pytest.approx(n, abs=1e-6)


def test_fiber_integration_commutes_with_d(rng):
    fib = ProductFibration(S2, B3)

    def emb(c, x):
        return sphere_embedding(c, x[:2]) + list(x[2:])

    conn = random_connection(fib.total, 2, emb, 7)
    alpha = trace_power_form(conn, 2)       # 4-form on S^2 x B, fiber dimension 2
    q = QuadratureSpec(nodes=32)
    lhs = exterior_derivative_numeric(fiber_integration(alpha, fib, q))
    rhs = fiber_integration(exterior_derivative_numeric(alpha), fib, q)
    pts = rng.uniform(0.2, 0.8, (5, 3))
    assert np.abs(lhs.coefficients(None, pts) - rhs.coefficients(None, pts)).max() < 1e-5


def test_fiber_integration_low_degree_is_zero():
    fib = ProductFibration(S2, B3)
    conn = _monopole_on(fib.total, 1)
    out = fiber_integration(conn.connection_form(), fib)
    assert out.degree == 0
    assert np.all(out.coefficients(None, np.array([[0.5, 0.5, 0.5]])) == 0)


def test_bismut_form_closed(rng):
    fib = ProductFibration(S2, B3)

    def emb(c, x):
        return sphere_embedding(c, x[:2]) + list(x[2:])

    form = bismut_vertical_char_form(fib, random_connection(fib.total, 2, emb, 7), 2,
                                     q=QuadratureSpec(nodes=32))
    assert form.degree == 2
    d = exterior_derivative_numeric(form)
    assert np.abs(d.coefficients(None, rng.uniform(0.2, 0.8, (5, 3)))).max() < 1e-5


@pytest.mark.parametrize("n", [1, 2])
def test_bismut_matches_fiber_integral(n, rng):
    fib = ProductFibration(S2, B3)
    conn = _monopole_on(fib.total, n)
    pts = rng.uniform(0.1, 0.9, (6, 3))
    b = bismut_vertical_char_form(fib, conn, 1, q=Q64).coefficients(None, pts)
    f = fiber_integration(char_form(conn, InvariantPolynomial.trace_power(1)), fib, Q64)
    assert np.abs(b - f.coefficients(None, pts)).max() < 1e-8
    assert np.allclose(b, -2j * np.pi * n, atol=1e-8)


def test_leading_order_form_is_twice_matrix_form(rng):
    lc = ConnectionField.levi_civita(round_sphere(2))
    lo = leading_order_char_form(multiplication_family(lc), 1)
    pts = _s2_points(rng, 10)
    diff = lo.coefficients(None, pts) - 2 * trace_power_form(lc, 1).coefficients(None, pts)
    assert np.abs(diff).max() < 1e-9


@pytest.mark.parametrize("n", [1, 2])
def test_leading_order_monopole_integral(n):
    lo = leading_order_char_form(multiplication_family(monopole(n)), 1)
    value = integrate(lo * (1j / (2 * np.pi)), QuadratureSpec(nodes=48)).value
    assert value == pytest.approx(2 * n, abs=1e-6)


def test_leading_order_zero_curvature(rng):
    lo = leading_order_char_form(multiplication_family(ConnectionField.trivial(S2, 2)), 1)
    assert np.all(lo.coefficients(None, _s2_points(rng, 3)) == 0)


def test_leading_order_rejects_xi_dependent_values():
    from chernweil.forms import FormField
    from chernweil.symbols import power_symbol

    def comp(c, pts):
        out = np.empty((len(pts), 1), dtype=object)
        for i in range(len(pts)):
            out[i, 0] = power_symbol(-0.5, 1, 2, 2)
        return out

    with pytest.raises(ArgumentError):
        leading_order_char_form(FormField(S2, 2, comp, "symbol"), 1).coefficients(
            None, np.array([[1.0, 1.0]]))


def test_connection_catalog():
    assert connection_from_id("monopole?n=2").rank == 1
    assert connection_from_id("levi-civita?metric=round-s2").rank == 2
    assert connection_from_id("mc-flat-su2").rank == 2
    with pytest.raises(ArgumentError):
        connection_from_id("instanton")
