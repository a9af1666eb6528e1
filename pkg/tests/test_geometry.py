import numpy as np
import pytest
from hypothesis import given, strategies as st

from chernweil import dual
from chernweil.errors import ArgumentError, DegenerateMetricError, DomainError
from chernweil.geometry import (Chart, ChartAtlas, MetricField, christoffel,
                                christoffel_with_derivative, euclidean,
                                metric_derivatives, metric_from_id, riemann_batch,
                                riemann_curvature, round_sphere, sectional_curvature)

CATALOG = ["euclidean?n=3", "round-s1", "round-s2", "round-s3", "round-s5",
           "su2-biinvariant", "squashed-t11?t=0.5", "squashed-t11?t=1"]


def _probe(metric, rng, n):
    return metric.atlas.chart().sample(rng, n)


def test_euclidean_christoffels_vanish():
    g = euclidean(3)
    assert np.all(christoffel(g, None, [0.3, 0.5, 0.7]) == 0)


def test_round_sphere_christoffel_closed_form():
    gam = christoffel(round_sphere(2), None, [np.pi / 3, 1.0])
    # Gamma^theta_{phi phi} = -sin(theta) cos(theta)
    assert gam[0, 1, 1] == pytest.approx(-np.sqrt(3) / 4, abs=1e-14)
    assert gam[1, 0, 1] == pytest.approx(1 / np.tan(np.pi / 3), abs=1e-14)


@given(st.floats(0.05, np.pi - 0.05))
def test_round_sphere_riemann_component(theta):
    R = riemann_curvature(round_sphere(2), None, [theta, 2.0]).riemann
    assert R[0, 1, 0, 1] == pytest.approx(np.sin(theta) ** 2, abs=1e-12)


def test_flat_riemann_is_zero(rng):
    g = euclidean(4)
    _, R = riemann_batch(g, None, _probe(g, rng, 10))
    assert np.abs(R).max() == 0


def test_rescaling_leaves_riemann_unchanged(rng):
    g = metric_from_id("squashed-t11?t=0.5")
    pts = _probe(g, rng, 10)
    _, R1 = riemann_batch(g, None, pts)
    _, R2 = riemann_batch(g.scaled(2.0), None, pts)
    assert np.abs(R1 - R2).max() < 1e-10 * np.abs(R1).max()


@pytest.mark.parametrize("ident", CATALOG)
def test_curvature_identities_on_catalog(ident, rng):
    g = metric_from_id(ident)
    pts = _probe(g, rng, 100)
    _, gamma, _ = christoffel_with_derivative(g, None, pts)
    assert np.array_equal(gamma, np.swapaxes(gamma, -1, -2))
    G, R = riemann_batch(g, None, pts)
    scale = max(1.0, np.abs(R).max())
    bianchi = R + np.einsum("bijkl->biklj", R) + np.einsum("bijkl->biljk", R)
    assert np.abs(bianchi).max() < 1e-9 * scale
    assert np.abs(R + np.swapaxes(R, -1, -2)).max() < 1e-12 * scale
    low = np.einsum("bim,bmjkl->bijkl", G, R)
    assert np.abs(low + np.swapaxes(low, 1, 2)).max() < 1e-9 * scale


@pytest.mark.parametrize("ident", CATALOG)
def test_dual_derivatives_match_finite_differences(ident, rng):
    g = metric_from_id(ident)
    pts = _probe(g, rng, 5)
    _, dg, ddg = metric_derivatives(g, None, pts)
    h = 1e-5
    d = g.dim
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fd = (g.evaluate(None, pts + e) - g.evaluate(None, pts - e)) / (2 * h)
        scale = max(1.0, np.abs(dg).max())
        assert np.abs(fd - dg[..., i]).max() < 1e-6 * scale
        _, dgp, _ = metric_derivatives(g, None, pts + e)
        _, dgm, _ = metric_derivatives(g, None, pts - e)
        fd2 = (dgp - dgm) / (2 * h)
        assert np.abs(fd2 - ddg[..., i]).max() < 1e-6 * max(1.0, np.abs(ddg).max())


@pytest.mark.parametrize("n", [2, 3, 5])
def test_round_sphere_sectional_curvature_is_one(n, rng):
    g = metric_from_id(f"round-s{n}")
    for p in _probe(g, rng, 100):
        sample = riemann_curvature(g, None, p)
        u, v = rng.normal(size=(2, n))
        assert sectional_curvature(sample, u, v) == pytest.approx(1.0, abs=1e-9)


def test_curvature_two_form_antisymmetric(rng):
    sample = riemann_curvature(metric_from_id("squashed-t11?t=0.3"), None,
                               [1.0, 2.0, 1.5, 3.0, 4.0])
    u, v = rng.normal(size=(2, 5))
    assert np.allclose(sample.as2form(u, v), -sample.as2form(v, u), atol=1e-14)


def test_domain_error_near_pole():
    with pytest.raises(DomainError):
        christoffel(round_sphere(2), None, [0.0, 1.0])


def test_degenerate_metric_names_chart_and_point():
    atlas = ChartAtlas("flatline", (Chart("c", ((0.0, 1.0), (0.0, 1.0))),))
    g = MetricField("degenerate", atlas, lambda c, x: [[1.0, 0.0], [0.0, 0.0 * x[0]]])
    with pytest.raises(DegenerateMetricError) as info:
        christoffel(g, "c", [0.5, 0.5])
    assert info.value.chart == "c"
    assert list(info.value.point) == [0.5, 0.5]


def test_chart_validation():
    with pytest.raises(ArgumentError):
        Chart("bad", ((1.0, 0.0),))
    with pytest.raises(ArgumentError):
        Chart("bad", ((0.0, 1.0),), margin_fraction=0.0)
    with pytest.raises(ArgumentError):
        ChartAtlas("mixed", (Chart("a", ((0, 1),)), Chart("b", ((0, 1), (0, 1)))))


def test_unknown_metric_id():
    with pytest.raises(ArgumentError):
        metric_from_id("klein-bottle")


def test_catalog_metrics_positive_definite(rng):
    for ident in CATALOG:
        g = metric_from_id(ident)
        G = g.evaluate(None, _probe(g, rng, 200))
        assert np.all(np.linalg.eigvalsh(G)[:, 0] > 0)
        assert np.array_equal(G, np.swapaxes(G, -1, -2))


def test_dual_chain_rule():
    x = dual.variables(np.array([[0.7, 1.3]]))
    f = dual.sin(x[0] * x[1])
    p = 0.7 * 1.3
    assert f.grad[0, 0] == pytest.approx(np.cos(p) * 1.3)
    assert f.hess[0, 0, 1] == pytest.approx(np.cos(p) - np.sin(p) * p)
