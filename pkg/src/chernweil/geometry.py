"""Charted Riemannian manifolds, Christoffel symbols and Riemann curvature.

Conventions (fixed for the whole engine):

* ``g[i, j]`` is the metric with lowered indices, ``ginv`` its inverse.
* ``gamma[k, i, j]`` is Gamma^k_{ij}.
* ``riemann[i, j, k, l]`` is R^i_{jkl}, the component of
  R(d_k, d_l) d_j = (nabla_k nabla_l - nabla_l nabla_k) d_j along d_i,
  so the round unit sphere has sectional curvature +1.
* Orientation of every atlas is the coordinate order of its charts.

All derivatives of the metric come from second-order jets; no finite
differences are used here.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple
from urllib.parse import parse_qsl

import numpy as np

from . import dual
from .errors import ArgumentError, DegenerateMetricError, DomainError

__all__ = [
    "Chart", "ChartAtlas", "MetricField", "CurvatureSample", "christoffel",
    "riemann_curvature", "metric_derivatives", "christoffel_batch", "riemann_batch",
    "sectional_curvature", "metric_from_id", "parse_id", "euclidean", "round_sphere",
    "round_s3_hopf", "su2_biinvariant", "METRICS",
]


def parse_id(ident):
    """Split ``"name?a=1&b=x"`` into ``("name", {"a": "1", "b": "x"})``."""
    name, _, query = ident.partition("?")
    return name, dict(parse_qsl(query, keep_blank_values=True))


@dataclass(frozen=True)
class Chart:
    name: str
    ranges: Tuple[Tuple[float, float], ...]
    margin_fraction: float = 1e-3

    def __post_init__(self):
        for lo, hi in self.ranges:
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ArgumentError(f"chart {self.name!r}: bad range ({lo}, {hi})")
        if self.margin_fraction <= 0:
            raise ArgumentError("interior margin must be positive")

    @property
    def dim(self):
        return len(self.ranges)

    @property
    def lower(self):
        return np.array([r[0] for r in self.ranges])

    @property
    def upper(self):
        return np.array([r[1] for r in self.ranges])

    @property
    def margins(self):
        return self.margin_fraction * (self.upper - self.lower)

    def inside(self, points):
        """Boolean mask: points within the chart shrunk by its interior margin."""
        p = np.atleast_2d(points)
        m = self.margins
        return np.all((p > self.lower + m) & (p < self.upper - m), axis=-1)

    def check(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[-1] != self.dim:
            raise ArgumentError(f"chart {self.name!r} has dimension {self.dim}, got {p.shape[-1]}")
        bad = ~self.inside(p)
        if np.any(bad):
            raise DomainError(f"point {list(p[np.argmax(bad)])} outside chart {self.name!r} "
                              f"minus its interior margin")
        return p

    def sample(self, rng, n):
        """Uniform random points inside the margin-shrunk chart."""
        m = self.margins
        return rng.uniform(self.lower + m, self.upper - m, size=(n, self.dim))

    def volume(self):
        return float(np.prod(self.upper - self.lower))


@dataclass(frozen=True)
class ChartAtlas:
    name: str
    charts: Tuple[Chart, ...]
    transitions: Tuple[Tuple[Tuple[str, str], str], ...] = ()

    def __post_init__(self):
        if not self.charts:
            raise ArgumentError("atlas needs at least one chart")
        dims = {c.dim for c in self.charts}
        if len(dims) != 1:
            raise ArgumentError(f"atlas {self.name!r}: charts of mixed dimension {sorted(dims)}")

    @property
    def dim(self):
        return self.charts[0].dim

    def chart(self, name=None):
        if name is None:
            return self.charts[0]
        for c in self.charts:
            if c.name == name:
                return c
        raise ArgumentError(f"atlas {self.name!r} has no chart {name!r}")


@dataclass(frozen=True)
class MetricField:
    """A Riemannian metric given chart-wise by a jet-evaluable formula.

    ``formula(chart_name, x)`` receives a list of coordinate jets (or arrays)
    and returns a nested ``d x d`` list.  ``cyclic`` lists coordinates the
    components do not depend on; it is only used for symmetry reduction and is
    verified numerically before use.
    """

    name: str
    atlas: ChartAtlas
    formula: Callable = field(compare=False)
    cyclic: Tuple[int, ...] = ()
    scale: float = 1.0

    @property
    def dim(self):
        return self.atlas.dim

    def jet(self, chart, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x = dual.variables(pts, order=2)
        g = dual.assemble(self.formula(chart, x), (pts.shape[0],))
        if not isinstance(g, dual.Jet):
            g = dual.const(np.array(g, dtype=float), pts.shape[1])
        return g * self.scale if self.scale != 1.0 else g

    def evaluate(self, chart, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = dual.assemble(self.formula(chart, list(pts.T)), (pts.shape[0],))
        return np.asarray(g, dtype=float) * self.scale

    def scaled(self, c):
        return MetricField(f"{self.name}*{c}", self.atlas, self.formula, self.cyclic,
                           self.scale * c)


@dataclass(frozen=True)
class CurvatureSample:
    chart: str
    point: np.ndarray
    metric: np.ndarray
    riemann: np.ndarray

    def as2form(self, u, v):
        """Endomorphism R(u, v) in the chart basis."""
        return np.einsum("ijkl,k,l->ij", self.riemann, np.asarray(u), np.asarray(v))

    def lowered(self):
        """R_{ijkl} = g_{im} R^m_{jkl}."""
        return np.einsum("im,mjkl->ijkl", self.metric, self.riemann)


# ---------------------------------------------------------------------------
# batch kernels (no domain checks)

def metric_derivatives(metric, chart, points, check=True):
    """Return g, dg, ddg with dg[..., i, j, k] = d_k g_ij and ddg[..., i, j, k, l]."""
    jet = metric.jet(chart, points)
    g, dg, ddg = jet.val, jet.grad, jet.hess
    if check:
        ev = np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2)))
        bad = ev[..., 0] <= 0
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise DegenerateMetricError(chart, np.atleast_2d(points)[idx],
                                        f"smallest eigenvalue {ev[idx, 0]:.3e}")
    return g, dg, ddg


def _christoffel_parts(g, dg, ddg=None):
    ginv = np.linalg.inv(g)
    # first kind: low[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
                 - np.einsum("...ijl->...lij", dg))
    low = 0.5 * (low + np.swapaxes(low, -1, -2))  # exact i <-> j symmetry
    gamma = np.einsum("...kl,...lij->...kij", ginv, low)
    if ddg is None:
        return ginv, gamma, None
    dlow = 0.5 * (np.einsum("...jlim->...lijm", ddg) + np.einsum("...iljm->...lijm", ddg)
                  - np.einsum("...ijlm->...lijm", ddg))
    dlow = 0.5 * (dlow + np.swapaxes(dlow, -2, -3))
    dginv = -np.einsum("...ka,...abm,...bl->...klm", ginv, dg, ginv)
    dgamma = (np.einsum("...klm,...lij->...kijm", dginv, low)
              + np.einsum("...kl,...lijm->...kijm", ginv, dlow))
    return ginv, gamma, dgamma


def christoffel_batch(metric, chart, points, check=True):
    g, dg, _ = metric_derivatives(metric, chart, points, check)
    return _christoffel_parts(g, dg)[1]


def christoffel_with_derivative(metric, chart, points, check=True):
    """Gamma^k_ij and its coordinate derivatives dgamma[..., k, i, j, m] = d_m Gamma^k_ij."""
    g, dg, ddg = metric_derivatives(metric, chart, points, check)
    _, gamma, dgamma = _christoffel_parts(g, dg, ddg)
    return g, gamma, dgamma


def riemann_batch(metric, chart, points, check=True):
    """Return (g, R) with R[..., i, j, k, l] = R^i_{jkl} for a batch of points."""
    g, gamma, dgamma = christoffel_with_derivative(metric, chart, points, check)
    riem = (np.einsum("...iljk->...ijkl", dgamma) - np.einsum("...ikjl->...ijkl", dgamma)
            + np.einsum("...ikm,...mlj->...ijkl", gamma, gamma)
            - np.einsum("...ilm,...mkj->...ijkl", gamma, gamma))
    return g, riem


# ---------------------------------------------------------------------------
# pointwise operations

def christoffel(metric, chart, point):
    """Christoffel symbols Gamma^k_{ij} at a single point, shape (d, d, d)."""
    c = metric.atlas.chart(chart)
    p = c.check(point)
    return christoffel_batch(metric, c.name, p)[0]


def riemann_curvature(metric, chart, point):
    c = metric.atlas.chart(chart)
    p = c.check(point)
    g, riem = riemann_batch(metric, c.name, p)
    return CurvatureSample(c.name, p[0], g[0], riem[0])


def sectional_curvature(sample, u, v):
    u, v = np.asarray(u, float), np.asarray(v, float)
    g = sample.metric
    num = u @ g @ sample.as2form(u, v) @ v
    den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return num / den


# ---------------------------------------------------------------------------
# catalog

def _diag(entries):
    d = len(entries)
    return [[entries[i] if i == j else 0.0 for j in range(d)] for i in range(d)]


def euclidean(n):
    atlas = ChartAtlas(f"cube{n}", (Chart("cube", ((0.0, 1.0),) * n),))
    return MetricField(f"euclidean-{n}", atlas, lambda chart, x: _diag([1.0] * n),
                       cyclic=tuple(range(n)))


def round_sphere(n):
    """Unit S^n in hyperspherical coordinates (chi_1, ..., chi_{n-1}, phi)."""
    if n < 1:
        raise ArgumentError("sphere dimension must be >= 1")
    ranges = ((0.0, np.pi),) * (n - 1) + ((0.0, 2 * np.pi),)
    atlas = ChartAtlas(f"s{n}", (Chart("hyperspherical", ranges),))

    def formula(chart, x):
        entries, w = [1.0], 1.0
        for i in range(n - 1):
            w = w * dual.sin(x[i]) ** 2
            entries.append(w)
        return _diag(entries)

    return MetricField(f"round-s{n}", atlas, formula, cyclic=(n - 1,))


def round_s3_hopf():
    """Unit S^3 in Hopf coordinates (eta, xi1, xi2):
    z1 = e^{i xi1} sin(eta), z2 = e^{i xi2} cos(eta)."""
    atlas = ChartAtlas("s3", (Chart("hopf", ((0.0, np.pi / 2), (0.0, 2 * np.pi),
                                             (0.0, 2 * np.pi))),))

    def formula(chart, x):
        eta = x[0]
        return _diag([1.0, dual.sin(eta) ** 2, dual.cos(eta) ** 2])

    return MetricField("round-s3", atlas, formula, cyclic=(1, 2))


def su2_biinvariant():
    """Bi-invariant metric -1/2 tr(g^-1 dg)^2 on SU(2) in Euler angles
    (theta, phi, psi) for g = e^{i phi s3/2} e^{i theta s2/2} e^{i psi s3/2};
    isometric to the unit 3-sphere."""
    atlas = ChartAtlas("su2", (Chart("euler", ((0.0, np.pi), (0.0, 2 * np.pi),
                                               (0.0, 4 * np.pi))),))

    def formula(chart, x):
        c = dual.cos(x[0])
        return [[0.25, 0.0, 0.0], [0.0, 0.25, 0.25 * c], [0.0, 0.25 * c, 0.25]]

    return MetricField("su2-biinvariant", atlas, formula, cyclic=(1, 2))


METRICS = {
    "euclidean": lambda p: euclidean(int(p.get("n", 2))),
    "round-s1": lambda p: round_sphere(1),
    "round-s2": lambda p: round_sphere(2),
    "round-s3": lambda p: round_s3_hopf(),
    "round-s5": lambda p: round_sphere(5),
    "round-sn": lambda p: round_sphere(int(p["n"])),
    "su2-biinvariant": lambda p: su2_biinvariant(),
}


def metric_from_id(ident):
    """Resolve a catalog id such as ``"round-s2"`` or ``"squashed-t11?t=0.5"``."""
    name, params = parse_id(ident)
    if name == "squashed-t11":
        from .loops import SquashedMetricFamily
        metric = SquashedMetricFamily(float(params.get("t", 1.0))).metric()
    else:
        try:
            make = METRICS[name]
        except KeyError:
            raise ArgumentError(f"unknown metric {name!r}; known: "
                                f"{sorted(METRICS) + ['squashed-t11']}") from None
        metric = make(params)
    if "scale" in params:
        metric = metric.scaled(float(params["scale"]))
    return metric
