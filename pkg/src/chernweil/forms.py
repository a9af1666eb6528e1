"""Differential forms on charted manifolds, wedge products and integration.

A :class:`FormField` of degree p stores its coefficients on the strictly
increasing index sets I = (i_1 < ... < i_p) of each chart, so that

    alpha = sum_I alpha_I dx^{i_1} ^ ... ^ dx^{i_p},
    alpha(v_1, ..., v_p) = sum_I alpha_I det[v_j^{i_k}].

With this normalisation dx ^ dy evaluated on (e_x, e_y) is 1.  Values are
scalar, matrix (r x r, multiplied in shuffle order without a trace) or
``symbol`` (object arrays of symbol expansions, multiplied by composition).
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import dual
from .errors import ArgumentError
from .geometry import ChartAtlas

__all__ = [
    "FormField", "QuadratureSpec", "IntegrationResult", "combos", "wedge",
    "exterior_derivative_numeric", "integrate", "pullback", "coordinate_form",
    "function_form", "volume_form", "zero_form", "trace_form", "gauss_legendre_grid",
    "counter_stream",
]

KINDS = ("scalar", "matrix", "symbol")


@lru_cache(maxsize=None)
def combos(d, p):
    return tuple(itertools.combinations(range(d), p))


def _perm_sign(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _shuffle_table(d, p, q):
    """For each K of size p+q: list of (index of I, index of J, sign)."""
    idx_p = {c: n for n, c in enumerate(combos(d, p))}
    idx_q = {c: n for n, c in enumerate(combos(d, q))}
    table = []
    for K in combos(d, p + q):
        terms = []
        for pos in itertools.combinations(range(p + q), p):
            I = tuple(K[i] for i in pos)
            J = tuple(K[i] for i in range(p + q) if i not in pos)
            terms.append((idx_p[I], idx_q[J], _perm_sign(I + J)))
        table.append(tuple(terms))
    return tuple(table)


def _product(kind_a, kind_b):
    """Elementwise product for batched values (leading axes: batch, component)."""
    if kind_a == "symbol" or kind_b == "symbol":
        from .symbols import compose
        comp = np.frompyfunc(lambda x, y: compose(x, y) if hasattr(x, "coeffs") and
                             hasattr(y, "coeffs") else x * y, 2, 1)
        return lambda a, b: comp(a, b)
    if kind_a == "matrix" and kind_b == "matrix":
        return lambda a, b: a @ b
    if kind_a == "scalar" and kind_b == "matrix":
        return lambda a, b: a[..., None, None] * b
    if kind_a == "matrix" and kind_b == "scalar":
        return lambda a, b: a * b[..., None, None]
    return lambda a, b: a * b


def _result_kind(ka, kb):
    if "symbol" in (ka, kb):
        return "symbol"
    if "matrix" in (ka, kb):
        return "matrix"
    return "scalar"


@dataclass(frozen=True)
class FormField:
    """A p-form on ``atlas``; ``components(chart, points)`` returns an array of
    shape (B, C(d, p)) + value shape."""

    atlas: ChartAtlas
    degree: int
    components: Callable = field(compare=False)
    kind: str = "scalar"

    def __post_init__(self):
        if self.degree < 0:
            raise ArgumentError("form degree must be >= 0")
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown value kind {self.kind!r}")

    @property
    def dim(self):
        return self.atlas.dim

    def coefficients(self, chart, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.components(self.atlas.chart(chart).name, pts)

    def __call__(self, chart, point, *vectors):
        """Evaluate at one point on p tangent vectors given in the chart basis."""
        if len(vectors) != self.degree:
            raise ArgumentError(f"{self.degree}-form needs {self.degree} vectors, got {len(vectors)}")
        pts = np.atleast_2d(np.asarray(point, dtype=float))
        vecs = np.asarray(vectors, dtype=float).reshape(1, self.degree, self.dim) \
            if vectors else np.zeros((1, 0, self.dim))
        return self.evaluate(chart, pts, vecs)[0]

    def evaluate(self, chart, points, vectors):
        """Batched evaluation: points (B, d), vectors (B, p, d)."""
        comp = self.coefficients(chart, points)
        if self.degree == 0:
            return comp[:, 0]
        if self.degree > self.dim:
            return comp[:, 0] * 0 if comp.shape[1] else np.zeros(len(points))
        V = np.asarray(vectors, dtype=float)
        out = 0
        for n, I in enumerate(combos(self.dim, self.degree)):
            det = np.linalg.det(V[:, :, list(I)])
            out = out + _scale_batch(comp[:, n], det)
        return out

    # -- linear structure -------------------------------------------------
    def __add__(self, other):
        _compatible(self, other)
        if self.degree != other.degree:
            raise ArgumentError("cannot add forms of different degree")
        kind = _result_kind(self.kind, other.kind)
        return FormField(self.atlas, self.degree,
                         lambda c, p: self.components(c, p) + other.components(c, p), kind)

    def __neg__(self):
        return FormField(self.atlas, self.degree, lambda c, p: -self.components(c, p), self.kind)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, FormField):
            return wedge(self, scalar)
        return FormField(self.atlas, self.degree,
                         lambda c, p: self.components(c, p) * scalar, self.kind)

    __rmul__ = __mul__

    def map_values(self, fn, kind):
        """Apply ``fn`` to the coefficient array (e.g. a trace)."""
        return FormField(self.atlas, self.degree, lambda c, p: fn(self.components(c, p)), kind)


def _scale_batch(values, s):
    if values.dtype == object:
        return values * s
    return values * s.reshape(s.shape + (1,) * (values.ndim - 1))


def _compatible(a, b):
    if a.atlas != b.atlas:
        raise ArgumentError(f"forms live on different atlases ({a.atlas.name}, {b.atlas.name})")


def zero_form(atlas, degree, kind="scalar", value_shape=()):
    n = len(combos(atlas.dim, degree)) if degree <= atlas.dim else 0

    def comp(c, p):
        if kind == "symbol":
            return np.zeros((len(p), n), dtype=object)
        return np.zeros((len(p), n) + tuple(value_shape), dtype=complex)

    return FormField(atlas, degree, comp, kind)


def function_form(atlas, fn, kind="scalar"):
    """0-form from ``fn(chart, points) -> (B,) + value shape``."""
    return FormField(atlas, 0, lambda c, p: np.asarray(fn(c, p))[:, None], kind)


def coordinate_form(atlas, *indices):
    """dx^{i_1} ^ ... ^ dx^{i_p} with constant coefficient."""
    p = len(indices)
    table = combos(atlas.dim, p)
    sign = _perm_sign(indices)
    if len(set(indices)) < p:
        return zero_form(atlas, p)
    n = table.index(tuple(sorted(indices)))

    def comp(c, pts):
        out = np.zeros((len(pts), len(table)))
        out[:, n] = sign
        return out

    return FormField(atlas, p, comp)


def volume_form(metric):
    """Riemannian volume form sqrt(det g) dx^1 ^ ... ^ dx^d."""
    def comp(c, p):
        g = metric.evaluate(c, p)
        return np.sqrt(np.linalg.det(g))[:, None]

    return FormField(metric.atlas, metric.dim, comp)


def trace_form(form):
    """Matrix trace of a matrix-valued form."""
    if form.kind != "matrix":
        raise ArgumentError("trace_form needs a matrix-valued form")
    return form.map_values(lambda a: np.trace(a, axis1=-2, axis2=-1), "scalar")


def wedge_components(ca, p, kind_a, cb, q, kind_b, d):
    """Shuffle-sum wedge on coefficient arrays."""
    prod = _product(kind_a, kind_b)
    if p + q > d:
        return None
    out = []
    for terms in _shuffle_table(d, p, q):
        acc = 0
        for i, j, s in terms:
            term = prod(ca[:, i], cb[:, j])
            acc = acc + (term if s > 0 else -term)
        out.append(acc)
    return np.stack(out, axis=1) if not isinstance(out[0], int) else None


def wedge(a, b):
    """a ^ b via the shuffle sum; matrix values multiply in the order a, b.

    A degree sum above the manifold dimension gives the zero form.
    """
    _compatible(a, b)
    p, q, d = a.degree, b.degree, a.dim
    kind = _result_kind(a.kind, b.kind)
    if p + q > d:
        return zero_form(a.atlas, p + q, kind)

    def comp(c, pts):
        return wedge_components(a.components(c, pts), p, a.kind,
                                b.components(c, pts), q, b.kind, d)

    return FormField(a.atlas, p + q, comp, kind)


def exterior_derivative_numeric(a, step=1e-4):
    """Coordinate formula for d with central differences of the coefficients.

    For test use (closedness, transgression checks); production paths never
    differentiate numerically.
    """
    if not step > 0:
        raise ArgumentError(f"finite-difference step must be positive, got {step}")
    d, p = a.dim, a.degree
    if p + 1 > d:
        return zero_form(a.atlas, p + 1, a.kind)
    lower = {c: n for n, c in enumerate(combos(d, p))}

    def comp(c, pts):
        pts = np.atleast_2d(pts)
        B = len(pts)
        shifted = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            shifted.append(pts + e)
            shifted.append(pts - e)
        vals = a.components(c, np.concatenate(shifted))
        vals = vals.reshape((2 * d, B) + vals.shape[1:])
        deriv = [(vals[2 * i] - vals[2 * i + 1]) / (2 * step) for i in range(d)]
        out = []
        for K in combos(d, p + 1):
            acc = 0
            for j, kj in enumerate(K):
                rest = K[:j] + K[j + 1:]
                term = deriv[kj][:, lower[rest]]
                acc = acc + (term if j % 2 == 0 else -term)
            out.append(acc)
        return np.stack(out, axis=1)

    return FormField(a.atlas, p + 1, comp, a.kind)


def pullback(form, mapping, source_atlas, source_chart=None, target_chart=None):
    """Pull ``form`` back along ``mapping(chart, x) -> target coordinates`` (jets).

    Components transform with the p x p minors of the Jacobian.
    """
    d_src, d_tgt, p = source_atlas.dim, form.dim, form.degree

    def comp(c, pts):
        x = dual.variables(pts, order=1)
        y = mapping(c, x)
        ys = np.stack([yi.val for yi in y], axis=1)
        jac = np.stack([yi.grad for yi in y], axis=1)  # (B, d_tgt, d_src)
        vals = form.components(form.atlas.chart(target_chart).name, ys)
        if p == 0:
            return vals
        out = []
        for I in combos(d_src, p):
            acc = 0
            for n, J in enumerate(combos(d_tgt, p)):
                minor = np.linalg.det(jac[:, list(J)][:, :, list(I)])
                acc = acc + _scale_batch(vals[:, n], minor)
            out.append(acc)
        return np.stack(out, axis=1)

    return FormField(source_atlas, p, comp, form.kind)


# ---------------------------------------------------------------------------
# integration

@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "gauss-legendre"
    nodes: Optional[int] = None
    samples: int = 2_000_000
    seed: int = 0
    chunk: int = 1 << 15

    def __post_init__(self):
        if self.scheme not in ("gauss-legendre", "monte-carlo"):
            raise ArgumentError(f"unknown quadrature scheme {self.scheme!r}")
        if self.nodes is not None and self.nodes < 2:
            raise ArgumentError("nodes-per-axis must be >= 2")
        if self.samples < 1000:
            raise ArgumentError("sample-count must be >= 1000")
        if self.chunk < 1:
            raise ArgumentError("chunk size must be positive")

    def nodes_for(self, dim):
        if self.nodes is not None:
            return self.nodes
        return 48 if dim <= 3 else 24

    def refined(self):
        """Same scheme with nodes-per-axis (or samples) doubled."""
        if self.scheme == "monte-carlo":
            return QuadratureSpec(self.scheme, self.nodes, 2 * self.samples, self.seed, self.chunk)
        return QuadratureSpec(self.scheme, 2 * (self.nodes or 0) or None, self.samples,
                              self.seed, self.chunk)


class IntegrationResult(NamedTuple):
    value: complex
    stderr: Optional[float]
    evaluations: int


def gauss_legendre_grid(lower, upper, n):
    """1-D Gauss-Legendre nodes/weights per axis mapped onto [lower, upper]."""
    x, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = [], []
    for lo, hi in zip(lower, upper):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return nodes, weights


def tensor_chunk(nodes, weights, start, stop):
    """Points and weights for flat indices [start, stop) of a tensor grid."""
    shape = tuple(len(n) for n in nodes)
    idx = np.unravel_index(np.arange(start, stop), shape)
    pts = np.stack([nodes[a][idx[a]] for a in range(len(nodes))], axis=1)
    w = np.ones(stop - start)
    for a in range(len(nodes)):
        w = w * weights[a][idx[a]]
    return pts, w


def counter_stream(seed, chunk_index):
    """Counter-based generator keyed by (seed, chunk index)."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, chunk_index],
                                                             dtype=np.uint64)))


def fsum_complex(values):
    values = list(values)
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


def _orientation_sign(orientation, d):
    if orientation is None:
        return 1
    if isinstance(orientation, int):
        if orientation not in (1, -1):
            raise ArgumentError("orientation sign must be +1 or -1")
        return orientation
    if sorted(orientation) != list(range(d)):
        raise ArgumentError(f"orientation must be a permutation of range({d})")
    return _perm_sign(orientation)


def integrate(a, q=None, orientation=None, map_fn=map):
    """Integrate a top-degree form over its atlas.

    ``orientation`` is None (chart coordinate order), +-1, or a coordinate
    permutation.  ``map_fn`` is any map-like callable; work is split into
    fixed chunks so the result does not depend on how chunks are scheduled.
    """
    q = q or QuadratureSpec()
    d = a.dim
    if a.degree != d:
        raise ArgumentError(f"integrate needs a top-degree form ({d}), got degree {a.degree}")
    if a.kind == "symbol":
        raise ArgumentError("symbol-valued forms must be traced before integration")
    sign = _orientation_sign(orientation, d)
    total, sq, count = [], [], 0
    for chart in a.atlas.charts:
        lo, hi = chart.lower, chart.upper
        if q.scheme == "gauss-legendre":
            n = q.nodes_for(d)
            nodes, weights = gauss_legendre_grid(lo, hi, n)
            npts = n ** d
            starts = list(range(0, npts, q.chunk))

            def work(s, nodes=nodes, weights=weights, npts=npts, name=chart.name):
                pts, w = tensor_chunk(nodes, weights, s, min(s + q.chunk, npts))
                vals = a.components(name, pts)[:, 0]
                return complex(np.sum(w.reshape(w.shape + (1,) * (vals.ndim - 1)) * vals))

            total.extend(map_fn(work, starts))
            count += npts
        else:
            vol = chart.volume()
            nchunks = -(-q.samples // q.chunk)

            def work(ci, lo=lo, hi=hi, vol=vol, name=chart.name):
                m = min(q.chunk, q.samples - ci * q.chunk)
                u = counter_stream(q.seed, ci).random((m, d))
                pts = lo + (hi - lo) * u
                vals = vol * a.components(name, pts)[:, 0]
                return complex(np.sum(vals)), float(np.sum(np.abs(vals) ** 2))

            parts = list(map_fn(work, range(nchunks)))
            n = q.samples
            s1 = fsum_complex(p[0] for p in parts)
            s2 = math.fsum(p[1] for p in parts)
            mean = s1 / n
            var = max(s2 / n - abs(mean) ** 2, 0.0) * n / (n - 1)
            total.append(mean)
            sq.append(var / n)
            count += n
    value = sign * fsum_complex(total)
    stderr = math.sqrt(math.fsum(sq)) if q.scheme == "monte-carlo" else None
    if abs(value.imag) == 0.0:
        value = value.real
    return IntegrationResult(value, stderr, count)
