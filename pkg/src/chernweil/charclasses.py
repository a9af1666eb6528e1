"""Connections, Chern-Weil forms, transgression forms and fiber integration.

A :class:`ConnectionField` is described by its local connection 1-form
omega and the coordinate derivatives of omega, both evaluated in one batch:

    omega[b, mu]      = omega_mu          (r x r, or a symbol expansion)
    domega[b, nu, mu] = d_nu omega_mu

The curvature is F = d omega + omega ^ omega, so that

    F(e_mu, e_nu) = d_mu omega_nu - d_nu omega_mu + [omega_mu, omega_nu].

Invariant polynomials carry a normalisation lambda which scales the
curvature argument: a trace power of degree k evaluates lambda^k tr F^k.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dual
from .errors import ArgumentError
from .forms import (FormField, QuadratureSpec, combos, gauss_legendre_grid, pullback,
                    tensor_chunk, wedge_components, zero_form, fsum_complex)
from .geometry import Chart, ChartAtlas, christoffel_with_derivative, metric_from_id, parse_id
from .groups import group_from_name, su2
from .symbols import SymbolExpansion, leading_order_trace, wodzicki_residue

__all__ = [
    "ConnectionField", "InvariantPolynomial", "ProductFibration", "char_form", "pfaffian",
    "relative_cs_form", "maurer_cartan_form", "maurer_cartan_connection", "trace_power_form",
    "fiber_integration", "bismut_vertical_char_form", "leading_order_char_form",
    "multiplication_family", "monopole", "random_connection", "connection_from_id",
    "sphere_embedding", "su2_embedding",
]


# ---------------------------------------------------------------------------
# connections

def _curvature_components(omega, domega, kind, d):
    out = []
    for mu, nu in combos(d, 2):
        dpart = domega[:, mu, nu] - domega[:, nu, mu]
        if kind == "symbol":
            comm = _obj_product(omega[:, mu], omega[:, nu]) - _obj_product(omega[:, nu], omega[:, mu])
        else:
            comm = omega[:, mu] @ omega[:, nu] - omega[:, nu] @ omega[:, mu]
        out.append(dpart + comm)
    if not out:
        return np.zeros((omega.shape[0], 0) + omega.shape[2:], dtype=omega.dtype)
    return np.stack(out, axis=1)


def _obj_compose(a, b):
    if isinstance(a, SymbolExpansion) and isinstance(b, SymbolExpansion):
        return a @ b
    return a * b


_obj_product = np.frompyfunc(_obj_compose, 2, 1)


class ConnectionField:
    """Connection on a rank-r bundle trivialised over each chart.

    Parameters
    ----------
    atlas : ChartAtlas
    rank : int
    fields : callable
        ``fields(chart, points) -> (omega, domega)`` as described in the
        module docstring.
    kind : {"matrix", "symbol"}
        Value kind; symbol connections take values in symbol expansions.
    metric : MetricField, optional
        Set for Levi-Civita connections; used to pass to orthonormal frames.
    """

    def __init__(self, atlas, rank, fields, kind="matrix", metric=None, name="connection"):
        if rank < 1:
            raise ArgumentError("bundle rank must be >= 1")
        if kind not in ("matrix", "symbol"):
            raise ArgumentError(f"unknown connection kind {kind!r}")
        self.atlas, self.rank, self.fields = atlas, rank, fields
        self.kind, self.metric, self.name = kind, metric, name

    def __repr__(self):
        return f"ConnectionField({self.name!r}, rank={self.rank}, kind={self.kind})"

    @property
    def dim(self):
        return self.atlas.dim

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_potential(cls, atlas, rank, potential, name="connection"):
        """Connection from ``potential(chart, x) -> [omega_mu for mu]``.

        Each entry may be a jet of shape (B, r, r), a constant (r, r) matrix,
        or 0.
        """
        d = atlas.dim

        def fields(chart, pts):
            B = len(pts)
            x = dual.variables(pts, order=1)
            omega = np.zeros((B, d, rank, rank), dtype=complex)
            domega = np.zeros((B, d, d, rank, rank), dtype=complex)
            for mu, w in enumerate(potential(chart, x)):
                if isinstance(w, dual.Jet):
                    omega[:, mu] = w.val
                    domega[:, :, mu] = np.moveaxis(w.grad, -1, 1)
                else:
                    omega[:, mu] = np.asarray(w)
            return omega, domega

        return cls(atlas, rank, fields, name=name)

    @classmethod
    def from_generators(cls, atlas, coefficients, generators, name="connection"):
        """omega_mu = sum_a c_{mu a}(x) G_a with constant generators G_a.

        ``coefficients(chart, x)`` returns, for each mu, a list of scalar
        jets (one per generator).  Generators are r x r matrices or symbol
        expansions; the latter give a symbol-valued connection.
        """
        gens = list(generators)
        symbolic = isinstance(gens[0], SymbolExpansion)
        rank = gens[0].rank if symbolic else np.asarray(gens[0]).shape[0]
        d = atlas.dim

        def coeff_arrays(chart, pts):
            B = len(pts)
            x = dual.variables(pts, order=1)
            c = np.zeros((B, d, len(gens)), dtype=complex)
            dc = np.zeros((B, d, d, len(gens)), dtype=complex)
            for mu, row in enumerate(coefficients(chart, x)):
                for a, f in enumerate(row):
                    if isinstance(f, dual.Jet):
                        c[:, mu, a] = f.val
                        dc[:, :, mu, a] = f.grad
                    else:
                        c[:, mu, a] = f
            return c, dc

        if not symbolic:
            G = np.stack([np.asarray(g, dtype=complex) for g in gens])

            def fields(chart, pts):
                c, dc = coeff_arrays(chart, pts)
                return (np.einsum("bma,aij->bmij", c, G),
                        np.einsum("bnma,aij->bnmij", dc, G))

            return cls(atlas, rank, fields, name=name)

        def fields(chart, pts):
            c, dc = coeff_arrays(chart, pts)
            B = len(pts)
            omega = np.empty((B, d), dtype=object)
            domega = np.empty((B, d, d), dtype=object)
            for b in range(B):
                for mu in range(d):
                    omega[b, mu] = _combine(c[b, mu], gens)
                    for nu in range(d):
                        domega[b, nu, mu] = _combine(dc[b, nu, mu], gens)
            return omega, domega

        return cls(atlas, rank, fields, kind="symbol", name=name)

    @classmethod
    def levi_civita(cls, metric):
        """omega_mu^i_j = Gamma^i_{mu j} on the tangent bundle."""
        def fields(chart, pts):
            _, gamma, dgamma = christoffel_with_derivative(metric, chart, pts, check=False)
            omega = np.einsum("bimj->bmij", gamma)
            domega = np.einsum("bimjn->bnmij", dgamma)
            return omega.astype(complex), domega.astype(complex)

        return cls(metric.atlas, metric.dim, fields, metric=metric,
                   name=f"levi-civita({metric.name})")

    @classmethod
    def trivial(cls, atlas, rank, kind="matrix"):
        d = atlas.dim

        def fields(chart, pts):
            B = len(pts)
            return (np.zeros((B, d, rank, rank), dtype=complex),
                    np.zeros((B, d, d, rank, rank), dtype=complex))

        return cls(atlas, rank, fields, name="trivial")

    # -- algebra ----------------------------------------------------------
    def _check_same_bundle(self, other):
        if self.atlas != other.atlas:
            raise ArgumentError("connections live on different atlases")
        if self.rank != other.rank:
            raise ArgumentError(f"rank mismatch ({self.rank} vs {other.rank})")
        if self.kind != other.kind:
            raise ArgumentError("cannot mix matrix and symbol connections")

    def __add__(self, other):
        """Sum of connection forms (a connection plus an End-valued 1-form)."""
        self._check_same_bundle(other)

        def fields(chart, pts):
            w0, d0 = self.fields(chart, pts)
            w1, d1 = other.fields(chart, pts)
            return w0 + w1, d0 + d1

        return ConnectionField(self.atlas, self.rank, fields, self.kind, self.metric,
                               f"{self.name}+{other.name}")

    def pullback(self, mapping, source_atlas, target_chart=None):
        """Pull back along ``mapping(chart, x) -> target coordinates`` (jets)."""
        tname = self.atlas.chart(target_chart).name

        def fields(chart, pts):
            x = dual.variables(pts, order=2)
            y = mapping(chart, x)
            ys = np.stack([yi.val for yi in y], axis=1)
            jac = np.stack([yi.grad for yi in y], axis=1)       # (B, dt, ds)
            hes = np.stack([yi.hess for yi in y], axis=1)       # (B, dt, ds, ds)
            w, dw = self.fields(tname, ys)
            if self.kind == "symbol":
                raise ArgumentError("pullback of symbol connections is not supported")
            omega = np.einsum("bmij,bma->baij", w, jac)
            domega = (np.einsum("bnmij,bnc,bma->bcaij", dw, jac, jac)
                      + np.einsum("bmij,bmac->bcaij", w, hes))
            return omega, domega

        return ConnectionField(source_atlas, self.rank, fields, self.kind,
                               name=f"pullback({self.name})")

    # -- forms ------------------------------------------------------------
    def connection_form(self):
        return FormField(self.atlas, 1, lambda c, p: self.fields(c, p)[0], self.kind)

    def curvature_components(self, chart, points):
        omega, domega = self.fields(chart, points)
        return _curvature_components(omega, domega, self.kind, self.dim)

    def curvature(self):
        """F = d omega + omega ^ omega as a matrix- or symbol-valued 2-form."""
        return FormField(self.atlas, 2, self.curvature_components, self.kind)


def _combine(coeffs, gens):
    out = 0
    for c, g in zip(coeffs, gens):
        if c != 0:
            out = out + complex(c) * g
    if isinstance(out, int):
        return 0 * gens[0]
    return out


# ---------------------------------------------------------------------------
# invariant polynomials

def pfaffian(A):
    """Pfaffian of an even-rank skew matrix by cofactor expansion on row 0."""
    A = np.asarray(A)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ArgumentError("pfaffian needs a square matrix")
    if n % 2:
        raise ArgumentError(f"pfaffian needs even rank, got {n}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A + A.T).max(initial=0.0) >= 1e-12 * scale:
        raise ArgumentError("pfaffian needs a skew-symmetric matrix")
    return _pf(A)


def _pf(A):
    n = A.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for j in range(1, n):
        if A[0, j] == 0:
            continue
        keep = [i for i in range(1, n) if i != j]
        total = total + (-1) ** (j + 1) * A[0, j] * _pf(A[np.ix_(keep, keep)])
    return total


def _perfect_matchings(items):
    """Yield (sign, pairs) over perfect matchings of ``items``."""
    if not items:
        yield 1, []
        return
    first, rest = items[0], items[1:]
    for j, partner in enumerate(rest):
        remaining = rest[:j] + rest[j + 1:]
        for sign, pairs in _perfect_matchings(remaining):
            yield (-1) ** j * sign, [(first, partner)] + pairs


# log of the A-hat genus: sum_j A_HAT_LOG[j] tr F^{2j}
A_HAT_LOG = {1: -1.0 / 48, 2: 1.0 / 5760, 3: -1.0 / 362880}


@dataclass(frozen=True)
class InvariantPolynomial:
    """Ad-invariant polynomial on matrices.

    Parameters
    ----------
    kind : {"trace-power", "pfaffian", "a-hat", "chern-character"}
    degree : int
        k for trace powers; maximal form degree for the truncated series.
    normalization : complex
        Scalar lambda applied to the argument, p(lambda A).
    """

    kind: str
    degree: int = 1
    normalization: complex = 1.0

    def __post_init__(self):
        if self.kind not in ("trace-power", "pfaffian", "a-hat", "chern-character"):
            raise ArgumentError(f"unknown invariant polynomial {self.kind!r}")
        if self.kind == "trace-power" and self.degree < 1:
            raise ArgumentError("trace power needs k >= 1")

    @classmethod
    def trace_power(cls, k, normalization=1.0):
        return cls("trace-power", k, normalization)

    @classmethod
    def chern(cls, k=1):
        """tr of the k-th power with the (i / 2 pi) normalisation."""
        return cls("trace-power", k, 1j / (2 * np.pi))

    def evaluate(self, A):
        """Value on a single matrix (sum of all homogeneous parts for series)."""
        A = self.normalization * np.asarray(A, dtype=complex)
        if self.kind == "trace-power":
            return np.trace(np.linalg.matrix_power(A, self.degree))
        if self.kind == "pfaffian":
            return pfaffian(A)
        powers = {j: np.trace(np.linalg.matrix_power(A, j)) for j in range(1, self.degree + 1)}
        if self.kind == "chern-character":
            return A.shape[0] + sum(powers[j] / math.factorial(j) for j in powers)
        # exp of the log series, truncated at matrix degree ``degree``
        log_terms = {2 * j: c * powers.get(2 * j, 0.0) for j, c in A_HAT_LOG.items()
                     if 2 * j <= self.degree}
        return _exp_graded(log_terms, self.degree, lambda a, b: a * b, 1.0,
                           lambda: 0.0)[None]


def _exp_graded(log_terms, max_deg, mul, one, zero):
    """exp of a graded element without degree-0 part, truncated at max_deg.

    Returns a dict degree -> value, or the total under key None.
    """
    result = {0: one}
    term = {0: one}
    for n in range(1, max_deg // 2 + 1):
        new = {}
        for da, a in term.items():
            for db, b in log_terms.items():
                if da + db <= max_deg:
                    prod = mul(a, b)
                    new[da + db] = new[da + db] + prod if da + db in new else prod
        term = {k: v * (1.0 / n) for k, v in new.items()}
        for k, v in term.items():
            result[k] = result[k] + v if k in result else v
    total = zero()
    if total is not None:
        for v in list(result.values()):
            total = total + v
        result[None] = total
    return result


# ---------------------------------------------------------------------------
# Chern-Weil forms

def _power_components(Fc, k, d, kind):
    """Components of F ^ ... ^ F (k factors) as a 2k-form."""
    P, deg = Fc, 2
    for _ in range(k - 1):
        P = wedge_components(P, deg, kind, Fc, 2, kind, d)
        deg += 2
    return P


def _matrix_trace(a):
    return np.trace(a, axis1=-2, axis2=-1)


def trace_power_form(conn, k, normalization=1.0):
    """lambda^k tr(F ^ ... ^ F) as a scalar 2k-form."""
    d = conn.dim
    if conn.kind != "matrix":
        raise ArgumentError("trace_power_form needs a matrix connection; use "
                            "leading_order_char_form for symbol values")
    if 2 * k > d:
        return zero_form(conn.atlas, 2 * k)
    lam = normalization ** k

    def comp(c, pts):
        Fc = conn.curvature_components(c, pts)
        return lam * _matrix_trace(_power_components(Fc, k, d, "matrix"))

    return FormField(conn.atlas, 2 * k, comp)


def _orthonormal(conn, Fc, c, pts):
    """Curvature endomorphisms in an orthonormal frame (Levi-Civita only)."""
    if conn.metric is None:
        return Fc
    g = conn.metric.evaluate(c, pts)
    L = np.linalg.cholesky(g)                       # g = L L^T
    Linv_T = np.swapaxes(np.linalg.inv(L), -1, -2)
    return np.einsum("bji,bkjl,blm->bkim", L, Fc, Linv_T)


def _pfaffian_form(conn, normalization):
    d, r = conn.dim, conn.rank
    if r % 2:
        raise ArgumentError(f"pfaffian needs even rank, got {r}")
    m = r // 2
    if 2 * m > d:
        return zero_form(conn.atlas, 2 * m)
    lam = normalization ** m

    def comp(c, pts):
        Fc = _orthonormal(conn, conn.curvature_components(c, pts), c, pts)
        scale = max(1.0, float(np.abs(Fc).max(initial=0.0)))
        if np.abs(Fc + np.swapaxes(Fc, -1, -2)).max(initial=0.0) > 1e-9 * scale:
            raise ArgumentError("pfaffian needs skew-symmetric curvature "
                                "(pass a Levi-Civita connection or a skew one)")
        total = 0
        for sign, pairs in _perfect_matchings(list(range(r))):
            P, deg = Fc[:, :, pairs[0][0], pairs[0][1]], 2
            for i, j in pairs[1:]:
                P = wedge_components(P, deg, "scalar", Fc[:, :, i, j], 2, "scalar", d)
                deg += 2
            total = total + sign * P
        return lam * total

    return FormField(conn.atlas, 2 * m, comp)


def _series_forms(conn, p):
    """Homogeneous parts {degree: FormField} of a-hat or chern-character."""
    d = conn.dim
    top = min(p.degree, d)
    atlas = conn.atlas
    lam = p.normalization
    traces = {j: trace_power_form(conn, j, lam) for j in range(1, top // 2 + 1)}
    one = FormField(atlas, 0, lambda c, pts: np.ones((len(pts), 1), dtype=complex))
    if p.kind == "chern-character":
        out = {0: one * conn.rank}
        for j, f in traces.items():
            out[2 * j] = f * (1.0 / math.factorial(j))
        return out
    from .forms import wedge
    log_terms = {2 * (2 * j): c * traces[2 * j] for j, c in A_HAT_LOG.items()
                 if 2 * j in traces}
    parts = _exp_graded(log_terms, top, wedge, one, lambda: None)
    return dict(sorted(parts.items()))


def char_form(conn, p):
    """Chern-Weil form p(F) of a connection.

    Returns a :class:`FormField` for trace powers and the Pfaffian, and a
    dict ``{degree: FormField}`` of homogeneous parts for the truncated
    a-hat and Chern-character series.
    """
    if p.kind == "trace-power":
        return trace_power_form(conn, p.degree, p.normalization)
    if p.kind == "pfaffian":
        return _pfaffian_form(conn, p.normalization)
    return _series_forms(conn, p)


# ---------------------------------------------------------------------------
# transgression

TRACES = ("matrix-trace", "wodzicki", "leading-order")


def _trace_fn(trace):
    if trace == "matrix-trace":
        return _matrix_trace
    fn = {"wodzicki": wodzicki_residue, "leading-order": leading_order_trace}[trace]
    scalar = np.frompyfunc(lambda s: fn(s) if isinstance(s, SymbolExpansion) else 0.0, 1, 1)
    return lambda a: np.asarray(scalar(a), dtype=complex)


def relative_cs_form(conn0, conn1, k, trace="matrix-trace", nodes=16, raw=False):
    """Transgression (2k-1)-form between two connections on one bundle.

    With eta = omega_1 - omega_0 and omega_t = t omega_0 + (1 - t) omega_1,
    the form is k * int_0^1 trace(eta ^ F_t^{k-1}) dt, normalised so that
    d CS = trace(F_1^k) - trace(F_0^k).  ``raw=True`` drops the factor k.
    The t-integral uses Gauss-Legendre with ``nodes`` points.
    """
    conn0._check_same_bundle(conn1)
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if trace not in TRACES:
        raise ArgumentError(f"unknown trace {trace!r}; choose from {TRACES}")
    if trace != "matrix-trace" and conn0.kind != "symbol":
        raise ArgumentError(f"{trace} trace needs symbol-valued connections")
    if trace == "matrix-trace" and conn0.kind != "matrix":
        raise ArgumentError("symbol-valued connections need the wodzicki or leading-order trace")
    d, kind = conn0.dim, conn0.kind
    if 2 * k - 1 > d:
        return zero_form(conn0.atlas, 2 * k - 1)
    tr = _trace_fn(trace)
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts, ws = 0.5 * (x + 1.0), 0.5 * w
    factor = 1.0 if raw else float(k)

    def comp(c, pts):
        w0, dw0 = conn0.fields(c, pts)
        w1, dw1 = conn1.fields(c, pts)
        eta = w1 - w0
        if k == 1:
            return factor * tr(eta)
        acc = 0
        for t, wt in zip(ts, ws):
            wt_ = t * w0 + (1.0 - t) * w1
            dwt = t * dw0 + (1.0 - t) * dw1
            Ft = _curvature_components(wt_, dwt, kind, d)
            P, deg = eta, 1
            for _ in range(k - 1):
                P = wedge_components(P, deg, kind, Ft, 2, kind, d)
                deg += 2
            acc = acc + wt * tr(P)
        return factor * acc

    return FormField(conn0.atlas, 2 * k - 1, comp)


# ---------------------------------------------------------------------------
# Maurer-Cartan forms

def maurer_cartan_form(group, point, tangent):
    """g^{-1} dg(tangent) at a chart point of ``group`` (name or MatrixGroup)."""
    G = group_from_name(group) if isinstance(group, str) else group
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    chart = G.atlas.chart()
    if pts.shape[1] != G.dim or not np.all((pts >= chart.lower) & (pts <= chart.upper)):
        raise ArgumentError(f"point {point} is not in the {G.name} chart")
    g = G.jet(pts, order=1)
    dg = np.einsum("bijm,m->bij", g.grad, np.asarray(tangent, dtype=float))
    return (np.linalg.inv(g.val) @ dg)[0]


def maurer_cartan_connection(group):
    """The flat connection omega = g^{-1} dg on the trivial bundle."""
    G = group_from_name(group) if isinstance(group, str) else group

    def fields(chart, pts):
        jet = G.jet(pts, order=2)
        ginv = np.linalg.inv(jet.val)
        dg = np.moveaxis(jet.grad, -1, 1)                    # (B, mu, n, n)
        ddg = np.moveaxis(jet.hess, (-2, -1), (1, 2))        # (B, nu, mu, n, n)
        omega = ginv[:, None] @ dg
        a = ginv[:, None] @ dg                               # g^-1 d_nu g
        domega = (-a[:, :, None] @ omega[:, None, :] + ginv[:, None, None] @ ddg)
        return omega, domega

    return ConnectionField(G.atlas, G.size, fields, name=f"maurer-cartan({G.name})")


# ---------------------------------------------------------------------------
# fibrations

@dataclass(frozen=True)
class ProductFibration:
    """Product Z x B -> B; total coordinates are (z, b) with z first."""

    fiber: ChartAtlas
    base: ChartAtlas

    @property
    def total(self):
        charts = tuple(Chart(f"{cz.name}*{cb.name}", cz.ranges + cb.ranges)
                       for cz in self.fiber.charts for cb in self.base.charts)
        return ChartAtlas(f"{self.fiber.name}*{self.base.name}", charts)

    def lift(self, fiber_chart, base_chart):
        return f"{self.fiber.chart(fiber_chart).name}*{self.base.chart(base_chart).name}"

    def fiber_projection(self):
        """Coordinate map Z x B -> Z (for pulling forms back from the fiber)."""
        m = self.fiber.dim
        return lambda chart, x: x[:m]


def fiber_integration(form, fibration, q=None):
    """Integrate ``form`` on Z x B over the fiber Z.

    For base vectors v, (int_Z a)(v) = int_Z a(e_{z_1}, ..., e_{z_m}, v);
    the fiber directions are contracted first.  With this convention
    d int_Z = (-1)^m int_Z d on closed fibers.
    """
    q = q or QuadratureSpec()
    m, nb = fibration.fiber.dim, fibration.base.dim
    p = form.degree - m
    if form.atlas != fibration.total:
        raise ArgumentError("form does not live on the total space of the fibration")
    if p < 0:
        return zero_form(fibration.base, 0, form.kind)
    if q.scheme != "gauss-legendre":
        raise ArgumentError("fiber integration uses Gauss-Legendre quadrature")
    total_combos = {c: n for n, c in enumerate(combos(m + nb, form.degree))}
    index = [total_combos[tuple(range(m)) + tuple(m + j for j in J)] for J in combos(nb, p)]
    n = q.nodes_for(m)

    def comp(cb, pts):
        pts = np.atleast_2d(pts)
        out = 0
        for cz in fibration.fiber.charts:
            nodes, weights = gauss_legendre_grid(cz.lower, cz.upper, n)
            zpts, zw = tensor_chunk(nodes, weights, 0, n ** m)
            B, Z = len(pts), len(zpts)
            full = np.concatenate([np.repeat(zpts[None], B, 0),
                                   np.repeat(pts[:, None], Z, 1)], axis=2).reshape(B * Z, m + nb)
            vals = form.components(fibration.lift(cz.name, cb), full)[:, index]
            vals = vals.reshape((B, Z) + vals.shape[1:])
            out = out + np.einsum("z,bz...->b...", zw, vals)
        return out

    return FormField(fibration.base, p, comp, form.kind)


def bismut_vertical_char_form(fibration, connE, k, normalization=1.0, q=None):
    """b -> int_Z tr(R^E ^ ... ^ R^E) as a (2k - dim Z)-form on the base."""
    if 2 * k - fibration.fiber.dim < 0:
        return zero_form(fibration.base, 0)
    return fiber_integration(trace_power_form(connE, k, normalization), fibration, q)


# ---------------------------------------------------------------------------
# symbol-valued curvature

def multiplication_family(conn, cutoff=2, depth=0, profile=None):
    """Curvature of ``conn`` as a 2-form valued in multiplication symbols.

    ``profile`` optionally gives scalar Fourier data (2 cutoff + 1,) on S^1
    multiplying every value (default: constant 1).
    """
    if conn.kind != "matrix":
        raise ArgumentError("multiplication_family needs a matrix connection")
    prof = np.zeros(2 * cutoff + 1, dtype=complex)
    if profile is None:
        prof[cutoff] = 1.0
    else:
        prof[:] = profile

    def comp(c, pts):
        Fc = conn.curvature_components(c, pts)
        out = np.empty(Fc.shape[:2], dtype=object)
        for idx in np.ndindex(*Fc.shape[:2]):
            coeffs = np.zeros((depth + 1, 2, 2 * cutoff + 1) + Fc.shape[2:], dtype=complex)
            coeffs[0, :] = prof[:, None, None] * Fc[idx]
            out[idx] = SymbolExpansion(0.0, coeffs)
        return out

    return FormField(conn.atlas, 2, comp, "symbol")


def leading_order_char_form(family, k, weight=None):
    """Leading-order trace of the k-th wedge power of a symbol curvature.

    ``family`` is a symbol-valued 2-form whose values must be
    xi-independent order-0 symbols (multiplication operators).
    """
    if family.kind != "symbol" or family.degree != 2:
        raise ArgumentError("leading_order_char_form needs a symbol-valued 2-form")
    if k < 1:
        raise ArgumentError("k must be >= 1")
    d = family.dim
    if 2 * k > d:
        return zero_form(family.atlas, 2 * k)
    check = np.frompyfunc(lambda s: (not isinstance(s, SymbolExpansion)) or s.is_multiplication(), 1, 1)
    trace = np.frompyfunc(lambda s: leading_order_trace(s, weight)
                          if isinstance(s, SymbolExpansion) else 0.0, 1, 1)

    def comp(c, pts):
        Fc = family.components(c, pts)
        if not np.all(check(Fc).astype(bool)):
            raise ArgumentError("leading_order_char_form needs order-0, xi-independent "
                                "symbol values")
        P = _power_components(Fc, k, d, "symbol")
        return np.asarray(trace(P), dtype=complex)

    return FormField(family.atlas, 2 * k, comp)


# ---------------------------------------------------------------------------
# catalog connections

def monopole(n):
    """Charge-n U(1) connection on S^2: omega = -(i n / 2)(1 - cos theta) dphi."""
    from .geometry import round_sphere
    atlas = round_sphere(2).atlas

    def potential(chart, x):
        return [0.0, dual.times(-0.5j * n * (1.0 - dual.cos(x[0])), np.eye(1))]

    return ConnectionField.from_potential(atlas, 1, potential, name=f"monopole({n})")


def sphere_embedding(chart, x):
    """Unit S^2 in R^3 from (theta, phi)."""
    th, ph = x[0], x[1]
    return [dual.sin(th) * dual.cos(ph), dual.sin(th) * dual.sin(ph), dual.cos(th)]


def su2_embedding(chart, x):
    """SU(2) = S^3 in R^4 via the first row of the Euler-angle matrix."""
    g = su2().element(x)
    return [dual.real(g[0][0]), dual.imag(g[0][0]), dual.real(g[0][1]), dual.imag(g[0][1])]


def _random_antihermitian(rng, r):
    a = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    return 0.5 * (a - a.conj().T)


def random_connection(atlas, rank, embedding, seed, scale=0.5):
    """Globally smooth End-valued 1-form sum_j P_j(Y) dY_j for an embedding Y.

    P_j are anti-hermitian matrices, affine in Y with random coefficients, so
    the resulting connection (on its own or added to another) is unitary.
    """
    def fields(chart, pts):
        x = dual.variables(pts, order=2)
        Y = embedding(chart, x)
        J = len(Y)
        C = scale * np.stack([_random_antihermitian(np.random.default_rng([seed, j]), rank)
                              for j in range(J)])
        D = scale * np.stack([[_random_antihermitian(np.random.default_rng([seed, j, l]), rank)
                               for l in range(J)] for j in range(J)])
        yv = np.stack([y.val for y in Y], axis=1)            # (B, J)
        dy = np.stack([y.grad for y in Y], axis=1)           # (B, J, d)
        ddy = np.stack([y.hess for y in Y], axis=1)          # (B, J, d, d)
        P = C[None] + np.einsum("jlpq,bl->bjpq", D, yv)      # (B, J, r, r)
        dP = np.einsum("jlpq,bln->bnjpq", D, dy)             # (B, nu, J, r, r)
        omega = np.einsum("bjpq,bjm->bmpq", P, dy)
        domega = (np.einsum("bnjpq,bjm->bnmpq", dP, dy)
                  + np.einsum("bjpq,bjmn->bnmpq", P, ddy))
        return omega, domega

    return ConnectionField(atlas, rank, fields, name=f"random(seed={seed})")


def connection_from_id(ident):
    """Resolve "monopole?n=1", "levi-civita?metric=round-s2" or "mc-flat-su2"."""
    name, params = parse_id(ident)
    if name == "monopole":
        return monopole(int(params.get("n", 1)))
    if name == "levi-civita":
        return ConnectionField.levi_civita(metric_from_id(params.get("metric", "round-s2")))
    if name == "mc-flat-su2":
        return maurer_cartan_connection("SU(2)")
    raise ArgumentError(f"unknown connection {name!r}; known: monopole, levi-civita, mc-flat-su2")
