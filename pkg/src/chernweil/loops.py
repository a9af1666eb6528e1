"""Loop-group connections, the alpha map and WCS integrals over circle actions.

Loop algebra elements are Fourier polynomials with values in u(1) or su(2),
stored in the fundamental representation.  Operators on the loop algebra
(the H^s Levi-Civita connection, its curvature) act through the adjoint
representation in the basis e_a = -(i/2) sigma_a, where [e_a, e_b] =
eps_abc e_c and (ad X)_{cb} = X^a eps_abc.

The second half of the module evaluates the odd form

    CS_k(X_1..X_{2k-1}) = 2/(2k-1)! sum_sigma sgn(sigma) int_{S^1}
        tr[(-R(X_s1, v) - 2 B(X_s1)) R(X_s2, X_s3) ... R(X_s(2k-2), X_s(2k-1))]

along orbit loops of a circle action, with v the loop velocity, R(u, w) the
Riemann endomorphism and B(X) the endomorphism w -> R(w, v) X.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from . import dual
from .errors import ArgumentError
from .forms import QuadratureSpec, fsum_complex, gauss_legendre_grid, tensor_chunk, _perm_sign
from .geometry import Chart, ChartAtlas, MetricField, metric_from_id, parse_id, riemann_batch
from .symbols import (DEFAULT_CUTOFF, DEFAULT_DEPTH, SymbolExpansion, compose,
                      multiplication_symbol, power_symbol)

__all__ = [
    "LoopAlgebraElement", "hs_connection_operator", "hs_connection_terms", "hs_curvature",
    "alpha_map", "CircleAction", "SquashedMetricFamily", "wcs_form_at_loop",
    "wcs_integral", "WCSResult", "action_from_id", "SU2_BASIS",
]

_SIGMA = (np.array([[0, 1], [1, 0]], dtype=complex),
          np.array([[0, -1j], [1j, 0]], dtype=complex),
          np.array([[1, 0], [0, -1]], dtype=complex))
SU2_BASIS = tuple(-0.5j * s for s in _SIGMA)

_EPS = np.zeros((3, 3, 3))
for _a, _b, _c in itertools.permutations(range(3)):
    _EPS[_a, _b, _c] = _perm_sign((_a, _b, _c))

ALGEBRAS = {"u(1)": 1, "su(2)": 2}


# ---------------------------------------------------------------------------
# loop algebra

class LoopAlgebraElement:
    """A g-valued Fourier polynomial X(theta) = sum_k X_k e^{ik theta}.

    Parameters
    ----------
    algebra : {"u(1)", "su(2)"}
    coeffs : ndarray, shape (2N + 1, n, n)
        Fundamental-representation coefficients for modes -N..N.  They must
        satisfy X_{-k} = -X_k^H so that X(theta) is anti-hermitian.
    """

    def __init__(self, algebra, coeffs, tol=1e-12):
        if algebra not in ALGEBRAS:
            raise ArgumentError(f"unknown Lie algebra {algebra!r}; use u(1) or su(2)")
        coeffs = np.asarray(coeffs, dtype=complex)
        n = ALGEBRAS[algebra]
        if coeffs.ndim != 3 or coeffs.shape[1:] != (n, n) or coeffs.shape[0] % 2 != 1:
            raise ArgumentError(f"{algebra} coefficients need shape (2N+1, {n}, {n})")
        mirror = -np.conj(np.swapaxes(coeffs[::-1], -1, -2))
        scale = tol * max(1.0, np.abs(coeffs).max(initial=0.0))
        if np.abs(coeffs - mirror).max(initial=0.0) > scale:
            raise ArgumentError("coefficients violate the anti-hermitian reality condition")
        if algebra == "su(2)" and np.abs(np.trace(coeffs, axis1=1, axis2=2)).max() > scale:
            raise ArgumentError("su(2) coefficients must be traceless")
        self.algebra, self.coeffs = algebra, coeffs

    @property
    def cutoff(self):
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def modes(self):
        return np.arange(-self.cutoff, self.cutoff + 1)

    def __repr__(self):
        return f"LoopAlgebraElement({self.algebra}, cutoff={self.cutoff})"

    @classmethod
    def from_components(cls, algebra, comps):
        """From real-structure components: (2N+1,) for u(1), (2N+1, 3) for su(2)."""
        comps = np.asarray(comps, dtype=complex)
        if algebra == "u(1)":
            return cls(algebra, 1j * comps.reshape(-1, 1, 1))
        return cls(algebra, np.einsum("ka,aij->kij", comps, np.stack(SU2_BASIS)))

    @classmethod
    def random(cls, algebra, rng, modes=3, cutoff=DEFAULT_CUTOFF, scale=1.0):
        """Random band-limited element with |k| <= ``modes``."""
        if modes > cutoff:
            raise ArgumentError("band limit exceeds the Fourier cutoff")
        dim = 1 if algebra == "u(1)" else 3
        comps = np.zeros((2 * cutoff + 1, dim), dtype=complex)
        for k in range(modes + 1):
            v = rng.normal(size=dim) + (1j * rng.normal(size=dim) if k else 0)
            comps[cutoff + k] = scale * v
            comps[cutoff - k] = scale * np.conj(v)
        if algebra == "u(1)":
            comps = comps[:, 0]
        return cls.from_components(algebra, comps)

    def components(self):
        """Real-structure components: X^a_k = -2 tr(X_k e_a) for su(2)."""
        if self.algebra == "u(1)":
            return (-1j * self.coeffs[:, 0, 0])[:, None]
        return -2 * np.einsum("kij,aji->ka", self.coeffs, np.stack(SU2_BASIS))

    def adjoint(self):
        """Fourier coefficients of ad X, shape (2N+1, dim g, dim g)."""
        if self.algebra == "u(1)":
            return np.zeros((self.coeffs.shape[0], 1, 1), dtype=complex)
        return np.einsum("ka,abc->kcb", self.components(), _EPS)

    def scaled_modes(self, weights):
        """Multiply mode k by weights[k] (weights indexed like ``modes``)."""
        return LoopAlgebraElement(self.algebra, self.coeffs * np.asarray(weights)[:, None, None])

    def derivative(self, n=1):
        return self.scaled_modes((1j * self.modes) ** n)

    def bracket(self, other):
        """Pointwise bracket; modes beyond the cutoff must vanish."""
        if self.algebra != other.algebra or self.cutoff != other.cutoff:
            raise ArgumentError("bracket needs elements of the same loop algebra")
        N = self.cutoff
        full = np.zeros((4 * N + 1,) + self.coeffs.shape[1:], dtype=complex)
        for p in range(-N, N + 1):
            a = self.coeffs[p + N]
            if not a.any():
                continue
            for q in range(-N, N + 1):
                b = other.coeffs[q + N]
                if b.any():
                    full[p + q + 2 * N] += a @ b - b @ a
        lost = np.abs(full[:N]).max(initial=0.0) + np.abs(full[3 * N + 1:]).max(initial=0.0)
        if lost > 1e-12:
            raise ArgumentError("bracket exceeds the Fourier cutoff; increase the cutoff")
        return LoopAlgebraElement(self.algebra, full[N:3 * N + 1])

    def __call__(self, theta):
        phase = np.exp(1j * np.multiply.outer(np.asarray(theta), self.modes))
        return np.tensordot(phase, self.coeffs, axes=(-1, 0))

    def __add__(self, other):
        return LoopAlgebraElement(self.algebra, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return LoopAlgebraElement(self.algebra, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return LoopAlgebraElement(self.algebra, self.coeffs * float(c))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# H^s Levi-Civita connection

def _check_s(s):
    if not s > 0.5:
        raise ArgumentError(f"Sobolev parameter must satisfy s > 1/2, got {s}")
    if abs(2 * s - round(2 * s)) > 1e-12:
        raise ArgumentError(f"s = {s}: orders 2s must be integers for unit-step ladders")


def hs_connection_terms(X, s, depth=DEFAULT_DEPTH, shift=1.0):
    """The three operator symbols entering the H^s connection.

    Returns ``(ad_X, P^{-s} ad_{P^s X}, P^{-s} ad_X P^s)`` with
    P = shift + Delta; the connection is half of first - second + third.
    """
    _check_s(s)
    N = X.cutoff
    dim = X.adjoint().shape[-1]
    ad = multiplication_symbol(X.adjoint(), depth)
    weights = (shift + X.modes.astype(float) ** 2) ** s
    ad_px = multiplication_symbol(X.scaled_modes(weights).adjoint(), depth)
    p_minus = _power(-s, dim, N, depth, shift)
    p_plus = _power(s, dim, N, depth, shift)
    middle = compose(p_minus, ad_px)
    conj = compose(compose(p_minus, ad), p_plus)
    return ad, middle, conj


def _power(s, rank, cutoff, depth, shift):
    if shift == 1.0:
        return power_symbol(s, rank, cutoff, depth)
    if shift != 0.0:
        raise ArgumentError("only shift 1 (I + Delta) or 0 (Delta) is supported")
    # Delta^s has the single homogeneous symbol |xi|^{2s}
    c = np.zeros((depth + 1, 2, 2 * cutoff + 1, rank, rank), dtype=complex)
    c[0, :, cutoff] = np.eye(rank)
    return SymbolExpansion(2 * s, c)


def hs_connection_operator(X, s, depth=DEFAULT_DEPTH, shift=1.0):
    """Symbol of Y -> nabla_X Y for the left-invariant H^s metric.

    nabla_X = 1/2 (ad_X - P^{-s} ad_{P^s X} + P^{-s} ad_X P^s),
    P = shift + Delta with the flat Laplacian on S^1.  This sign is the one
    fixed by the Koszul formula: it is torsion-free and skew for
    <X, Y>_s = <X, P^s Y>.
    """
    ad, middle, conj = hs_connection_terms(X, s, depth, shift)
    return 0.5 * (ad - middle + conj)


def hs_curvature(X, Y, s, depth=DEFAULT_DEPTH, shift=1.0):
    """nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y] in the symbol algebra."""
    nx = hs_connection_operator(X, s, depth, shift)
    ny = hs_connection_operator(Y, s, depth, shift)
    nxy = hs_connection_operator(X.bracket(Y), s, depth, shift)
    return compose(nx, ny) - compose(ny, nx) - nxy


def alpha_map(X, depth=DEFAULT_DEPTH, derivative="power"):
    """Formal symbol sum_l (-1)^l / i^l (d_theta^l X) xi^{-l}, l = 0..depth.

    Values act by multiplication in the fundamental representation, so the
    bracket of two images is the symbol commutator.  ``derivative="single"``
    uses one theta-derivative for every l > 0 instead of l of them.
    """
    if derivative not in ("power", "single"):
        raise ArgumentError("derivative must be 'power' or 'single'")
    N, n = X.cutoff, X.coeffs.shape[-1]
    c = np.zeros((depth + 1, 2, 2 * N + 1, n, n), dtype=complex)
    for l in range(depth + 1):
        p = l if derivative == "power" else min(l, 1)
        dX = X.derivative(p).coeffs
        pref = (-1) ** l / 1j ** l
        c[l, 0] = pref * dX
        c[l, 1] = pref * (-1) ** l * dX         # xi^{-l} at xi = -1
    return SymbolExpansion(0.0, c)


# ---------------------------------------------------------------------------
# circle actions and the squashed family

@dataclass(frozen=True)
class CircleAction:
    """Circle action on a charted manifold.

    ``act(theta, x)`` takes a theta jet/array and a list of coordinate jets
    and returns the image coordinates.  ``translation`` records the
    per-axis speeds when the action is a coordinate translation, which lets
    the integral collapse axes it commutes with.
    """

    name: str
    metric: MetricField
    act: Callable = field(compare=False)
    translation: Optional[Tuple[float, ...]] = None

    @classmethod
    def rotation(cls, metric, speeds, name="rotation"):
        speeds = tuple(float(v) for v in speeds)
        if len(speeds) != metric.dim:
            raise ArgumentError("one speed per coordinate is required")

        def act(theta, x):
            return [xi + v * theta if v else xi for xi, v in zip(x, speeds)]

        return cls(name, metric, act, speeds)

    @classmethod
    def trivial(cls, metric):
        return cls.rotation(metric, (0.0,) * metric.dim, "trivial")

    def shifted(self, theta0):
        """The same action reparametrised by theta -> theta + theta0."""
        return CircleAction(f"{self.name}+{theta0:g}", self.metric,
                            lambda th, x: self.act(th + theta0, x), None)

    def orbit(self, points, thetas):
        """Orbit data for a batch: positions, velocities and frame pushforwards.

        Returns ``y`` (B, T, d), ``velocity`` (B, T, d) and ``frame``
        (B, d, T, d) where frame[:, i] is the pushforward of e_i.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        B, d = pts.shape
        T = len(thetas)
        grid = np.concatenate([np.repeat(np.asarray(thetas)[None, :, None], B, 0),
                               np.repeat(pts[:, None], T, 1)], axis=2).reshape(B * T, d + 1)
        v = dual.variables(grid, order=1)
        out = self.act(v[0], v[1:])
        vals, grads = [], []
        for o in out:
            if isinstance(o, dual.Jet):
                vals.append(o.val)
                grads.append(o.grad)
            else:
                vals.append(np.broadcast_to(o, (B * T,)))
                grads.append(np.zeros((B * T, d + 1)))
        y = np.stack(vals, axis=1).reshape(B, T, d)
        g = np.stack(grads, axis=1).reshape(B, T, d, d + 1)
        velocity = g[..., 0]
        frame = np.moveaxis(g[..., 1:], -1, 1)
        return y, velocity, frame

    def isometry_residual(self, points, thetas):
        """max |J^T g(act) J - g| over points and angles."""
        y, _, frame = self.orbit(points, thetas)
        B, T, d = y.shape
        chart = self.metric.atlas.chart().name
        g_img = self.metric.evaluate(chart, y.reshape(B * T, d)).reshape(B, T, d, d)
        g0 = self.metric.evaluate(chart, points)
        pulled = np.einsum("bati,btij,bctj->btac", frame, g_img, frame)
        return float(np.abs(pulled - g0[:, None]).max())


@dataclass(frozen=True)
class SquashedMetricFamily:
    """Circle-bundle metrics on S^2 x S^3 over S^2 x S^2 with fiber scale t.

    Chart (theta1, phi1, theta2, phi2, psi) on
    (0, pi) x (0, 2pi) x (0, pi) x (0, 2pi) x (0, 4pi) and

        g_t = (dtheta1^2 + sin^2 theta1 dphi1^2) / 6
            + (dtheta2^2 + sin^2 theta2 dphi2^2) / 6
            + (t / 9) (dpsi + cos theta1 dphi1 + cos theta2 dphi2)^2.
    """

    t: float

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ArgumentError(f"squashing parameter must lie in (0, 1], got {self.t}")

    @staticmethod
    def atlas():
        return ChartAtlas("s2xs3", (Chart("euler", ((0.0, np.pi), (0.0, 2 * np.pi),
                                                     (0.0, np.pi), (0.0, 2 * np.pi),
                                                     (0.0, 4 * np.pi))),))

    def metric(self):
        t = self.t

        def formula(chart, x):
            th1, th2 = x[0], x[2]
            eta = [0.0, dual.cos(th1), 0.0, dual.cos(th2), 1.0]
            base = [1 / 6, dual.sin(th1) ** 2 * (1 / 6), 1 / 6, dual.sin(th2) ** 2 * (1 / 6), 0.0]
            g = [[None] * 5 for _ in range(5)]
            for i in range(5):
                for j in range(i, 5):
                    g[i][j] = g[j][i] = (base[i] if i == j else 0.0) + (t / 9) * (eta[i] * eta[j])
            return g

        return MetricField(f"squashed-t11(t={t:g})", self.atlas(), formula, cyclic=(1, 3, 4))

    def fiber_rotation(self):
        """psi -> psi + 2 theta, one turn of the 4pi-periodic fiber."""
        return CircleAction.rotation(self.metric(), (0, 0, 0, 0, 2.0), "psi-rotation")


ACTIONS = ("trivial", "hopf", "psi-rotation")


def action_from_id(metric, name):
    """Catalog actions: trivial (any metric), hopf (round-s3), psi-rotation (squashed)."""
    if name == "trivial":
        return CircleAction.trivial(metric)
    if name == "hopf":
        if metric.atlas.name != "s3":
            raise ArgumentError("the hopf action needs the round-s3 metric (Hopf coordinates)")
        return CircleAction.rotation(metric, (0, 1, 1), "hopf")
    if name == "psi-rotation":
        if metric.atlas.name != "s2xs3":
            raise ArgumentError("psi-rotation needs a squashed-t11 metric")
        return CircleAction.rotation(metric, (0, 0, 0, 0, 2.0), "psi-rotation")
    raise ArgumentError(f"unknown action {name!r}; known: {', '.join(ACTIONS)}")


# ---------------------------------------------------------------------------
# WCS form

def wcs_form_at_loop(riemann, velocity, frame, k, period=2 * np.pi):
    """Odd WCS form on a loop, evaluated on a frame of 2k-1 vector fields.

    Parameters
    ----------
    riemann : ndarray, shape (..., T, d, d, d, d)
        R^i_{jkl} at T uniform samples of the loop.
    velocity : ndarray, shape (..., T, d)
    frame : ndarray, shape (..., 2k-1, T, d)
    k : int
    period : float
        Loop parameter period; the integral uses the trapezoid rule.
    """
    R = np.asarray(riemann)
    v = np.asarray(velocity)
    X = np.asarray(frame)
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if X.shape[-3] != 2 * k - 1:
        raise ArgumentError(f"k = {k} needs {2 * k - 1} frame vectors, got {X.shape[-3]}")
    d = R.shape[-1]
    batch = R.shape[:-5]
    if 2 * k - 1 > d or not np.any(v):
        return np.zeros(batch)
    n = 2 * k - 1
    X = np.moveaxis(X, -3, 0)                       # (n, ..., T, d)
    Rv = np.einsum("...ijkl,...l->...ijk", R, v)     # R(., v) contracted last
    A = [-np.einsum("...ijk,...k->...ij", Rv, X[a])
         - 2 * np.einsum("...imk,...m->...ik", Rv, X[a]) for a in range(n)]
    RX = [np.einsum("...ijkl,...k->...ijl", R, X[a]) for a in range(n)]
    Om = {(a, b): np.einsum("...ijl,...l->...ij", RX[a], X[b])
          for a in range(n) for b in range(n) if a != b}
    total = 0
    for perm in itertools.permutations(range(n)):
        M = A[perm[0]]
        for i in range(1, n, 2):
            M = M @ Om[perm[i], perm[i + 1]]
        total = total + _perm_sign(perm) * np.trace(M, axis1=-2, axis2=-1)
    T = R.shape[-5]
    return (2.0 / math.factorial(n)) * (period / T) * np.sum(total, axis=-1)


@dataclass
class WCSResult:
    """Outcome of a WCS integral with its refinement record."""

    value: float
    convergence: Dict[int, float]
    theta_nodes: int
    reduced_axes: Tuple[int, ...]
    evaluations: int

    @property
    def relative_change(self):
        vals = [self.convergence[n] for n in sorted(self.convergence)]
        if len(vals) < 2:
            return None
        scale = max(abs(vals[-1]), 1e-300)
        return abs(vals[-1] - vals[-2]) / scale

    def pi_ratios(self, max_power=4, max_denominator=1000):
        """value / pi^a with a rational approximation and its residual."""
        out = []
        for a in range(max_power + 1):
            r = self.value / np.pi ** a
            frac = Fraction(r).limit_denominator(max_denominator)
            out.append((a, r, f"{frac.numerator}/{frac.denominator}", abs(r - float(frac))))
        return out


def _reducible_axes(action, check_points=4, seed=0):
    """Axes the integrand is invariant along: metric-cyclic and commuting with the action."""
    if action.translation is None:
        return ()
    metric = action.metric
    chart = metric.atlas.chart()
    rng = np.random.default_rng(seed)
    pts = chart.sample(rng, check_points)
    g0 = metric.evaluate(chart.name, pts)
    axes = []
    for ax in metric.cyclic:
        shifted = pts.copy()
        shifted[:, ax] = chart.lower[ax] + rng.uniform(0.1, 0.9, check_points) * (
            chart.upper[ax] - chart.lower[ax])
        if np.abs(metric.evaluate(chart.name, shifted) - g0).max() < 1e-12:
            axes.append(ax)
    return tuple(axes)


def _integrand(action, k, pts, thetas):
    """a*CS_k on the coordinate frame at a batch of points of M."""
    metric = action.metric
    chart = metric.atlas.chart().name
    y, vel, frame = action.orbit(pts, thetas)
    B, T, d = y.shape
    _, R = riemann_batch(metric, chart, y.reshape(B * T, d), check=False)
    R = R.reshape(B, T, d, d, d, d)
    return wcs_form_at_loop(R, vel, frame, k)


def wcs_integral(metric, action, k, q=None, theta_nodes=64, refine=True, reduce=True,
                 map_fn=map, chunk=4096):
    """Integral over M of the pulled-back WCS form along orbit loops.

    Coordinates on which the metric does not depend and which the action
    translates along are integrated exactly (their range length), after a
    numerical check that the integrand is unchanged by shifts in them.
    ``refine`` repeats the computation with nodes per axis doubled.
    """
    if action.metric is not metric and action.metric != metric:
        raise ArgumentError("action is defined for a different metric")
    d = metric.dim
    if d != 2 * k - 1:
        raise ArgumentError(f"dim M = {d} but k = {k} needs dim 2k-1 = {2 * k - 1}")
    q = q or QuadratureSpec()
    if q.scheme != "gauss-legendre":
        raise ArgumentError("WCS integrals use Gauss-Legendre quadrature")
    thetas = 2 * np.pi * np.arange(theta_nodes) / theta_nodes
    if action.translation is not None and not any(action.translation):
        n = q.nodes_for(d)
        return WCSResult(0.0, {n: 0.0}, theta_nodes, (), 0)
    chart = metric.atlas.chart()
    axes = _reducible_axes(action) if reduce else ()
    if axes:
        axes = _verify_reduction(action, k, axes, thetas)
    free = [i for i in range(d) if i not in axes]
    collapsed = float(np.prod([chart.upper[a] - chart.lower[a] for a in axes])) if axes else 1.0
    mid = 0.5 * (chart.lower + chart.upper)

    def run(n):
        nodes, weights = gauss_legendre_grid(chart.lower[free], chart.upper[free], n)
        npts = n ** len(free)

        def work(start):
            sub, w = tensor_chunk(nodes, weights, start, min(start + chunk, npts))
            pts = np.tile(mid, (len(sub), 1))
            pts[:, free] = sub
            return complex(np.sum(w * _integrand(action, k, pts, thetas)))

        parts = list(map_fn(work, range(0, npts, chunk)))
        return collapsed * fsum_complex(parts).real, npts

    n0 = q.nodes_for(d)
    levels = [n0, 2 * n0] if refine else [n0]
    conv, evals = {}, 0
    for n in levels:
        conv[n], e = run(n)
        evals += e * theta_nodes
    return WCSResult(conv[levels[-1]], conv, theta_nodes, tuple(axes), evals)


def _verify_reduction(action, k, axes, thetas, samples=3, tol=1e-9):
    """Keep only axes along which the integrand is numerically invariant."""
    chart = action.metric.atlas.chart()
    rng = np.random.default_rng(1)
    pts = chart.sample(rng, samples)
    base = _integrand(action, k, pts, thetas)
    scale = max(1.0, float(np.abs(base).max()))
    kept = []
    for ax in axes:
        moved = pts.copy()
        moved[:, ax] = chart.lower[ax] + rng.uniform(0.05, 0.95, samples) * (
            chart.upper[ax] - chart.lower[ax])
        if np.abs(_integrand(action, k, moved, thetas) - base).max() <= tol * scale:
            kept.append(ax)
    return tuple(kept)
