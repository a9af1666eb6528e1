"""Second-order truncated Taylor arithmetic (forward-mode dual numbers).

A :class:`Jet` carries a value together with its gradient and, optionally,
its Hessian with respect to ``n`` seed variables.  All three are numpy arrays,
so a single jet evaluates a whole batch of points at once:

    val  : shape S
    grad : shape S + (n,)
    hess : shape S + (n, n)   (``None`` for first-order jets)

The free functions in this module (``sin``, ``cos``, ...) accept jets as well
as plain numbers/arrays, so metric and connection formulas are written once
and evaluated either way.
"""

import numpy as np

__all__ = [
    "Jet", "variables", "const", "sin", "cos", "exp", "log", "sqrt", "arccos",
    "arctan2", "real", "imag", "conj", "times", "stack", "assemble", "value",
]


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, val, grad, hess=None):
        self.val = np.asarray(val)
        self.grad = np.asarray(grad)
        self.hess = None if hess is None else np.asarray(hess)

    # -- structure --------------------------------------------------------
    @property
    def nvars(self):
        return self.grad.shape[-1]

    @property
    def shape(self):
        return self.val.shape

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.val[idx], self.grad[idx],
                   None if self.hess is None else self.hess[idx])

    def __repr__(self):
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    # -- linear operations ------------------------------------------------
    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.grad + other.grad,
                       _hadd(self.hess, other.hess))
        other = np.asarray(other)
        return Jet(self.val + other, np.broadcast_to(self.grad, np.broadcast_shapes(
            self.val.shape, other.shape) + (self.nvars,)),
            None if self.hess is None else np.broadcast_to(self.hess, np.broadcast_shapes(
                self.val.shape, other.shape) + (self.nvars,) * 2))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            val = a.val * b.val
            grad = a.grad * b.val[..., None] + a.val[..., None] * b.grad
            hess = None
            if a.hess is not None and b.hess is not None:
                hess = (a.hess * b.val[..., None, None] + a.val[..., None, None] * b.hess
                        + a.grad[..., :, None] * b.grad[..., None, :]
                        + b.grad[..., :, None] * a.grad[..., None, :])
            return Jet(val, grad, hess)
        c = np.asarray(other)
        return Jet(self.val * c, self.grad * c[..., None],
                   None if self.hess is None else self.hess * c[..., None, None])

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.val
        return _chain(self, 1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = 1.0
            for _ in range(p):
                out = self * out
            return out if isinstance(out, Jet) else const(np.ones_like(self.val), self.nvars)
        v = self.val
        return _chain(self, v**p, p * v**(p - 1), p * (p - 1) * v**(p - 2))


def _hadd(h1, h2):
    if h1 is None or h2 is None:
        return None
    return h1 + h2


def _chain(u, f0, f1, f2):
    """Apply a scalar function with derivatives (f0, f1, f2) evaluated at u."""
    grad = f1[..., None] * u.grad
    hess = None
    if u.hess is not None:
        hess = (f1[..., None, None] * u.hess
                + f2[..., None, None] * u.grad[..., :, None] * u.grad[..., None, :])
    return Jet(f0, grad, hess)


def variables(points, order=2):
    """Seed jets for the columns of ``points`` (shape (B, n))."""
    points = np.asarray(points, dtype=float)
    b, n = points.shape
    eye = np.eye(n)
    out = []
    for i in range(n):
        grad = np.broadcast_to(eye[i], (b, n)).copy()
        hess = np.zeros((b, n, n)) if order == 2 else None
        out.append(Jet(points[:, i].copy(), grad, hess))
    return out


def const(val, nvars, order=2):
    val = np.asarray(val)
    return Jet(val, np.zeros(val.shape + (nvars,), dtype=val.dtype),
               np.zeros(val.shape + (nvars, nvars), dtype=val.dtype) if order == 2 else None)


def value(x):
    return x.val if isinstance(x, Jet) else np.asarray(x)


def sin(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.val), np.cos(x.val)
        return _chain(x, s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.val), np.cos(x.val)
        return _chain(x, c, -s, -c)
    return np.cos(x)


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.val)
        return _chain(x, e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        v = x.val
        return _chain(x, np.log(v), 1.0 / v, -1.0 / v**2)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        r = np.sqrt(x.val)
        return _chain(x, r, 0.5 / r, -0.25 / (r * x.val))
    return np.sqrt(x)


def arccos(x):
    if isinstance(x, Jet):
        v = x.val
        w = 1.0 - v * v
        return _chain(x, np.arccos(v), -1.0 / np.sqrt(w), -v / w**1.5)
    return np.arccos(x)


def arctan2(y, x):
    if not isinstance(y, Jet) and not isinstance(x, Jet):
        return np.arctan2(y, x)
    n = y.nvars if isinstance(y, Jet) else x.nvars
    order = min(j.order for j in (y, x) if isinstance(j, Jet))
    if not isinstance(y, Jet):
        y = const(np.broadcast_to(y, x.shape), n, order)
    if not isinstance(x, Jet):
        x = const(np.broadcast_to(x, y.shape), n, order)
    r2 = x.val**2 + y.val**2
    val = np.arctan2(y.val, x.val)
    # d(atan2) = (x dy - y dx) / r^2
    gx, gy = -y.val / r2, x.val / r2
    grad = gx[..., None] * x.grad + gy[..., None] * y.grad
    hess = None
    if x.hess is not None and y.hess is not None:
        # second partials of atan2 in (x, y)
        hxx = 2 * x.val * y.val / r2**2
        hyy = -hxx
        hxy = (y.val**2 - x.val**2) / r2**2
        outer = lambda a, b: a[..., :, None] * b[..., None, :]
        hess = (gx[..., None, None] * x.hess + gy[..., None, None] * y.hess
                + hxx[..., None, None] * outer(x.grad, x.grad)
                + hyy[..., None, None] * outer(y.grad, y.grad)
                + hxy[..., None, None] * (outer(x.grad, y.grad) + outer(y.grad, x.grad)))
    return Jet(val, grad, hess)


def real(x):
    if isinstance(x, Jet):
        return Jet(x.val.real, x.grad.real, None if x.hess is None else x.hess.real)
    return np.real(x)


def imag(x):
    if isinstance(x, Jet):
        return Jet(x.val.imag, x.grad.imag, None if x.hess is None else x.hess.imag)
    return np.imag(x)


def conj(x):
    if isinstance(x, Jet):
        return Jet(x.val.conj(), x.grad.conj(), None if x.hess is None else x.hess.conj())
    return np.conj(x)


def times(f, tensor):
    """Scalar field ``f`` (shape S) times a constant tensor T -> shape S + T.shape."""
    t = np.asarray(tensor)
    k = t.ndim
    if not isinstance(f, Jet):
        return np.asarray(f)[(...,) + (None,) * k] * t
    ex = (...,) + (None,) * k
    val = f.val[ex] * t
    grad = f.grad[(...,) + (None,) * k + (slice(None),)] * t[..., None]
    hess = None
    if f.hess is not None:
        hess = f.hess[(...,) + (None,) * k + (slice(None), slice(None))] * t[..., None, None]
    return Jet(val, grad, hess)


def _probe(items):
    """Return (nvars, order, batch shape) from the first jet found in ``items``."""
    for it in items:
        if isinstance(it, Jet):
            return it.nvars, it.order
        if isinstance(it, (list, tuple)):
            found = _probe(it)
            if found is not None:
                return found
    return None


def stack(items, axis=0, batch_shape=None):
    """np.stack for a mix of jets and constants.

    Constants are broadcast to the common shape; if no jet is present a plain
    array is returned.
    """
    found = _probe(items)
    if found is None:
        arrs = [np.asarray(i) for i in items]
        if batch_shape is not None:
            shp = np.broadcast_shapes(*(a.shape for a in arrs), batch_shape)
            arrs = [np.broadcast_to(a, shp) for a in arrs]
        return np.stack(arrs, axis=axis)
    n, order = found
    shapes = [i.shape if isinstance(i, Jet) else np.shape(i) for i in items]
    shp = np.broadcast_shapes(*shapes)
    dtype = np.result_type(*[(i.val if isinstance(i, Jet) else np.asarray(i)) for i in items])
    vals, grads, hesss = [], [], []
    for it in items:
        if isinstance(it, Jet):
            vals.append(np.broadcast_to(it.val, shp).astype(dtype))
            grads.append(np.broadcast_to(it.grad, shp + (n,)))
            if order == 2:
                hesss.append(np.broadcast_to(it.hess, shp + (n, n)))
        else:
            vals.append(np.broadcast_to(np.asarray(it, dtype=dtype), shp))
            grads.append(np.zeros(shp + (n,), dtype=dtype))
            if order == 2:
                hesss.append(np.zeros(shp + (n, n), dtype=dtype))
    ax = axis if axis >= 0 else len(shp) + 1 + axis
    return Jet(np.stack(vals, axis=ax), np.stack(grads, axis=ax),
               np.stack(hesss, axis=ax) if order == 2 else None)


def assemble(nested, batch_shape):
    """Turn a nested list (d1 x d2 x ...) of jets/constants into one jet/array.

    Leaves are jets of shape ``batch_shape`` or scalars; the nesting becomes
    trailing axes after ``batch_shape``.
    """
    batch_shape = tuple(batch_shape)
    if isinstance(nested, (list, tuple)):
        parts = [assemble(p, batch_shape) for p in nested]
        return stack(parts, axis=len(batch_shape))
    if isinstance(nested, Jet):
        return nested
    return np.broadcast_to(np.asarray(nested), batch_shape)
