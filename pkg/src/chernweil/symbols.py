"""Truncated classical symbol calculus on the circle with matrix coefficients.

A classical symbol of order m on S^1 is an asymptotic sum of homogeneous
pieces sigma_{m-j}(x, xi).  The unit cosphere of S^1 is the two directions
xi = +1 and xi = -1, so each piece is stored as two matrix-valued Fourier
polynomials ``c+(x)`` and ``c-(x)`` with the homogeneous extension

    sigma_a(x, xi) = c_{sign xi}(x) |xi|^a.

Coefficients live in one array of shape ``(J + 1, 2, 2N + 1, r, r)``: depth
index j (order m - j), direction (0 for +, 1 for -), Fourier mode k = -N..N,
then the matrix.

Both trace functionals use the normalised integral (2 pi)^{-1} int dx, so
that on Fourier polynomials they only read the zero mode.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ArgumentError

__all__ = [
    "HomogeneousSymbol", "SymbolExpansion", "compose", "commutator", "power_symbol",
    "identity_symbol", "multiplication_symbol", "wodzicki_residue",
    "leading_order_trace", "DEFAULT_CUTOFF", "DEFAULT_DEPTH",
]

DEFAULT_CUTOFF = 16
DEFAULT_DEPTH = 6
_ORDER_TOL = 1e-12


def _falling(a, n):
    out = 1.0
    for i in range(n):
        out *= a - i
    return out


def _is_integer(x):
    return abs(x - round(x)) < _ORDER_TOL


@dataclass(frozen=True)
class HomogeneousSymbol:
    """One homogeneous piece: order and the two direction coefficients.

    ``plus`` and ``minus`` have shape (2N + 1, r, r), Fourier modes -N..N.
    """

    order: float
    plus: np.ndarray
    minus: np.ndarray

    @property
    def rank(self):
        return self.plus.shape[-1]

    @property
    def cutoff(self):
        return (self.plus.shape[0] - 1) // 2

    def norm(self):
        return float(max(np.abs(self.plus).max(initial=0.0), np.abs(self.minus).max(initial=0.0)))

    def __call__(self, x, xi):
        """Evaluate sigma(x, xi) for scalar x and nonzero xi."""
        if xi == 0:
            raise ArgumentError("homogeneous symbols are evaluated at xi != 0")
        c = self.plus if xi > 0 else self.minus
        k = np.arange(-self.cutoff, self.cutoff + 1)
        phase = np.exp(1j * k * x)
        return np.tensordot(phase, c, axes=(0, 0)) * abs(xi) ** self.order


class SymbolExpansion:
    """Truncated expansion sum_{j=0}^{J} sigma_{m-j}.

    Parameters
    ----------
    order : float
        Leading order m.
    coeffs : ndarray, shape (J + 1, 2, 2N + 1, r, r)
        Direction coefficients per depth, complex.
    truncation_loss : float, optional
        Accumulated squared norm of Fourier modes discarded by products that
        produced this expansion.
    """

    __slots__ = ("order", "coeffs", "truncation_loss")

    def __init__(self, order, coeffs, truncation_loss=0.0):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != 5 or coeffs.shape[1] != 2 or coeffs.shape[2] % 2 != 1 \
                or coeffs.shape[3] != coeffs.shape[4]:
            raise ArgumentError(f"bad coefficient array shape {coeffs.shape}")
        self.order = float(order)
        self.coeffs = coeffs
        self.truncation_loss = float(truncation_loss)

    # -- structure --------------------------------------------------------
    @property
    def depth(self):
        return self.coeffs.shape[0] - 1

    @property
    def cutoff(self):
        return (self.coeffs.shape[2] - 1) // 2

    @property
    def rank(self):
        return self.coeffs.shape[3]

    @property
    def orders(self):
        return [self.order - j for j in range(self.depth + 1)]

    def component(self, j):
        """The homogeneous piece at depth j (order m - j)."""
        return HomogeneousSymbol(self.order - j, self.coeffs[j, 0], self.coeffs[j, 1])

    def at_order(self, a):
        """Component of order ``a``; a zero piece if ``a`` is off the ladder."""
        j = self.order - a
        if _is_integer(j) and 0 <= round(j) <= self.depth:
            return self.component(int(round(j)))
        z = np.zeros_like(self.coeffs[0, 0])
        return HomogeneousSymbol(a, z, z)

    def component_norms(self):
        return np.abs(self.coeffs).reshape(self.depth + 1, -1).max(axis=1)

    def leading_nonzero_order(self, tol=1e-12):
        """Highest order whose component exceeds ``tol``, or None."""
        for j, n in enumerate(self.component_norms()):
            if n > tol:
                return self.order - j
        return None

    def is_multiplication(self, tol=1e-12):
        """True for xi-independent order-0 symbols (multiplication operators)."""
        if np.abs(self.coeffs).max(initial=0.0) <= tol:
            return True
        if not (_is_integer(self.order) and round(self.order) == 0):
            return False
        return (np.abs(self.coeffs[1:]).max(initial=0.0) <= tol
                and np.abs(self.coeffs[0, 0] - self.coeffs[0, 1]).max() <= tol)

    def __repr__(self):
        return (f"SymbolExpansion(order={self.order:g}, depth={self.depth}, "
                f"cutoff={self.cutoff}, rank={self.rank})")

    # -- linear structure -------------------------------------------------
    def _check_compatible(self, other):
        if self.rank != other.rank:
            raise ArgumentError(f"rank mismatch ({self.rank} vs {other.rank})")
        if self.cutoff != other.cutoff:
            raise ArgumentError(f"Fourier cutoff mismatch ({self.cutoff} vs {other.cutoff})")

    def __add__(self, other):
        if not isinstance(other, SymbolExpansion):
            if np.isscalar(other) and other == 0:
                return self
            return NotImplemented
        self._check_compatible(other)
        shift = self.order - other.order
        if not _is_integer(shift):
            raise ArgumentError(f"order ladders {self.order:g} and {other.order:g} "
                                "are not compatible modulo 1")
        top = max(self.order, other.order)
        bottom = max(self.order - self.depth, other.order - other.depth)
        depth = int(round(top - bottom))
        if depth < 0:
            # the two ladders do not overlap; keep the higher one
            return self if self.order > other.order else other
        out = np.zeros((depth + 1,) + self.coeffs.shape[1:], dtype=complex)
        for s in (self, other):
            off = int(round(top - s.order))
            n = min(s.depth + 1, depth + 1 - off)
            if n > 0:
                out[off:off + n] += s.coeffs[:n]
        return SymbolExpansion(top, out, self.truncation_loss + other.truncation_loss)

    __radd__ = __add__

    def __neg__(self):
        return SymbolExpansion(self.order, -self.coeffs, self.truncation_loss)

    def __sub__(self, other):
        if not isinstance(other, SymbolExpansion):
            if np.isscalar(other) and other == 0:
                return self
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if isinstance(c, SymbolExpansion):
            return compose(self, c)
        return SymbolExpansion(self.order, self.coeffs * c, self.truncation_loss)

    def __rmul__(self, c):
        return SymbolExpansion(self.order, self.coeffs * c, self.truncation_loss)

    def __matmul__(self, other):
        return compose(self, other)

    def close_to(self, other, tol):
        d = self - other
        return bool(np.abs(d.coeffs).max(initial=0.0) <= tol)

    # -- derivatives ------------------------------------------------------
    def dx(self, n=1):
        """x-derivative of order n (acts on Fourier modes by (ik)^n)."""
        k = np.arange(-self.cutoff, self.cutoff + 1)
        f = (1j * k) ** n
        return SymbolExpansion(self.order, self.coeffs * f[None, None, :, None, None],
                               self.truncation_loss)

    def dxi(self, n=1):
        """xi-derivative of order n; lowers every order by n."""
        out = np.empty_like(self.coeffs)
        for j in range(self.depth + 1):
            f = _falling(self.order - j, n)
            out[j, 0] = f * self.coeffs[j, 0]
            out[j, 1] = (-1) ** n * f * self.coeffs[j, 1]
        return SymbolExpansion(self.order - n, out, self.truncation_loss)

    # -- serialisation ----------------------------------------------------
    def to_text(self):
        """Plain-text table: one line per (order, direction, mode, row, col)."""
        lines = [f"# order {self.order!r} depth {self.depth} cutoff {self.cutoff} "
                 f"rank {self.rank} loss {self.truncation_loss!r}",
                 "# order direction mode row col real imag"]
        N, r = self.cutoff, self.rank
        for j in range(self.depth + 1):
            a = self.order - j
            for d, name in ((0, "+"), (1, "-")):
                for k in range(-N, N + 1):
                    for p in range(r):
                        for q in range(r):
                            v = self.coeffs[j, d, k + N, p, q]
                            lines.append(f"{float(a)!r} {name} {k} {p} {q} {float(v.real)!r} {float(v.imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = text.strip().splitlines()
        head = rows[0].split()
        if head[:2] != ["#", "order"]:
            raise ArgumentError("not a symbol table")
        meta = dict(zip(head[1::2], head[2::2]))
        order, J, N, r = float(meta["order"]), int(meta["depth"]), int(meta["cutoff"]), int(meta["rank"])
        coeffs = np.zeros((J + 1, 2, 2 * N + 1, r, r), dtype=complex)
        for line in rows[2:]:
            a, d, k, p, q, re, im = line.split()
            j = int(round(order - float(a)))
            coeffs[j, 0 if d == "+" else 1, int(k) + N, int(p), int(q)] = complex(float(re), float(im))
        return cls(order, coeffs, float(meta.get("loss", 0.0)))


# ---------------------------------------------------------------------------
# constructors

def _blank(order, depth, cutoff, rank):
    if depth < 0:
        raise ArgumentError(f"depth must be >= 0, got {depth}")
    return np.zeros((depth + 1, 2, 2 * cutoff + 1, rank, rank), dtype=complex)


def identity_symbol(rank, cutoff=DEFAULT_CUTOFF, depth=DEFAULT_DEPTH):
    c = _blank(0, depth, cutoff, rank)
    c[0, :, cutoff] = np.eye(rank)
    return SymbolExpansion(0.0, c)


def zero_symbol(order, rank, cutoff=DEFAULT_CUTOFF, depth=DEFAULT_DEPTH):
    return SymbolExpansion(order, _blank(order, depth, cutoff, rank))


def multiplication_symbol(fourier, depth=DEFAULT_DEPTH):
    """Order-0 symbol of the operator u -> f u.

    ``fourier`` has shape (2N + 1, r, r), Fourier modes -N..N of f.
    """
    fourier = np.asarray(fourier, dtype=complex)
    if fourier.ndim != 3:
        raise ArgumentError("multiplication symbol needs (2N+1, r, r) Fourier data")
    N, r = (fourier.shape[0] - 1) // 2, fourier.shape[-1]
    c = _blank(0, depth, N, r)
    c[0, 0] = fourier
    c[0, 1] = fourier
    return SymbolExpansion(0.0, c)


def power_symbol(s, rank=1, cutoff=DEFAULT_CUTOFF, depth=DEFAULT_DEPTH):
    """Symbol of (I + Delta)^s for the flat Laplacian on S^1.

    The full symbol (1 + xi^2)^s expands as sum_j binom(s, j) |xi|^{2s - 2j};
    components at odd steps are zero and kept so the ladder has unit steps.
    """
    if depth < 0:
        raise ArgumentError(f"depth must be >= 0, got {depth}")
    c = _blank(2 * s, depth, cutoff, rank)
    eye = np.eye(rank)
    for j in range(0, depth + 1, 2):
        c[j, :, cutoff] = _binom(s, j // 2) * eye
    return SymbolExpansion(2 * s, c)


def _binom(s, j):
    return _falling(s, j) / math.factorial(j)


# ---------------------------------------------------------------------------
# products

def _fourier_product(a, b, cutoff):
    """Product of matrix Fourier polynomials a, b (..., 2N+1, r, r).

    Returns the product truncated to modes -N..N and the discarded energy.
    """
    N = cutoff
    M = 4 * N + 1
    pad_a = np.zeros(a.shape[:-3] + (M,) + a.shape[-2:], dtype=complex)
    pad_b = np.zeros_like(pad_a)
    idx = np.arange(-N, N + 1) % M
    pad_a[..., idx, :, :] = a
    pad_b[..., idx, :, :] = b
    va = np.fft.ifft(pad_a, axis=-3) * M
    vb = np.fft.ifft(pad_b, axis=-3) * M
    prod = np.fft.fft(va @ vb, axis=-3) / M
    kept = prod[..., idx, :, :]
    mask = np.ones(M, dtype=bool)
    mask[idx] = False
    loss = float(np.sum(np.abs(prod[..., mask, :, :]) ** 2))
    return kept, loss


def compose(A, B):
    """Symbol of the composition AB to depth min(J_A, J_B).

    Uses sigma(AB) ~ sum_l ((-i)^l / l!) d_xi^l sigma(A) d_x^l sigma(B).
    Discarded Fourier energy is accumulated in ``truncation_loss``.
    """
    A._check_compatible(B)
    J = min(A.depth, B.depth)
    N = A.cutoff
    out = np.zeros((J + 1,) + A.coeffs.shape[1:], dtype=complex)
    loss = A.truncation_loss + B.truncation_loss
    k = np.arange(-N, N + 1)
    for l in range(J + 1):
        pref = (-1j) ** l / math.factorial(l)
        fx = ((1j * k) ** l)[None, None, :, None, None]
        dB = B.coeffs[:J + 1 - l] * fx
        if l > 0 and not np.any(dB):
            continue
        for j in range(J + 1 - l):
            fa = _falling(A.order - j, l)
            if fa == 0 or not np.any(A.coeffs[j]):
                continue
            dA = A.coeffs[j].copy()
            dA[0] *= fa
            dA[1] *= (-1) ** l * fa
            # pair with every B component landing within depth J
            nk = J + 1 - l - j
            prod, lost = _fourier_product(np.broadcast_to(dA, dB[:nk].shape), dB[:nk], N)
            out[j + l:j + l + nk] += pref * prod
            loss += abs(pref) ** 2 * lost
    return SymbolExpansion(A.order + B.order, out, loss)


def commutator(A, B):
    return compose(A, B) - compose(B, A)


# ---------------------------------------------------------------------------
# traces

def wodzicki_residue(A, directions="sum"):
    """(2 pi)^{-1} int tr(sigma_{-1}(x, +1) + sigma_{-1}(x, -1)) dx.

    Returns 0 exactly when -1 is not on the order ladder or lies above it; if
    the ladder stops before reaching -1 a warning is issued and 0 returned.
    ``directions="separate"`` returns the (xi = +1, xi = -1) densities as a
    pair instead of their sum.
    """
    if directions not in ("sum", "separate"):
        raise ArgumentError("directions must be 'sum' or 'separate'")
    zero = (0.0, 0.0) if directions == "separate" else 0.0
    j = A.order + 1
    if not _is_integer(j) or j < -_ORDER_TOL:
        return zero
    j = int(round(j))
    if j > A.depth:
        warnings.warn(f"expansion of order {A.order:g} truncated at depth {A.depth} "
                      "does not reach order -1; residue reported as 0", RuntimeWarning)
        return zero
    N = A.cutoff
    c = A.coeffs[j, :, N]
    plus, minus = complex(np.trace(c[0])), complex(np.trace(c[1]))
    return (plus, minus) if directions == "separate" else plus + minus


def leading_order_trace(A, weight=None):
    """(2 pi)^{-1} int w(x) tr sigma_0(x, xi) dx summed over both directions.

    Parameters
    ----------
    A : SymbolExpansion
        Expansion of leading order <= 0.
    weight : array_like, optional
        Scalar Fourier polynomial, shape (2N + 1,) for both directions or
        (2, 2N + 1) per direction.  Defaults to the constant 1.
    """
    if A.order > _ORDER_TOL:
        raise ArgumentError(f"leading-order trace needs order <= 0, got {A.order:g}")
    if not _is_integer(A.order) or round(A.order) != 0:
        return 0.0
    N = A.cutoff
    tr = np.trace(A.coeffs[0], axis1=-2, axis2=-1)  # (2, 2N+1)
    if weight is None:
        return complex(tr[0, N] + tr[1, N])
    w = np.asarray(weight, dtype=complex)
    if w.shape == (2 * N + 1,):
        w = np.stack([w, w])
    if w.shape != (2, 2 * N + 1):
        raise ArgumentError(f"weight must have shape ({2 * N + 1},) or (2, {2 * N + 1})")
    # int w c dx / 2pi = sum_k w_{-k} c_k
    return complex(np.sum(w[:, ::-1] * tr))
