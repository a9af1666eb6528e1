import warnings
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from chernweil.errors import ArgumentError
from chernweil.symbols import (SymbolExpansion, commutator, compose, identity_symbol,
                               leading_order_trace, multiplication_symbol, power_symbol,
                               wodzicki_residue, zero_symbol)

N = 8


def random_symbol(rng, order=0.0, rank=2, depth=6, cutoff=N, modes=3, scale=0.25):
    """Band-limited random expansion with independent direction data."""
    c = np.zeros((depth + 1, 2, 2 * cutoff + 1, rank, rank), dtype=complex)
    band = slice(cutoff - modes, cutoff + modes + 1)
    shape = c[:, :, band].shape
    c[:, :, band] = scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))
    return SymbolExpansion(order, c)


def random_fourier(rng, rank=2, cutoff=N, modes=3):
    f = np.zeros((2 * cutoff + 1, rank, rank), dtype=complex)
    band = slice(cutoff - modes, cutoff + modes + 1)
    f[band] = rng.normal(size=f[band].shape) + 1j * rng.normal(size=f[band].shape)
    return f


def binomial_cauchy_oracle(s1, s2, depth):
    """Coefficients of (1+x)^s1 (1+x)^s2 in powers of x by exact Cauchy product."""
    s1, s2 = sp.nsimplify(s1), sp.nsimplify(s2)
    a = [sp.binomial(s1, j) for j in range(depth + 1)]
    b = [sp.binomial(s2, j) for j in range(depth + 1)]
    return [float(sum(a[i] * b[j - i] for i in range(j + 1))) for j in range(depth + 1)]


# -- composition ------------------------------------------------------------

def test_identity_is_neutral(rng):
    A = random_symbol(rng, order=1.5)
    left = compose(identity_symbol(2, N, 6), A)
    assert left.order == 1.5
    assert np.allclose(left.coeffs, A.coeffs, atol=1e-15)


def test_multiplication_operators_compose_pointwise(rng):
    f, g = random_fourier(rng), random_fourier(rng)
    C = compose(multiplication_symbol(f, 4), multiplication_symbol(g, 4))
    theta = np.linspace(0, 2 * np.pi, 17)
    k = np.arange(-N, N + 1)
    ev = lambda h: np.tensordot(np.exp(1j * np.outer(theta, k)), h, axes=(1, 0))
    assert np.allclose(ev(C.coeffs[0, 0]), ev(f) @ ev(g), atol=1e-12)
    assert np.abs(C.coeffs[1:]).max() == 0
    assert C.is_multiplication()


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_power_inverse(s):
    P = compose(power_symbol(s, 1, 16, 6), power_symbol(-s, 1, 16, 6))
    assert P.order == 0
    oracle = binomial_cauchy_oracle(s, -s, 3)
    assert oracle == [1.0, 0.0, 0.0, 0.0]
    assert abs(P.coeffs[0, :, 16] - 1).max() < 1e-15
    rest = P.coeffs.copy()
    rest[0, :, 16] = 0
    assert np.abs(rest).max() < 1e-10


@pytest.mark.parametrize("s1,s2", [(0.5, 1.5), (-1.0, 0.5), (2.0, -0.5)])
def test_power_product_matches_cauchy_oracle(s1, s2):
    P = compose(power_symbol(s1, 1, 4, 6), power_symbol(s2, 1, 4, 6))
    oracle = binomial_cauchy_oracle(s1, s2, 3)
    for j, c in enumerate(oracle):
        assert P.coeffs[2 * j, 0, 4, 0, 0] == pytest.approx(c, abs=1e-13)
        assert abs(P.coeffs[2 * j + 1]).max(initial=0) < 1e-13 if 2 * j + 1 <= 6 else True


def test_power_symbol_examples():
    p1 = power_symbol(1.0, 2, 4, 4)
    assert p1.order == 2
    assert np.allclose(p1.coeffs[0, :, 4], np.eye(2)) and np.allclose(p1.coeffs[2, :, 4], np.eye(2))
    assert np.abs(p1.coeffs[4]).max() == 0
    half = power_symbol(0.5, 1, 4, 6).coeffs[:, 0, 4, 0, 0].real
    assert list(half[::2]) == [1.0, 0.5, -0.125, 0.0625]
    inv = power_symbol(-1.0, 1, 4, 6)
    assert inv.order == -2
    assert list(inv.coeffs[::2, 0, 4, 0, 0].real) == [1.0, -1.0, 1.0, -1.0]
    with pytest.raises(ArgumentError):
        power_symbol(1.0, depth=-1)


def test_composition_rank_and_cutoff_mismatch(rng):
    with pytest.raises(ArgumentError):
        compose(identity_symbol(2, N, 2), identity_symbol(3, N, 2))
    with pytest.raises(ArgumentError):
        compose(identity_symbol(2, N, 2), identity_symbol(2, N + 1, 2))


@given(st.integers(0, 10_000), st.sampled_from([-1.0, 0.0, 0.5, 2.0]),
       st.sampled_from([-2.0, 0.0, 1.5]))
def test_order_additivity(seed, a, b):
    rng = np.random.default_rng(seed)
    C = compose(random_symbol(rng, a, depth=3), random_symbol(rng, b, depth=4))
    assert C.order == a + b and C.depth == 3


@given(st.integers(0, 10_000))
def test_associativity(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (random_symbol(rng, o, depth=5, modes=2) for o in (0.0, 1.0, -0.5))
    left, right = compose(compose(A, B), C), compose(A, compose(B, C))
    assert left.truncation_loss == pytest.approx(0.0, abs=1e-20)
    assert np.abs(left.coeffs - right.coeffs).max() < 1e-9


def test_truncation_loss_is_reported(rng):
    A = random_symbol(rng, modes=N)
    C = compose(A, A)
    assert C.truncation_loss > 0


def test_ladder_addition():
    a = power_symbol(1.0, 1, 4, 4)
    b = identity_symbol(1, 4, 4)
    s = a + b
    assert s.order == 2 and s.coeffs[2, 0, 4, 0, 0] == 2
    with pytest.raises(ArgumentError):
        power_symbol(0.25, 1, 4, 4) + b


def test_derivatives():
    P = power_symbol(1.0, 1, 4, 4)
    d = P.dxi()
    assert d.order == 1
    assert d.coeffs[0, 0, 4, 0, 0] == 2 and d.coeffs[0, 1, 4, 0, 0] == -2
    f = np.zeros((9, 1, 1), dtype=complex)
    f[5] = 1.0
    assert multiplication_symbol(f, 2).dx().coeffs[0, 0, 5, 0, 0] == 1j


def test_homogeneous_evaluation():
    h = power_symbol(0.5, 1, 2, 2).component(0)
    assert h.order == 1.0
    assert h(0.3, 4.0)[0, 0] == pytest.approx(4.0)
    assert h(0.3, -2.5)[0, 0] == pytest.approx(2.5)
    with pytest.raises(ArgumentError):
        h(0.0, 0.0)


def test_text_round_trip_bit_exact(rng):
    A = compose(random_symbol(rng, 1.5, depth=3), random_symbol(rng, -0.5, depth=3))
    B = SymbolExpansion.from_text(A.to_text())
    assert B.order == A.order and np.array_equal(A.coeffs, B.coeffs)
    assert B.truncation_loss == A.truncation_loss
    assert B.to_text() == A.to_text()


# -- traces -------------------------------------------------------------------

def test_residue_of_multiplication_vanishes(rng):
    assert wodzicki_residue(multiplication_symbol(random_fourier(rng))) == 0


def test_residue_of_inverse_square_root():
    assert wodzicki_residue(power_symbol(-0.5, 1, 8, 6)) == pytest.approx(2.0)
    plus, minus = wodzicki_residue(power_symbol(-0.5, 1, 8, 6), directions="separate")
    assert plus == minus == 1.0


def test_residue_below_minus_one_is_zero(rng):
    assert wodzicki_residue(random_symbol(rng, order=-2.0)) == 0.0
    assert wodzicki_residue(random_symbol(rng, order=-3.5)) == 0.0


def test_residue_warns_on_short_ladder():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert wodzicki_residue(power_symbol(1.0, 1, 4, 1)) == 0.0
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_leading_order_trace_of_identity():
    assert leading_order_trace(identity_symbol(3, 4, 2)) == 6


def test_leading_order_trace_vanishes_below_zero(rng):
    assert leading_order_trace(random_symbol(rng, order=-1.0)) == 0


def test_leading_order_trace_rejects_positive_order():
    with pytest.raises(ArgumentError):
        leading_order_trace(power_symbol(0.5, 1, 4, 2))


@pytest.mark.parametrize("weighted", [False, True])
def test_traces_vanish_on_commutators(weighted, rng):
    for _ in range(50):
        A, B = random_symbol(rng), random_symbol(rng)
        C = commutator(A, B)
        w = None
        if weighted:
            w = np.zeros((2, 2 * N + 1), dtype=complex)
            w[:, N] = rng.normal(size=2)  # constant weights, one per direction
        assert abs(wodzicki_residue(C)) < 1e-10
        assert abs(leading_order_trace(C, w)) < 1e-10


def test_weighted_trace_reads_fourier_pairing():
    f = np.zeros((9, 1, 1), dtype=complex)
    f[4 + 2] = 3.0
    w = np.zeros(9, dtype=complex)
    w[4 - 2] = 0.5
    assert leading_order_trace(multiplication_symbol(f, 0), w) == pytest.approx(3.0)


def test_zero_symbol_is_zero():
    z = zero_symbol(-1.0, 2, 4, 3)
    assert z.leading_nonzero_order() is None and z.is_multiplication()


def test_binomial_oracle_is_exact():
    assert [Fraction(x).limit_denominator(100) for x in binomial_cauchy_oracle(0.5, 0.5, 3)] \
        == [1, 1, 0, 0]
