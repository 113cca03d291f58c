"""Cross-form consistency of the multiple operator integral implementations."""

import itertools

import numpy as np
import pytest

from moilab.errors import (
    DimensionMismatchError,
    ParameterError,
    WindowError,
)
from moilab.families import divided_difference, exponential, gaussian, monomial
from moilab.moi import (
    CustomSymbol,
    DiagonalRestrictedSymbol,
    FactorizedSymbol,
    FactorTerm,
    dd_symbol,
    exponential_symbol,
    moi_discretized,
    moi_factorized,
    moi_norm_report,
    moi_projection_sum,
    moi_trace,
    operands,
    projection_trace_weights,
)
from moilab.rng import SplitMix64
from moilab.spectral import eig_hermitian, trace
from conftest import random_hermitian


def brute_force_moi(f, eigsystems, args):
    """Unclustered sum over all eigen-index tuples via rank-one projections."""
    d = eigsystems[0].dim
    n = len(args)
    out = np.zeros((d, d), dtype=complex)
    for idx in itertools.product(range(d), repeat=n + 1):
        nodes = tuple(eigsystems[s].eigenvalues[idx[s]] for s in range(n + 1))
        w = divided_difference(f, nodes)
        v = eigsystems[0].basis[:, idx[0]]
        acc = np.outer(v, v.conj())
        for k in range(n):
            u = eigsystems[k + 1].basis[:, idx[k + 1]]
            acc = acc @ args[k] @ np.outer(u, u.conj())
        out += w * acc
    return out


def test_diagonal_operators_give_schur_product():
    lam = np.array([0.3, 1.1, 2.4])
    E = eig_hermitian(np.diag(lam))
    B = SplitMix64(4).complex_normals((3, 3))
    f = gaussian()
    got = moi_projection_sum(dd_symbol(f, 1), operands([E, E], [B])).value
    want = np.empty((3, 3), dtype=complex)
    for i in range(3):
        for j in range(3):
            want[i, j] = divided_difference(f, (lam[i], lam[j])) * B[i, j]
    assert np.allclose(got, want, atol=1e-12)


def test_square_function_first_order_is_anticommutator():
    A = random_hermitian(SplitMix64(9), 4)
    B = random_hermitian(SplitMix64(10), 4)
    E = eig_hermitian(A)
    got = moi_projection_sum(dd_symbol(monomial(2), 1), operands([E, E], [B])).value
    want = A @ B + B @ A
    assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_top_monomial_coefficient_is_argument_power(n):
    A = random_hermitian(SplitMix64(12), 4)
    B = random_hermitian(SplitMix64(13), 4)
    E = eig_hermitian(A)
    got = moi_projection_sum(dd_symbol(monomial(n), n), operands([E] * (n + 1), [B] * n)).value
    want = np.linalg.matrix_power(B, n)
    assert np.linalg.norm(got - want) <= 1e-10 * max(1.0, np.linalg.norm(want))


def test_projection_sum_matches_brute_force_exp():
    gen = SplitMix64(21)
    A1 = random_hermitian(gen, 3)
    A2 = random_hermitian(gen, 3)
    A3 = random_hermitian(gen, 3)
    B1 = gen.complex_normals((3, 3))
    B2 = gen.complex_normals((3, 3))
    f = exponential()
    Es = [eig_hermitian(X) for X in (A1, A2, A3)]
    got = moi_projection_sum(dd_symbol(f, 2), operands(Es, [B1, B2])).value
    want = brute_force_moi(f, Es, [B1, B2])
    assert np.linalg.norm(got - want) <= 1e-10 * max(1.0, np.linalg.norm(want))


def test_projection_sum_matches_brute_force_gaussian_n3():
    gen = SplitMix64(33)
    mats = [random_hermitian(gen, 3) for _ in range(4)]
    args = [gen.complex_normals((3, 3)) for _ in range(3)]
    f = gaussian()
    Es = [eig_hermitian(X) for X in mats]
    got = moi_projection_sum(dd_symbol(f, 3), operands(Es, args)).value
    want = brute_force_moi(f, Es, args)
    assert np.linalg.norm(got - want) <= 1e-10 * max(1.0, np.linalg.norm(want))


def test_multilinearity():
    gen = SplitMix64(40)
    A = random_hermitian(gen, 4)
    E = eig_hermitian(A)
    B1, B1p, B2 = (gen.complex_normals((4, 4)) for _ in range(3))
    sym = dd_symbol(gaussian(), 2)
    alpha = 0.7 - 0.3j
    lhs = moi_projection_sum(sym, operands([E] * 3, [alpha * B1 + B1p, B2])).value
    rhs = alpha * moi_projection_sum(sym, operands([E] * 3, [B1, B2])).value \
        + moi_projection_sum(sym, operands([E] * 3, [B1p, B2])).value
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


def test_palindromic_real_symbol_is_hermitian():
    gen = SplitMix64(41)
    A = random_hermitian(gen, 4)
    C = random_hermitian(gen, 4)
    B = random_hermitian(gen, 4)
    EA, EC = eig_hermitian(A), eig_hermitian(C)
    out = moi_projection_sum(dd_symbol(gaussian(), 2), operands([EA, EC, EA], [B, B])).value
    assert np.linalg.norm(out - out.conj().T) <= 1e-10


def test_arity_and_dimension_validation():
    E = eig_hermitian(np.eye(2))
    with pytest.raises(DimensionMismatchError):
        moi_projection_sum(dd_symbol(gaussian(), 2), operands([E, E], [np.eye(2)]))
    with pytest.raises(DimensionMismatchError):
        operands([E, E], [np.eye(3)])
    with pytest.raises(ParameterError):
        operands([E, E], [np.eye(2)], exponents=[1.0])


# --- discretized form ---


def test_discretized_exact_when_spectra_on_grid():
    lam = np.array([-0.5, 0.25, 1.0])  # multiples of 1/4
    E = eig_hermitian(np.diag(lam))
    B = SplitMix64(6).complex_normals((3, 3))
    sym = dd_symbol(gaussian(), 1)
    ops = operands([E, E], [B])
    exact = moi_projection_sum(sym, ops).value
    for m in (4, 8, 64):
        got = moi_discretized(sym, ops, m=m, N=10 * m).value
        assert np.linalg.norm(got - exact) <= 1e-12 * max(1.0, np.linalg.norm(exact))


def test_discretized_scalar_case_uses_bin_corner():
    a = 0.37
    E = eig_hermitian(np.array([[a]]))
    b = np.array([[2.0 + 1.0j]])
    sym = CustomSymbol(lambda nodes: nodes[0] + 10 * nodes[1], arity=2)
    m = 8
    got = moi_discretized(sym, operands([E, E], [b]), m=m, N=100).value
    corner = np.floor(a * m) / m
    assert got[0, 0] == pytest.approx((corner + 10 * corner) * b[0, 0])


def test_discretized_window_error():
    E = eig_hermitian(np.diag([5.0, -3.0]))
    sym = dd_symbol(gaussian(), 1)
    with pytest.raises(WindowError):
        moi_discretized(sym, operands([E, E], [np.eye(2)]), m=4, N=10)


def test_discretized_self_convergence_seeded():
    # seed chosen so each doubling of m shrinks the error by at least 0.75
    gen = SplitMix64(4)
    A = random_hermitian(gen, 4)
    B = random_hermitian(gen, 4)
    B /= np.linalg.norm(B, 2)
    EA = eig_hermitian(A)
    EAB = eig_hermitian(A + B)
    sym = dd_symbol(gaussian(), 2)
    ops = operands([EAB, EA, EA], [B, B])
    exact = moi_projection_sum(sym, ops).value
    errs = []
    for m in [2 ** k for k in range(4, 13)]:
        approx = moi_discretized(sym, ops, m=m, N=64 * m).value
        errs.append(np.linalg.norm(approx - exact))
    ratios = [e2 / e1 for e1, e2 in zip(errs, errs[1:])]
    assert all(r <= 0.75 for r in ratios), ratios
    assert errs[-1] < errs[0]


def test_discretized_never_grows_beyond_slack_across_seeds():
    # generic property: the error never grows by more than 10% per doubling
    sym = dd_symbol(gaussian(), 2)
    for seed in (2, 5, 7, 11):
        gen = SplitMix64(seed)
        A = random_hermitian(gen, 4)
        B = random_hermitian(gen, 4)
        B /= np.linalg.norm(B, 2)
        ops = operands([eig_hermitian(A + B), eig_hermitian(A), eig_hermitian(A)], [B, B])
        exact = moi_projection_sum(sym, ops).value
        errs = [
            np.linalg.norm(moi_discretized(sym, ops, m=2 ** k, N=64 * 2 ** k).value - exact)
            for k in range(4, 13)
        ]
        ratios = [e2 / e1 for e1, e2 in zip(errs, errs[1:])]
        assert all(r <= 1.1 for r in ratios), (seed, ratios)


# --- factorized form ---


def test_factorized_all_ones_gives_argument_product():
    gen = SplitMix64(50)
    Es = [eig_hermitian(random_hermitian(gen, 3)) for _ in range(3)]
    B1, B2 = (gen.complex_normals((3, 3)) for _ in range(2))
    one = FactorizedSymbol([FactorTerm(1.0, tuple([lambda x: np.ones_like(x)] * 3),
                                       (1.0, 1.0, 1.0))])
    got = moi_factorized(one, operands(Es, [B1, B2])).value
    assert np.allclose(got, B1 @ B2, atol=1e-12)


def test_factorized_exponential_is_alternating_product():
    gen = SplitMix64(51)
    mats = [random_hermitian(gen, 3) for _ in range(3)]
    B1, B2 = (gen.complex_normals((3, 3)) for _ in range(2))
    s = 0.9
    Es = [eig_hermitian(M) for M in mats]
    got = moi_factorized(exponential_symbol(s, 3), operands(Es, [B1, B2])).value
    import scipy.linalg  # oracle only

    e0, e1, e2 = (scipy.linalg.expm(1j * s * M) for M in mats)
    want = e0 @ B1 @ e1 @ B2 @ e2
    assert np.linalg.norm(got - want) <= 1e-9 * np.linalg.norm(want)


def test_factorized_agrees_with_projection_sum():
    gen = SplitMix64(52)
    mats = [random_hermitian(gen, 4) for _ in range(3)]
    args = [gen.complex_normals((4, 4)) for _ in range(2)]
    Es = [eig_hermitian(M) for M in mats]
    sym = exponential_symbol(1.3, 3)
    ops = operands(Es, args)
    a = moi_factorized(sym, ops).value
    b = moi_projection_sum(sym, ops).value
    assert np.linalg.norm(a - b) <= 1e-9 * max(1.0, np.linalg.norm(a))


# --- norm report ---


def test_norm_report_zero_argument():
    E = eig_hermitian(random_hermitian(SplitMix64(60), 3))
    ops = operands([E, E], [np.zeros((3, 3))], exponents=[2.0])
    rep = moi_norm_report(dd_symbol(gaussian(), 1), ops, p=2.0)
    assert rep.ratio == 0.0


def test_norm_report_scalar_confluent_bound():
    a = 0.4
    E = eig_hermitian(np.array([[a]]))
    b = np.array([[1.0]])
    f = gaussian()
    ops = operands([E, E, E], [b, b], exponents=[4.0, 4.0])
    rep = moi_norm_report(dd_symbol(f, 2), ops, p=2.0)
    # scalar value is |f''(a)|/2; ratio against sup|f''| stays below 1/2
    assert rep.ratio <= 0.5 + 1e-12


def test_norm_report_validates_exponents():
    E = eig_hermitian(np.eye(2))
    ops = operands([E, E], [np.eye(2)], exponents=[2.0])
    with pytest.raises(ParameterError):
        moi_norm_report(dd_symbol(gaussian(), 1), ops, p=3.0)
    ops2 = operands([E, E], [np.eye(2)])
    with pytest.raises(ParameterError):
        moi_norm_report(dd_symbol(gaussian(), 1), ops2, p=2.0)
    with pytest.raises(ParameterError):
        moi_norm_report(dd_symbol(exponential(), 1), ops, p=2.0)


def test_norm_report_factorized_bound_holds():
    gen = SplitMix64(61)
    Es = [eig_hermitian(random_hermitian(gen, 4)) for _ in range(3)]
    args = [gen.complex_normals((4, 4)) for _ in range(2)]
    ops = operands(Es, args, exponents=[4.0, 4.0])
    rep = moi_norm_report(exponential_symbol(0.8, 3), ops, p=2.0)
    assert rep.factorized_bound == pytest.approx(1.0)
    assert rep.within_factorized_bound


def test_norm_report_ensemble_max_recorded():
    gen = SplitMix64(777)
    ratios = []
    for _ in range(20):
        A = random_hermitian(gen, 6)
        B = random_hermitian(gen, 6)
        E = eig_hermitian(A)
        ops = operands([E, E, E], [B, B], exponents=[4.0, 4.0])
        ratios.append(moi_norm_report(dd_symbol(gaussian(), 2), ops, p=2.0).ratio)
    assert np.isfinite(ratios).all()
    assert max(ratios) > 0


# --- traces ---


def test_moi_trace_zero_closing():
    E = eig_hermitian(random_hermitian(SplitMix64(70), 3))
    ops = operands([E, E], [np.eye(3)])
    assert moi_trace(dd_symbol(gaussian(), 1), ops, np.zeros((3, 3))) == 0


def test_moi_trace_square_cyclicity():
    gen = SplitMix64(71)
    A = random_hermitian(gen, 4)
    B = random_hermitian(gen, 4)
    E = eig_hermitian(A)
    got = moi_trace(dd_symbol(monomial(2), 1), operands([E, E], [B]), closing=B)
    want = 2 * np.trace(A @ B @ B)
    assert got == pytest.approx(want, rel=1e-10)


def test_moi_trace_factorized_rotation_check_runs():
    gen = SplitMix64(72)
    mats = [random_hermitian(gen, 4) for _ in range(3)]
    args = [gen.complex_normals((4, 4)) for _ in range(2)]
    Es = [eig_hermitian(M) for M in mats]
    closing = gen.complex_normals((4, 4))
    val = moi_trace(exponential_symbol(0.5, 3), operands(Es, args), closing)
    assert np.isfinite(val.real) and np.isfinite(val.imag)


def test_diagonal_restriction_matches_definition():
    gen = SplitMix64(73)
    A = random_hermitian(gen, 4)
    C = random_hermitian(gen, 4)
    B = gen.complex_normals((4, 4))
    EA, EC = eig_hermitian(A), eig_hermitian(C)
    base = dd_symbol(gaussian(), 2)
    restricted = DiagonalRestrictedSymbol(base)
    got = moi_projection_sum(restricted, operands([EA, EC], [B])).value
    # direct double sum over cluster representatives
    want = np.zeros((4, 4), dtype=complex)
    f = gaussian()
    CB = EA.basis.conj().T @ B @ EC.basis
    inner = np.zeros((4, 4), dtype=complex)
    for i, ri in enumerate(EA.cluster_reps):
        for j, rj in enumerate(EC.cluster_reps):
            w = divided_difference(f, (ri, rj, ri))
            ii = np.asarray(EA.clusters[i])
            jj = np.asarray(EC.clusters[j])
            inner[np.ix_(ii, jj)] += w * CB[np.ix_(ii, jj)]
    want = EA.basis @ inner @ EC.basis.conj().T
    assert np.allclose(got, want, atol=1e-12)


def test_diagonal_restriction_of_factorized_matches_wrapped_product():
    # the restricted projection sum must equal the factorized product whose
    # wrapped factor multiplies the first slot
    gen = SplitMix64(74)
    A = random_hermitian(gen, 4)
    C = random_hermitian(gen, 4)
    B = gen.complex_normals((4, 4))
    EA, EC = eig_hermitian(A), eig_hermitian(C)
    sym = exponential_symbol(0.7, 3)
    restricted = DiagonalRestrictedSymbol(sym)
    got = moi_projection_sum(restricted, operands([EA, EC], [B])).value
    import scipy.linalg

    s = 0.7
    want = scipy.linalg.expm(2j * s * A) @ B @ scipy.linalg.expm(1j * s * C)
    assert np.linalg.norm(got - want) <= 1e-9 * np.linalg.norm(want)


def test_projection_trace_weights_reproduce_moi_trace():
    gen = SplitMix64(75)
    A = random_hermitian(gen, 4)
    B = random_hermitian(gen, 4)
    EA = eig_hermitian(A)
    EAB = eig_hermitian(A + B)
    ops = operands([EAB, EA, EA], [B, B])
    f = gaussian()
    reps, weights = projection_trace_weights(ops)
    total = 0.0 + 0.0j
    for key, w in weights.items():
        nodes = tuple(reps[s][key[s]] for s in range(3))
        total += divided_difference(f, nodes) * w
    direct = trace(moi_projection_sum(dd_symbol(f, 2), ops).value)
    assert total == pytest.approx(direct, rel=1e-10, abs=1e-12)
