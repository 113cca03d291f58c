"""Multiple operator integrals in projection-sum, discretized, and factorized form.

The projection-sum form inserts the argument matrices between spectral
projections of the operator tuple and weights each multi-index by the symbol
evaluated at the cluster representatives:

    T(b_1, ..., b_n) = sum over (i_0..i_n) of
        phi(rep_{i_0}, ..., rep_{i_n}) P_{i_0} b_1 P_{i_1} ... b_n P_{i_n}

The contraction accumulates left partial products recursively in each
operator's eigenbasis, so the cost is O(K^{n+1} d^2) for K clusters rather
than d^{n+1} dense products.  The symbol does not factorize in general, so
no asymptotically better exact contraction exists; clustering is the
leverage.  Summation order is fixed, making results bit-stable across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    DimensionMismatchError,
    ParameterError,
    ToleranceError,
    WindowError,
)
from .families import FunctionFamily, divided_difference
from .spectral import EigenSystem, TraceModel, apply_callable, eig_hermitian, schatten_norm, trace

__all__ = [
    "Symbol",
    "DividedDifferenceSymbol",
    "FactorizedSymbol",
    "FactorTerm",
    "DiagonalRestrictedSymbol",
    "CustomSymbol",
    "dd_symbol",
    "exponential_symbol",
    "MOIOperands",
    "MOIResult",
    "NormReport",
    "operands",
    "moi_projection_sum",
    "moi_discretized",
    "moi_factorized",
    "moi_norm_report",
    "moi_trace",
    "projection_trace_weights",
]


# ---------------------------------------------------------------------------
# Symbols
# ---------------------------------------------------------------------------


class Symbol:
    """A function R^{arity} -> C driving a multiple operator integral."""

    arity: int

    def evaluate(self, nodes: Sequence[float]) -> complex:
        raise NotImplementedError

    def cache_key(self, nodes: Tuple[float, ...]):
        """Key for per-call memoization; symmetric symbols canonicalize."""
        return nodes


class DividedDifferenceSymbol(Symbol):
    """phi = n-th divided difference of a function family (arity n+1)."""

    def __init__(self, f: FunctionFamily, order: int):
        if order > f.max_order:
            raise ParameterError(
                f"family {f.family_id!r} cannot drive an order-{order} symbol"
            )
        self.f = f
        self.order = int(order)
        self.arity = self.order + 1

    def evaluate(self, nodes):
        return divided_difference(self.f, nodes)

    def cache_key(self, nodes):
        return tuple(sorted(nodes))

    def __repr__(self):
        return f"DividedDifferenceSymbol({self.f.family_id}, order={self.order})"


@dataclass
class FactorTerm:
    """One product term weight * g_0(l_0) * ... * g_n(l_n)."""

    weight: complex
    factors: Tuple[Callable[[np.ndarray], np.ndarray], ...]
    factor_sups: Optional[Tuple[float, ...]] = None  # sup |g_i| when known


class FactorizedSymbol(Symbol):
    """Finite sum of tensor-product terms (the finite factorized class)."""

    def __init__(self, terms: Sequence[FactorTerm]):
        if not terms:
            raise ParameterError("factorized symbol needs at least one term")
        arities = {len(t.factors) for t in terms}
        if len(arities) != 1:
            raise ParameterError("all factorized terms must share one arity")
        self.terms = list(terms)
        self.arity = arities.pop()

    def evaluate(self, nodes):
        out = 0.0 + 0.0j
        for term in self.terms:
            prod = complex(term.weight)
            for g, x in zip(term.factors, nodes):
                prod *= complex(np.asarray(g(np.asarray(float(x)))))
            out += prod
        return out

    def factorized_bound(self) -> Optional[float]:
        """Sum over terms of |weight| * prod sup|g_i|, when the sups are declared."""
        total = 0.0
        for term in self.terms:
            if term.factor_sups is None:
                return None
            total += abs(term.weight) * float(np.prod(term.factor_sups))
        return total


class DiagonalRestrictedSymbol(Symbol):
    """phi(l_0,...,l_{n-1}) = base(l_0,...,l_{n-1}, l_0); arity drops by one."""

    def __init__(self, base: Symbol):
        if base.arity < 2:
            raise ParameterError("cannot diagonally restrict an arity-1 symbol")
        self.base = base
        self.arity = base.arity - 1

    def evaluate(self, nodes):
        return self.base.evaluate(tuple(nodes) + (nodes[0],))

    def cache_key(self, nodes):
        return nodes


class CustomSymbol(Symbol):
    def __init__(self, fn: Callable[[Sequence[float]], complex], arity: int):
        self.fn = fn
        self.arity = int(arity)

    def evaluate(self, nodes):
        return complex(self.fn(nodes))


def dd_symbol(f: FunctionFamily, order: int) -> DividedDifferenceSymbol:
    return DividedDifferenceSymbol(f, order)


def exponential_symbol(s: float, arity: int) -> FactorizedSymbol:
    """phi(l_0..l_n) = exp(i s (l_0 + ... + l_n)) as a single product term."""
    s = float(s)

    def factor(x):
        return np.exp(1j * s * np.asarray(x))

    return FactorizedSymbol(
        [FactorTerm(1.0 + 0.0j, tuple([factor] * arity), tuple([1.0] * arity))]
    )


# ---------------------------------------------------------------------------
# Operands and results
# ---------------------------------------------------------------------------


@dataclass
class MOIOperands:
    """Operator tuple (n+1 eigen-systems), argument matrices (n), exponents."""

    operators: List[EigenSystem]
    arguments: List[np.ndarray]
    exponents: Optional[List[float]] = None

    def __post_init__(self):
        if len(self.operators) != len(self.arguments) + 1:
            raise DimensionMismatchError(
                f"{len(self.operators)} operators need {len(self.operators) - 1} "
                f"arguments, got {len(self.arguments)}"
            )
        dims = {E.dim for E in self.operators}
        dims |= {M.shape[0] for M in self.arguments}
        dims |= {M.shape[1] for M in self.arguments}
        if len(dims) != 1:
            raise DimensionMismatchError(f"inconsistent operand dimensions {sorted(dims)}")
        if self.exponents is not None:
            if len(self.exponents) != len(self.arguments):
                raise ParameterError("need one exponent per argument")
            if any(p <= 1.0 for p in self.exponents):
                raise ParameterError("argument exponents must satisfy p > 1")

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @property
    def n_args(self) -> int:
        return len(self.arguments)

    def one_over_p(self) -> Optional[float]:
        if self.exponents is None:
            return None
        return sum(1.0 / p for p in self.exponents)


def operands(
    operators: Sequence[Union[EigenSystem, np.ndarray]],
    arguments: Sequence[np.ndarray],
    exponents: Optional[Sequence[float]] = None,
    eps_cluster: Optional[float] = None,
) -> MOIOperands:
    """Build operands, eigendecomposing any raw Hermitian matrices."""
    ops = [
        E if isinstance(E, EigenSystem) else eig_hermitian(E, eps_cluster)
        for E in operators
    ]
    args = [np.asarray(M, dtype=complex) for M in arguments]
    return MOIOperands(ops, args, list(exponents) if exponents is not None else None)


@dataclass
class MOIResult:
    value: np.ndarray
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Contraction kernel
# ---------------------------------------------------------------------------


def _slot_blocks_clusters(ops: MOIOperands):
    blocks = []
    for E in ops.operators:
        blocks.append([(np.asarray(c, dtype=int), float(r))
                       for c, r in zip(E.clusters, E.cluster_reps)])
    return blocks


def _slot_blocks_bins(ops: MOIOperands, m: int, N: int):
    """Group eigen-indices by bin l = floor(lambda * m); representative l/m."""
    blocks = []
    hit = 0
    for E in ops.operators:
        ls = np.floor(E.eigenvalues * m).astype(np.int64)
        if np.any(np.abs(ls) > N):
            raise WindowError(
                f"window [-{N}/{m}, {N}/{m}] misses spectrum; need N >= "
                f"{int(np.max(np.abs(ls)))}"
            )
        slot = []
        for l in np.unique(ls):
            idx = np.nonzero(ls == l)[0]
            slot.append((idx, float(l) / m))
        hit += len(slot)
        blocks.append(slot)
    return blocks, hit


def _contract(symbol: Symbol, ops: MOIOperands, blocks) -> Tuple[np.ndarray, int]:
    """Sum over block multi-indices of phi(reps) * P b P ... b P."""
    d = ops.dim
    n = ops.n_args
    cache: Dict[tuple, complex] = {}

    def sym(nodes: Tuple[float, ...]) -> complex:
        key = symbol.cache_key(nodes)
        val = cache.get(key)
        if val is None:
            val = complex(symbol.evaluate(nodes))
            cache[key] = val
        return val

    inner = np.zeros((d, d), dtype=complex)
    if n == 0:
        for idx, rep in blocks[0]:
            w = sym((rep,))
            inner[idx, idx] += w
    else:
        C = [
            ops.operators[k].basis.conj().T @ ops.arguments[k] @ ops.operators[k + 1].basis
            for k in range(n)
        ]

        def rec(slot: int, rows: np.ndarray, partial: np.ndarray, reps: Tuple[float, ...]):
            if slot == n:
                for idx, rep in blocks[n]:
                    w = sym(reps + (rep,))
                    inner[np.ix_(rows, idx)] += w * partial[:, idx]
            else:
                for idx, rep in blocks[slot]:
                    sub = partial[:, idx] @ C[slot][idx, :]
                    rec(slot + 1, rows, sub, reps + (rep,))

        for idx0, rep0 in blocks[0]:
            rec(1, idx0, C[0][idx0, :], (rep0,))

    V0 = ops.operators[0].basis
    Vn = ops.operators[-1].basis
    value = V0 @ inner @ Vn.conj().T
    return value, len(cache)


def _check_symbol(symbol: Symbol, ops: MOIOperands) -> None:
    if symbol.arity != ops.n_args + 1:
        raise DimensionMismatchError(
            f"symbol arity {symbol.arity} does not match {ops.n_args + 1} operator slots"
        )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def moi_projection_sum(symbol: Symbol, ops: MOIOperands) -> MOIResult:
    """Projection-sum multiple operator integral at cluster resolution."""
    _check_symbol(symbol, ops)
    blocks = _slot_blocks_clusters(ops)
    value, n_evals = _contract(symbol, ops, blocks)
    return MOIResult(
        value=value,
        diagnostics={
            "cluster_counts": [len(b) for b in blocks],
            "symbol_evaluations": n_evals,
        },
    )


def moi_discretized(symbol: Symbol, ops: MOIOperands, m: int, N: int) -> MOIResult:
    """Discretized sum over spectral bins [l/m, (l+1)/m), symbol at bin corners.

    Finite spectra make the window limit exact: once [-N/m, N/m] covers every
    eigenvalue the sum is complete, and a too-small window raises
    :class:`WindowError` instead of silently truncating.
    """
    _check_symbol(symbol, ops)
    if m < 1:
        raise ParameterError("bin density m must be >= 1")
    blocks, bins_hit = _slot_blocks_bins(ops, m, N)
    value, n_evals = _contract(symbol, ops, blocks)
    return MOIResult(
        value=value,
        diagnostics={
            "cluster_counts": [len(b) for b in blocks],
            "symbol_evaluations": n_evals,
            "bins_hit": bins_hit,
            "m": m,
        },
    )


def moi_factorized(symbol: FactorizedSymbol, ops: MOIOperands) -> MOIResult:
    """Evaluate a factorized symbol term by term through functional calculus."""
    if not isinstance(symbol, FactorizedSymbol):
        raise ParameterError("moi_factorized needs a FactorizedSymbol")
    _check_symbol(symbol, ops)
    d = ops.dim
    out = np.zeros((d, d), dtype=complex)
    for term in symbol.terms:
        acc = apply_callable(term.factors[0], ops.operators[0])
        for k in range(ops.n_args):
            acc = acc @ ops.arguments[k] @ apply_callable(
                term.factors[k + 1], ops.operators[k + 1]
            )
        out += complex(term.weight) * acc
    return MOIResult(value=out, diagnostics={"terms": len(symbol.terms)})


@dataclass
class NormReport:
    ratio: float
    norm_value: float
    denominator: float
    factorized_bound: Optional[float] = None
    within_factorized_bound: Optional[bool] = None


def moi_norm_report(symbol: Symbol, ops: MOIOperands, p: float) -> NormReport:
    """Measured ratio ||T(b)||_p / (sup|f^(n)| * prod ||b_i||_{p_i}).

    The ratio is recorded for monitoring only; no universal constant is
    asserted.  For factorized symbols with declared factor sups the product
    bound sum |w| prod sup|g_i| is checked as a hard inequality.
    """
    if ops.exponents is None:
        raise ParameterError("norm report needs argument exponents")
    inv_p = ops.one_over_p()
    if not math.isclose(inv_p, 1.0 / p, rel_tol=1e-12):
        raise ParameterError(
            f"exponents are inconsistent: sum 1/p_i = {inv_p}, expected 1/p = {1.0 / p}"
        )
    if not 1.0 < p < math.inf:
        raise ParameterError("norm report needs 1 < p < inf")
    hull_lo = min(E.eigenvalues[0] for E in ops.operators)
    hull_hi = max(E.eigenvalues[-1] for E in ops.operators)
    if isinstance(symbol, DividedDifferenceSymbol):
        if not symbol.f.bounded_deriv.get(symbol.order, False):
            raise ParameterError(
                f"family {symbol.f.family_id!r} does not declare a bounded "
                f"derivative of order {symbol.order}"
            )
        sup = symbol.f.sup_abs_deriv(symbol.order, (hull_lo, hull_hi))
    elif isinstance(symbol, FactorizedSymbol):
        sup = symbol.factorized_bound()
        if sup is None:
            grid = np.linspace(hull_lo, hull_hi, 512)
            sup = sum(
                abs(t.weight) * float(np.prod([np.max(np.abs(g(grid))) for g in t.factors]))
                for t in symbol.terms
            )
    else:
        raise ParameterError("norm report supports divided-difference and factorized symbols")
    value = moi_projection_sum(symbol, ops).value
    tnorm = schatten_norm(value, p)
    arg_norms = [
        schatten_norm(M, pk) for M, pk in zip(ops.arguments, ops.exponents)
    ]
    denom = sup * float(np.prod(arg_norms))
    ratio = 0.0 if denom == 0 else tnorm / denom
    report = NormReport(ratio=ratio, norm_value=tnorm, denominator=denom)
    if isinstance(symbol, FactorizedSymbol):
        bound = symbol.factorized_bound()
        if bound is not None:
            limit = bound * float(np.prod(arg_norms))
            report.factorized_bound = bound
            report.within_factorized_bound = tnorm <= limit * (1.0 + 1e-9) + 1e-15
            if not report.within_factorized_bound:
                raise ToleranceError(
                    "factorized norm bound violated", lhs=tnorm, rhs=limit
                )
    return report


def _rotated_factorized_trace(
    symbol: Symbol, ops: MOIOperands, closing: np.ndarray, model: Optional[TraceModel]
) -> Optional[complex]:
    """Trace evaluated through the cyclically rotated factorized product.

    For a plain factorized symbol the last factor wraps around the closing
    matrix; for a diagonally restricted factorized symbol the wrapped factor
    multiplies the first slot directly, which is a genuinely different
    evaluation path from the projection sum.
    """
    if isinstance(symbol, FactorizedSymbol):
        total = 0.0 + 0.0j
        last = symbol.arity - 1
        for term in symbol.terms:
            acc = apply_callable(term.factors[last], ops.operators[last]) @ closing
            acc = acc @ apply_callable(term.factors[0], ops.operators[0])
            for k in range(ops.n_args):
                acc = acc @ ops.arguments[k]
                if k + 1 < last:
                    acc = acc @ apply_callable(term.factors[k + 1], ops.operators[k + 1])
            total += complex(term.weight) * trace(acc, model)
        return total
    if isinstance(symbol, DiagonalRestrictedSymbol) and isinstance(
        symbol.base, FactorizedSymbol
    ):
        total = 0.0 + 0.0j
        for term in symbol.base.terms:
            first = apply_callable(term.factors[-1], ops.operators[0]) @ apply_callable(
                term.factors[0], ops.operators[0]
            )
            acc = first
            for k in range(ops.n_args):
                acc = acc @ ops.arguments[k] @ apply_callable(
                    term.factors[k + 1], ops.operators[k + 1]
                )
            total += complex(term.weight) * trace(acc @ closing, model)
        return total
    return None


def moi_trace(
    symbol: Symbol,
    ops: MOIOperands,
    closing: np.ndarray,
    model: Optional[TraceModel] = None,
    check_tol: float = 1e-9,
) -> complex:
    """trace(T(b_1..b_n) * closing) under the given trace model.

    When the symbol carries a factorized form, the cyclically rotated
    factorized evaluation is computed as well and must agree to check_tol
    relative; disagreement raises :class:`ToleranceError` with both values.
    """
    closing = np.asarray(closing, dtype=complex)
    if closing.shape != (ops.dim, ops.dim):
        raise DimensionMismatchError("closing matrix dimension mismatch")
    value = moi_projection_sum(symbol, ops).value
    direct = trace(value @ closing, model)
    rotated = _rotated_factorized_trace(symbol, ops, closing, model)
    if rotated is not None:
        scale = max(1.0, abs(direct), abs(rotated))
        if abs(direct - rotated) > check_tol * scale:
            raise ToleranceError(
                "cyclically rotated trace disagrees with direct evaluation",
                lhs=direct,
                rhs=rotated,
                deviation=abs(direct - rotated) / scale,
            )
    return direct


def projection_trace_weights(
    ops: MOIOperands, closing: Optional[np.ndarray] = None
):
    """Structure weights W(i_0..i_n) = trace(P_{i_0} b_1 P_{i_1} ... b_n P_{i_n} C).

    Separating these weights from the symbol lets a caller sweep a symbol
    family over the same operator tuple at the cost of one contraction: the
    trace of the operator integral against C is then
    sum over multi-indices of phi(reps) * W.

    Returns (list of per-slot representative arrays, dict multi-index -> weight).
    """
    d = ops.dim
    n = ops.n_args
    blocks = _slot_blocks_clusters(ops)
    V0 = ops.operators[0].basis
    Vn = ops.operators[-1].basis
    Cwrap = Vn.conj().T @ (np.eye(d) if closing is None else np.asarray(closing, dtype=complex)) @ V0
    weights: Dict[Tuple[int, ...], complex] = {}
    reps_per_slot = [np.array([r for _, r in slot]) for slot in blocks]

    if n == 0:
        for b0, (idx, _) in enumerate(blocks[0]):
            weights[(b0,)] = complex(np.trace(Cwrap[np.ix_(idx, idx)]))
        return reps_per_slot, weights

    C = [
        ops.operators[k].basis.conj().T @ ops.arguments[k] @ ops.operators[k + 1].basis
        for k in range(n)
    ]

    def rec(slot, rows, partial, key):
        if slot == n:
            for bn, (idx, _) in enumerate(blocks[n]):
                w = complex(np.einsum("ab,ba->", partial[:, idx], Cwrap[np.ix_(idx, rows)]))
                weights[key + (bn,)] = w
        else:
            for bs, (idx, _) in enumerate(blocks[slot]):
                sub = partial[:, idx] @ C[slot][idx, :]
                rec(slot + 1, rows, sub, key + (bs,))

    for b0, (idx0, _) in enumerate(blocks[0]):
        rec(1, idx0, C[0][idx0, :], (b0,))
    return reps_per_slot, weights
