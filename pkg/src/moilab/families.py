"""Scalar function families with exact derivatives and divided differences.

A :class:`FunctionFamily` bundles closed-form evaluators for f, f', ...,
f^(max_order) together with declared regularity flags (bounded derivatives,
decay at infinity, compact support, admissible divided-difference kernels).
The flags are metadata, not computed facts: they gate which operator-level
results a family is allowed to certify, and :func:`classify` turns them into
a report.

Divided differences are evaluated with a confluent (Hermite) table: nodes
closer than a merge tolerance are identified first, and repeated nodes use
derivative values f^(j)(x)/j! instead of difference quotients.  This keeps
the recursion stable when node gaps approach the square root of machine
epsilon, where the raw quotient loses every significant digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, OrderLimitError, ParameterError

__all__ = [
    "FunctionFamily",
    "NodeList",
    "AdmissibilityReport",
    "divided_difference",
    "divided_difference_tensor",
    "classify",
    "merge_tolerance",
    "monomial",
    "exponential",
    "fourier",
    "gaussian",
    "bump",
    "runge",
    "recip_plus",
    "family_from_spec",
    "BUILTIN_FAMILIES",
]

# Kernel classes a divided difference may be declared to live in:
#   "continuous" - finite factorized form with uniformly continuous factors
#   "bounded"    - finite factorized form with bounded factors only
#   None         - no declared factorization
KERNEL_CONTINUOUS = "continuous"
KERNEL_BOUNDED = "bounded"


def merge_tolerance(nodes) -> float:
    """Default node-merge tolerance: 1e-7 * (1 + max |node|)."""
    m = float(np.max(np.abs(nodes))) if len(nodes) else 0.0
    return 1e-7 * (1.0 + m)


class FunctionFamily:
    """A scalar function with derivative evaluators up to a fixed order.

    Parameters
    ----------
    family_id:
        Short string id, addressable from configuration.
    max_order:
        Highest derivative order the evaluator supports.
    evaluator:
        ``evaluator(k, x)`` returns f^(k)(x); must accept numpy arrays in x.
    bounded_deriv, vanishes_at_inf:
        Per-order flags for k = 1..max_order (k = 0 entries are ignored).
    dd_kernel:
        Per-order declared kernel class of the k-th divided difference
        ("continuous", "bounded", or None).  Declared, never computed.
    deriv_sup:
        Optional map k -> sup |f^(k)| over the domain, for orders where it
        is known in closed form.
    """

    def __init__(
        self,
        family_id: str,
        max_order: int,
        evaluator: Callable[[int, np.ndarray], np.ndarray],
        *,
        bounded_deriv: Dict[int, bool],
        vanishes_at_inf: Dict[int, bool],
        compact_support: bool = False,
        real_valued: bool = True,
        dd_kernel: Optional[Dict[int, Optional[str]]] = None,
        domain: Tuple[float, float] = (-math.inf, math.inf),
        deriv_sup: Optional[Dict[int, float]] = None,
        params: Optional[dict] = None,
    ):
        if max_order < 0:
            raise ParameterError("max_order must be nonnegative")
        self.family_id = family_id
        self.max_order = int(max_order)
        self._evaluator = evaluator
        self.bounded_deriv = dict(bounded_deriv)
        self.vanishes_at_inf = dict(vanishes_at_inf)
        self.compact_support = bool(compact_support)
        self.real_valued = bool(real_valued)
        self.dd_kernel = dict(dd_kernel or {})
        self.domain = (float(domain[0]), float(domain[1]))
        self._deriv_sup = dict(deriv_sup or {})
        self.params = dict(params or {})

    def __repr__(self):
        return f"FunctionFamily({self.family_id!r}, max_order={self.max_order})"

    def eval(self, k: int, x):
        """Value of f^(k) at x (scalar or array)."""
        if not 0 <= k <= self.max_order:
            raise OrderLimitError(
                f"family {self.family_id!r} supports derivatives up to order "
                f"{self.max_order}, got {k}"
            )
        xa = np.asarray(x, dtype=float)
        self.check_domain(xa)
        out = self._evaluator(k, xa)
        return out if np.ndim(x) else complex(out) if np.iscomplexobj(out) else float(out)

    def check_domain(self, x) -> None:
        lo, hi = self.domain
        xa = np.asarray(x, dtype=float)
        if np.any(xa < lo) or np.any(xa > hi):
            raise DomainError(
                f"point outside domain [{lo}, {hi}] of family {self.family_id!r}"
            )

    def sup_abs_deriv(self, k: int, hull: Optional[Tuple[float, float]] = None) -> float:
        """Sup of |f^(k)|, from the declared table or a grid estimate on hull."""
        if k in self._deriv_sup:
            return self._deriv_sup[k]
        if hull is None:
            lo, hi = self.domain
            if not (math.isfinite(lo) and math.isfinite(hi)):
                lo, hi = -8.0, 8.0
            hull = (lo, hi)
        pad = 0.1 * (hull[1] - hull[0] + 1.0)
        lo = max(self.domain[0], hull[0] - pad)
        hi = min(self.domain[1], hull[1] + pad)
        grid = np.linspace(lo, hi, 4001)
        return float(np.max(np.abs(self._evaluator(k, grid))))


@dataclass
class NodeList:
    """Interpolation nodes with tolerance-based multiplicity structure."""

    nodes: Tuple[float, ...]

    def __init__(self, nodes: Sequence[float]):
        vals = tuple(float(x) for x in nodes)
        if not vals:
            raise ParameterError("NodeList needs at least one node")
        self.nodes = vals

    def __len__(self):
        return len(self.nodes)

    def merged(self, tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted representatives and multiplicities after merging.

        Single-linkage: adjacent sorted nodes with gap <= tol join a block;
        the representative is the block mean.
        """
        if tol is None:
            tol = merge_tolerance(self.nodes)
        z = np.sort(np.asarray(self.nodes, dtype=float))
        reps = []
        mults = []
        start = 0
        for i in range(1, len(z) + 1):
            if i == len(z) or z[i] - z[i - 1] > tol:
                reps.append(float(np.mean(z[start:i])))
                mults.append(i - start)
                start = i
        return np.asarray(reps), np.asarray(mults, dtype=int)

    def expanded(self, tol: Optional[float] = None) -> np.ndarray:
        """Sorted node vector with merged blocks replaced by their representative."""
        reps, mults = self.merged(tol)
        return np.repeat(reps, mults)


def divided_difference(f: FunctionFamily, nodes, merge_tol: Optional[float] = None) -> complex:
    """n-th order divided difference of f on len(nodes) = n+1 nodes.

    Symmetric in the node order.  A block of m+1 coincident (or tolerance
    merged) nodes contributes the confluent value f^(m)(x)/m!.
    """
    nl = nodes if isinstance(nodes, NodeList) else NodeList(nodes)
    order = len(nl) - 1
    if order > f.max_order:
        raise OrderLimitError(
            f"divided difference of order {order} needs derivatives the family "
            f"{f.family_id!r} does not provide (max_order={f.max_order})"
        )
    f.check_domain(np.asarray(nl.nodes))
    z = nl.expanded(merge_tol)
    n = len(z)
    col = np.array([f._evaluator(0, np.asarray(x)) for x in z], dtype=complex)
    for j in range(1, n):
        nxt = np.empty(n - j, dtype=complex)
        for i in range(n - j):
            if z[i + j] == z[i]:
                nxt[i] = complex(f._evaluator(j, np.asarray(z[i]))) / math.factorial(j)
            else:
                nxt[i] = (col[i + 1] - col[i]) / (z[i + j] - z[i])
        col = nxt
    return complex(col[0])


def divided_difference_tensor(
    f: FunctionFamily, order: int, node_lists: Sequence[Sequence[float]]
) -> np.ndarray:
    """Entry (i_0,...,i_n) = divided_difference(f, (lists[0][i_0],...,lists[n][i_n])).

    Memoizes over permutation-equivalent node multisets; the cache lives for
    the duration of one call, so concurrent callers never share state.
    """
    if len(node_lists) != order + 1:
        raise ParameterError(f"expected {order + 1} node lists, got {len(node_lists)}")
    if order > f.max_order:
        raise OrderLimitError(
            f"order {order} exceeds max_order={f.max_order} of {f.family_id!r}"
        )
    lists = [np.asarray(l, dtype=float) for l in node_lists]
    for l in lists:
        if l.size == 0:
            raise ParameterError("empty node list")
    shape = tuple(len(l) for l in lists)
    out = np.empty(shape, dtype=complex)
    cache: Dict[Tuple[float, ...], complex] = {}
    for idx in np.ndindex(shape):
        nodes = tuple(lists[s][idx[s]] for s in range(order + 1))
        key = tuple(sorted(nodes))
        val = cache.get(key)
        if val is None:
            val = divided_difference(f, nodes)
            cache[key] = val
        out[idx] = val
    return out


@dataclass
class AdmissibilityReport:
    """Which operator-level guarantees the declared flags support at order n."""

    family_id: str
    order: int
    differentiable_lp: bool      # all of f', ..., f^(n) bounded and continuous
    nth_deriv_vanishes: bool     # f^(n) decays at infinity
    trace_formula_lp: bool       # decaying f^(n), bounded lower derivatives,
    #                              continuous factorized n-th kernel
    trace_formula_schatten: bool  # bounded f^(n) and factorized n-th kernel
    moment_identities_only: bool = False
    notes: Tuple[str, ...] = field(default_factory=tuple)


def classify(f: FunctionFamily, n: int) -> AdmissibilityReport:
    """Flag-driven admissibility of the family at order n."""
    if n > f.max_order:
        raise OrderLimitError(
            f"order {n} exceeds max_order={f.max_order} of {f.family_id!r}"
        )
    bounded_all = all(f.bounded_deriv.get(k, False) for k in range(1, n + 1))
    bounded_below = all(f.bounded_deriv.get(k, False) for k in range(1, n))
    vanishes = f.vanishes_at_inf.get(n, False)
    kernel = f.dd_kernel.get(n)
    notes = []
    if f.compact_support:
        notes.append("compactly supported: every path is available")
    diff_lp = bounded_all
    tf_lp = vanishes and bounded_below and kernel == KERNEL_CONTINUOUS
    tf_schatten = bounded_all and kernel in (KERNEL_CONTINUOUS, KERNEL_BOUNDED)
    moment_only = not (diff_lp or tf_lp or tf_schatten)
    if not f.bounded_deriv.get(n, False):
        notes.append("unbounded top derivative: only density/moment checks apply")
    if diff_lp and not vanishes:
        notes.append("derivative formula holds; decay-based continuity path closed")
    return AdmissibilityReport(
        family_id=f.family_id,
        order=n,
        differentiable_lp=diff_lp,
        nth_deriv_vanishes=vanishes,
        trace_formula_lp=tf_lp,
        trace_formula_schatten=tf_schatten,
        moment_identities_only=moment_only,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------


def monomial(k: int, max_order: int = 8) -> FunctionFamily:
    """f(x) = x**k."""
    k = int(k)
    if k < 0:
        raise ParameterError("monomial exponent must be nonnegative")
    max_order = max(max_order, k)

    def ev(j, x):
        if j > k:
            return np.zeros_like(x)
        c = math.factorial(k) / math.factorial(k - j)
        return c * x ** (k - j)

    return FunctionFamily(
        f"monomial{k}",
        max_order,
        ev,
        bounded_deriv={j: j >= k for j in range(1, max_order + 1)},
        vanishes_at_inf={j: j > k for j in range(1, max_order + 1)},
        dd_kernel={j: KERNEL_BOUNDED if j > k else None for j in range(1, max_order + 1)},
        deriv_sup={j: (math.factorial(k) if j == k else 0.0) for j in range(k, max_order + 1)},
        params={"k": k},
    )


def exponential(max_order: int = 8) -> FunctionFamily:
    """f(x) = exp(x).  Unbounded derivatives; useful on bounded spectra."""
    return FunctionFamily(
        "exp",
        max_order,
        lambda j, x: np.exp(x),
        bounded_deriv={j: False for j in range(1, max_order + 1)},
        vanishes_at_inf={j: False for j in range(1, max_order + 1)},
        dd_kernel={},
    )


def fourier(s: float, max_order: int = 8) -> FunctionFamily:
    """f(x) = exp(i s x), the bounded complex exponential with frequency s."""
    s = float(s)

    def ev(j, x):
        return (1j * s) ** j * np.exp(1j * s * x)

    return FunctionFamily(
        "fourier",
        max_order,
        ev,
        bounded_deriv={j: True for j in range(1, max_order + 1)},
        vanishes_at_inf={j: False for j in range(1, max_order + 1)},
        real_valued=False,
        dd_kernel={j: KERNEL_CONTINUOUS for j in range(1, max_order + 1)},
        deriv_sup={j: abs(s) ** j for j in range(0, max_order + 1)},
        params={"s": s},
    )


def gaussian(max_order: int = 8) -> FunctionFamily:
    """f(x) = exp(-x^2); derivatives via the Hermite recurrence."""

    def ev(j, x):
        h_prev = np.ones_like(x)
        h = 2.0 * x
        if j == 0:
            hj = h_prev
        elif j == 1:
            hj = h
        else:
            for i in range(1, j):
                h_prev, h = h, 2.0 * x * h - 2.0 * i * h_prev
            hj = h
        return (-1.0) ** j * hj * np.exp(-x * x)

    return FunctionFamily(
        "gaussian",
        max_order,
        ev,
        bounded_deriv={j: True for j in range(1, max_order + 1)},
        vanishes_at_inf={j: True for j in range(1, max_order + 1)},
        dd_kernel={j: KERNEL_CONTINUOUS for j in range(1, max_order + 1)},
        deriv_sup={0: 1.0, 2: 2.0},
    )


def _bump_numerators(max_order: int):
    """Polynomials P_j with f^(j) = f * P_j(u) / (1-u^2)^(2j) on |u| < 1."""
    from numpy.polynomial import Polynomial

    one_minus = Polynomial([1.0, 0.0, -1.0])  # 1 - u^2
    polys = [Polynomial([1.0])]
    for j in range(1, max_order + 1):
        p = polys[-1]
        # P_{j} from P_{j-1}: quotient rule plus the chain factor -2u/(1-u^2)^2
        p_next = p.deriv() * one_minus ** 2 + (4 * (j - 1)) * Polynomial([0.0, 1.0]) * one_minus * p \
            + Polynomial([0.0, -2.0]) * p
        polys.append(p_next)
    return polys


def bump(center: float = 0.0, halfwidth: float = 1.0, max_order: int = 6) -> FunctionFamily:
    """Smooth bump exp(-1/(1-u^2)) on |u| < 1 with u = (x-center)/halfwidth."""
    if halfwidth <= 0:
        raise ParameterError("halfwidth must be positive")
    polys = _bump_numerators(max_order)
    c, w = float(center), float(halfwidth)

    def ev(j, x):
        xa = np.asarray(x, dtype=float)
        u = (np.atleast_1d(xa) - c) / w
        out = np.zeros_like(u)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        core = np.exp(-1.0 / (1.0 - ui ** 2))
        out[inside] = core * polys[j](ui) / (1.0 - ui ** 2) ** (2 * j) / w ** j
        return out.reshape(xa.shape)

    fam = FunctionFamily(
        "bump",
        max_order,
        ev,
        bounded_deriv={j: True for j in range(1, max_order + 1)},
        vanishes_at_inf={j: True for j in range(1, max_order + 1)},
        compact_support=True,
        dd_kernel={j: KERNEL_CONTINUOUS for j in range(1, max_order + 1)},
        params={"center": c, "halfwidth": w},
    )
    return fam


def runge(max_order: int = 8) -> FunctionFamily:
    """f(x) = 1/(1+x^2), with derivatives from the complex partial fractions."""

    def ev(j, x):
        xc = np.asarray(x, dtype=complex)
        val = ((-1.0) ** j * math.factorial(j) / (2j)) * (
            (xc - 1j) ** (-(j + 1)) - (xc + 1j) ** (-(j + 1))
        )
        return val.real

    return FunctionFamily(
        "runge",
        max_order,
        ev,
        bounded_deriv={j: True for j in range(1, max_order + 1)},
        vanishes_at_inf={j: True for j in range(1, max_order + 1)},
        dd_kernel={j: KERNEL_CONTINUOUS for j in range(1, max_order + 1)},
        deriv_sup={0: 1.0},
    )


# Coefficients of the x < 0 continuation g(x) = g0 + g1*exp(x) + g2*exp(2x),
# matched to value, first, and second derivative of 1/(1+x) at 0.  The
# continuation keeps f twice continuously differentiable with f' and f''
# bounded on the whole line, which a polynomial tail cannot do.
_RECIP_G = (3.5, -4.0, 1.5)


def recip_plus(max_order: int = 2) -> FunctionFamily:
    """f(x) = 1/(1+x) for x >= 0, with a bounded C^2 continuation for x < 0."""
    if max_order > 2:
        raise ParameterError("recip_plus is only twice differentiable at 0")
    g0, g1, g2 = _RECIP_G

    def ev(j, x):
        xa = np.asarray(x, dtype=float)
        x1 = np.atleast_1d(xa)
        pos = x1 >= 0
        out = np.empty_like(x1)
        out[pos] = (-1.0) ** j * math.factorial(j) * (1.0 + x1[pos]) ** (-(j + 1))
        xn = x1[~pos]
        if j == 0:
            out[~pos] = g0 + g1 * np.exp(xn) + g2 * np.exp(2 * xn)
        else:
            out[~pos] = g1 * np.exp(xn) + g2 * 2.0 ** j * np.exp(2 * xn)
        return out.reshape(xa.shape)

    return FunctionFamily(
        "recip_plus",
        max_order,
        ev,
        bounded_deriv={1: True, 2: True},
        vanishes_at_inf={1: False, 2: False},
        dd_kernel={},
        deriv_sup={1: 7.0, 2: 10.0},  # coarse bounds from the continuation coefficients
    )


BUILTIN_FAMILIES = {
    "monomial": monomial,
    "exp": exponential,
    "fourier": fourier,
    "gaussian": gaussian,
    "bump": bump,
    "runge": runge,
    "recip_plus": recip_plus,
}


def family_from_spec(spec: dict) -> FunctionFamily:
    """Build a family from {"id": ..., <params>}; used by configuration and CLI."""
    spec = dict(spec)
    try:
        fid = spec.pop("id")
    except KeyError:
        raise ParameterError("function spec needs an 'id' field") from None
    try:
        factory = BUILTIN_FAMILIES[fid]
    except KeyError:
        raise ParameterError(
            f"unknown family id {fid!r}; known: {sorted(BUILTIN_FAMILIES)}"
        ) from None
    return factory(**spec)
