"""Spectral shift functions and trace-formula verification.

Order 1 uses the exact counting form: eta_1(t) counts eigenvalues of A + B
above t minus eigenvalues of A above t, a piecewise-constant function whose
pairing with f' telescopes exactly over breakpoint intervals.

Higher orders are recovered by Fourier duality.  Pairing the order-n
remainder trace with the bounded exponentials f_s(x) = exp(isx) gives

    F(s) = trace(remainder_n(f_s, A, B)) = (is)^n * etahat_n(s),

so etahat_n = F(s) / (is)^n away from s = 0.  The quotient is filled across
a small exclusion zone around 0 by an even/odd polynomial fit anchored at
the exact zeroth moment etahat_n(0) = trace(B^n)/n!, tapered at the ends of
the s-window, and inverted on the conjugate FFT grid.  The imaginary part of
the inversion is diagnostic residue: it is reported, checked against a
threshold, and discarded.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatchError,
    InversionQualityError,
    ParameterError,
    ToleranceError,
)
from .families import FunctionFamily, monomial
from .moi import (
    DiagonalRestrictedSymbol,
    MOIOperands,
    dd_symbol,
    moi_projection_sum,
    moi_trace,
    projection_trace_weights,
)
from .spectral import eig_hermitian, require_hermitian, schatten_norm, trace
from .taylor import taylor_remainder

__all__ = [
    "SSFGrid",
    "FourierParams",
    "krein_ssf",
    "counting_pairing",
    "higher_ssf_fourier",
    "verify_trace_formula",
    "TraceFormulaReport",
    "diagonal_symbol_trace",
    "IdentityChainReport",
    "ssf_l1_report",
    "save_ssf",
    "load_ssf",
]


@dataclass
class SSFGrid:
    """A sampled spectral shift density on a uniform real grid."""

    order: int
    t_grid: np.ndarray
    values: np.ndarray
    support: Tuple[float, float]
    method: str                      # "counting" | "fourier"
    l1_norm: float
    breakpoints: Optional[np.ndarray] = None
    imag_residue: float = 0.0
    params: Optional[dict] = None
    seed: Optional[int] = None

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    def quadrature(self, samples: np.ndarray) -> float:
        """Trapezoid integral of samples * values over the grid."""
        return float(np.trapezoid(np.asarray(samples) * self.values, self.t_grid).real)

    def moment(self, k: int) -> float:
        return self.quadrature(self.t_grid ** k)


def _spectra_hull(EA, EAB) -> Tuple[float, float]:
    lo = min(EA.eigenvalues[0], EAB.eigenvalues[0])
    hi = max(EA.eigenvalues[-1], EAB.eigenvalues[-1])
    return float(lo), float(hi)


def krein_ssf(A, B, num_t: int = 2001, t_pad_frac: float = 0.2) -> SSFGrid:
    """First-order shift function by exact eigenvalue counting."""
    A = require_hermitian(A)
    B = require_hermitian(B)
    if A.shape != B.shape:
        raise DimensionMismatchError("A and B must share a dimension")
    lam = eig_hermitian(A).eigenvalues
    mu = eig_hermitian(A + B).eigenvalues
    lo = float(min(lam[0], mu[0]))
    hi = float(max(lam[-1], mu[-1]))
    span = max(hi - lo, 1.0)
    pad = t_pad_frac * span
    t = np.linspace(lo - pad, hi + pad, num_t)
    values = (
        (mu[None, :] > t[:, None]).sum(axis=1)
        - (lam[None, :] > t[:, None]).sum(axis=1)
    ).astype(float)
    breakpoints = np.sort(np.concatenate([lam, mu]))
    dt = t[1] - t[0]
    return SSFGrid(
        order=1,
        t_grid=t,
        values=values,
        support=(lo - dt, hi + dt),
        method="counting",
        l1_norm=float(np.trapezoid(np.abs(values), t)),
        breakpoints=breakpoints,
        params={"spectrum_base": lam.tolist(), "spectrum_perturbed": mu.tolist()},
    )


def counting_pairing(ssf: SSFGrid, f: FunctionFamily) -> float:
    """Exact pairing integral of f' against a counting-form shift function.

    The density is constant between breakpoints, so the integral telescopes
    through the antiderivative of f', which is f itself.
    """
    if ssf.method != "counting" or ssf.breakpoints is None or not ssf.params:
        raise ParameterError("breakpoint pairing needs a counting-form grid")
    lam = np.asarray(ssf.params["spectrum_base"])
    mu = np.asarray(ssf.params["spectrum_perturbed"])
    bp = ssf.breakpoints
    total = 0.0
    for left, right in zip(bp[:-1], bp[1:]):
        if right <= left:
            continue
        mid = 0.5 * (left + right)
        val = float(np.count_nonzero(mu > mid) - np.count_nonzero(lam > mid))
        if val != 0.0:
            total += val * float(np.real(f.eval(0, right) - f.eval(0, left)))
    return total


@dataclass
class FourierParams:
    """Dual-grid parameters for the Fourier recovery scheme."""

    s_max: float
    num_s: int
    s_min_exclusion: float
    window: str = "cosine"
    taper_frac: float = 0.5
    t_pad_frac: float = 0.2
    fit_band_widths: int = 6

    def __post_init__(self):
        if self.num_s % 2:
            raise ParameterError("num_s must be even")
        if self.s_max <= 0:
            raise ParameterError("s_max must be positive")
        if not 0 <= self.s_min_exclusion < self.s_max:
            raise ParameterError("exclusion must satisfy 0 <= excl < s_max")
        if self.window not in ("cosine", "none"):
            raise ParameterError(f"unknown window {self.window!r}")

    @property
    def ds(self) -> float:
        return 2.0 * self.s_max / self.num_s

    @classmethod
    def auto(cls, A, B, n: int, t_pad_frac: float = 0.2) -> "FourierParams":
        """Order-aware defaults sized from the joint spectral hull.

        Order 1 targets must resolve unit jumps of the counting function, so
        the window is large; the exponential pairing there is a closed form
        and stays cheap.  Higher orders have much smaller jumps and get a
        moderate window.  num_s keeps the spacing fine against the slowest
        eta-hat oscillation, capped to bound the FFT size.
        """
        EA = eig_hermitian(require_hermitian(A))
        EAB = eig_hermitian(require_hermitian(np.asarray(A) + np.asarray(B)))
        lo, hi = _spectra_hull(EA, EAB)
        span = max(hi - lo, 1e-6)
        s_max = (24000.0 if n == 1 else 600.0) / span
        pad = t_pad_frac * max(span, 1.0)
        t_abs = max(abs(lo - pad), abs(hi + pad), 1e-3)
        target = 6.7 * s_max * t_abs
        num_s = 1 << int(math.ceil(math.log2(min(max(target, 16384.0), 262144.0))))
        ds = 2.0 * s_max / num_s
        return cls(
            s_max=s_max,
            num_s=num_s,
            s_min_exclusion=2.0 * ds,
            window="cosine",
            t_pad_frac=t_pad_frac,
        )


def _dd_exponential_grid(nodes: Sequence[float], s: np.ndarray, merge_tol: float) -> np.ndarray:
    """Divided difference of x -> exp(isx) vectorized over the s grid.

    Hermite table with tolerance merging; confluent entries use the exact
    derivative (is)^j exp(isz) / j!.
    """
    z = np.sort(np.asarray(nodes, dtype=float))
    groups = [[z[0]]]
    for x in z[1:]:
        if x - groups[-1][-1] <= merge_tol:
            groups[-1].append(x)
        else:
            groups.append([x])
    z = np.concatenate([[float(np.mean(g))] * len(g) for g in groups])
    m = len(z)
    col = [np.exp(1j * s * zi) for zi in z]
    for j in range(1, m):
        nxt = []
        for i in range(m - j):
            if z[i + j] == z[i]:
                nxt.append((1j * s) ** j * np.exp(1j * s * z[i]) / math.factorial(j))
            else:
                nxt.append((col[i + 1] - col[i]) / (z[i + j] - z[i]))
        col = nxt
    return col[0]


def _remainder_trace_exponential(ops: MOIOperands, n: int, s_pos: np.ndarray) -> np.ndarray:
    """trace of the order-n remainder paired with exp(isx), over the s grid.

    Uses the structure weights of the operator tuple once, then sweeps the
    exponential divided difference over every representative tuple with a
    shared table cache.
    """
    reps, weights = projection_trace_weights(ops)
    hull = max(abs(float(r)) for slot in reps for r in slot) if len(reps) else 1.0
    merge_tol = 1e-7 * (1.0 + hull)
    out = np.zeros(len(s_pos), dtype=complex)
    cache: Dict[Tuple[float, ...], np.ndarray] = {}
    for key, w in weights.items():
        if w == 0:
            continue
        nodes = tuple(float(reps[slot][key[slot]]) for slot in range(n + 1))
        ck = tuple(sorted(nodes))
        vals = cache.get(ck)
        if vals is None:
            vals = _dd_exponential_grid(nodes, s_pos, merge_tol)
            cache[ck] = vals
        out += w * vals
    return out


def higher_ssf_fourier(
    A, B, n: int, params: Optional[FourierParams] = None, seed: Optional[int] = None
) -> SSFGrid:
    """Order-n shift density recovered from the exponential pairing."""
    if n < 1:
        raise ParameterError("order must be >= 1")
    A = require_hermitian(A)
    B = require_hermitian(B)
    if params is None:
        params = FourierParams.auto(A, B, n)
    EA = eig_hermitian(A)
    EAB = eig_hermitian(A + B)
    lo, hi = _spectra_hull(EA, EAB)
    span = max(hi - lo, 1e-6)
    pad = params.t_pad_frac * max(span, 1.0)
    # Nyquist guard: the conjugate grid step is pi/s_max, which must resolve
    # the padded hull
    t_lo, t_hi = lo - pad, hi + pad

    N = params.num_s + 1
    ds = params.ds
    s = np.linspace(-params.s_max, params.s_max, N)
    pos = s > 0
    s_pos = s[pos]

    ops = MOIOperands([EAB] + [EA] * n, [B] * n)
    F_pos = _remainder_trace_exponential(ops, n, s_pos)
    etahat = np.zeros(N, dtype=complex)
    etahat[pos] = F_pos / (1j * s_pos) ** n
    etahat[s < 0] = np.conj(etahat[pos][::-1])

    # anchor: zeroth moment of eta_n equals trace(B^n)/n!
    eta0 = float(np.trace(np.linalg.matrix_power(B, n)).real) / math.factorial(n)
    excl = params.s_min_exclusion
    fill = np.abs(s) < excl
    band = (np.abs(s) >= excl) & (np.abs(s) <= excl + params.fit_band_widths * ds)
    sf = s[band]
    ef = etahat[band]
    cr, *_ = np.linalg.lstsq(np.stack([sf ** 2, sf ** 4], axis=1), ef.real - eta0, rcond=None)
    ci, *_ = np.linalg.lstsq(np.stack([sf, sf ** 3], axis=1), ef.imag, rcond=None)
    sq = s[fill]
    etahat[fill] = (eta0 + cr[0] * sq ** 2 + cr[1] * sq ** 4) + 1j * (
        ci[0] * sq + ci[1] * sq ** 3
    )

    w = np.ones(N)
    if params.window == "cosine" and params.taper_frac > 0:
        cut = (1.0 - params.taper_frac) * params.s_max
        mask = np.abs(s) > cut
        w[mask] = 0.5 * (1.0 + np.cos(np.pi * (np.abs(s[mask]) - cut) / (params.s_max - cut)))
    wt = np.full(N, ds)
    wt[0] *= 0.5
    wt[-1] *= 0.5

    g = etahat * w * wt / (2.0 * np.pi)
    # eta(t_k) = sum_j exp(-i s_j t_k) g_j on the conjugate grid t_k = k dt
    spectrum = np.fft.fft(g)
    dt = 2.0 * np.pi / (N * ds)
    k_idx = np.fft.fftfreq(N, d=1.0 / N)
    t_full = k_idx * dt
    spectrum = spectrum * np.exp(1j * params.s_max * t_full)
    order_idx = np.argsort(t_full, kind="stable")
    t_full = t_full[order_idx]
    spectrum = spectrum[order_idx]
    if t_lo < t_full[0] or t_hi > t_full[-1]:
        raise ParameterError(
            "conjugate grid does not cover the padded hull; increase num_s"
        )
    keep = (t_full >= t_lo) & (t_full <= t_hi)
    t_grid = t_full[keep]
    eta = spectrum[keep]

    real = eta.real.copy()
    l1 = float(np.trapezoid(np.abs(real), t_grid))
    imag_l1 = float(np.trapezoid(np.abs(eta.imag), t_grid))
    if imag_l1 > 1e-6 * max(l1, 1e-12):
        raise InversionQualityError(
            f"imaginary residue {imag_l1:.3e} exceeds 1e-6 of the L1 mass {l1:.3e}"
        )
    dtg = float(t_grid[1] - t_grid[0])
    return SSFGrid(
        order=n,
        t_grid=t_grid,
        values=real,
        support=(lo - dtg, hi + dtg),
        method="fourier",
        l1_norm=l1,
        imag_residue=imag_l1,
        params=asdict(params),
        seed=seed,
    )


@dataclass
class TraceFormulaReport:
    rows: List[dict] = field(default_factory=list)
    moments: List[dict] = field(default_factory=list)

    def max_function_error(self) -> float:
        return max((r["rel_error"] for r in self.rows), default=0.0)

    def max_moment_error(self) -> float:
        return max((m["error"] for m in self.moments), default=0.0)


def verify_trace_formula(
    A, B, n: int, ssf: SSFGrid, test_functions: Sequence[FunctionFamily]
) -> TraceFormulaReport:
    """Held-out comparison of remainder traces against the shift pairing.

    Per function: relative error between trace(remainder_n(f)) and the
    quadrature of f^(n) against the density.  Moment identities for
    k = 0, 1, 2 compare the k-th grid moment with
    k!/(n+k)! * trace(remainder_n(x^{n+k})).
    """
    A = require_hermitian(A)
    B = require_hermitian(B)
    report = TraceFormulaReport()
    for f in test_functions:
        if f.max_order < n:
            raise ParameterError(f"test family {f.family_id!r} lacks order {n}")
        lhs = complex(trace(taylor_remainder(f, A, B, n))).real
        rhs = ssf.quadrature(np.asarray(f.eval(n, ssf.t_grid)))
        rel = abs(lhs - rhs) / max(1.0, abs(lhs))
        report.rows.append(
            {"family": f.family_id, "remainder_trace": lhs, "pairing": rhs,
             "rel_error": rel}
        )
    for k in (0, 1, 2):
        mono = monomial(n + k)
        lhs = ssf.moment(k)
        rhs = (
            math.factorial(k) / math.factorial(n + k)
            * complex(trace(taylor_remainder(mono, A, B, n))).real
        )
        err = abs(lhs - rhs) / (1.0 + abs(rhs))
        report.moments.append({"k": k, "moment": lhs, "remainder_form": rhs, "error": err})
    return report


@dataclass
class IdentityChainReport:
    restricted_trace: complex
    full_trace: complex
    chain_deviation: float
    pairing: Optional[float] = None
    pairing_errors: Optional[Tuple[float, float]] = None


def diagonal_symbol_trace(
    A, B, n: int, f: FunctionFamily, ssf: Optional[SSFGrid] = None,
    chain_tol: float = 1e-9,
) -> IdentityChainReport:
    """Trace identity chain linking the restricted and full symbol forms.

    The restricted symbol phi(l_0..l_{n-1}) = f^[n](l_0,..,l_{n-1},l_0) runs
    on n operator slots (A, A+B, A, ..) with n-1 arguments and a closing B;
    the full divided difference runs on n+1 slots with n arguments.  Their
    traces agree because the first and last slots carry the same spectral
    projections, so the wrap-around index collapses.  Needs n >= 2: with a
    single slot the last operator is A + B and the wrap does not close.
    """
    if n < 2:
        raise ParameterError("the identity chain needs n >= 2")
    if n > f.max_order:
        raise ParameterError(f"family {f.family_id!r} lacks order {n}")
    A = require_hermitian(A)
    B = require_hermitian(B)
    EA = eig_hermitian(A)
    EAB = eig_hermitian(A + B)
    sym = dd_symbol(f, n)
    ops_restricted = MOIOperands([EA, EAB] + [EA] * (n - 2), [B] * (n - 1))
    lhs1 = moi_trace(DiagonalRestrictedSymbol(sym), ops_restricted, closing=B)
    ops_full = MOIOperands([EA, EAB] + [EA] * (n - 1), [B] * n)
    lhs2 = complex(trace(moi_projection_sum(sym, ops_full).value))
    scale = max(1.0, abs(lhs1), abs(lhs2))
    dev = abs(lhs1 - lhs2) / scale
    if dev > chain_tol:
        raise ToleranceError(
            "restricted and full symbol traces disagree", lhs=lhs1, rhs=lhs2,
            deviation=dev,
        )
    report = IdentityChainReport(restricted_trace=lhs1, full_trace=lhs2, chain_deviation=dev)
    if ssf is not None:
        pairing = ssf.quadrature(np.asarray(f.eval(n, ssf.t_grid)))
        report.pairing = pairing
        report.pairing_errors = (
            abs(lhs1.real - pairing) / max(1.0, abs(pairing)),
            abs(lhs2.real - pairing) / max(1.0, abs(pairing)),
        )
    return report


def ssf_l1_report(A, B, n: int, ssf: SSFGrid) -> dict:
    """Pair (l1 mass of the density, n-norm of B to the n-th power) plus ratio."""
    B = require_hermitian(B)
    bn = schatten_norm(B, float(n)) ** n
    ratio = ssf.l1_norm / bn if bn > 0 else 0.0
    out = {"l1_norm": ssf.l1_norm, "b_norm_pow": bn, "ratio": ratio}
    if not all(math.isfinite(v) for v in out.values()):
        raise ParameterError("shift-function report has non-finite entries")
    return out


# ---------------------------------------------------------------------------
# Serialization: CSV of (t, value) plus a JSON sidecar of metadata
# ---------------------------------------------------------------------------


def save_ssf(ssf: SSFGrid, csv_path, sidecar_path=None) -> None:
    lines = ["t,value"]
    for t, v in zip(ssf.t_grid, ssf.values):
        lines.append(f"{float(t)!r},{float(v)!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")
    if sidecar_path is not None:
        meta = {
            "n": ssf.order,
            "method": ssf.method,
            "support": [ssf.support[0], ssf.support[1]],
            "l1_norm": ssf.l1_norm,
            "params": ssf.params,
            "seed": ssf.seed,
        }
        Path(sidecar_path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_ssf(csv_path, sidecar_path=None) -> SSFGrid:
    rows = Path(csv_path).read_text().strip().splitlines()[1:]
    t = np.array([float(r.split(",")[0]) for r in rows])
    v = np.array([float(r.split(",")[1]) for r in rows])
    meta = {}
    if sidecar_path is not None:
        meta = json.loads(Path(sidecar_path).read_text())
    return SSFGrid(
        order=int(meta.get("n", 0)),
        t_grid=t,
        values=v,
        support=tuple(meta.get("support", (float(t[0]), float(t[-1])))),
        method=meta.get("method", "unknown"),
        l1_norm=float(meta.get("l1_norm", np.trapezoid(np.abs(v), t))),
        params=meta.get("params"),
        seed=meta.get("seed"),
    )
