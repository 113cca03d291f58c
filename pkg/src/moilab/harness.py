"""Experiment orchestration: seeded ensembles, check suites, reports.

Every ensemble is a pure function of the 64-bit config seed through the
SplitMix64 generator (see :mod:`moilab.rng`), and every check is a pure
function of the ensemble, so a (config, code) pair pins the report bytes
except for the wall-time field.  Independent checks may run on a small
thread pool capped by the MOI_LAB_THREADS environment variable; records are
assembled in declaration order either way.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import matrix_io
from .errors import ConfigError, MoiLabError
from .families import (
    FunctionFamily,
    bump,
    divided_difference,
    exponential,
    family_from_spec,
    gaussian,
    runge,
)
from .moi import (
    MOIOperands,
    dd_symbol,
    exponential_symbol,
    moi_discretized,
    moi_factorized,
    moi_norm_report,
    moi_projection_sum,
    operands,
)
from .rng import SplitMix64
from .spectral import TraceModel, apply_function, eig_hermitian, trace
from .ssf import (
    counting_pairing,
    diagonal_symbol_trace,
    higher_ssf_fourier,
    krein_ssf,
    ssf_l1_report,
    verify_trace_formula,
)
from .taylor import (
    finite_difference_oracle,
    gateaux_derivative,
    lp_counterexample_demo,
    perturbation_first_order,
    perturbation_higher_order,
    telescoping_check,
)

__all__ = [
    "ExperimentConfig",
    "CheckRecord",
    "Report",
    "generate_ensemble",
    "run_suite",
    "SUITES",
    "DEFAULT_TOLERANCES",
]

DEFAULT_TOLERANCES: Dict[str, float] = {
    "derivative_vs_fd": 1e-5,
    "fd_slope_halfwidth": 0.3,      # window 2.0 +/- 0.3
    "remainder_two_path": 1e-8,
    "perturbation_first": 1e-9,
    "perturbation_higher": 1e-8,
    "telescoping": 1e-8,
    "moi_brute_force": 1e-10,
    "moi_factorized": 1e-9,
    "moi_multilinear": 1e-10,
    "moi_hermitian": 1e-10,
    "discretized_ratio": 0.75,
    "discretized_aligned": 1e-8,
    "krein_pairing": 1e-10,
    "fourier_vs_counting_l1": 1e-2,
    "eta2_scalar_l1": 1e-2,
    "heldout_rel": 1e-3,
    "moment_rel": 1e-3,
    "chain_rel": 1e-9,
    "chain_pairing": 1e-3,
    "counterexample_margin": 1e-12,  # heavy ratios must clear 1.2
    "control_window": 0.05,
}

_ENSEMBLES = ("gue_like", "diagonal_heavy_tail", "fixed_matrix_file")


@dataclass
class ExperimentConfig:
    seed: int
    dimension: int = 4
    order: int = 2
    ensemble: str = "gue_like"
    functions: List[dict] = field(default_factory=lambda: [{"id": "gaussian"}, {"id": "runge"}])
    tolerances: Dict[str, float] = field(default_factory=dict)
    trace_model: str = "standard"
    p: float = 2.0
    dims: List[int] = field(default_factory=lambda: [16, 64, 256, 1024, 4096])
    matrix_a: Optional[str] = None
    matrix_b: Optional[str] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("seed is required; there is no entropy default")
        self.seed = int(self.seed)
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.ensemble not in _ENSEMBLES:
            raise ConfigError(f"unknown ensemble {self.ensemble!r}; known: {_ENSEMBLES}")
        if any(v <= 0 for v in self.tolerances.values()):
            raise ConfigError("tolerances must be positive")
        if self.trace_model not in ("standard", "weighted_diagonal"):
            raise ConfigError(f"unknown trace model {self.trace_model!r}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "seed" not in raw:
            raise ConfigError("config must declare a seed")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def tol(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def family_list(self) -> List[FunctionFamily]:
        return [family_from_spec(spec) for spec in self.functions]

    def echo(self) -> dict:
        return asdict(self)


def _hermitian_from(gen: SplitMix64, d: int) -> np.ndarray:
    X = gen.complex_normals((d, d))
    return (X + X.conj().T) / 2.0


def generate_ensemble(config: ExperimentConfig):
    """Deterministic (A, B, trace model) triple from the config."""
    d = config.dimension
    if config.ensemble == "gue_like":
        gen = SplitMix64(config.seed)
        A = _hermitian_from(gen, d)
        B = _hermitian_from(gen, d)
        bnorm = float(np.linalg.norm(B, 2))
        if bnorm > 0:
            B = B / bnorm
        return A, B, TraceModel()
    if config.ensemble == "diagonal_heavy_tail":
        k = np.arange(1, d + 1, dtype=float)
        b = (k / d) ** (-1.0 / (1.5 * config.p))
        model = TraceModel("weighted_diagonal", np.full(d, 1.0 / d))
        return np.eye(d), np.diag(b), model
    # fixed_matrix_file
    if not config.matrix_a or not config.matrix_b:
        raise ConfigError("fixed_matrix_file ensemble needs matrix_a and matrix_b paths")
    A = matrix_io.load_matrix(config.matrix_a)
    B = matrix_io.load_matrix(config.matrix_b)
    return A, B, TraceModel()


@dataclass
class CheckRecord:
    name: str
    formula: str          # which identity or bound the check exercises
    measured: float
    threshold: float
    passed: bool
    error: Optional[str] = None


@dataclass
class Report:
    config: dict
    suite: str
    records: List[CheckRecord]
    artifacts: List[str]
    wall_time_s: float

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "suite": self.suite,
            "records": [asdict(r) for r in self.records],
            "artifacts": self.artifacts,
            "wall_time_s": self.wall_time_s,
        }
        return json.dumps(payload, sort_keys=True, indent=1)


def _record(name, formula, measured, threshold) -> CheckRecord:
    measured = float(measured)
    threshold = float(threshold)
    return CheckRecord(
        name=name, formula=formula, measured=measured, threshold=threshold,
        passed=bool(measured <= threshold),
    )


def _rel(x: np.ndarray, y: np.ndarray) -> float:
    nx = float(np.linalg.norm(x - y))
    return nx / max(1.0, float(np.linalg.norm(x)), float(np.linalg.norm(y)))


# ---------------------------------------------------------------------------
# Checks; each returns a list of CheckRecords
# ---------------------------------------------------------------------------


def _smooth_families(config: ExperimentConfig) -> List[FunctionFamily]:
    fams = [f for f in config.family_list() if f.max_order >= max(3, config.order)]
    return fams or [gaussian(), runge()]


def _checks_derivatives(config: ExperimentConfig) -> List[CheckRecord]:
    A, B, _ = generate_ensemble(config)
    out = []
    for fam in _smooth_families(config):
        for k in range(1, min(config.order, 3) + 1):
            D = gateaux_derivative(fam, A, B, k=k, t=0.1)
            F = finite_difference_oracle(fam, A, B, k=k, t=0.1)
            out.append(
                _record(
                    f"derivative_{fam.family_id}_k{k}",
                    "derivative-formula",
                    _rel(D, F),
                    config.tol("derivative_vs_fd"),
                )
            )
    fam = gaussian()
    windows = {1: (1e-2, 1e-4), 2: (3e-2, 1e-3), 3: (1e-1, 1e-2)}
    for k in range(1, min(config.order, 3) + 1):
        exact = gateaux_derivative(fam, A, B, k=k)
        hs = np.geomspace(*windows[k], 5)
        errs = [
            float(np.linalg.norm(finite_difference_oracle(fam, A, B, k=k, h=h, levels=0) - exact))
            for h in hs
        ]
        slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        out.append(
            _record(
                f"fd_slope_k{k}",
                "finite-difference-order",
                abs(slope - 2.0),
                config.tol("fd_slope_halfwidth"),
            )
        )
    return out


def _checks_perturbation(config: ExperimentConfig) -> List[CheckRecord]:
    A, B, _ = generate_ensemble(config)
    gen = SplitMix64(config.seed ^ 0x9E3779B97F4A7C15)
    d = config.dimension
    out = []
    for fam in _smooth_families(config):
        out.append(
            _record(
                f"perturbation_first_{fam.family_id}",
                "first-order-increment",
                perturbation_first_order(fam, A, B, tol=math.inf),
                config.tol("perturbation_first"),
            )
        )
        n = min(config.order, fam.max_order - 1, 2)
        ops_aux = [_hermitian_from(gen, d) for _ in range(n)]
        args_aux = [gen.complex_normals((d, d)) for _ in range(n)]
        worst = max(
            perturbation_higher_order(fam, A, B, ops_aux, args_aux, k=n, j=j, tol=math.inf)
            for j in range(1, n + 2)
        )
        out.append(
            _record(
                f"perturbation_higher_{fam.family_id}_k{n}",
                "slot-replacement",
                worst,
                config.tol("perturbation_higher"),
            )
        )
        nt = min(config.order + 1, fam.max_order)
        out.append(
            _record(
                f"telescoping_{fam.family_id}_n{nt}",
                "telescoped-difference",
                telescoping_check(fam, A, B, n=nt, t=0.7, j=max(1, nt - 1), tol=math.inf),
                config.tol("telescoping"),
            )
        )
        out.append(
            _record(
                f"remainder_two_path_{fam.family_id}",
                "remainder-identity",
                _remainder_two_path_residual(fam, A, B, min(config.order, fam.max_order - 1)),
                config.tol("remainder_two_path"),
            )
        )
    return out


def _remainder_two_path_residual(fam, A, B, n) -> float:
    EA = eig_hermitian(A)
    EAB = eig_hermitian(A + B)
    sigma = apply_function(fam, EAB) - apply_function(fam, EA)
    for k in range(1, n):
        sigma = sigma - moi_projection_sum(
            dd_symbol(fam, k), MOIOperands([EA] * (k + 1), [B] * k)
        ).value
    closed = moi_projection_sum(
        dd_symbol(fam, n), MOIOperands([EAB] + [EA] * n, [B] * n)
    ).value
    return _rel(sigma, closed)


def _brute_force_moi(f, eigsystems, args) -> np.ndarray:
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


def _checks_moi(config: ExperimentConfig) -> List[CheckRecord]:
    gen = SplitMix64(config.seed ^ 0xD1B54A32D192ED03)
    d = min(config.dimension, 4)
    n = min(config.order, 3)
    fam = gaussian()
    mats = [_hermitian_from(gen, d) for _ in range(n + 1)]
    args = [gen.complex_normals((d, d)) for _ in range(n)]
    Es = [eig_hermitian(M) for M in mats]
    out = []
    got = moi_projection_sum(dd_symbol(fam, n), MOIOperands(Es, args)).value
    want = _brute_force_moi(fam, Es, args)
    out.append(
        _record("moi_vs_brute_force", "projection-sum-definition", _rel(got, want),
                config.tol("moi_brute_force"))
    )
    sym = exponential_symbol(0.9, n + 1)
    a = moi_factorized(sym, MOIOperands(Es, args)).value
    b = moi_projection_sum(sym, MOIOperands(Es, args)).value
    out.append(
        _record("moi_factorized_cross_form", "factorized-product-form", _rel(a, b),
                config.tol("moi_factorized"))
    )
    # multilinearity in the first argument
    alpha = 0.7 - 0.3j
    extra = gen.complex_normals((d, d))
    lhs = moi_projection_sum(
        dd_symbol(fam, n), MOIOperands(Es, [alpha * args[0] + extra] + args[1:])
    ).value
    rhs = alpha * got + moi_projection_sum(
        dd_symbol(fam, n), MOIOperands(Es, [extra] + args[1:])
    ).value
    out.append(
        _record("moi_multilinearity", "multilinearity", _rel(lhs, rhs),
                config.tol("moi_multilinear"))
    )
    # palindromic hermiticity
    Bh = _hermitian_from(gen, d)
    EA, EC = Es[0], Es[1]
    pal = moi_projection_sum(
        dd_symbol(fam, 2), MOIOperands([EA, EC, EA], [Bh, Bh])
    ).value
    out.append(
        _record("moi_palindromic_hermitian", "self-adjointness",
                float(np.linalg.norm(pal - pal.conj().T)), config.tol("moi_hermitian"))
    )
    # discretization: seeded decay ratio and grid-aligned exactness
    gen2 = SplitMix64(4)
    A2 = _hermitian_from(gen2, 4)
    B2 = _hermitian_from(gen2, 4)
    B2 /= np.linalg.norm(B2, 2)
    EA2, EAB2 = eig_hermitian(A2), eig_hermitian(A2 + B2)
    ops2 = MOIOperands([EAB2, EA2, EA2], [B2, B2])
    exact = moi_projection_sum(dd_symbol(fam, 2), ops2).value
    errs = []
    for m in [2 ** j for j in range(4, 13)]:
        approx = moi_discretized(dd_symbol(fam, 2), ops2, m=m, N=64 * m).value
        errs.append(float(np.linalg.norm(approx - exact)))
    worst_ratio = max(e2 / e1 for e1, e2 in zip(errs, errs[1:]))
    out.append(
        _record("discretized_decay_ratio", "discretized-sum-convergence", worst_ratio,
                config.tol("discretized_ratio"))
    )
    lam = np.array([-0.5, 0.25, 0.75, 1.0])  # multiples of 1/16
    Eg = eig_hermitian(np.diag(lam))
    Bg = gen.complex_normals((4, 4))
    opsg = MOIOperands([Eg, Eg, Eg], [Bg, Bg])
    ex = moi_projection_sum(dd_symbol(fam, 2), opsg).value
    worst = max(
        float(np.linalg.norm(moi_discretized(dd_symbol(fam, 2), opsg, m=2 ** j, N=64 * 2 ** j).value - ex))
        for j in range(4, 13)
    )
    out.append(
        _record("discretized_grid_aligned", "discretized-sum-convergence", worst,
                config.tol("discretized_aligned"))
    )
    # norm ratio, monitored only
    ops_norm = operands([Es[0]] * 3, [args[0], args[0]], exponents=[4.0, 4.0])
    ratio = moi_norm_report(dd_symbol(fam, 2), ops_norm, p=2.0).ratio
    out.append(_record("moi_norm_ratio", "norm-bound-monitor", ratio, math.inf))
    return out


def _checks_ssf(config: ExperimentConfig) -> List[CheckRecord]:
    A, B, _ = generate_ensemble(config)
    n = max(2, min(config.order, 3))
    out = []
    counting = krein_ssf(A, B)
    fam = exponential()
    lhs = float(
        np.real(
            trace(apply_function(fam, eig_hermitian(A + B)))
            - trace(apply_function(fam, eig_hermitian(A)))
        )
    )
    rhs = counting_pairing(counting, fam)
    out.append(
        _record("krein_breakpoint_pairing", "trace-formula-order-1",
                abs(lhs - rhs) / max(1.0, abs(lhs)), config.tol("krein_pairing"))
    )
    d_small = min(config.dimension, 4)
    cfg_small = ExperimentConfig(seed=config.seed, dimension=d_small, order=1,
                                 ensemble="gue_like")
    A1, B1, _ = generate_ensemble(cfg_small)
    four1 = higher_ssf_fourier(A1, B1, n=1)
    count1 = krein_ssf(A1, B1)
    lam = np.asarray(count1.params["spectrum_base"])
    mu = np.asarray(count1.params["spectrum_perturbed"])
    exact1 = (
        (mu[None, :] > four1.t_grid[:, None]).sum(1)
        - (lam[None, :] > four1.t_grid[:, None]).sum(1)
    ).astype(float)
    l1 = float(np.trapezoid(np.abs(four1.values - exact1), four1.t_grid))
    out.append(
        _record("fourier_vs_counting_l1", "trace-formula-order-1", l1,
                config.tol("fourier_vs_counting_l1"))
    )
    g2 = higher_ssf_fourier(np.array([[0.0]]), np.array([[1.0]]), n=2)
    true2 = np.where((g2.t_grid > 0) & (g2.t_grid < 1), 1.0 - g2.t_grid, 0.0)
    out.append(
        _record("eta2_scalar_closed_form", "remainder-density-order-2",
                float(np.trapezoid(np.abs(g2.values - true2), g2.t_grid)),
                config.tol("eta2_scalar_l1"))
    )
    grid = higher_ssf_fourier(A, B, n=n)
    heldout = [f for f in (gaussian(), runge(), bump(halfwidth=4.0)) if f.max_order >= n]
    rep = verify_trace_formula(A, B, n, grid, heldout)
    out.append(
        _record(f"heldout_trace_formula_n{n}", "trace-formula-order-n",
                rep.max_function_error(), config.tol("heldout_rel"))
    )
    out.append(
        _record(f"moment_identities_n{n}", "moment-identities",
                rep.max_moment_error(), config.tol("moment_rel"))
    )
    chain = diagonal_symbol_trace(A, B, n=n, f=gaussian(), ssf=grid, chain_tol=math.inf)
    out.append(
        _record(f"identity_chain_n{n}", "restricted-symbol-chain",
                chain.chain_deviation, config.tol("chain_rel"))
    )
    out.append(
        _record(f"identity_chain_pairing_n{n}", "restricted-symbol-chain",
                max(chain.pairing_errors), config.tol("chain_pairing"))
    )
    l1rep = ssf_l1_report(A, B, n, grid)
    out.append(_record("ssf_l1_ratio", "l1-bound-monitor", l1rep["ratio"], math.inf))
    return out


def _checks_counterexample(config: ExperimentConfig) -> Tuple[List[CheckRecord], List[str]]:
    rows = lp_counterexample_demo(config.p, config.dims)
    heavy = [r.r_heavy for r in rows]
    control = [r.r_bounded for r in rows]
    h_ratios = [b / a for a, b in zip(heavy, heavy[1:])]
    c_ratios = [b / a for a, b in zip(control, control[1:])]
    records = [
        _record("counterexample_heavy_divergence", "difference-quotient-blowup",
                1.2 - min(h_ratios), config.tol("counterexample_margin")),
        _record("counterexample_bounded_control", "difference-quotient-blowup",
                max(abs(r - 1.0) for r in c_ratios), config.tol("control_window")),
    ]
    artifacts = []
    if config.out_dir:
        path = Path(config.out_dir) / "counterexample.csv"
        lines = ["d,t,r_heavy,r_bounded"]
        for r in rows:
            lines.append(f"{r.dim},{r.t!r},{r.r_heavy!r},{r.r_bounded!r}")
        path.write_text("\n".join(lines) + "\n")
        artifacts.append(str(path))
    return records, artifacts


SUITES = ("derivatives", "perturbation", "moi_consistency", "ssf", "counterexample", "all")


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("MOI_LAB_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(config: ExperimentConfig, suite: str) -> Report:
    """Execute the named checks; a hard error fails that check only."""
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; known: {SUITES}")
    t0 = time.time()
    if config.out_dir:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    groups: List[Tuple[str, Callable]] = []
    if suite in ("derivatives", "all"):
        groups.append(("derivatives", _checks_derivatives))
    if suite in ("perturbation", "all"):
        groups.append(("perturbation", _checks_perturbation))
    if suite in ("moi_consistency", "all"):
        groups.append(("moi_consistency", _checks_moi))
    if suite in ("ssf", "all"):
        groups.append(("ssf", _checks_ssf))

    def run_group(fn):
        try:
            return fn(config)
        except MoiLabError as exc:
            return [CheckRecord(name=fn.__name__, formula="execution", measured=math.inf,
                                threshold=0.0, passed=False, error=str(exc))]

    records: List[CheckRecord] = []
    artifacts: List[str] = []
    workers = _max_workers()
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_group, fn) for _, fn in groups]
            for fut in futures:  # declaration order, not completion order
                records.extend(fut.result())
    else:
        for _, fn in groups:
            records.extend(run_group(fn))
    if suite in ("counterexample", "all"):
        try:
            recs, arts = _checks_counterexample(config)
            records.extend(recs)
            artifacts.extend(arts)
        except MoiLabError as exc:
            records.append(CheckRecord(name="counterexample", formula="execution",
                                       measured=math.inf, threshold=0.0,
                                       passed=False, error=str(exc)))
    report = Report(
        config=config.echo(),
        suite=suite,
        records=records,
        artifacts=artifacts,
        wall_time_s=time.time() - t0,
    )
    if config.out_dir:
        out = Path(config.out_dir) / f"report_{suite}.json"
        out.write_text(report.to_json() + "\n")
    return report
