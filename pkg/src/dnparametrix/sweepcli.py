"""Experiment driver: symbolic verification, (h, mu) sweeps, slope fits, reports.

Configuration is an INI file with sections ``model``, ``boundary``, ``grids``,
``sweep``, ``verify`` and ``output``; every key has a default (see
``DEFAULTS``).  Exit codes: 0 pass, 1 failed check, 2 usage/config error,
3 solver failure in a sweep.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .eikonal import (ModelSpec, airy_model, check_im_phase, check_phase_grading, check_phase_structure,
                      eikonal_residual, largest_passing_delta, random_model, solve_eikonal, zero_model)
from .oracle import OracleError, airy_dn, bvp_dn_matrix, mode_dn, model_m_function, op_norm_estimate
from .quantize import NumericJets, TorusGrid, bump, dn_symbol, dn_symbol_values
from .reduction import BoundaryData, compute_p, transform_m
from .residual import assemble_AM, verify_AM_structure
from .symring import NumericExpr, SymExpr, parse_expr, rho_value
from .transport import check_amp_grading, check_amp_structure, check_E_grading, solve_transport

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
CSV_COLUMNS = ["h", "mu", "s", "k", "error_norm", "bound_value", "ratio", "grid", "status"]

DEFAULTS = {
    "model": {"source": "airy", "c": "1", "d": "2", "M": "6", "mu": "1/2", "seed": "0"},
    "boundary": {"dim": "1", "n0": "1", "mu": "1/2"},
    "grids": {"n_modes": "256", "n_modes_2d": "64", "eta_cover": "4", "T": "1"},
    "sweep": {"s_list": "0, 1", "k_list": "0", "h_exponents": "5-11",
              "mu_rules": "fixed:0.3, power:0.6", "regime_eps": "0.05", "oracle": "auto"},
    "verify": {"n_models": "20", "M": "8", "d_list": "2, 3", "seed": "0", "mu_mode": "nominal",
               "im_samples": "10000", "delta": "0.05", "perturb_order": "6", "perturb_models": "3"},
    "output": {"path": "sweep.csv"},
}


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class MuRule:
    kind: str  # "fixed" or "power"
    value: float

    def mu(self, h: float) -> float:
        return self.value if self.kind == "fixed" else h ** self.value

    @property
    def label(self) -> str:
        return f"mu={self.value:g}" if self.kind == "fixed" else f"mu=h^{self.value:g}"


@dataclass
class ExperimentConfig:
    raw: dict[str, dict[str, str]]
    model_source: str
    M: int
    s_list: list[int]
    k_list: list[int]
    h_values: list[float]
    mu_rules: list[MuRule]
    regime_eps: float
    n_modes: int
    n_modes_2d: int
    eta_cover: float
    T: float
    oracle: str
    output: Path
    seed: int = 0

    def get(self, section: str, key: str) -> str:
        return self.raw[section][key]


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _parse_rules(text: str) -> list[MuRule]:
    rules = []
    for part in [p.strip() for p in text.split(",") if p.strip()]:
        kind, _, val = part.partition(":")
        if kind not in ("fixed", "power") or not val:
            raise ConfigError(f"bad mu rule {part!r}; use fixed:VALUE or power:THETA")
        v = float(val)
        if kind == "fixed" and v == 0:
            raise ConfigError("mu must be nonzero")
        if kind == "power" and not 0 < v < 2 / 3:
            raise ConfigError("power rule needs 0 < theta < 2/3")
        rules.append(MuRule(kind, v))
    return rules


def load_config(path: str | Path | None = None, text: str | None = None, seed: int | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str
    parser.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} not found")
        parser.read(path)
    if text is not None:
        parser.read_string(text)
    raw = {s: dict(parser[s]) for s in parser.sections()}
    try:
        sw = raw["sweep"]
        s_list, k_list = _int_list(sw["s_list"]), _int_list(sw["k_list"])
        h_values = [2.0 ** -e for e in _int_list(sw["h_exponents"])]
        rules = _parse_rules(sw["mu_rules"])
        eps = float(sw["regime_eps"])
        cfg = ExperimentConfig(
            raw=raw, model_source=raw["model"]["source"], M=int(raw["model"]["M"]), s_list=s_list,
            k_list=k_list, h_values=h_values, mu_rules=rules, regime_eps=eps,
            n_modes=int(raw["grids"]["n_modes"]), n_modes_2d=int(raw["grids"]["n_modes_2d"]),
            eta_cover=float(raw["grids"]["eta_cover"]), T=float(raw["grids"]["T"]),
            oracle=sw["oracle"], output=Path(raw["output"]["path"]),
            seed=int(raw["model"]["seed"]) if seed is None else seed)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.model_source not in ("airy", "zero", "inline", "random", "boundary", "periodic"):
        raise ConfigError(f"unknown model source {cfg.model_source!r}")
    if cfg.oracle not in ("auto", "airy", "ode", "bvp2d"):
        raise ConfigError(f"unknown oracle {cfg.oracle!r}")
    if not 0 < cfg.regime_eps < 2 / 3:
        raise ConfigError("regime_eps must lie in (0, 2/3)")
    for s in cfg.s_list:
        for k in cfg.k_list:
            if k > 3 * s + 2:
                raise ConfigError(f"(s, k) = ({s}, {k}) violates k <= 3s+2")
    if max(cfg.s_list, default=0) > cfg.M:
        raise ConfigError("s exceeds the jet order M")
    for h in cfg.h_values:
        floor = h ** (2 / 3 - cfg.regime_eps)
        for rule in cfg.mu_rules:
            if abs(rule.mu(h)) < floor * (1 - 1e-12):
                raise ConfigError(f"{rule.label} gives |mu| = {abs(rule.mu(h)):.3g} < h^(2/3-eps) = {floor:.3g} at h = {h:g}")


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    m = cfg.raw["model"]
    d, M = int(m["d"]), cfg.M
    mu = Fraction(m["mu"])
    src = cfg.model_source
    if src == "airy":
        return airy_model(Fraction(m["c"]), d=d, M=M, mu=mu)
    if src == "zero":
        return ModelSpec(d, M, {}, mu, name="zero")
    if src == "random":
        return random_model(cfg.seed, d=d, M=M)
    if src == "inline":
        table = {}
        for key, val in m.items():
            if key.startswith("m_"):
                _, k, j = key.split("_")
                table[(int(k), int(j))] = parse_expr(val, d)
        return ModelSpec(d, M, table, mu, name="inline")
    b = cfg.raw["boundary"]
    bd = BoundaryData(int(b["dim"]), Fraction(b["n0"]),
                      {int(k[1:]): Fraction(v) for k, v in b.items() if k[0] == "n" and k[1:].isdigit() and k != "n0"},
                      {int(k[1:]): Fraction(v) for k, v in b.items() if k[0] == "r" and k[1:].isdigit()},
                      mu=Fraction(b["mu"]))
    res = transform_m(compute_p(bd, M), M=M)
    if res.model is None:
        raise ConfigError("boundary data do not admit a symbolic model")
    return res.model


def airy_constant(model: ModelSpec) -> float | None:
    """``c`` when ``m = c t`` with a real constant ``c``; otherwise ``None``."""
    if set(model.m_table) != {(1, 0)}:
        return None
    e = model.m_table[(1, 0)]
    items = e.items()
    if len(items) != 1:
        return None
    (key, coeff), = items.items()
    rho, mu, ys, etas = e.layout.unpack(key)
    if rho or mu or any(ys) or any(etas) or coeff.im != 0:
        return None
    return float(coeff.re)


# -- sweep -------------------------------------------------------------------------

class PeriodicJets:
    """``N~_{s,k}`` for ``m = t (c0 + c1 cos y)``, node by node.

    The recursions are local in ``y``, so at each node ``y0`` the model is
    replaced by its Taylor polynomial in ``y - y0`` (rational coefficients,
    degree ``taylor_degree``) and the jets are evaluated at ``y = y0``.
    """

    def __init__(self, c0: float, c1: float, s_max: int, taylor_degree: int | None = None):
        self.c0, self.c1 = c0, c1
        self.M = s_max + 1
        self.degree = taylor_degree if taylor_degree is not None else 3 * s_max + 4
        self._cache: dict[float, NumericJets] = {}

    def taylor_model(self, y0: float) -> ModelSpec:
        d = 2
        y = SymExpr.y(d, 1)
        expr = SymExpr.const(d, Fraction(self.c0).limit_denominator(10 ** 12))
        power = SymExpr.one(d)
        for n in range(self.degree + 1):
            der = math.cos(y0 + n * math.pi / 2)
            c = Fraction(self.c1 * der / math.factorial(n)).limit_denominator(10 ** 12)
            if c:
                expr = expr + power.scale(c)
            power = power * y
        return ModelSpec(d, self.M, {(1, 0): expr}, name=f"taylor@{y0:.4f}")

    def jets_at(self, y0: float) -> NumericJets:
        if y0 not in self._cache:
            m = self.taylor_model(y0)
            ph = solve_eikonal(m)
            self._cache[y0] = NumericJets(ph, solve_transport(m, ph))
        return self._cache[y0]

    def field(self, s: int, k: int, grid: TorusGrid, mu: float) -> np.ndarray:
        eta = grid.eta[0]
        rows = [dn_symbol_values(self.jets_at(float(y0)), s, k, [eta], mu, grid.h, [np.zeros_like(eta)])
                for y0 in grid.nodes[0]]
        return np.array(rows)

    def m_function(self):
        c0, c1 = self.c0, self.c1
        return lambda t, y: t * (c0 + c1 * np.cos(y))


class SweepContext:
    """Jets and oracle choice for one model; rebuilt in every worker process."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.periodic = None
        if cfg.model_source == "periodic":
            m = cfg.raw["model"]
            self.periodic = PeriodicJets(float(Fraction(m.get("c0", "1"))), float(Fraction(m.get("c1", "1/2"))),
                                         max(cfg.s_list, default=0))
            self.oracle = "bvp2d"
            self.model = None
            return
        self.model = build_model(cfg)
        if self.model.d != 2:
            raise ConfigError("numeric sweeps run in d = 2 only")
        need = max(cfg.s_list, default=0)
        model = self.model if self.model.M >= need + 1 else self.model.with_M(need + 1)
        self.phase = solve_eikonal(model)
        self.amps = solve_transport(model, self.phase)
        self.jets = NumericJets(self.phase, self.amps)
        self.c = airy_constant(self.model)
        self.y_independent = self.model.is_y_independent()
        oracle = cfg.oracle
        if oracle == "auto":
            oracle = "airy" if self.c is not None else ("ode" if self.y_independent else "bvp2d")
        if oracle == "airy" and self.c is None:
            raise ConfigError("the airy oracle needs m = c t")
        if oracle == "ode" and not self.y_independent:
            raise ConfigError("the per-mode oracle needs a y-independent model")
        self.oracle = oracle
        self._terms = [(k, j, NumericExpr(e)) for (k, j), e in self.model.m_table.items()]

    def profile(self, eta1: float, mu: float, h: float):
        rho = complex(rho_value(eta1, mu))
        vals = [(k, j, complex(f(rho, mu, [0.0], []))) for k, j, f in self._terms]
        if not vals:
            return None
        return lambda t: sum(h ** j * v * np.power(t, k) for k, j, v in vals)

    def measure(self, h: float, mu: float, s: int, k: int) -> dict:
        row = {"h": h, "mu": mu, "s": s, "k": k}
        bound = h ** (s + 1) * abs(mu) ** (-(3 * s + 2 - k) / 2)
        try:
            if self.oracle == "bvp2d":
                err, grid_desc = self._measure_bvp(h, mu, s, k)
            else:
                err, grid_desc = self._measure_modes(h, mu, s, k)
            row.update(error_norm=err, bound_value=bound, ratio=err / bound, grid=grid_desc, status="ok")
        except (OracleError, ValueError, np.linalg.LinAlgError) as exc:
            row.update(error_norm=math.nan, bound_value=bound, ratio=math.nan, grid="-",
                       status=f"solver_error:{type(exc).__name__}")
        return row

    def _measure_modes(self, h, mu, s, k):
        grid = TorusGrid.for_window(1, self.cfg.n_modes, h, self.cfg.eta_cover)
        eta = grid.eta[0]
        eta = eta[bump(eta) > 0]
        if self.oracle == "airy":
            N = np.array([airy_dn(float(e), mu, self.c, h) for e in eta])
        else:
            N = np.array([mode_dn(float(e), mu, h, self.profile(float(e), mu, h), self.cfg.T) for e in eta])
        rho = rho_value(eta, mu)
        err = bump(eta) * rho ** k * N - dn_symbol_values(self.jets, s, k, [eta], mu, h)
        # diagonal operator: its norm is the largest modulus on the window
        return float(np.max(np.abs(err))), f"modes{grid.n_modes}/L{grid.period:.6g}/{self.oracle}"

    def _measure_bvp(self, h, mu, s, k):
        grid = TorusGrid(1, self.cfg.n_modes_2d, h, eta_cover=self.cfg.eta_cover)
        if self.periodic is not None:
            m_func = self.periodic.m_function()
            field_ = self.periodic.field(s, k, grid, mu)
        else:
            m_func = model_m_function(self.model, h)
            field_ = dn_symbol(self.phase, self.amps, s, k, grid, mu, self.jets).field
        D = bvp_dn_matrix(m_func, grid, mu, self.cfg.T)
        n = grid.n_modes
        F = np.fft.fft(np.eye(n), axis=0)
        Finv = np.conj(F).T / n
        kk = grid.wavenumbers[0]
        y = grid.nodes[0]
        K = np.exp(1j * np.outer(y, kk)) * np.broadcast_to(field_, (n, n))
        op_nodal = K @ F / n
        eta = grid.eta[0]
        weight = bump(eta) * rho_value(eta, mu) ** k
        E = Finv @ D @ (weight[:, None] * F) - op_nodal
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est = op_norm_estimate(E, iters=300, seed=self.cfg.seed, tol=1e-9)
        return float(est), f"bvp{n}/L{grid.period:.6g}"


_WORKER: SweepContext | None = None


def _init_worker(cfg):
    global _WORKER
    _WORKER = SweepContext(cfg)


def _run_task(task):
    return _WORKER.measure(*task)


def sweep_tasks(cfg: ExperimentConfig) -> list[tuple[float, float, int, int]]:
    tasks = []
    for s in cfg.s_list:
        for k in cfg.k_list:
            for rule in cfg.mu_rules:
                for h in cfg.h_values:
                    tasks.append((h, rule.mu(h), s, k))
    return tasks


def run_sweep(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    tasks = sweep_tasks(cfg)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(cfg,)) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        ctx = SweepContext(cfg)
        rows = [ctx.measure(*t) for t in tasks]
    return _sorted_rows(rows)


def _sorted_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (int(r["s"]), int(r["k"]), -float(r["h"]), float(r["mu"])))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.12e}"
    return str(v)


def write_rows(rows: Iterable[dict], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_rows(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({"h": float(r["h"]), "mu": float(r["mu"]), "s": int(r["s"]), "k": int(r["k"]),
                         "error_norm": float(r["error_norm"]), "bound_value": float(r["bound_value"]),
                         "ratio": float(r["ratio"]), "grid": r["grid"], "status": r["status"]})
    return rows


# -- fitting -------------------------------------------------------------------------

@dataclass
class FitEntry:
    s: int
    k: int
    series: str
    n_points: int
    slope_h: float | None
    expected_slope_h: float
    slope_mu: float | None
    expected_slope_mu: float
    max_ratio: float
    ratio_spread: float
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class FitReport:
    entries: list[FitEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def find(self, s: int, k: int, series: str) -> FitEntry:
        for e in self.entries:
            if (e.s, e.k, e.series) == (s, k, series):
                return e
        raise KeyError((s, k, series))


class InsufficientDataError(ValueError):
    pass


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def slope_tolerance(s: int) -> float:
    return 0.3 + 0.1 * s


def fit_scaling(rows: list[dict] | str | Path, min_points: int = 5, spread_limit: float = 3.0) -> FitReport:
    """Least-squares slopes per ``(s, k)`` series.

    Rows sharing one ``mu`` form a fixed-``mu`` series (slope in ``h``); rows
    with ``mu = h^theta`` are grouped by ``theta`` (ratio spread).  Columns with
    at least ``min_points`` distinct ``mu`` at one ``h`` also give a slope in ``mu``.
    """
    if not isinstance(rows, list):
        rows = read_rows(rows)
    good = [r for r in rows if r["status"] == "ok" and r["error_norm"] > 0]
    entries: list[FitEntry] = []
    for s, k in sorted({(r["s"], r["k"]) for r in good}):
        sub = [r for r in good if (r["s"], r["k"]) == (s, k)]
        by_mu: dict[float, list] = {}
        for r in sub:
            by_mu.setdefault(r["mu"], []).append(r)
        fixed = {mu: rs for mu, rs in by_mu.items() if len({r["h"] for r in rs}) >= min_points}
        used = {id(r) for rs in fixed.values() for r in rs}
        by_theta: dict[float, list] = {}
        for r in sub:
            if id(r) not in used and r["h"] < 1:
                by_theta.setdefault(round(math.log(r["mu"]) / math.log(r["h"]), 6), []).append(r)
        exp_h = float(s + 1)
        exp_mu = -(3 * s + 2 - k) / 2
        tol = slope_tolerance(s)
        for mu, rs in sorted(fixed.items()):
            rs = sorted(rs, key=lambda r: -r["h"])
            slope = _slope([r["h"] for r in rs], [r["error_norm"] for r in rs])
            ratios = [r["ratio"] for r in rs]
            entries.append(FitEntry(s, k, f"mu={mu:g}", len(rs), slope, exp_h, None, exp_mu,
                                    max(ratios), max(ratios) / min(ratios),
                                    {"slope_h": abs(slope - exp_h) <= tol}))
        for theta, rs in sorted(by_theta.items()):
            if len(rs) < min_points:
                continue
            rs = sorted(rs, key=lambda r: -r["h"])
            ratios = [r["ratio"] for r in rs]
            spread = max(ratios) / min(ratios)
            entries.append(FitEntry(s, k, f"mu=h^{theta:g}", len(rs), None, exp_h, None, exp_mu,
                                    max(ratios), spread, {"ratio_spread": spread <= spread_limit}))
        by_h: dict[float, list] = {}
        for r in sub:
            by_h.setdefault(r["h"], []).append(r)
        for h, rs in sorted(by_h.items(), reverse=True):
            if len({r["mu"] for r in rs}) < min_points:
                continue
            slope = _slope([r["mu"] for r in rs], [r["error_norm"] for r in rs])
            ratios = [r["ratio"] for r in rs]
            entries.append(FitEntry(s, k, f"h={h:g}", len(rs), None, exp_h, slope, exp_mu, max(ratios),
                                    max(ratios) / min(ratios), {"slope_mu": slope >= exp_mu - tol}))
    if rows and not entries:
        raise InsufficientDataError(f"no series with at least {min_points} points")
    return FitReport(entries)


FIT_COLUMNS = ["s", "k", "series", "n_points", "slope_h", "expected_slope_h", "slope_mu", "expected_slope_mu",
               "max_ratio", "ratio_spread", "passed"]


def _opt(v):
    return "" if v is None else f"{v:.6f}"


def emit_report(fit: FitReport, path: str | Path) -> tuple[Path, Path]:
    """Machine CSV at ``path`` and a summary next to it (``.txt``)."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    lines = []
    for e in fit.entries:
        w.writerow([e.s, e.k, e.series, e.n_points, _opt(e.slope_h), f"{e.expected_slope_h:g}", _opt(e.slope_mu),
                    f"{e.expected_slope_mu:g}", f"{e.max_ratio:.6e}", f"{e.ratio_spread:.6f}",
                    "PASS" if e.passed else "FAIL"])
        parts = [f"s={e.s} k={e.k} {e.series}: n={e.n_points}"]
        if e.slope_h is not None:
            parts.append(f"slope_h={e.slope_h:.3f} (expect {e.expected_slope_h:g} +/- {slope_tolerance(e.s):g})")
        if e.slope_mu is not None:
            parts.append(f"slope_mu={e.slope_mu:.3f} (envelope {e.expected_slope_mu:g})")
        parts.append(f"max_ratio={e.max_ratio:.3e} spread={e.ratio_spread:.2f}")
        parts.append("PASS" if e.passed else "FAIL")
        lines.append(" ".join(parts))
    path.write_text(buf.getvalue())
    summary = path.with_suffix(".txt")
    summary.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path, summary


# -- symbolic verification ---------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class VerifyResult:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> CheckResult | None:
        return next((c for c in self.checks if not c.passed), None)

    def seconds(self, prefix: str = "") -> float:
        return sum(c.seconds for c in self.checks if c.name.startswith(prefix))


def suite_models(n_models: int = 20, M: int = 8, d_list=(2, 3), seed: int = 0) -> list[ModelSpec]:
    """Seeded random models cycling through ``d_list`` (``mu`` left symbolic)."""
    return [random_model(seed + i, d=d_list[i % len(d_list)], M=M) for i in range(n_models)]


def _for_jets(model: ModelSpec, mu_mode: str) -> ModelSpec:
    return model.specialize_mu() if mu_mode == "nominal" else model


def residual_check(model: ModelSpec, phase=None, amps=None, corrupt: bool = False) -> CheckResult:
    """Eikonal residual below ``t^M`` and the ``A_M`` order pattern (which contains the transport residuals)."""
    t0 = time.perf_counter()
    phase = phase or solve_eikonal(model)
    amps = amps or solve_transport(model, phase)
    if corrupt:
        d = model.d
        amps = amps.replace(2, 1, amps.a(2, 1) + SymExpr.rho(d, -7))
    M = model.M
    eik = eikonal_residual(phase)
    bad_eik = sorted(eik.coeffs)
    AM = assemble_AM(model, phase, amps, t_trunc=M, h_trunc=M + 2)
    rep = verify_AM_structure(AM, M, model.name)
    ok = not bad_eik and rep.passed
    detail = "ok" if ok else f"eikonal nonzero at {bad_eik[:4]}; A_M forbidden (t, h) orders {rep.forbidden[:6]}"
    return CheckResult(f"residual[{model.name},d={model.d}]", ok, detail, time.perf_counter() - t0)


def grading_check(model: ModelSpec, phase, amps) -> CheckResult:
    t0 = time.perf_counter()
    ph = check_phase_grading(phase)
    a = check_amp_grading(amps)
    e = check_E_grading(amps)
    ok = ph.passed and not a and not e
    detail = "ok" if ok else f"phase {[(v.k, v.alpha) for v in ph.violations][:3]} amp {[(g.k, g.j) for g in a][:3]} E {[(g.k, g.j) for g in e][:3]}"
    return CheckResult(f"grading[{model.name},d={model.d}]", ok, detail, time.perf_counter() - t0)


def im_phase_check(model: ModelSpec, phase, delta: float, n_samples: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    rep = check_im_phase(phase, delta, n_samples, seed)
    best = largest_passing_delta(phase, seed=seed)
    detail = (f"ok; largest passing delta {best}" if rep.passed
              else f"{rep.violations} violations, first {rep.first_violation}; largest passing delta {best}")
    return CheckResult(f"im_phase[{model.name},d={model.d}]", rep.passed, detail, time.perf_counter() - t0)


def perturbation_check(model: ModelSpec, max_order: int) -> CheckResult:
    """Phase and amplitude responses to ``m_{K,0} -> m_{K,0} + delta`` for ``K <= max_order``."""
    t0 = time.perf_counter()
    d = model.d
    model = model.with_M(max(model.M, max_order + 1))
    phase = solve_eikonal(model)
    amps = solve_transport(model, phase)
    delta = SymExpr.y(d, 1) * SymExpr.rho(d, 2) + SymExpr.const(d, Fraction(3, 2))
    fails = []
    for K in range(1, max_order + 1):
        if not check_phase_structure(model, phase, K, delta).passed:
            fails.append(("phi", K + 1))
    for k in range(1, max_order + 1):
        for j in range(0, max_order + 1 - k):
            if not check_amp_structure(model, phase, amps, k, j, delta).passed:
                fails.append(("a", k, j))
    detail = "ok" if not fails else f"responses differ at {fails[:5]}"
    return CheckResult(f"perturbation[{model.name},d={d}]", not fails, detail, time.perf_counter() - t0)


def run_verify(cfg: ExperimentConfig, inject_corruption: bool = False, log: Callable[[str], None] | None = None,
               suites: tuple[str, ...] = ("smoke", "residual", "grading", "im_phase", "perturbation")) -> VerifyResult:
    v = cfg.raw["verify"]
    mu_mode = v["mu_mode"]
    if mu_mode not in ("nominal", "symbolic"):
        raise ConfigError("mu_mode must be nominal or symbolic")
    models = suite_models(int(v["n_models"]), int(v["M"]), tuple(_int_list(v["d_list"])), int(v["seed"]) + cfg.seed)
    checks: list[CheckResult] = []

    def record(c: CheckResult):
        checks.append(c)
        if log:
            log(f"{'PASS' if c.passed else 'FAIL'} {c.name} ({c.seconds:.2f}s) {'' if c.passed else c.detail}")

    if "smoke" in suites:
        record(residual_check(zero_model(2, 4)))
    for i, raw in enumerate(models):
        m = _for_jets(raw, mu_mode)
        if "residual" in suites or "grading" in suites:
            phase = solve_eikonal(m)
            amps = solve_transport(m, phase)
            if "residual" in suites:
                record(residual_check(m, phase, amps, corrupt=inject_corruption and i == 0))
            if "grading" in suites:
                record(grading_check(m, phase, amps))
        if "im_phase" in suites:
            # the sampled mu must enter m itself, so the phase is solved with mu symbolic
            record(im_phase_check(raw, solve_eikonal(raw), float(v["delta"]), int(v["im_samples"]), int(v["seed"])))
    if "perturbation" in suites:
        order = int(v["perturb_order"])
        pmodels = [airy_model(1, 2, order + 1)] + [
            _for_jets(random_model(100 + i, 2, order + 1, k_max=2, j_max=1), mu_mode)
            for i in range(int(v["perturb_models"]) - 1)]
        for m in pmodels:
            record(perturbation_check(m, order))
    return VerifyResult(checks)


# -- command line ---------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnparametrix", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file")
    common.add_argument("--seed", type=int, default=None, help="overrides the model/suite seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--out", help="output path")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="run the exact symbolic suites")
    v.add_argument("--inject-corruption", action="store_true", help="negative control: corrupt one jet")
    v.add_argument("--smoke", action="store_true", help="zero-model smoke test only")
    sub.add_parser("sweep", parents=[common], help="numeric (h, mu) sweep to CSV")
    for name in ("fit", "report"):
        q = sub.add_parser(name, parents=[common], help="fit slopes from a sweep CSV" if name == "fit"
                           else "write fit CSV and summary")
        q.add_argument("--input", help="sweep CSV (default: output path from the config)")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("--jobs must be positive", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "verify":
        suites = ("smoke",) if args.smoke else ("smoke", "residual", "grading", "im_phase", "perturbation")
        res = run_verify(cfg, args.inject_corruption, log=print, suites=suites)
        if res.passed:
            print(f"verify: all {len(res.checks)} checks passed in {res.seconds():.1f}s")
            return EXIT_OK
        f = res.first_failure
        print(f"verify: FAILED at {f.name}: {f.detail}")
        return EXIT_CHECK

    if args.command == "sweep":
        try:
            rows = run_sweep(cfg, args.jobs)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        out = Path(args.out) if args.out else cfg.output
        write_rows(rows, out)
        failed = [r for r in rows if r["status"] != "ok"]
        print(f"sweep: {len(rows)} rows written to {out}; {len(failed)} solver failures")
        return EXIT_SOLVER if failed else EXIT_OK

    src = Path(args.input) if args.input else cfg.output
    if not src.exists():
        print(f"no sweep CSV at {src}", file=sys.stderr)
        return EXIT_USAGE
    try:
        fit = fit_scaling(str(src))
    except InsufficientDataError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if args.command == "fit":
        for e in fit.entries:
            sh = f"{e.slope_h:.3f}" if e.slope_h is not None else "-"
            print(f"s={e.s} k={e.k} {e.series} slope_h={sh} max_ratio={e.max_ratio:.3e} "
                  f"spread={e.ratio_spread:.2f} {'PASS' if e.passed else 'FAIL'}")
    else:
        out = Path(args.out) if args.out else src.with_name(src.stem + "_fit.csv")
        csv_path, txt = emit_report(fit, out)
        print(f"report: {csv_path} and {txt}")
    return EXIT_OK if fit.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
