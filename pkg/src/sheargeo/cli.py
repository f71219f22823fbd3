"""Command-line front end: parse a run configuration, execute suites, emit a report."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import __version__
from .bundle import (
    FirmProfile,
    GeneralProfile,
    build_lorentz_firm,
    build_lorentz_general,
    build_sasaki,
    frame_bracket_residual,
    frame_crosscheck,
    killing_residuals,
    verify_sasaki,
)
from .einstein import (
    EinsteinParams,
    beta_ode_residual,
    beta_profile,
    beta_rk4,
    coordinate_einstein_residual,
    einstein_grid,
    einstein_metric,
    frame_einstein_residual,
    reduced_einstein_residuals,
    reduced_system,
    sigma_discriminant,
    sigma_profile,
    taub_nut_transform,
)
from .errors import ConfigError, GeometryError
from .kahler import KINDS, make_base, verify_kahler_einstein
from .report import CheckRecord, Report, emit
from .structures import (
    cr_from_subriemannian,
    cr_residuals,
    geodesic_factor,
    nijenhuis_tensor,
    random_cr_pair,
    rescaled_pair,
    shearfree_decompose,
    standardize_pair,
    twisting_degree,
)
from .tensor import VectorField
from .wave import build_wave, flag_and_lie_check, harmonicity_check

COMMANDS = ("verify-base", "verify-sasaki", "einstein", "taubnut", "wave", "cr-roundtrip", "all")
FORMATS = ("json", "csv", "human")
BASE_ALIASES = {
    "s2": "s2-spherical",
    "sphere": "s2-spherical",
    "stereographic": "s2-stereographic",
    "t2": "torus",
    "hyperbolic": "hyperbolic-disk",
    "h2": "hyperbolic-disk",
    "s2xs2": "product",
    "product(s2,s2)": "product",
}
NATURAL_LAMBDA0 = {"s2-spherical": 1.0, "s2-stereographic": 1.0, "s2-perturbed": 1.0, "product": 1.0,
                   "torus": 0.0, "hyperbolic-disk": -1.0}
# key -> (type, parser)
KEYS = {
    "command": str, "base": str, "n": int, "lambda": float, "lambda0": float, "B": float, "C": float,
    "grid": str, "seed": int, "format": str, "output": str,
}
SAMPLE_TIMES = (0.1, 0.5, 1.0, 2.0, 10.0)


@dataclass(frozen=True)
class RunConfig:
    command: str = "all"
    base_kind: str = "s2-spherical"
    n: int = 4
    Lambda: float = 0.0
    Lambda0: float = 1.0
    B: float = 0.0
    C: float = 0.25
    grid: tuple = (10, 10, 10)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    output: str = "-"
    format: str = "json"

    @property
    def params(self) -> EinsteinParams:
        return EinsteinParams(self.n, self.Lambda, self.Lambda0, self.B, self.C)

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def echo(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["tolerances"] = dict(sorted(self.tolerances.items()))
        d["version"] = __version__
        d["rng"] = "numpy PCG64 via SeedSequence(seed).spawn"
        return d


def _parse_grid(text: str) -> tuple:
    try:
        counts = tuple(int(c) for c in text.replace("x", ",").replace("×", ",").split(",") if c.strip())
    except ValueError as exc:
        raise ConfigError(f"grid: expected integers separated by ',' or 'x', got {text!r}") from exc
    if not counts or any(c < 2 for c in counts):
        raise ConfigError(f"grid: every axis needs at least 2 samples, got {text!r}")
    return counts


def read_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    return values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sheargeo", description="Verify shearfree Lorentzian metrics of Kähler-Sasaki type.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="key=value configuration file; flags override it")
    p.add_argument("--base")
    p.add_argument("--n")
    p.add_argument("--lambda", dest="lambda_")
    p.add_argument("--lambda0")
    p.add_argument("--B")
    p.add_argument("--C")
    p.add_argument("--grid", help="samples per axis, e.g. 10x10x10")
    p.add_argument("--seed")
    p.add_argument("--tol", action="append", default=[], metavar="CHECK=VALUE", help="override a check tolerance")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--output", help="output path ('-' for stdout)")
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_config(argv: Optional[list] = None) -> RunConfig:
    parser = _build_parser()
    parser.__class__ = _Parser
    ns = parser.parse_args(argv)
    raw = read_config_file(ns.config) if ns.config else {}
    tolerances = {}
    for key in list(raw):
        if key.startswith("tol."):
            tolerances[key[4:]] = raw.pop(key)
        elif key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}; expected one of {sorted(KEYS)} or tol.<check>")
    flags = {"command": ns.command, "base": ns.base, "n": ns.n, "lambda": ns.lambda_, "lambda0": ns.lambda0,
             "B": ns.B, "C": ns.C, "grid": ns.grid, "seed": ns.seed, "format": ns.format, "output": ns.output}
    merged = dict(raw)
    merged.update({k: v for k, v in flags.items() if v is not None})
    for item in ns.tol:
        if "=" not in item:
            raise ConfigError(f"--tol expects CHECK=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        tolerances[name.strip()] = value.strip()

    def typed(key):
        kind = KEYS[key]
        try:
            return kind(merged[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: expected {kind.__name__}, got {merged[key]!r}") from exc

    cfg = {}
    cfg["command"] = typed("command") if "command" in merged else "all"
    if cfg["command"] not in COMMANDS:
        raise ConfigError(f"command: expected one of {COMMANDS}, got {cfg['command']!r}")
    base = BASE_ALIASES.get(merged.get("base", "s2-spherical"), merged.get("base", "s2-spherical"))
    if base not in KINDS:
        raise ConfigError(f"base: expected one of {KINDS} or an alias {sorted(BASE_ALIASES)}, got {base!r}")
    cfg["base_kind"] = base
    dim = 6 if base == "product" else 4
    cfg["n"] = typed("n") if "n" in merged else dim
    if cfg["n"] != dim:
        raise ConfigError(f"n: base {base!r} gives n = {dim}, got {cfg['n']}")
    cfg["Lambda"] = typed("lambda") if "lambda" in merged else 0.0
    cfg["Lambda0"] = typed("lambda0") if "lambda0" in merged else NATURAL_LAMBDA0[base]
    cfg["B"] = typed("B") if "B" in merged else 0.0
    cfg["C"] = typed("C") if "C" in merged else 0.25
    if not cfg["C"] > 0:
        raise ConfigError(f"C: expected a positive real, got {cfg['C']}")
    n_axes = dim - 1
    if "grid" in merged:
        grid = _parse_grid(str(merged["grid"]))
        if len(grid) == 1:
            grid = grid * n_axes
        if len(grid) != n_axes:
            raise ConfigError(f"grid: expected {n_axes} axes (t and the base coordinates), got {len(grid)}")
    else:
        grid = (10,) * n_axes if dim == 4 else (6,) * n_axes
    cfg["grid"] = grid
    cfg["seed"] = typed("seed") if "seed" in merged else 0
    cfg["format"] = typed("format") if "format" in merged else "json"
    if cfg["format"] not in FORMATS:
        raise ConfigError(f"format: expected one of {FORMATS}, got {cfg['format']!r}")
    cfg["output"] = typed("output") if "output" in merged else "-"
    try:
        cfg["tolerances"] = {k: float(v) for k, v in tolerances.items()}
    except ValueError as exc:
        raise ConfigError(f"tolerance overrides must be reals: {tolerances}") from exc
    return RunConfig(**cfg)


# ---------------------------------------------------------------------------
# helpers


def threads() -> int:
    try:
        return max(1, int(os.environ.get("SHEARGEO_THREADS", "1")))
    except ValueError:
        return 1


def chunked(fn: Callable, pts: np.ndarray, n_threads: Optional[int] = None) -> np.ndarray:
    """Evaluate ``fn`` on contiguous chunks of points, concatenated in order."""
    n_threads = n_threads or threads()
    if n_threads == 1 or len(pts) < 2 * n_threads:
        return fn(pts)
    parts = np.array_split(pts, n_threads)
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return np.concatenate(list(pool.map(fn, parts)))


def _guard(report: Report, name: str, anchor: str, tol: float, thunk: Callable):
    """Run ``thunk``; geometry errors become failed records instead of crashes."""
    try:
        return thunk()
    except GeometryError as exc:
        report.add(CheckRecord.failure(name, anchor, tol, f"{type(exc).__name__}: {exc}"))
        return None


def _rngs(cfg: RunConfig, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(count)]


def _base_and_sasaki(cfg: RunConfig):
    base = make_base(cfg.base_kind, cfg.Lambda0)
    return base, build_sasaki(base)


# ---------------------------------------------------------------------------
# suites


def suite_base(cfg: RunConfig) -> Report:
    report = Report()
    _guard(report, "base.construct", "Kähler base construction", 0.0,
           lambda: report.extend(verify_kahler_einstein(make_base(cfg.base_kind, cfg.Lambda0),
                                                        tol_first=cfg.tol("base.first", 1e-8),
                                                        tol_curv=cfg.tol("base.einstein", 1e-6))))
    return report


def suite_sasaki(cfg: RunConfig) -> Report:
    report = Report()

    def run():
        base, S = _base_and_sasaki(cfg)
        report.extend(verify_sasaki(S, seed=cfg.seed))
        pts = S.chart.sample(20, _rngs(cfg, 1)[0])
        m = base.dim

        def lift(i):
            def field(q):
                v = np.zeros((len(q), m + 1))
                v[:, 1 + i] = 1.0
                v[:, 0] = -base.eta(q[:, 1:])[:, i]
                return v
            return field

        worst = np.zeros(len(pts))
        for i in range(m):
            for j in range(i + 1, m):
                N = nijenhuis_tensor(S.cr_structure, lift(i), lift(j), pts)
                worst = np.maximum(worst, np.abs(N).max(axis=1))
        report.add(CheckRecord("sasaki.nijenhuis", "N_J(X, Y) = 0 on horizontal lifts", worst,
                               cfg.tol("sasaki.nijenhuis", 1e-6), f"{len(pts)} points on {S.chart.name}", pts))

    _guard(report, "sasaki.construct", "Sasaki chart construction", 0.0, run)
    return report


def _grid(cfg: RunConfig, metric) -> np.ndarray:
    return einstein_grid(metric, cfg.grid)


def suite_einstein(cfg: RunConfig) -> Report:
    report = Report()
    params = _guard(report, "einstein.params", "parameter validation", 0.0, lambda: cfg.params)
    if params is None:
        return report
    ts = np.array(SAMPLE_TIMES)
    rb, rpq, rpp = reduced_einstein_residuals(params, ts)
    tgrid = f"t in {list(SAMPLE_TIMES)}"
    report.add(CheckRecord("reduced.base_equation", "base-direction reduced Einstein equation", np.abs(rb),
                           cfg.tol("reduced.base_equation", 1e-9), tgrid, ts))
    report.add(CheckRecord("reduced.pq_equation", "fiber-direction reduced Einstein equation", np.abs(rpq),
                           cfg.tol("reduced.pq_equation", 1e-9), tgrid, ts))
    report.add(CheckRecord("reduced.pp_equation", "(n-2)/(4 sigma^2)(-2 sigma sigma'' + sigma'^2 + 1/4) = 0",
                           np.abs(rpp), cfg.tol("reduced.pp_equation", 1e-9), tgrid, ts))
    exact = reduced_system(params)
    report.add(CheckRecord("reduced.exact_rational", "all three reduced equations vanish as rational functions",
                           np.array([0.0 if r.is_zero() else 1.0 for r in exact]), 0.0, "exact rational arithmetic"))
    disc = sigma_discriminant(params.C)
    report.add(CheckRecord("sigma.discriminant", "discriminant of sigma equals -1/4",
                           np.array([float(abs(disc + 0.25))]), 0.0, "exact rational arithmetic"))
    beta = beta_profile(params)
    report.quantities["beta_tilde(0)"] = float(beta.exact(0))
    report.add(CheckRecord("beta.at_zero", "beta_tilde(0) = 4C(Lambda0 - C Lambda)",
                           np.array([abs(float(beta.exact(0)) - 4 * params.C * (params.Lambda0 - params.C * params.Lambda))]),
                           1e-12, "t = 0"))
    tode = np.linspace(0.1, 10.0, 100)
    report.add(CheckRecord("beta.ode", "closed-form beta_tilde solves its first order equation",
                           np.abs(beta_ode_residual(params, tode, beta)), cfg.tol("beta.ode", 1e-10),
                           "100 points in [0.1, 10]", tode))
    res = []
    for end in (0.1, 10.0):
        grid, y = beta_rk4(params, end, beta=beta)
        res.append(np.abs(y - beta(grid)))
    res = np.concatenate(res)
    report.add(CheckRecord("beta.rk4", "RK4 from t = 1 matches the closed form", res, cfg.tol("beta.rk4", 1e-6),
                           "RK4 step 1e-3 on [0.1, 10]"))

    def curvature():
        _, S = _base_and_sasaki(cfg)
        metric = einstein_metric(S, params)
        pts = _grid(cfg, metric)
        grid = f"{'x'.join(map(str, cfg.grid))} grid on {metric.chart.name}, u = 0"
        tol = cfg.tol("einstein", 1e-5 if params.n == 4 else 1e-4)
        report.add(CheckRecord("einstein.coordinate", "Ric = Lambda g (coordinate curvature)",
                               chunked(lambda q: coordinate_einstein_residual(metric, params.Lambda, q), pts),
                               tol, grid, pts))
        report.add(CheckRecord("einstein.frame", "Ric = Lambda g (frame connection table)",
                               chunked(lambda q: frame_einstein_residual(metric, params.Lambda, q), pts),
                               tol, grid, pts))
        sample = metric.chart.sample(50, _rngs(cfg, 2)[1])
        rec = frame_crosscheck(metric, sample).checks[0]
        rec.tolerance = cfg.tol("frame.crosscheck", 1e-6)
        report.add(rec)
        report.extend(shearfree_checks(cfg, metric, pts))

    _guard(report, "einstein.curvature", "curvature-level Einstein check", 0.0, curvature)
    return report


def shearfree_checks(cfg: RunConfig, metric, pts) -> Report:
    report = Report()
    grid = f"{len(pts)} points on {metric.chart.name}"
    p_o = VectorField.coordinate(metric.dim, 0)
    dec = shearfree_decompose(metric, p_o, pts)
    report.add(CheckRecord("shearfree.residual", "L_p g = f g + p_flat ∨ eta", dec.residual,
                           cfg.tol("shearfree.residual", 1e-8), grid, pts))
    s, ds, _ = metric.profile.sigma(pts[:, 0])
    report.add(CheckRecord("shearfree.f", "f = sigma'/sigma", np.abs(dec.f - ds / s), 1e-10, grid, pts))
    lam, gres = geodesic_factor(metric, p_o, pts)
    report.add(CheckRecord("geodesic.parallel", "nabla_p p = lambda p with lambda = f + eta(p)/2", gres,
                           cfg.tol("geodesic.parallel", 1e-7), grid, pts))
    return report


def suite_structures(cfg: RunConfig) -> Report:
    """Killing, bracket, twisting and standardization checks on the configured base."""
    report = Report()

    def run():
        base, S = _base_and_sasaki(cfg)
        rng = _rngs(cfg, 3)
        const = build_lorentz_firm(S, FirmProfile.constant(1.3, 0.4))
        pts = const.chart.sample(100, rng[0])
        grid = f"{len(pts)} points on {const.chart.name}"
        kill = killing_residuals(const, pts)
        report.add(CheckRecord("killing.p", "constant profiles: L_p g = 0", kill["p"], 1e-10, grid, pts))
        report.add(CheckRecord("killing.q", "constant profiles: L_q g = 0", kill["q"], 1e-6, grid, pts))
        report.extend(_renamed(shearfree_checks(cfg, const, pts), "constant"))
        br = frame_bracket_residual(const, pts)
        report.add(CheckRecord("frame.brackets_horizontal", "[E_i, E_j] = -omega_ij q", br["horizontal"], 1e-6, grid, pts))
        report.add(CheckRecord("frame.brackets_other", "brackets with p and q vanish", br["vertical"], 1e-8, grid, pts))
        theta = const.theta_form()
        degrees = []
        for x in pts[:20]:
            F = const.frame(x[None])[0]
            degrees.append(twisting_degree(theta, F[:, :-1].T, x))
        report.add(CheckRecord("twisting.degree", "twisting degree equals 1", np.abs(np.array(degrees) - 1.0), 0.0,
                               f"20 points on {const.chart.name}", pts[:20]))
        # general profile reduces to the firm one
        gen = build_lorentz_general(S, GeneralProfile.from_firm(FirmProfile.constant(1.3, 0.4), base.dim))
        report.add(CheckRecord("general.reduces_to_firm", "general form with alpha = 1/sigma, gamma = 0 is firm",
                               np.abs(const(pts) - gen(pts)).reshape(len(pts), -1).max(axis=1), 1e-14, grid, pts))
        params = cfg.params
        metric = einstein_metric(S, params)
        bp = metric.chart.sample(1, rng[1])[0, 1:]
        lo, hi = metric.chart.inner_box()[0]
        pair = standardize_pair(metric, VectorField.coordinate(metric.dim, 0), (lo, hi), bp)
        s = sigma_profile(params.C, pair.t)[0]
        closed = sigma_profile(params.C, 1.0)[0] / s
        report.add(CheckRecord("standardize.sigma_closed_form", "sigma_tilde = sigma(1)/sigma(t)",
                               np.abs(pair.sigma_tilde - closed), 1e-8, f"RK4 fiber grid on [{lo}, {hi}]"))
        g2, p2 = rescaled_pair(metric, pair)
        fiber = np.column_stack([np.linspace(lo, hi, 25), np.repeat(bp[None], 25, axis=0)])
        dec = shearfree_decompose(g2, p2, fiber)
        lam, _ = geodesic_factor(g2, p2, fiber)
        fg = f"25 points on one fiber of {metric.chart.name}"
        report.add(CheckRecord("standardize.conformal_part", "rescaled pair has f = 0", np.abs(dec.f), 1e-6, fg, fiber))
        report.add(CheckRecord("standardize.geodesic", "rescaled generator is affinely geodesic", np.abs(lam),
                               1e-6, fg, fiber))

    _guard(report, "structures.construct", "structure checks", 0.0, run)
    return report


def _renamed(report: Report, tag: str) -> Report:
    for rec in report.checks:
        rec.name = f"{rec.name}.{tag}"
    return report


def suite_taubnut(cfg: RunConfig) -> Report:
    report = Report()

    def run():
        params = cfg.params
        _, S = _base_and_sasaki(cfg)
        metric = einstein_metric(S, params)
        tc = np.linspace(0.05, 0.4, 36)
        base_pts = S.base.chart.grid({"psi": 5, "phi": 5})
        tp, pulled, displayed, pts = taub_nut_transform(metric, params, tc, base_pts)
        report.quantities.update({"taubnut.ell": tp.ell, "taubnut.m": tp.m, "taubnut.B_check": tp.B_check,
                                  "taubnut.B_check_printed": tp.B_check_printed})
        report.add(CheckRecord("taubnut.components", "pulled-back metric equals the Taub-NUT form",
                               np.abs(pulled - displayed).reshape(len(pts), -1).max(axis=1),
                               cfg.tol("taubnut.components", 1e-10), f"{len(pts)} points, t_check in [0.05, 0.4]", pts))
        note = "" if tp.printed_discrepancy == 0 else "printed constant disagrees with the closed-form profile"
        report.add(CheckRecord("taubnut.b_check_printed", "printed and derived Taub-NUT mass constants agree",
                               np.array([tp.printed_discrepancy]), 1e-12, "exact rational arithmetic", note=note))

    _guard(report, "taubnut.construct", "Taub-NUT coordinate recovery", 0.0, run)
    return report


def suite_wave(cfg: RunConfig) -> Report:
    report = Report()

    def run():
        params = cfg.params
        _, S = _base_and_sasaki(cfg)
        metric = einstein_metric(S, params)
        w = build_wave(metric)
        pts = _grid(cfg, metric)
        report.extend(harmonicity_check(w, pts, tol=cfg.tol("wave.harmonic", 1e-6)))
        report.extend(flag_and_lie_check(w, metric.chart.sample(50, _rngs(cfg, 4)[3])))

    _guard(report, "wave.construct", "plane wave construction", 0.0, run)
    return report


def suite_cr(cfg: RunConfig) -> Report:
    report = Report()
    rng = _rngs(cfg, 5)[4]
    for dim in (2, 4, 6):
        pairs = [random_cr_pair(dim, rng) for _ in range(200)]
        h = np.stack([p[0] for p in pairs])
        w = np.stack([p[1] for p in pairs])
        data = cr_from_subriemannian(h, w)
        r = cr_residuals(h, w, data)
        grid = f"200 random pairs, dim {dim}"
        tol = cfg.tol("cr", 1e-10)
        report.add(CheckRecord(f"cr.j_squared.dim{dim}", "J^2 = -I", r["j_squared"], tol, grid))
        report.add(CheckRecord(f"cr.levi_b.dim{dim}", "levi B = h", r["levi_b"], tol, grid))
        report.add(CheckRecord(f"cr.levi_positive.dim{dim}", "Levi form positive definite",
                               np.maximum(0.0, -r["levi_min_eig"]), 0.0, grid))
        scale = np.zeros(len(h))
        for s in (0.1, 10.0):
            scale = np.maximum(scale, np.abs(cr_from_subriemannian(s * h, w).J - data.J).reshape(len(h), -1).max(axis=1))
        report.add(CheckRecord(f"cr.scale_invariance.dim{dim}", "J(s h, omega) = J(h, omega)", scale, tol, grid))
    return report


SUITES = {
    "verify-base": (suite_base,),
    "verify-sasaki": (suite_sasaki,),
    "einstein": (suite_einstein,),
    "taubnut": (suite_taubnut,),
    "wave": (suite_wave,),
    "cr-roundtrip": (suite_cr,),
}


def run_suite(cfg: RunConfig) -> Report:
    report = Report(config=cfg.echo())
    if cfg.command == "all":
        suites = [suite_base, suite_sasaki, suite_structures, suite_einstein, suite_cr]
        base = make_base(cfg.base_kind, cfg.Lambda0)
        if base.holo is not None:
            suites.append(suite_wave)
        if cfg.n == 4 and cfg.base_kind == "s2-spherical" and cfg.Lambda == 0:
            suites.append(suite_taubnut)
    else:
        suites = list(SUITES[cfg.command])
    for suite in suites:
        report.extend(suite(cfg))
    return report


def main(argv: Optional[list] = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"sheargeo: configuration error: {exc}", file=sys.stderr)
        return 2
    report = run_suite(cfg)
    data = emit(report, cfg.format)
    if cfg.output == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(cfg.output, "wb") as fh:
            fh.write(data)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
