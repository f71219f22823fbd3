"""Acceptance criteria, one test per criterion (instances are recorded separately).

Each test records PASS/FAIL lines that conftest prints in the terminal summary.
"""

import itertools
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from sheargeo.bundle import (
    FirmProfile,
    GeneralProfile,
    build_lorentz_firm,
    build_lorentz_general,
    build_sasaki,
    frame_crosscheck,
    killing_residuals,
    verify_sasaki,
)
from sheargeo.einstein import (
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
    taub_nut_transform,
)
from sheargeo.kahler import make_base
from sheargeo.ratpoly import Poly
from sheargeo.structures import cr_from_subriemannian, cr_residuals, geodesic_factor, random_cr_pair, shearfree_decompose
from sheargeo.tensor import VectorField, exterior_derivative
from sheargeo.wave import broken_wave, build_wave, flag_and_lie_check, harmonicity_check

from conftest import cached_metric

SAMPLE_TIMES = [0.1, 0.5, 1.0, 2.0, 10.0]
THEOREM_PARAMS = [
    (4, 0.0, 1.0, 0.0, 0.25),
    (4, -1.0, 0.0, 2.0, 1.0),
    (6, 0.0, 1.0, 0.0, 0.5),
    (6, 1.0, 2.0, 3.0, 1.0),
    (8, -2.0, 1.0, -1.5, 0.75),
]


def _pmax(a):
    return np.abs(a).reshape(len(a), -1).max(axis=1)


@pytest.mark.parametrize("kind,L0,L,C,B", [("s2-spherical", 1.0, 0.0, 0.25, 0.0), ("torus", 0.0, -1.0, 1.0, 2.0)])
def test_criterion_01_einstein_4d(acceptance, kind, L0, L, C, B):
    start = time.perf_counter()
    metric = einstein_metric(build_sasaki(make_base(kind, L0)), EinsteinParams(4, L, L0, B, C))
    pts = einstein_grid(metric, 10)
    coord = coordinate_einstein_residual(metric, L, pts)
    frame = frame_einstein_residual(metric, L, pts)
    elapsed = time.perf_counter() - start
    ok = len(pts) == 1000 and coord.max() <= 1e-5 and frame.max() <= 1e-5 and elapsed <= 30
    acceptance(1, f"{kind} L0={L0} L={L} C={C} B={B}", ok,
               f"coordinate {coord.max():.2e}, frame {frame.max():.2e}, {elapsed:.1f} s")
    assert ok


def test_criterion_02_einstein_6d(acceptance, product_instance):
    start = time.perf_counter()
    metric = product_instance
    pts = einstein_grid(metric, 6)
    coord = coordinate_einstein_residual(metric, 0.0, pts)
    frame = frame_einstein_residual(metric, 0.0, pts)
    elapsed = time.perf_counter() - start
    ok = len(pts) == 6 ** 5 and coord.max() <= 1e-4 and frame.max() <= 1e-4 and elapsed <= 120
    acceptance(2, "product(s2,s2) L0=1 L=0 C=1/2 B=0", ok,
               f"coordinate {coord.max():.2e}, frame {frame.max():.2e}, {elapsed:.1f} s")
    assert ok


def _general_torus_metric():
    S = build_sasaki(make_base("torus", 0.0))
    prof = GeneralProfile(
        lambda p: 1.0 + 0.2 * p[:, 0] ** 2 + 0.1 * np.sin(p[:, 2]),
        lambda p: 0.8 + 0.1 * np.cos(p[:, 0] + p[:, 3]),
        lambda p: 0.3 * p[:, 0] - 0.2 * p[:, 2] * p[:, 3],
        lambda p: np.stack([0.2 + 0.1 * p[:, 0], -0.1 * np.ones(len(p))], axis=1),
        "general test profile",
    )
    return build_lorentz_general(S, prof)


def _crosscheck_instances():
    yield "taub-nut s2 (ansatz)", cached_metric("s2-spherical", 4, 0.0, 1.0, 0.0, 0.25), "ansatz"
    yield "taub-nut s2 (appendix-general)", cached_metric("s2-spherical", 4, 0.0, 1.0, 0.0, 0.25), "appendix-general"
    yield "torus L=-1 C=1 B=2", cached_metric("torus", 4, -1.0, 0.0, 2.0, 1.0), "ansatz"
    yield "hyperbolic L0=-1 L=-1 C=1 B=2", cached_metric("hyperbolic-disk", 4, -1.0, -1.0, 2.0, 1.0), "ansatz"
    yield "product(s2,s2) C=1/2", cached_metric("product", 6, 0.0, 1.0, 0.0, 0.5), "ansatz"
    yield "general profile with gamma on torus", _general_torus_metric(), "appendix-general"


def test_criterion_03_frame_crosscheck(acceptance):
    rng = np.random.default_rng(3)
    results = []
    for label, metric, variant in _crosscheck_instances():
        pts = metric.chart.sample(50, rng)
        rec = frame_crosscheck(metric, pts, variant).checks[0]
        ok = rec.max_residual <= 1e-6
        acceptance(3, label, ok, f"max discrepancy {rec.max_residual:.2e} on 50 points")
        results.append(ok)
    assert all(results)


def test_criterion_04_reduced_equations(acceptance):
    results = []
    for n, L, L0, B, C in THEOREM_PARAMS:
        params = EinsteinParams(n, L, L0, B, C)
        r = np.abs(np.array(reduced_einstein_residuals(params, SAMPLE_TIMES)))
        exact = reduced_system(params)
        ok = r.max() <= 1e-9 and exact[2].is_zero() and all(e.is_zero() for e in exact)
        acceptance(4, f"n={n} L={L} L0={L0} B={B} C={C}", ok,
                   f"max float residual {r.max():.2e}; exact pp equation zero: {exact[2].is_zero()}")
        results.append(ok)
    disc = [sigma_discriminant(Fraction(c)) for c in (Fraction(1, 4), Fraction(1, 2), 1, 3, Fraction(7, 5))]
    ok = all(d == Fraction(-1, 4) for d in disc)
    acceptance(4, "sigma discriminant", ok, f"{sorted(set(map(str, disc)))}")
    assert all(results) and ok


def test_criterion_05_beta_closed_form(acceptance):
    results = []
    t = np.concatenate([np.linspace(0.1, 10, 200), -np.linspace(0.1, 10, 50)])
    for n, L, L0, B, C in THEOREM_PARAMS:
        params = EinsteinParams(n, L, L0, B, C)
        beta = beta_profile(params)
        ode = np.abs(beta_ode_residual(params, t, beta)).max()
        rk = 0.0
        for end in (0.1, 10.0):
            grid, y = beta_rk4(params, end, beta=beta)
            rk = max(rk, np.abs(y - beta(grid)).max())
        ok = ode <= 1e-10 and rk <= 1e-6
        acceptance(5, f"n={n} L={L} L0={L0} B={B} C={C}", ok, f"ODE residual {ode:.2e}, RK4 gap {rk:.2e}")
        results.append(ok)
    worst = 0.0
    for n, L, L0, C in itertools.product((4, 6, 8), (-1.0, 0.0, 2.0), (-1.0, 0.0, 1.0), (0.25, 0.5, 2.0)):
        for B in (-10.0, 0.0, 10.0):
            value = float(beta_profile(EinsteinParams(n, L, L0, B, C)).exact(0))
            worst = max(worst, abs(value - 4 * C * (L0 - C * L)))
    ok0 = worst <= 1e-12
    acceptance(5, "beta_tilde(0) = 4C(L0 - C L) on 3^4 grid x B in {-10, 0, 10}", ok0, f"max deviation {worst:.1e}")
    beta = beta_profile(EinsteinParams(4, 0.0, 1.0, 0.0, 0.25))
    tt = np.linspace(-10, 10, 401)
    tn = np.abs(beta(tt) + (tt ** 2 - 1) / (tt ** 2 + 1)).max()
    ok_tn = tn <= 1e-12
    acceptance(5, "n=4 L=0 L0=1 C=1/4 B=0 equals -(t^2-1)/(t^2+1)", ok_tn, f"max deviation {tn:.1e}")
    assert all(results) and ok0 and ok_tn


def test_criterion_06_taub_nut(acceptance, taub_nut):
    params = EinsteinParams(4, 0.0, 1.0, 0.0, 0.25)
    t_check = np.linspace(0.05, 0.4, 36)[1:]
    base_pts = taub_nut.base.chart.grid({"psi": 7, "phi": 7})
    tp, pulled, displayed, pts = taub_nut_transform(taub_nut, params, t_check, base_pts)
    diff = _pmax(pulled - displayed).max()
    ok = diff <= 1e-10 and tp.ell == 0.5 and tp.m == 0.0
    acceptance(6, "C=1/4 B=0 L0=1", ok, f"component gap {diff:.2e}; ell = {tp.ell}, m = {tp.m}")
    assert ok


def _wave_instances():
    yield "4D s2 Taub-NUT", cached_metric("s2-spherical", 4, 0.0, 1.0, 0.0, 0.25), 10
    yield "4D torus L=-1 C=1 B=2", cached_metric("torus", 4, -1.0, 0.0, 2.0, 1.0), 10
    yield "6D product C=1/2", cached_metric("product", 6, 0.0, 1.0, 0.0, 0.5), 6


def test_criterion_07_plane_wave(acceptance):
    rng = np.random.default_rng(7)
    results = []
    for label, metric, counts in _wave_instances():
        w = build_wave(metric)
        grid = einstein_grid(metric, counts)
        harm = harmonicity_check(w, grid)
        worst = max(harm["wave.closed"].max_residual, harm["wave.coclosed"].max_residual)
        sample = np.concatenate([grid[:: max(1, len(grid) // 100)], metric.chart.sample(50, rng)])
        flag = flag_and_lie_check(w, sample, p_vec=VectorField.coordinate(metric.dim, 0))
        align = flag["wave.kernel_alignment"].max_residual
        gap_ok = flag["wave.kernel_gap"].passed
        ok = worst <= 1e-6 and align <= 1e-10 and gap_ok
        acceptance(7, label, ok, f"max(|dF|, |d*F|) {worst:.2e}; kernel alignment {align:.1e}; "
                                 f"gap test on {len(sample)} points {'ok' if gap_ok else 'failed'}")
        results.append(ok)
    assert all(results)


def test_criterion_08_cr_roundtrip(acceptance):
    rng = np.random.default_rng(8)
    results = []
    for dim in (2, 4, 6):
        pairs = [random_cr_pair(dim, rng) for _ in range(200)]
        h = np.stack([p[0] for p in pairs])
        w = np.stack([p[1] for p in pairs])
        data = cr_from_subriemannian(h, w)
        r = cr_residuals(h, w, data)
        scale = max(np.abs(cr_from_subriemannian(s * h, w).J - data.J).max() for s in (0.1, 1.0, 10.0))
        ok = (r["j_squared"].max() <= 1e-10 and r["levi_b"].max() <= 1e-10 and r["levi_min_eig"].min() > 0
              and scale <= 1e-10)
        acceptance(8, f"dim {dim}, 200 pairs", ok,
                   f"J^2+I {r['j_squared'].max():.1e}, levi B - h {r['levi_b'].max():.1e}, "
                   f"min Levi eigenvalue {r['levi_min_eig'].min():.2e}, scale {scale:.1e}")
        results.append(ok)
    assert all(results)


def _shearfree_instances():
    for label, metric, _ in _crosscheck_instances():
        if "appendix" not in label:
            yield label, metric, False
    for kind, L0 in (("s2-spherical", 1.0), ("s2-stereographic", 1.0), ("torus", 0.0), ("hyperbolic-disk", -1.0),
                     ("product", 1.0)):
        S = build_sasaki(make_base(kind, L0))
        yield f"constant profile on {kind}", build_lorentz_firm(S, FirmProfile.constant(1.3, 0.4)), True
        yield f"general form of a constant profile on {kind}", build_lorentz_general(
            S, GeneralProfile.from_firm(FirmProfile.constant(1.3, 0.4), S.base.dim)), False


def test_criterion_09_shearfree_geodesic(acceptance):
    rng = np.random.default_rng(9)
    p_o = None
    results = []
    for label, metric, constant in _shearfree_instances():
        pts = metric.chart.sample(60, rng)
        p_o = VectorField.coordinate(metric.dim, 0)
        dec = shearfree_decompose(metric, p_o, pts)
        _, par = geodesic_factor(metric, p_o, pts)
        ok = dec.residual.max() <= 1e-8 and par.max() <= 1e-7
        detail = f"decomposition {dec.residual.max():.1e}, parallel {par.max():.1e}"
        if constant:
            kill = killing_residuals(metric, pts)["p"].max()
            ok = ok and kill <= 1e-10
            detail += f", Killing {kill:.1e}"
        acceptance(9, label, ok, detail)
        results.append(ok)
    assert all(results)


@pytest.mark.parametrize("kind,L0", [("s2-spherical", 1.0), ("s2-stereographic", 1.0), ("torus", 0.0),
                                     ("hyperbolic-disk", -1.0), ("product", 1.0)])
def test_criterion_10_sasaki(acceptance, kind, L0):
    rep = verify_sasaki(build_sasaki(make_base(kind, L0)), seed=10)
    limits = {"sasaki.theta_of_reeb": 1e-12, "sasaki.reeb_dtheta": 1e-12, "sasaki.reeb_unit": 1e-8,
              "sasaki.reeb_killing": 1e-8, "sasaki.dtheta_pullback": 1e-8}
    worst = {k: rep[k].max_residual for k in limits}
    ok = all(worst[k] <= v for k, v in limits.items())
    acceptance(10, kind, ok, ", ".join(f"{k.split('.')[1]} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_11_negative_controls(acceptance):
    results = []
    for C in (0.5, 1.0, 2.0):
        params = EinsteinParams(4, 0.0, 1.0, 0.0, C)
        wrong = Poly((C, 0, 1))  # t^2 + C
        _, _, r_pp = reduced_einstein_residuals(params, SAMPLE_TIMES, sigma=wrong)
        ok = np.abs(r_pp).max() > 1e-1
        acceptance(11, f"sigma = t^2 + C with C = {C}", ok, f"max |r_pp| {np.abs(r_pp).max():.2e}")
        results.append(ok)
    for label, metric, counts in _wave_instances():
        w = broken_wave(build_wave(metric))
        pts = einstein_grid(metric, counts)
        coclosed = _pmax(exterior_derivative(w.Fdual)(pts)).max()
        ok = coclosed > 1e-3
        acceptance(11, f"broken wave, {label}", ok, f"max |d*F'| {coclosed:.2e}")
        results.append(ok)
    S = build_sasaki(make_base("s2-perturbed", 1.0))
    metric = einstein_metric(S, EinsteinParams(4, 0.0, 1.0, 0.0, 0.25))
    pts = einstein_grid(metric, 10)
    res = coordinate_einstein_residual(metric, 0.0, pts)
    ok = res.max() > 1e-2
    acceptance(11, "non-Einstein base (perturbed sphere)", ok, f"max Einstein residual {res.max():.2e}")
    results.append(ok)
    assert all(results)


def test_criterion_12_end_to_end(acceptance):
    outputs = []
    times = []
    codes = []
    for _ in range(2):
        start = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "sheargeo", "all"], capture_output=True, timeout=300)
        times.append(time.perf_counter() - start)
        codes.append(proc.returncode)
        outputs.append(proc.stdout)
    same = outputs[0] == outputs[1] and len(outputs[0]) > 0
    ok = same and codes == [0, 0] and max(times) <= 60
    acceptance(12, "defaults", ok, f"exit codes {codes}, runtimes {times[0]:.1f} s / {times[1]:.1f} s, "
                                   f"identical output: {same}")
    assert ok
