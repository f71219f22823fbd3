import numpy as np
import pytest

from sheargeo.bundle import (
    FirmProfile,
    GeneralProfile,
    build_lorentz_firm,
    build_lorentz_general,
    build_sasaki,
    christoffel_frame,
    coordinate_frame_table,
    frame_bracket_residual,
    frame_crosscheck,
    frame_inputs,
    killing_residuals,
    verify_sasaki,
)
from sheargeo.errors import SignatureError
from sheargeo.kahler import make_base

from conftest import cached_metric

BASES = [("s2-spherical", 1.0), ("s2-stereographic", 1.0), ("torus", 0.0), ("hyperbolic-disk", -1.0),
         ("product", 1.0)]


def flat_torus_metric(sigma=1.0, beta=0.0):
    return build_lorentz_firm(build_sasaki(make_base("torus", 0.0)), FirmProfile.constant(sigma, beta))


def test_sphere_contact_form_and_reeb():
    S = build_sasaki(make_base("s2-spherical", 1.0))
    pts = np.array([[0.3, 1.2, 0.5]])
    assert S.theta(pts)[0] == pytest.approx([1.0, 0.0, np.cos(1.2)])
    assert S.reeb(pts)[0] == pytest.approx([1.0, 0.0, 0.0])


def test_torus_contact_form_is_flat_gauge():
    S = build_sasaki(make_base("torus", 0.0))
    pts = np.array([[0.1, 0.7, -0.4]])
    assert S.theta(pts)[0] == pytest.approx([1.0, 0.0, 0.7])


def test_product_sasaki_chart_dimension():
    S = build_sasaki(make_base("product", 1.0))
    assert S.dim == 5
    rep = verify_sasaki(S)
    assert rep["sasaki.reeb_unit"].passed
    assert rep["sasaki.j_recovery"].max_residual <= 1e-8


@pytest.mark.parametrize("kind,lam", BASES)
def test_sasaki_identities(kind, lam):
    rep = verify_sasaki(build_sasaki(make_base(kind, lam)))
    assert rep.passed, [(c.name, c.max_residual) for c in rep.checks if not c.passed]


def test_torus_reeb_killing_exact():
    rep = verify_sasaki(build_sasaki(make_base("torus", 0.0)))
    assert rep["sasaki.reeb_killing"].max_residual == 0.0


def test_flat_profile_metric_signature_and_null_generator():
    g = flat_torus_metric()
    pts = g.chart.sample(40, np.random.default_rng(0))
    G = g(pts)
    eig = np.linalg.eigvalsh(G)
    assert np.all((eig < 0).sum(axis=1) == 1)
    assert np.abs(G[:, 0, 0]).max() == 0.0


def test_taub_nut_metric_at_t_one(taub_nut):
    # sigma(1) = 1/2, beta(1) = 0, theta = du + cos(psi) d phi
    psi = 1.1
    G = taub_nut(np.array([[1.0, 0.0, psi, 0.3]]))[0]
    expected = np.zeros((4, 4))
    expected[2, 2] = 0.5
    expected[3, 3] = 0.5 * np.sin(psi) ** 2
    expected[0, 1] = expected[1, 0] = 0.5
    expected[0, 3] = expected[3, 0] = 0.5 * np.cos(psi)
    assert np.abs(G - expected).max() < 1e-14
    eig = np.linalg.eigvalsh(G)
    assert (eig < 0).sum() == 1


@pytest.mark.parametrize("name", ["taub_nut", "torus_instance", "product_instance"])
def test_dt_pairs_with_half_theta(name, request):
    g = request.getfixturevalue(name)
    pts = g.chart.sample(30, np.random.default_rng(1))
    G = g(pts)
    assert np.abs(G[:, 0, 0]).max() == 0.0
    assert np.abs(G[:, 0, :] - 0.5 * g.theta_values(pts)).max() < 1e-14


def test_general_profile_reduces_to_firm(taub_nut):
    S = taub_nut.sasaki
    gen = build_lorentz_general(S, GeneralProfile.from_firm(taub_nut.profile, 2))
    pts = taub_nut.chart.sample(50, np.random.default_rng(2))
    assert np.abs(gen(pts) - taub_nut(pts)).max() <= 1e-14


def test_general_profile_with_gamma_stays_lorentzian():
    S = build_sasaki(make_base("torus", 0.0))
    prof = GeneralProfile(lambda p: np.ones(len(p)), lambda p: np.ones(len(p)), lambda p: np.zeros(len(p)),
                          lambda p: np.tile([0.3, -0.2], (len(p), 1)))
    g = build_lorentz_general(S, prof)
    pts = g.chart.sample(40, np.random.default_rng(3))
    G = g(pts)
    assert np.all((np.linalg.eigvalsh(G) < 0).sum(axis=1) == 1)
    assert np.abs(G[:, 0, 0]).max() == 0.0


def test_vanishing_alpha_rejected():
    S = build_sasaki(make_base("torus", 0.0))
    prof = GeneralProfile(lambda p: np.ones(len(p)), lambda p: np.full(len(p), 1e-9), lambda p: np.zeros(len(p)),
                          lambda p: np.zeros((len(p), 2)))
    with pytest.raises(SignatureError):
        build_lorentz_general(S, prof)


def test_nonpositive_sigma_rejected():
    with pytest.raises(SignatureError):
        FirmProfile.constant(sigma=0.0)
    S = build_sasaki(make_base("torus", 0.0))
    neg = FirmProfile(lambda t: (1.0 - np.asarray(t), -np.ones_like(t), np.zeros_like(t)),
                      lambda t: (np.zeros_like(t),) * 3)
    with pytest.raises(SignatureError):
        build_lorentz_firm(S, neg)


def test_ansatz_table_known_entries(taub_nut):
    pts = np.array([[1.0, 0.0, 1.2, 0.4]])
    T = christoffel_frame(frame_inputs(taub_nut, pts), "ansatz")[0]
    p, q = 0, 3
    assert T[q, q, q] == pytest.approx(1.0, abs=1e-14)  # -p_o(beta) with beta'(1) = -1
    for i in (1, 2):
        assert T[i, p, p] == 0.0 and T[p, i, p] == 0.0 and T[i, p, q] == 0.0 and T[p, i, q] == 0.0


def test_ansatz_horizontal_p_entries(taub_nut):
    # Gamma_i^{p_o}_j pairs with g_ij(2 beta sigma') through the inverse frame metric
    pts = taub_nut.chart.sample(20, np.random.default_rng(4))
    T = christoffel_frame(frame_inputs(taub_nut, pts), "ansatz")
    C = coordinate_frame_table(taub_nut, pts)
    assert np.abs(T[:, 1:3, 1:3, 0] - C[:, 1:3, 1:3, 0]).max() < 1e-6


@pytest.mark.parametrize("name", ["taub_nut", "torus_instance"])
def test_general_table_matches_ansatz_for_firm_profiles(name, request):
    g = request.getfixturevalue(name)
    pts = g.chart.sample(20, np.random.default_rng(5))
    inp = frame_inputs(g, pts)
    a = christoffel_frame(inp, "ansatz")
    b = christoffel_frame(inp, "appendix-general")
    assert np.abs(a - b).max() < 1e-12


def test_unknown_table_variant_rejected(taub_nut):
    with pytest.raises(ValueError):
        christoffel_frame(frame_inputs(taub_nut, np.array([[1.0, 0.0, 1.0, 0.0]])), "appendix-special")


def test_crosscheck_torus_constant_profiles():
    g = flat_torus_metric(1.7, 0.4)
    pts = g.chart.sample(50, np.random.default_rng(6))
    assert frame_crosscheck(g, pts).checks[0].max_residual <= 1e-10


def test_crosscheck_flat_profile_near_exact():
    g = flat_torus_metric()
    pts = g.chart.sample(50, np.random.default_rng(7))
    assert frame_crosscheck(g, pts).checks[0].max_residual <= 1e-12


def test_crosscheck_taub_nut(taub_nut):
    pts = taub_nut.chart.sample(50, np.random.default_rng(8))
    assert frame_crosscheck(taub_nut, pts).checks[0].max_residual <= 1e-6


def test_crosscheck_general_with_gamma():
    S = build_sasaki(make_base("torus", 0.0))
    prof = GeneralProfile(lambda p: 1.0 + 0.1 * p[:, 0] ** 2, lambda p: 1.0 + 0.2 * p[:, 0],
                          lambda p: 0.3 * p[:, 0], lambda p: np.stack([0.2 * p[:, 0], 0.1 + 0 * p[:, 0]], axis=1))
    g = build_lorentz_general(S, prof)
    pts = g.chart.sample(50, np.random.default_rng(9))
    rep = frame_crosscheck(g, pts)
    assert rep.checks[0].name.endswith("appendix-general")
    assert rep.checks[0].max_residual <= 1e-6


@pytest.mark.parametrize("kind,lam", BASES)
def test_frame_brackets(kind, lam):
    g = cached_metric(kind, 6 if kind == "product" else 4, 0.0, lam, 0.0, 0.5)
    pts = g.chart.sample(30, np.random.default_rng(10))
    res = frame_bracket_residual(g, pts)
    assert res["horizontal"].max() <= 1e-6
    assert res["vertical"].max() <= 1e-8


def test_constant_profiles_are_killing():
    g = flat_torus_metric(2.0, -0.5)
    pts = g.chart.sample(40, np.random.default_rng(11))
    res = killing_residuals(g, pts)
    assert res["p"].max() <= 1e-10
    assert res["q"].max() <= 1e-6


def test_taub_nut_is_not_killing_along_t(taub_nut):
    pts = taub_nut.chart.sample(10, np.random.default_rng(12))
    assert killing_residuals(taub_nut, pts)["p"].max() > 1e-2
