import itertools

import numpy as np
import pytest

from sheargeo.errors import NotSPD, OutOfChart, SingularMetric
from sheargeo.tensor import (
    ANALYTIC,
    CURVATURE,
    FIRST,
    Chart,
    DifferentialForm,
    MetricField,
    Scheme,
    VectorField,
    christoffel_coordinate,
    curvature_coordinate,
    double_star_sign,
    exterior_derivative,
    fd_gradient,
    hodge_star,
    hodge_values,
    invert_metric,
    lie_derivative,
    metric_compatibility,
    spd_inverse_sqrt,
    spd_sqrt,
    wedge_values,
)


def flat(dim=3, signature=None):
    chart = Chart("flat", tuple(f"x{i}" for i in range(dim)), ((-1.0, 1.0),) * dim)
    eye = np.eye(dim) if signature is None else np.diag(signature)
    return MetricField(chart, lambda p: np.broadcast_to(eye, (len(p), dim, dim)).copy(),
                       (int(np.sum(np.diag(eye) < 0)), int(np.sum(np.diag(eye) > 0))))


def sphere():
    chart = Chart("s2", ("psi", "phi"), ((0.0, np.pi), (-np.pi, np.pi)), 0.1)

    def comp(p):
        g = np.zeros((len(p), 2, 2))
        g[:, 0, 0] = 1.0
        g[:, 1, 1] = np.sin(p[:, 0]) ** 2
        return g

    return MetricField(chart, comp, (0, 2))


def test_flat_christoffels_vanish():
    g = flat()
    pts = g.chart.sample(20, np.random.default_rng(0))
    assert np.abs(christoffel_coordinate(g, pts)).max() < 1e-12


def test_sphere_christoffels_at_equator():
    g = sphere()
    G = christoffel_coordinate(g, np.array([[np.pi / 2, 0.3]]))[0]
    # G[lambda, mu, nu]
    assert abs(G[0, 1, 1]) < 1e-9
    assert abs(G[1, 0, 1]) < 1e-9


def test_sphere_christoffels_generic_point():
    g = sphere()
    psi = 1.1
    G = christoffel_coordinate(g, np.array([[psi, 0.3]]))[0]
    assert G[0, 1, 1] == pytest.approx(-np.sin(psi) * np.cos(psi), abs=1e-9)
    assert G[1, 0, 1] == pytest.approx(np.cos(psi) / np.sin(psi), abs=1e-9)
    assert np.allclose(G, np.swapaxes(G, 1, 2))


def test_out_of_chart_point_rejected():
    g = sphere()
    with pytest.raises(OutOfChart):
        christoffel_coordinate(g, np.array([[0.01, 0.0]]))


def test_sphere_ricci_equals_metric():
    g = sphere()
    pts = g.chart.sample(50, np.random.default_rng(1))
    res = curvature_coordinate(g, pts, CURVATURE)
    assert np.abs(res.ricci - g(pts)).max() < 1e-6
    assert np.abs(res.scalar - 2.0).max() < 1e-6
    assert np.abs(res.riemann + np.swapaxes(res.riemann, -1, -2)).max() < 1e-12


def test_flat_curvature_vanishes():
    g = flat(4)
    res = curvature_coordinate(g, g.chart.sample(5, np.random.default_rng(2)))
    assert max(np.abs(res.riemann).max(), np.abs(res.ricci).max(), np.abs(res.scalar).max()) < 1e-12


def test_metric_compatibility_on_sphere():
    g = sphere()
    pts = g.chart.sample(30, np.random.default_rng(3))
    assert metric_compatibility(g, pts).max() < 1e-6


def test_inverse_of_taub_nut_matrix(taub_nut):
    G = taub_nut(np.array([[1.0, 0.0, np.pi / 2, 0.0]]))
    assert np.abs(invert_metric(G)[0] @ G[0] - np.eye(4)).max() < 1e-12


def test_fd_gradient_of_polynomial():
    f = lambda p: (p[:, 0] ** 3 * p[:, 1])[:, None]
    pts = np.array([[0.3, -0.7]])
    d = fd_gradient(f, pts)[0, :, 0]
    assert d == pytest.approx([3 * 0.09 * -0.7, 0.027], abs=1e-9)


@pytest.mark.parametrize("order", [2, 4, 6, 8])
def test_stencil_orders_differentiate_sine(order):
    f = lambda p: np.sin(p)
    d = fd_gradient(f, np.array([[0.4]]), h=1e-3, order=order)[0, 0, 0]
    assert d == pytest.approx(np.cos(0.4), abs=10.0 ** (-2 * (order // 2) - 1) + 1e-10)


def test_unknown_stencil_order_rejected():
    with pytest.raises(ValueError):
        Scheme("central", 1e-3, 3)


def test_constant_form_is_closed():
    w = DifferentialForm.from_array(np.array([1.0, 2.0, 3.0]))
    assert np.abs(exterior_derivative(w)(np.zeros((4, 3)))).max() == 0


def test_exterior_derivative_of_sphere_connection_form():
    # theta = du + cos(psi) d phi  ->  d theta = -sin(psi) d psi ^ d phi
    theta = DifferentialForm(1, 3, lambda p: np.stack([np.ones(len(p)), np.zeros(len(p)), np.cos(p[:, 1])], axis=1))
    pts = np.array([[0.0, 0.7, 0.2], [0.5, 2.0, -1.0]])
    d = exterior_derivative(theta)(pts)
    assert d[:, 1, 2] == pytest.approx(-np.sin(pts[:, 1]), abs=1e-9)
    assert d[:, 2, 1] == pytest.approx(np.sin(pts[:, 1]), abs=1e-9)


def test_d_squared_vanishes_on_polynomial_forms():
    rng = np.random.default_rng(4)
    coef = rng.standard_normal((3, 3, 3))

    def comp(p):
        out = np.einsum("nk,kab->nab", p ** 2, coef) + np.einsum("n,ab->nab", p[:, 0] * p[:, 1] * p[:, 2], coef[0])
        return out - np.swapaxes(out, 1, 2)

    w = DifferentialForm(2, 3, comp)
    dw = exterior_derivative(w)
    ddw = exterior_derivative(dw)(rng.uniform(-1, 1, (10, 3)))
    assert np.abs(ddw).max() < 1e-6


def test_hodge_planar_rotation():
    g = flat(2)
    dx = DifferentialForm.from_array(np.array([1.0, 0.0]))
    star = hodge_star(dx, g)(np.zeros((1, 2)))[0]
    assert star == pytest.approx([0.0, 1.0])


def test_hodge_of_one_is_volume():
    g = np.diag([2.0, 3.0, 5.0])[None]
    vol = hodge_values(np.ones(1), 0, g)[0]
    assert vol[0, 1, 2] == pytest.approx(np.sqrt(30.0))


def _two_form_basis(n):
    pairs = list(itertools.combinations(range(n), 2))
    basis = []
    for a, b in pairs:
        e = np.zeros((n, n))
        e[a, b], e[b, a] = 1.0, -1.0
        basis.append(e)
    return pairs, basis


def test_minkowski_hodge_matches_linear_system():
    # solve alpha ^ *beta = <alpha, beta> vol for *beta over the basis of 2-forms
    eta = np.diag([-1.0, 1.0, 1.0, 1.0])
    pairs, basis = _two_form_basis(4)

    def inner(a, b):
        return 0.5 * np.einsum("ab,cd,ac,bd->", a, b, eta, eta)

    def wedge_top(a, b):
        return wedge_values(a[None], 2, b[None], 2)[0, 0, 1, 2, 3]

    beta = basis[pairs.index((1, 2))]  # dx ^ dy
    A = np.array([[wedge_top(a, e) for e in basis] for a in basis])
    rhs = np.array([inner(a, beta) for a in basis])  # vol = dt^dx^dy^dz, sqrt|det| = 1
    coeff = np.linalg.solve(A, rhs)
    brute = sum(c * e for c, e in zip(coeff, basis))
    star = hodge_values(beta[None], 2, eta[None])[0]
    assert np.abs(star - brute).max() < 1e-12
    assert star[0, 3] == pytest.approx(1.0)  # *(dx^dy) = dt^dz


@pytest.mark.parametrize("signature,n", [([1, 1, 1, 1], 4), ([-1, 1, 1, 1], 4), ([-1, 1, 1, 1, 1, 1], 6),
                                         ([1, 1, 1], 3)])
def test_double_star_identity(signature, n):
    rng = np.random.default_rng(5)
    A = rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(A)
    g = (Q * np.array(signature, float) * rng.uniform(0.5, 2.0, n)) @ Q.T
    g = 0.5 * (g + g.T)
    det_sign = int(np.sign(np.linalg.det(g)))
    for k in range(n + 1):
        w = rng.standard_normal((1,) + (n,) * k)
        from sheargeo.tensor import antisymmetrize

        w = antisymmetrize(w, k) if k > 1 else w
        twice = hodge_values(hodge_values(w, k, g[None]), n - k, g[None])
        assert np.abs(twice - double_star_sign(k, n, det_sign) * w).max() < 1e-10


def test_singular_metric_rejected():
    with pytest.raises(SingularMetric):
        hodge_values(np.ones((1, 2)), 1, np.zeros((1, 2, 2)))


def test_lie_derivative_along_symmetry():
    g = sphere()
    pts = g.chart.sample(10, np.random.default_rng(6))
    L = lie_derivative(VectorField.coordinate(2, 1), g, pts)
    assert np.abs(L).max() < 1e-10


def test_lie_derivative_of_taub_nut_along_t(taub_nut):
    # L_{d/dt} g = sigma' pi^*(g_o) + beta' theta (x) theta at t = 1
    pts = np.array([[1.0, 0.2, 1.3, 0.4]])
    L = lie_derivative(VectorField.coordinate(4, 0), taub_nut, pts, FIRST)[0]
    sig = taub_nut.profile.sigma(np.array([1.0]))[1][0]
    beta = taub_nut.profile.beta(np.array([1.0]))[1][0]
    th = taub_nut.theta_values(pts)[0]
    go = np.zeros((4, 4))
    go[2:, 2:] = taub_nut.base.g_o(pts[:, 2:])[0]
    assert np.abs(L - (sig * go + beta * np.outer(th, th))).max() < 1e-8


def test_analytic_and_finite_difference_christoffels_agree(taub_nut):
    pts = taub_nut.chart.sample(100, np.random.default_rng(7))
    a = christoffel_coordinate(taub_nut, pts, ANALYTIC)
    f = christoffel_coordinate(taub_nut, pts, FIRST)
    assert np.abs(a - f).max() < 1e-7


def test_spd_inverse_sqrt_examples():
    assert np.allclose(spd_inverse_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(spd_inverse_sqrt(np.diag([4.0, 0.25])), np.diag([0.5, 2.0]))


def test_spd_inverse_sqrt_random_conditioned():
    rng = np.random.default_rng(8)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    S = (Q * np.logspace(0, 6, 5)) @ Q.T
    S = 0.5 * (S + S.T)
    R = spd_inverse_sqrt(S)
    assert np.abs(R @ R @ S - np.eye(5)).max() < 1e-10
    assert np.allclose(R, R.T) and np.all(np.linalg.eigvalsh(R) > 0)
    assert np.abs(spd_sqrt(S) @ R - np.eye(5)).max() < 1e-8


def test_spd_inverse_sqrt_rejects_indefinite():
    with pytest.raises(NotSPD):
        spd_inverse_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(NotSPD):
        spd_inverse_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
