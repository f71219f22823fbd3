"""Catalog of quantisable Kähler(-Einstein) bases with explicit charts.

Each base carries its metric g_o, Kähler form omega, complex structure J with
omega(X, Y) = g_o(X, J Y), and a connection primitive eta with d eta = omega in
one fixed gauge.  omega and J are written out independently of eta and g_o so
that the compatibility identities are genuine checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BadCurvatureSign, NoHolomorphicChart
from .report import CheckRecord, Report
from .tensor import (
    ANALYTIC,
    FIRST,
    Chart,
    DifferentialForm,
    MetricField,
    as_points,
    christoffel_coordinate,
    curvature_coordinate,
    exterior_derivative,
    fd_gradient,
)

KINDS = ("s2-spherical", "s2-stereographic", "torus", "hyperbolic-disk", "product", "s2-perturbed")


@dataclass(frozen=True)
class _Surface:
    """Pointwise formulas of one real 2-dimensional factor."""

    chart: Chart
    metric: Callable          # (N,2) -> (N,2,2)
    metric_partials: Callable  # -> (N,2,2,2) [n,k,i,j]
    eta: Callable             # -> (N,2)
    eta_partials: Callable    # -> (N,2,2) [n,k,i] = d_k eta_i
    omega: Callable           # -> (N,2,2)
    jmat: Callable            # -> (N,2,2), J[a,b] = (J e_b)^a
    holo: Optional[Callable] = None  # -> (z (N,), dz (N,2)) complex
    curvature: float = 0.0
    metric_second: Optional[Callable] = None  # -> (N,2,2,2,2) [n,k,l,i,j]


def _area(c):
    n = c.shape[0]
    w = np.zeros((n, 2, 2))
    w[:, 0, 1] = c
    w[:, 1, 0] = -c
    return w


def _diag(a, b):
    g = np.zeros((a.shape[0], 2, 2))
    g[:, 0, 0] = a
    g[:, 1, 1] = b
    return g


def _rotation(n):
    J = np.zeros((n, 2, 2))
    J[:, 0, 1] = 1.0
    J[:, 1, 0] = -1.0
    return J


def _spherical(lam: float, margin: float, eps: float = 0.0) -> _Surface:
    """Round sphere in (psi, phi); ``eps`` bends the profile sin(psi) -> sin(psi) + eps sin(2 psi)."""
    chart = Chart("s2-spherical" if eps == 0 else "s2-perturbed", ("psi", "phi"), ((0.0, np.pi), (-np.pi, np.pi)), margin)
    s = 1.0 / lam

    def prof(psi):
        return np.sin(psi) + eps * np.sin(2 * psi), np.cos(psi) + 2 * eps * np.cos(2 * psi)

    def metric_second(x):
        f, df = prof(x[:, 0])
        ddf = -np.sin(x[:, 0]) - 4 * eps * np.sin(2 * x[:, 0])
        d = np.zeros((x.shape[0], 2, 2, 2, 2))
        d[:, 0, 0, 1, 1] = s * 2 * (df * df + f * ddf)
        return d

    def metric(x):
        f, _ = prof(x[:, 0])
        return s * _diag(np.ones_like(f), f * f)

    def metric_partials(x):
        f, df = prof(x[:, 0])
        d = np.zeros((x.shape[0], 2, 2, 2))
        d[:, 0, 1, 1] = s * 2 * f * df
        return d

    def eta(x):
        psi = x[:, 0]
        e = np.zeros((x.shape[0], 2))
        e[:, 1] = s * (np.cos(psi) + 0.5 * eps * np.cos(2 * psi))
        return e

    def eta_partials(x):
        f, _ = prof(x[:, 0])
        d = np.zeros((x.shape[0], 2, 2))
        d[:, 0, 1] = -s * f
        return d

    def omega(x):
        f, _ = prof(x[:, 0])
        return _area(-s * f)

    def jmat(x):
        f, _ = prof(x[:, 0])
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 1] = -f
        J[:, 1, 0] = 1.0 / f
        return J

    def holo(x):
        # w = log tan(psi/2) + i phi, the log of the stereographic coordinate; single valued on the
        # chart (phi stays off the cut) and |dw| <= 1/sin(psi), far milder than |dz| near the pole
        psi, phi = x[:, 0], x[:, 1]
        dw = np.stack([1.0 / np.sin(psi), 1j * np.ones_like(phi)], axis=1).astype(complex)
        return np.log(np.tan(psi / 2)) + 1j * phi, dw

    return _Surface(chart, metric, metric_partials, eta, eta_partials, omega, jmat,
                    holo if eps == 0 else None, lam, metric_second)


def _conformal_disk(lam: float, sign: int, half_width: float, margin: float, name: str) -> _Surface:
    """4/(|lam| (1 + sign r^2)^2) |dz|^2 with eta = (2/|lam|)(x dy - y dx)/(1 + sign r^2)."""
    a = abs(lam)
    chart = Chart(name, ("x", "y"), ((-half_width, half_width),) * 2, margin)

    def rho(x):
        return 1.0 + sign * (x[:, 0] ** 2 + x[:, 1] ** 2)

    def metric(x):
        c = 4.0 / (a * rho(x) ** 2)
        return _diag(c, c)

    def metric_partials(x):
        r = rho(x)
        d = np.zeros((x.shape[0], 2, 2, 2))
        for k in range(2):
            c = -16.0 * sign * x[:, k] / (a * r ** 3)
            d[:, k, 0, 0] = c
            d[:, k, 1, 1] = c
        return d

    def metric_second(x):
        r = rho(x)
        d = np.zeros((x.shape[0], 2, 2, 2, 2))
        for k in range(2):
            for l in range(2):
                c = 96.0 * x[:, k] * x[:, l] / (a * r ** 4)
                if k == l:
                    c = c - 16.0 * sign / (a * r ** 3)
                d[:, k, l, 0, 0] = c
                d[:, k, l, 1, 1] = c
        return d

    def eta(x):
        r = rho(x)
        return (2.0 / a) * np.stack([-x[:, 1], x[:, 0]], axis=1) / r[:, None]

    def eta_partials(x):
        r = rho(x)
        X, Y = x[:, 0], x[:, 1]
        d = np.zeros((x.shape[0], 2, 2))
        c = 2.0 / a
        d[:, 0, 0] = c * 2 * sign * X * Y / r ** 2
        d[:, 1, 0] = c * (-1.0 / r + 2 * sign * Y * Y / r ** 2)
        d[:, 0, 1] = c * (1.0 / r - 2 * sign * X * X / r ** 2)
        d[:, 1, 1] = -c * 2 * sign * X * Y / r ** 2
        return d

    def omega(x):
        return _area(4.0 / (a * rho(x) ** 2))

    def holo(x):
        # omega = +area forces J d/dx = -d/dy, so x - iy is the holomorphic coordinate
        n = x.shape[0]
        return x[:, 0] - 1j * x[:, 1], np.broadcast_to(np.array([1.0, -1j]), (n, 2)).copy()

    return _Surface(chart, metric, metric_partials, eta, eta_partials, omega,
                    lambda x: _rotation(x.shape[0]), holo, lam, metric_second)


def _torus(margin: float) -> _Surface:
    chart = Chart("torus", ("x", "y"), ((-2.0, 2.0), (-2.0, 2.0)), margin)

    def eta(x):
        return np.stack([np.zeros(x.shape[0]), x[:, 0]], axis=1)

    def eta_partials(x):
        d = np.zeros((x.shape[0], 2, 2))
        d[:, 0, 1] = 1.0
        return d

    def holo(x):
        # omega = +area forces J d/dx = -d/dy, so x - iy is the holomorphic coordinate
        n = x.shape[0]
        return x[:, 0] - 1j * x[:, 1], np.broadcast_to(np.array([1.0, -1j]), (n, 2)).copy()

    return _Surface(
        chart,
        lambda x: np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)).copy(),
        lambda x: np.zeros((x.shape[0], 2, 2, 2)),
        eta,
        eta_partials,
        lambda x: _area(np.ones(x.shape[0])),
        lambda x: _rotation(x.shape[0]),
        holo,
        0.0,
        lambda x: np.zeros((x.shape[0], 2, 2, 2, 2)),
    )


def _surface(kind: str, lambda0: float, eps: float = 0.0) -> _Surface:
    if kind in ("s2-spherical", "s2-stereographic", "s2-perturbed") and not lambda0 > 0:
        raise BadCurvatureSign(f"{kind} needs lambda0 > 0, got {lambda0}")
    if kind == "torus" and lambda0 != 0:
        raise BadCurvatureSign(f"torus needs lambda0 = 0, got {lambda0}")
    if kind == "hyperbolic-disk" and not lambda0 < 0:
        raise BadCurvatureSign(f"hyperbolic-disk needs lambda0 < 0, got {lambda0}")
    if kind == "s2-spherical":
        return _spherical(lambda0, 0.1)
    if kind == "s2-perturbed":
        if not abs(eps) < 0.5:
            raise ValueError("perturbation must satisfy |eps| < 1/2 to keep the metric positive")
        return _spherical(lambda0, 0.1, eps)
    if kind == "s2-stereographic":
        # |z| <= 10 everywhere on the box
        return _conformal_disk(lambda0, +1, 7.0, 0.05, "s2-stereographic")
    if kind == "torus":
        return _torus(0.05)
    if kind == "hyperbolic-disk":
        return _conformal_disk(lambda0, -1, 0.6, 0.05, "hyperbolic-disk")
    raise ValueError(f"unknown surface kind {kind!r}")


@dataclass(frozen=True)
class KahlerBase:
    kind: str
    lambda0: float
    chart: Chart
    g_o: MetricField
    omega: DifferentialForm
    eta: DifferentialForm
    jmat: Callable
    holo: Optional[Callable] = None
    factors: tuple = ()
    quantisable: str = ""

    @property
    def dim(self) -> int:
        return self.chart.dim

    def holomorphic(self, pts):
        """Complex coordinates ``(z (N, c), dz (N, c, dim))``; raises if absent."""
        if self.holo is None:
            raise NoHolomorphicChart(f"base {self.kind!r} has no holomorphic coordinates")
        return self.holo(as_points(pts, self.dim))


def _block(parts, sizes, fn, x, extra_axes):
    """Assemble block-diagonal tensors from per-factor evaluations."""
    n = x.shape[0]
    dim = sum(sizes)
    offs = np.cumsum([0] + list(sizes))
    vals = [fn(p)(x[:, offs[i]:offs[i + 1]]) for i, p in enumerate(parts)]
    out = np.zeros((n,) + (dim,) * extra_axes)
    for i, v in enumerate(vals):
        sl = slice(offs[i], offs[i + 1])
        out[(slice(None),) + (sl,) * extra_axes] = v
    return out


def make_base(kind: str, lambda0: float, factors: tuple = ("s2-spherical", "s2-spherical"), eps: float = 0.1) -> KahlerBase:
    """Build a base from the catalog.

    ``product`` multiplies two surfaces (both with the same ``lambda0``);
    ``s2-perturbed`` is a deliberately non-Einstein sphere used as a negative
    control, with profile sin(psi) + eps sin(2 psi).
    """
    lambda0 = float(lambda0)
    if kind == "product":
        parts = [_surface(k, lambda0) for k in factors]
        names = []
        box = []
        for i, p in enumerate(parts):
            names += [f"{c}{i + 1}" for c in p.chart.coord_names]
            box += list(p.chart.box)
        margin = max(p.chart.margin for p in parts)
        chart = Chart("product(" + ",".join(factors) + ")", tuple(names), tuple(box), margin)
        label = "product(" + ",".join(factors) + ")"
    else:
        if kind not in KINDS:
            raise ValueError(f"unknown base kind {kind!r}")
        parts = [_surface(kind, lambda0, eps)]
        chart = parts[0].chart
        label = kind
    sizes = [2] * len(parts)
    dim = 2 * len(parts)

    def metric(x):
        return _block(parts, sizes, lambda p: p.metric, x, 2)

    def metric_partials(x):
        n = x.shape[0]
        out = np.zeros((n, dim, dim, dim))
        for i, p in enumerate(parts):
            sl = slice(2 * i, 2 * i + 2)
            out[:, sl, sl, sl] = p.metric_partials(x[:, sl])
        return out

    def metric_second(x):
        n = x.shape[0]
        out = np.zeros((n, dim, dim, dim, dim))
        for i, p in enumerate(parts):
            sl = slice(2 * i, 2 * i + 2)
            out[:, sl, sl, sl, sl] = p.metric_second(x[:, sl])
        return out

    def eta(x):
        return np.concatenate([p.eta(x[:, 2 * i:2 * i + 2]) for i, p in enumerate(parts)], axis=1)

    def eta_partials(x):
        n = x.shape[0]
        out = np.zeros((n, dim, dim))
        for i, p in enumerate(parts):
            sl = slice(2 * i, 2 * i + 2)
            out[:, sl, sl] = p.eta_partials(x[:, sl])
        return out

    def omega(x):
        return _block(parts, sizes, lambda p: p.omega, x, 2)

    def jmat(x):
        return _block(parts, sizes, lambda p: p.jmat, x, 2)

    holo = None
    if all(p.holo is not None for p in parts):
        def holo(x):
            n = x.shape[0]
            zs = np.zeros((n, len(parts)), dtype=complex)
            dz = np.zeros((n, len(parts), dim), dtype=complex)
            for i, p in enumerate(parts):
                z, d = p.holo(x[:, 2 * i:2 * i + 2])
                zs[:, i] = z
                dz[:, i, 2 * i:2 * i + 2] = d
            return zs, dz

    g_o = MetricField(chart, metric, (0, dim), 1, metric_partials, metric_second)
    eta_form = DifferentialForm(1, dim, eta, eta_partials)
    omega_form = DifferentialForm(2, dim, omega)
    quant = "integral Kähler class assumed, not checked on a single chart"
    return KahlerBase(label, lambda0, chart, g_o, omega_form, eta_form, jmat, holo,
                      tuple(factors) if kind == "product" else (), quant)


def base_eta(base: KahlerBase, pts) -> np.ndarray:
    """The connection primitive eta at chart points."""
    return base.eta(base.chart.require(pts))


def base_grid(base: KahlerBase, n: int = 200, seed: int = 0) -> np.ndarray:
    return base.chart.sample(n, np.random.default_rng(seed))


def verify_kahler_einstein(base: KahlerBase, pts=None, tol_first: float = 1e-8, tol_curv: float = 1e-6,
                           scheme=None) -> Report:
    """Residuals of the Kähler-Einstein identities on ``pts`` (200 random points by default).

    Curvature is exact when the base supplies second partials, unless a
    finite-difference ``scheme`` is requested.
    """
    pts = base_grid(base) if pts is None else base.chart.require(pts)
    grid = f"{len(pts)} points on {base.chart.name}"
    report = Report()
    g = base.g_o(pts)
    n = len(pts)
    eye = np.eye(base.dim)

    def rec(name, anchor, vals, tol):
        report.add(CheckRecord(f"base.{name}", anchor, vals, tol, grid, pts))

    def pmax(a):
        return np.abs(a).reshape(n, -1).max(axis=1)

    J = base.jmat(pts)
    w = base.omega(pts)
    rec("j_squared", "J^2 = -1", pmax(J @ J + eye), 1e-12)
    rec("omega_compat", "omega(X, Y) = g_o(X, J Y)", pmax(w - g @ J), 1e-12)
    if scheme is None and base.g_o.second_partials is not None:
        scheme = ANALYTIC
    curv = curvature_coordinate(base.g_o, pts, scheme)
    rec("einstein", "Ric(g_o) = Lambda0 g_o", pmax(curv.ricci - base.lambda0 * g), tol_curv)
    G = christoffel_coordinate(base.g_o, pts)
    dJ = fd_gradient(base.jmat, pts, FIRST.h, FIRST.order)  # [n, k, a, b]
    nabJ = dJ + np.einsum("nakl,nlb->nkab", G, J) - np.einsum("nlkb,nal->nkab", G, J)
    rec("parallel_j", "nabla J = 0 for the Levi-Civita connection of g_o", pmax(nabJ), tol_first)
    rec("omega_closed", "d omega = 0", pmax(exterior_derivative(base.omega)(pts)), 1e-6)
    rec("eta_primitive", "d eta = omega", pmax(exterior_derivative(base.eta)(pts) - w), tol_first)
    return report
