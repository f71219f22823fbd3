"""The Einstein family of Taub-NUT type and its verification.

sigma(t) = t^2/(16C) + C and beta_tilde is the rational function

    t/(t^2+16C^2)^k * (B - int_1^t (16C^2+s^2)^k (16C L0 - L (16C^2+s^2)) / (4 s^2) ds),

with k = n/2 - 1.  The antiderivative is taken exactly: the integrand is a
polynomial in s plus c0/s^2, and the -c0/s term cancels against the prefactor t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .bundle import (
    BundleMetric,
    FirmProfile,
    SasakiChart,
    build_lorentz_firm,
    christoffel_frame,
    frame_brackets,
    frame_inputs,
    frame_metric,
)
from .errors import ConfigError, HorizonCrossing
from .ratpoly import Poly, RationalFunction, to_fraction
from .report import CheckRecord, Report
from .structures import rk4
from .tensor import CURVATURE, MetricField, Chart, Scheme, curvature_coordinate, fd_gradient


@dataclass(frozen=True)
class EinsteinParams:
    n: int = 4
    Lambda: float = 0.0
    Lambda0: float = 1.0
    B: float = 0.0
    C: float = 0.25

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ConfigError(f"n must be an even integer >= 4, got {self.n}")
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")

    @property
    def k(self) -> int:
        return self.n // 2 - 1

    def exact(self):
        return tuple(to_fraction(v) for v in (self.Lambda, self.Lambda0, self.B, self.C))


# ---------------------------------------------------------------------------
# profiles


def sigma_poly(C) -> Poly:
    C = to_fraction(C)
    return Poly((C, 0, 1 / (16 * C)))


def sigma_profile(C, t):
    """(sigma, sigma', sigma'') at ``t``."""
    t = np.asarray(t, dtype=float)
    C = float(C)
    return t * t / (16 * C) + C, t / (8 * C), np.full_like(t, 1 / (8 * C))


def sigma_discriminant(C) -> Fraction:
    p = sigma_poly(C)
    c0, c1, c2 = (p.coeffs + (Fraction(0),) * 3)[:3]
    return c1 * c1 - 4 * c2 * c0


@dataclass(frozen=True)
class RationalProfile:
    """A function of t stored as an exact rational function."""

    func: RationalFunction
    note: str = ""

    @property
    def numerator(self) -> Poly:
        return self.func.num

    @property
    def denominator(self) -> Poly:
        return self.func.den

    def derivative(self, order: int = 1) -> "RationalProfile":
        f = self.func
        for _ in range(order):
            f = f.deriv()
        return RationalProfile(f, self.note)

    def exact(self, t) -> Fraction:
        return self.func.exact(t)

    def __call__(self, t):
        return self.func(t)

    def triple(self, t):
        """(value, d/dt, d2/dt2) in floating point."""
        d1 = self.func.deriv()
        return self.func(t), d1(t), d1.deriv()(t)


def _integrand_poly(params: EinsteinParams) -> Poly:
    """Numerator N(s) of the integrand N(s)/s^2."""
    L, L0, _, C = params.exact()
    q = Poly((16 * C * C, 0, 1))  # 16C^2 + s^2
    return (q ** params.k) * (Poly.const(16 * C * L0) - q * L) * Fraction(1, 4)


def beta_profile(params: EinsteinParams) -> RationalProfile:
    L, L0, B, C = params.exact()
    N = _integrand_poly(params)
    c0 = N.coeffs[0] if N.coeffs else Fraction(0)
    # (N(s) - c0)/s^2 is a polynomial; its antiderivative Q
    tail = Poly(N.coeffs[2:]) if len(N.coeffs) > 2 else Poly()
    Q = Poly((0,) + tuple(a / (i + 1) for i, a in enumerate(tail.coeffs)))
    t = Poly.monomial(1)
    # int_1^t N/s^2 = (-c0/t + Q(t)) - (-c0 + Q(1)); multiplied by t the pole cancels
    num = Poly.const(c0) + t * (B + Q.exact(1) - c0) - t * Q
    den = Poly((16 * C * C, 0, 1)) ** params.k
    return RationalProfile(RationalFunction(num, den), f"beta_tilde for {params}")


def beta_quadrature(params: EinsteinParams, t: float) -> float:
    """beta_tilde(t) from adaptive quadrature of the defining integral (t > 0)."""
    k, C, L, L0 = params.k, params.C, params.Lambda, params.Lambda0

    def integrand(s):
        q = 16 * C * C + s * s
        return q ** k * (16 * C * L0 - L * q) / (4 * s * s)

    val, _ = quad(integrand, 1.0, t, epsabs=1e-12, epsrel=1e-12, limit=200)
    return t / (t * t + 16 * C * C) ** k * (params.B - val)


def firm_profile(params: EinsteinParams) -> FirmProfile:
    beta = beta_profile(params)
    d1 = beta.func.deriv()
    d2 = d1.deriv()
    return FirmProfile(
        lambda t: sigma_profile(params.C, t),
        lambda t: (beta.func(t), d1(t), d2(t)),
        f"taub-nut-type {params}",
    )


# ---------------------------------------------------------------------------
# ODE residuals


def beta_ode_residual(params: EinsteinParams, t, beta: Optional[RationalProfile] = None):
    """Residual of the first order linear equation for beta_tilde (t != 0)."""
    beta = beta or beta_profile(params)
    t = np.asarray(t, dtype=float)
    C, n = params.C, params.n
    s = t * t / (16 * C) + C
    b, db, _ = beta.triple(t)
    coef = (n - 4) / s * (t / (8 * C)) ** 2 - 1 / (2 * s) + 1 / (4 * C)
    return t / (4 * C) * db + coef * b - s * params.Lambda + params.Lambda0


def beta_rk4(params: EinsteinParams, t_end: float, step: float = 1e-3, beta: Optional[RationalProfile] = None):
    """Integrate the beta_tilde equation from t = 1 with the closed-form initial value."""
    beta = beta or beta_profile(params)
    C, n = params.C, params.n

    def rhs(t, y):
        s = t * t / (16 * C) + C
        coef = (n - 4) / s * (t / (8 * C)) ** 2 - 1 / (2 * s) + 1 / (4 * C)
        return -(4 * C / t) * (coef * y - s * params.Lambda + params.Lambda0)

    steps = max(1, int(round(abs(t_end - 1.0) / step)))
    grid = np.linspace(1.0, t_end, steps + 1)
    y = rk4(rhs, np.array(float(beta(1.0))), grid)
    return grid, y


def _reduced_from(n, L, L0, s, ds, d2s, b, db, d2b, quarter=0.25):
    r_base = 2 * db * ds + ((n - 4) / (2 * s) * ds * ds - 1 / (4 * s) + d2s) * 2 * b - s * L + L0
    r_pq = 2 * d2b + (n - 2) / s * db * ds + (n - 2) / (4 * s * s) * b - L
    r_pp = (n - 2) / (4 * s * s) * (-2 * s * d2s + ds * ds + quarter)
    return r_base, r_pq, r_pp


def reduced_system(params: EinsteinParams, sigma: Optional[Poly] = None, beta: Optional[RationalProfile] = None):
    """The three reduced equations as exact rational functions of t."""
    L, L0, _, C = params.exact()
    s = RationalFunction(sigma if sigma is not None else sigma_poly(C))
    b = (beta or beta_profile(params)).func
    return _reduced_from(params.n, L, L0, s, s.deriv(), s.deriv().deriv(), b, b.deriv(), b.deriv().deriv(),
                         Fraction(1, 4))


def reduced_einstein_residuals(params: EinsteinParams, t, sigma: Optional[Poly] = None,
                               beta: Optional[RationalProfile] = None):
    """(r_base, r_pq, r_pp) evaluated in floating point from the profile values."""
    t = np.asarray(t, dtype=float)
    sp = sigma if sigma is not None else sigma_poly(params.C)
    s, ds, d2s = sp(t), sp.deriv()(t), sp.deriv().deriv()(t)
    b, db, d2b = (beta or beta_profile(params)).triple(t)
    return _reduced_from(params.n, params.Lambda, params.Lambda0, s, ds, d2s, b, db, d2b)


def quadratic_pq_residual(params: EinsteinParams, t, beta: Optional[RationalProfile] = None):
    """The beta_tilde-weighted form 2 b (lhs of the pq equation) - 2 L b; vanishes with r_pq."""
    beta = beta or beta_profile(params)
    _, r_pq, _ = reduced_einstein_residuals(params, t, beta=beta)
    return 2 * beta(t) * r_pq


# ---------------------------------------------------------------------------
# curvature-level verification


def einstein_metric(S: SasakiChart, params: EinsteinParams, t_box=(0.0, 3.0)) -> BundleMetric:
    if abs(S.base.lambda0 - params.Lambda0) > 1e-14:
        raise ConfigError(f"base Einstein constant {S.base.lambda0} differs from Lambda0 = {params.Lambda0}")
    if S.dim + 1 != params.n:
        raise ConfigError(f"base of dimension {S.base.dim} does not give n = {params.n}")
    return build_lorentz_firm(S, firm_profile(params), t_box)


def einstein_grid(metric: MetricField, counts: int | tuple = 10, u: float = 0.0) -> np.ndarray:
    """Tensor grid over t and the base coordinates with u fixed."""
    chart: Chart = metric.chart
    names = [c for c in chart.coord_names if c != "u"]
    if isinstance(counts, int):
        counts = (counts,) * len(names)
    return chart.grid(dict(zip(names, counts)), {"u": u})


def coordinate_einstein_residual(metric: MetricField, Lambda: float, pts, scheme: Scheme = CURVATURE) -> np.ndarray:
    res = curvature_coordinate(metric, pts, scheme)
    diff = res.ricci - Lambda * metric(pts)
    return np.abs(diff).reshape(len(pts), -1).max(axis=1)


def frame_ricci(metric: BundleMetric, pts, scheme: Scheme = CURVATURE) -> np.ndarray:
    """Ricci tensor in the adapted frame built from the frame connection table."""
    pts = metric.chart.require(pts)
    variant = "ansatz" if metric.variant == "firm" else "appendix-general"

    def table(q):
        return christoffel_frame(frame_inputs(metric, q, check=False), variant)

    T = table(pts)
    dT = fd_gradient(table, pts, scheme.h, scheme.order)  # [n, k, A, B, C]
    F = metric.frame(pts)
    XT = np.einsum("nkA,nkBCD->nABCD", F, dT)              # X_A(T_BC^D)
    c = frame_brackets(metric, pts)                         # [X_A, X_B] = c_AB^F X_F
    R = (XT - np.swapaxes(XT, 1, 2)
         - np.einsum("nACF,nBFD->nABCD", T, T)
         + np.einsum("nBCF,nAFD->nABCD", T, T)
         - np.einsum("nABF,nFCD->nABCD", c, T))
    return np.einsum("nDABD->nAB", R)


def frame_einstein_residual(metric: BundleMetric, Lambda: float, pts, scheme: Scheme = CURVATURE) -> np.ndarray:
    ric = frame_ricci(metric, pts, scheme)
    diff = ric - Lambda * frame_metric(metric, pts)
    return np.abs(diff).reshape(len(pts), -1).max(axis=1)


def full_einstein_residual(metric: BundleMetric, Lambda: float, pts, tol: float = 1e-5, label: str = "") -> Report:
    pts = metric.chart.require(pts)
    grid = f"{len(pts)} points on {metric.chart.name}"
    tag = f".{label}" if label else ""
    report = Report()
    report.add(CheckRecord(f"einstein.coordinate{tag}", "Ric = Lambda g (coordinate curvature)",
                           coordinate_einstein_residual(metric, Lambda, pts), tol, grid, pts))
    report.add(CheckRecord(f"einstein.frame{tag}", "Ric = Lambda g (frame connection table)",
                           frame_einstein_residual(metric, Lambda, pts), tol, grid, pts))
    return report


# ---------------------------------------------------------------------------
# four-dimensional Taub-NUT coordinates


@dataclass(frozen=True)
class TaubNutParams:
    ell: float
    m: float
    B_check: float
    B_check_printed: float
    printed_discrepancy: float = field(default=0.0)


def b_check_derived(params: EinsteinParams) -> Fraction:
    """The constant making beta_tilde = L0 (Bc t - 4C(t^2-16C^2))/(t^2+16C^2) for n = 4, L = 0."""
    _, L0, B, C = params.exact()
    return B / L0 + 4 * C * (1 - 16 * C * C)


def b_check_printed(params: EinsteinParams) -> Fraction:
    """B (1 + 16C^2)/(2 L0) + 4C(1 - 16C^2); agrees with b_check_derived only when B = 0."""
    _, L0, B, C = params.exact()
    return B / (2 * L0) * (1 + 16 * C * C) + 4 * C * (1 - 16 * C * C)


def ricci_flat_beta(params: EinsteinParams, b_check) -> RationalFunction:
    _, L0, _, C = params.exact()
    b_check = to_fraction(b_check)
    num = Poly((64 * C ** 3, b_check, -4 * C)) * L0
    return RationalFunction(num, Poly((16 * C * C, 0, 1)))


def taub_nut_params(params: EinsteinParams) -> TaubNutParams:
    if params.n != 4 or params.Lambda != 0:
        raise ConfigError("Taub-NUT coordinates need n = 4 and Lambda = 0")
    ell = math.sqrt(params.C)
    bd = b_check_derived(params)
    bp = b_check_printed(params)
    return TaubNutParams(ell, float(bd) / (32 * ell ** 3), float(bd), float(bp), float(abs(bd - bp)))


def horizon_scan(beta: RationalProfile, t_interval, spacing: float = 1e-3):
    a, b = t_interval
    ts = np.arange(a, b + spacing / 2, spacing)
    vals = beta(ts)
    sign = np.sign(vals)
    if np.any(sign == 0) or np.any(sign[1:] != sign[:-1]):
        idx = int(np.argmax((sign[1:] != sign[:-1]) | (sign[1:] == 0)))
        raise HorizonCrossing(f"beta_tilde changes sign near t = {ts[idx]:.4f} in [{a}, {b}]")


def taub_nut_metric(tp: TaubNutParams, Lambda0: float, pts) -> np.ndarray:
    """Displayed Taub-NUT components in (t_check, v, psi, phi)."""
    tc, psi = pts[:, 0], pts[:, 2]
    ell, m = tp.ell, tp.m
    a = tc * tc + ell * ell
    D = 2 * m * tc + ell * ell - tc * tc
    N = len(pts)
    g = np.zeros((N, 4, 4))
    g[:, 0, 0] = -a / D
    g[:, 2, 2] = a
    g[:, 3, 3] = a * np.sin(psi) ** 2
    w = 4 * ell * ell * D / a
    # (dv + cos psi dphi)^2
    g[:, 1, 1] += w
    g[:, 1, 3] += w * np.cos(psi)
    g[:, 3, 1] += w * np.cos(psi)
    g[:, 3, 3] += w * np.cos(psi) ** 2
    return g / Lambda0


def taub_nut_transform(metric: BundleMetric, params: EinsteinParams, t_check, base_pts):
    """Pull the bundle metric back to (t_check, v, psi, phi) and compare with the displayed form.

    t = 4 ell t_check, u = v/L0 - int dt/(2 beta_tilde).  The components do
    not depend on u, so only the Jacobian of the change enters.  Returns
    (TaubNutParams, pulled-back components, displayed components, points).
    """
    tp = taub_nut_params(params)
    if metric.base.kind != "s2-spherical":
        raise ConfigError("Taub-NUT coordinates need the s2-spherical base")
    beta = beta_profile(params)
    t_check = np.asarray(t_check, dtype=float)
    t = 4 * tp.ell * t_check
    horizon_scan(beta, (float(t.min()), float(t.max())))
    base_pts = np.atleast_2d(base_pts)
    tc = np.repeat(t_check, len(base_pts))
    bp = np.tile(base_pts, (len(t_check), 1))
    new_pts = np.column_stack([tc, np.zeros(len(tc)), bp])
    old_pts = np.column_stack([4 * tp.ell * tc, np.zeros(len(tc)), bp])
    g = metric(old_pts)
    L0 = params.Lambda0
    Jac = np.zeros((len(tc), 4, 4))
    Jac[:, 0, 0] = 4 * tp.ell
    Jac[:, 1, 0] = -4 * tp.ell / (2 * beta(old_pts[:, 0]))
    Jac[:, 1, 1] = 1 / L0
    Jac[:, 2, 2] = 1.0
    Jac[:, 3, 3] = 1.0
    pulled = np.einsum("nai,nab,nbj->nij", Jac, g, Jac)
    return tp, pulled, taub_nut_metric(tp, L0, new_pts), new_pts
