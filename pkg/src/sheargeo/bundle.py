"""Sasaki charts over a Kähler base and compatible Lorentzian metrics on S x R.

Coordinates on the Sasaki chart are ``(u, x^1..x^m)`` with contact form
theta = du + eta.  The Lorentzian total space uses ``(t, u, x^1..x^m)``.
Symmetric products follow a ∨ b = (a⊗b + b⊗a)/2.

The adapted frame is ordered ``(p_o, E_1..E_m, q_o)`` with p_o = d/dt,
E_i = d/dx^i - eta_i d/du and q_o = d/du.  Frame connection tables use
``T[n, A, B, C]`` for the X_C component of nabla_{X_A} X_B.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import MissingDerivative, SignatureError
from .kahler import KahlerBase
from .report import CheckRecord, Report
from .tensor import (
    FIRST,
    Chart,
    DifferentialForm,
    MetricField,
    VectorField,
    as_points,
    christoffel_coordinate,
    exterior_derivative,
    fd_gradient,
    invert_metric,
    lie_derivative,
)

# ---------------------------------------------------------------------------
# Sasaki chart


@dataclass(frozen=True)
class SasakiChart:
    base: KahlerBase
    chart: Chart
    theta: DifferentialForm
    reeb: VectorField
    sasaki_g: MetricField
    u_interval: tuple = (-1.0, 1.0)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def cr_structure(self, pts) -> np.ndarray:
        """CR endomorphism on TS: zero on the Reeb line, lift of -J on ker theta.

        The sign makes the Levi form dtheta(., J .) positive for the base
        convention omega = g_o(., J .).
        """
        pts = as_points(pts, self.dim)
        x = pts[:, 1:]
        J = self.base.jmat(x)
        eta = self.base.eta(x)
        m = self.base.dim
        phi = np.zeros((len(pts), m + 1, m + 1))
        phi[:, 1:, 1:] = -J
        phi[:, 0, 1:] = np.einsum("na,nab->nb", eta, J)
        return phi


def build_sasaki(base: KahlerBase, u_interval: tuple = (-1.0, 1.0)) -> SasakiChart:
    m = base.dim
    dim = m + 1
    chart = Chart(f"sasaki[{base.kind}]", ("u",) + base.chart.coord_names,
                  (u_interval,) + base.chart.box, base.chart.margin)

    def theta(pts):
        return np.concatenate([np.ones((len(pts), 1)), base.eta(pts[:, 1:])], axis=1)

    def theta_partials(pts):
        out = np.zeros((len(pts), dim, dim))
        out[:, 1:, 1:] = base.eta.partials(pts[:, 1:])
        return out

    def metric(pts):
        th = theta(pts)
        g = np.einsum("ni,nj->nij", th, th)
        g[:, 1:, 1:] += 0.5 * base.g_o(pts[:, 1:])
        return g

    def metric_partials(pts):
        th = theta(pts)
        dth = theta_partials(pts)
        d = np.einsum("nki,nj->nkij", dth, th) + np.einsum("ni,nkj->nkij", th, dth)
        d[:, 1:, 1:, 1:] += 0.5 * base.g_o.partials(pts[:, 1:])
        return d

    theta_form = DifferentialForm(1, dim, theta, theta_partials)
    reeb = VectorField.coordinate(dim, 0)
    g = MetricField(chart, metric, (0, dim), 1, metric_partials)
    return SasakiChart(base, chart, theta_form, reeb, g, tuple(u_interval))


def verify_sasaki(S: SasakiChart, pts=None, seed: int = 0) -> Report:
    """Residuals of the Sasaki identities on 200 random chart points by default."""
    from .structures import reeb_field

    pts = S.chart.sample(200, np.random.default_rng(seed)) if pts is None else S.chart.require(pts)
    n = len(pts)
    grid = f"{n} points on {S.chart.name}"
    report = Report()

    def pmax(a):
        return np.abs(a).reshape(n, -1).max(axis=1)

    def rec(name, anchor, vals, tol):
        report.add(CheckRecord(f"sasaki.{name}", anchor, vals, tol, grid, pts))

    Z = S.reeb(pts)
    th = S.theta(pts)
    dth = exterior_derivative(S.theta)(pts)           # analytic partials
    dth_fd = exterior_derivative(S.theta, FIRST)(pts)  # central differences
    g = S.sasaki_g(pts)
    rec("theta_of_reeb", "theta(Z) = 1", np.abs(np.einsum("ni,ni->n", th, Z) - 1.0), 1e-12)
    rec("reeb_dtheta", "Z contracted into dtheta vanishes", pmax(np.einsum("ni,nij->nj", Z, dth)), 1e-12)
    rec("reeb_unit", "g(Z, Z) = 1", np.abs(np.einsum("ni,nij,nj->n", Z, g, Z) - 1.0), 1e-8)
    rec("reeb_dual", "g(Z, .) = theta", pmax(np.einsum("ni,nij->nj", Z, g) - th), 1e-8)
    rec("reeb_killing", "Z is Killing for the Sasaki metric",
        pmax(lie_derivative(S.reeb, S.sasaki_g, pts, FIRST)), 1e-8)
    pull = np.zeros_like(dth_fd)
    pull[:, 1:, 1:] = S.base.omega(pts[:, 1:])
    rec("dtheta_pullback", "dtheta = pi^* omega", pmax(dth_fd - pull), 1e-8)
    # g(J X, Y) = dtheta(X, Y) / 2 on ker theta; the 1/2 matches the 1/2 in the Sasaki metric
    j_rec = -0.5 * np.einsum("nab,nbc->nac", invert_metric(g), dth)
    rec("j_recovery", "J = g^{-1} dtheta on the contact distribution", pmax(j_rec - S.cr_structure(pts)), 1e-8)
    solved = reeb_field(S.theta, exterior_derivative(S.theta), pts)
    rec("reeb_solve", "Z solves theta(Z) = 1, Z contracted into dtheta = 0", pmax(solved - Z), 1e-10)
    return report


# ---------------------------------------------------------------------------
# profiles


def _const3(c):
    def fn(t):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, c), np.zeros_like(t), np.zeros_like(t)
    return fn


@dataclass(frozen=True)
class FirmProfile:
    """sigma(t) and beta_tilde(t); each callable returns (value, d/dt, d2/dt2)."""

    sigma: Callable
    beta: Callable
    label: str = ""

    @classmethod
    def constant(cls, sigma: float = 1.0, beta: float = 0.0) -> "FirmProfile":
        if not sigma > 0:
            raise SignatureError("sigma must be positive")
        return cls(_const3(float(sigma)), _const3(float(beta)), f"constant(sigma={sigma}, beta={beta})")


@dataclass(frozen=True)
class GeneralProfile:
    """Scalar functions of the point (t, u, x): sigma, alpha, beta and gamma^i.

    ``gamma`` returns ``(N, m)`` frame components gamma^i.
    """

    sigma: Callable
    alpha: Callable
    beta: Callable
    gamma: Callable
    label: str = ""

    @classmethod
    def from_firm(cls, prof: FirmProfile, m: int) -> "GeneralProfile":
        return cls(
            lambda p: prof.sigma(p[:, 0])[0],
            lambda p: 1.0 / prof.sigma(p[:, 0])[0],
            lambda p: prof.beta(p[:, 0])[0] / prof.sigma(p[:, 0])[0],
            lambda p: np.zeros((len(p), m)),
            f"general form of {prof.label}",
        )


# ---------------------------------------------------------------------------
# Lorentzian metrics


@dataclass(frozen=True)
class BundleMetric(MetricField):
    """A Lorentzian metric on S x R remembering how it was built."""

    sasaki: Optional[SasakiChart] = None
    profile: object = None
    variant: str = ""

    @property
    def base(self) -> KahlerBase:
        return self.sasaki.base

    def frame(self, pts) -> np.ndarray:
        """Columns (p_o, E_1..E_m, q_o) in coordinates, shape (N, n, n)."""
        pts = as_points(pts, self.dim)
        n = self.dim
        m = n - 2
        F = np.zeros((len(pts), n, n))
        F[:, 0, 0] = 1.0
        F[:, 1, n - 1] = 1.0
        eta = self.base.eta(pts[:, 2:])
        F[:, 2:, 1:n - 1] = np.eye(m)
        F[:, 1, 1:n - 1] = -eta
        return F

    def frame_derivative(self, pts) -> np.ndarray:
        """``dF[n, k, nu, B]`` = d_k of the frame components."""
        pts = as_points(pts, self.dim)
        n = self.dim
        dF = np.zeros((len(pts), n, n, n))
        dF[:, 2:, 1, 1:n - 1] = -self.base.eta.partials(pts[:, 2:])
        return dF

    def theta_values(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        return np.concatenate([np.zeros((len(pts), 1)), np.ones((len(pts), 1)), self.base.eta(pts[:, 2:])], axis=1)

    def theta_form(self) -> DifferentialForm:
        """theta = du + eta pulled back to the total space, with analytic partials."""
        n = self.dim

        def partials(pts):
            out = np.zeros((len(pts), n, n))
            out[:, 2:, 2:] = self.base.eta.partials(pts[:, 2:])
            return out

        return DifferentialForm(1, n, self.theta_values, partials)


def lorentz_chart(S: SasakiChart, t_box: tuple = (0.0, 3.0)) -> Chart:
    return Chart(f"lorentz[{S.base.kind}]", ("t",) + S.chart.coord_names, (tuple(t_box),) + S.chart.box, S.chart.margin)


def _check_signature(metric: MetricField, n_samples: int = 64):
    pts = metric.chart.sample(n_samples, np.random.default_rng(12345))
    eig = np.linalg.eigvalsh(metric(pts))
    neg = (eig < 0).sum(axis=1)
    if np.any(np.abs(eig).min(axis=1) < 1e-12) or np.any(neg != 1):
        bad = int(np.argmax((neg != 1) | (np.abs(eig).min(axis=1) < 1e-12)))
        raise SignatureError(f"metric is not Lorentzian at {pts[bad].tolist()} (eigenvalues {eig[bad].tolist()})")


def build_lorentz_firm(S: SasakiChart, prof: FirmProfile, t_box: tuple = (0.0, 3.0)) -> BundleMetric:
    """g = sigma(t) pi^*(g_o) + theta ∨ dt + beta_tilde(t) theta ⊗ theta."""
    base = S.base
    m = base.dim
    n = m + 2
    chart = lorentz_chart(S, t_box)
    ts = np.linspace(t_box[0], t_box[1], 257)
    if np.any(prof.sigma(ts)[0] <= 0):
        raise SignatureError("sigma must be positive on the t-interval")

    def pieces(pts):
        t = pts[:, 0]
        x = pts[:, 2:]
        N = len(pts)
        th = np.zeros((N, n))
        th[:, 1] = 1.0
        th[:, 2:] = base.eta(x)
        Go = np.zeros((N, n, n))
        Go[:, 2:, 2:] = base.g_o(x)
        return t, x, th, Go

    def components(pts):
        t, x, th, Go = pieces(pts)
        s = prof.sigma(t)[0]
        b = prof.beta(t)[0]
        g = s[:, None, None] * Go + b[:, None, None] * np.einsum("ni,nj->nij", th, th)
        g[:, 0, :] += 0.5 * th
        g[:, :, 0] += 0.5 * th
        return g

    def partials(pts):
        t, x, th, Go = pieces(pts)
        N = len(pts)
        s, ds, _ = prof.sigma(t)
        b, db, _ = prof.beta(t)
        d = np.zeros((N, n, n, n))
        d[:, 0] = ds[:, None, None] * Go + db[:, None, None] * np.einsum("ni,nj->nij", th, th)
        dth = np.zeros((N, n, n))  # [n, k, i]
        dth[:, 2:, 2:] = base.eta.partials(x)
        dGo = np.zeros((N, n, n, n))
        dGo[:, 2:, 2:, 2:] = base.g_o.partials(x)
        dx = s[:, None, None, None] * dGo
        dx += b[:, None, None, None] * (np.einsum("nki,nj->nkij", dth, th) + np.einsum("ni,nkj->nkij", th, dth))
        dx[:, :, 0, :] += 0.5 * dth
        dx[:, :, :, 0] += 0.5 * dth
        d[:, 2:] = dx[:, 2:]
        return d

    metric = BundleMetric(chart, components, (1, n - 1), 1, partials, None, S, prof, "firm")
    _check_signature(metric)
    return metric


def build_lorentz_general(S: SasakiChart, prof: GeneralProfile, t_box: tuple = (0.0, 3.0),
                          alpha_guard: float = 1e-8) -> BundleMetric:
    """g = sigma (g_ij dx^i dx^j + theta ∨ (alpha dt + gamma^i g_ij dx^j + beta theta))."""
    base = S.base
    m = base.dim
    n = m + 2
    chart = lorentz_chart(S, t_box)
    probe = chart.sample(64, np.random.default_rng(12345))
    if np.any(np.abs(prof.alpha(probe)) < alpha_guard):
        raise SignatureError(f"|alpha| below {alpha_guard}: metric degenerates")
    if np.any(prof.sigma(probe) <= 0):
        raise SignatureError("sigma must be positive")

    def components(pts):
        x = pts[:, 2:]
        N = len(pts)
        go = base.g_o(x)
        th = np.zeros((N, n))
        th[:, 1] = 1.0
        th[:, 2:] = base.eta(x)
        zeta = prof.beta(pts)[:, None] * th
        zeta[:, 0] += prof.alpha(pts)
        zeta[:, 2:] += np.einsum("nij,nj->ni", go, prof.gamma(pts))
        g = np.zeros((N, n, n))
        g[:, 2:, 2:] = go
        g += 0.5 * (np.einsum("ni,nj->nij", th, zeta) + np.einsum("ni,nj->nij", zeta, th))
        return prof.sigma(pts)[:, None, None] * g

    metric = BundleMetric(chart, components, (1, n - 1), 1, None, None, S, prof, "general")
    _check_signature(metric)
    return metric


# ---------------------------------------------------------------------------
# frame Christoffel tables


@dataclass
class FrameInputs:
    """Pointwise data feeding the frame connection tables (batch axis first)."""

    g: np.ndarray          # base metric g_ij in the frame E_i
    ginv: np.ndarray
    omega: np.ndarray      # omega_ij = g_o(E_i, J E_j)
    J: np.ndarray          # J[m, i] = component m of J E_i
    base_gamma: np.ndarray  # [n, i, j, m] = g^{mk} g_o(nabla_{E_i} E_j, E_k)
    c: np.ndarray          # [n, i, j, k] = c^k_ij of the base frame
    sigma: np.ndarray
    dsigma: np.ndarray     # [n, A] = X_A(sigma)
    beta_t: Optional[np.ndarray] = None   # ansatz: beta_tilde
    dbeta_t: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None    # general: alpha, beta, gamma^i
    dalpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    dbeta: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None       # [n, m]
    dgamma_up: Optional[np.ndarray] = None   # [n, A, m] = X_A(gamma^m)
    dgamma_low: Optional[np.ndarray] = None  # [n, A, k] = X_A(gamma^t g_tk)


def _frame_directional(metric: BundleMetric, f: Callable, pts: np.ndarray) -> np.ndarray:
    """X_A(f) for every frame vector, by central differences in coordinates."""
    grad = fd_gradient(f, pts, FIRST.h, FIRST.order)  # [n, k, ...]
    F = metric.frame(pts)
    return np.einsum("nkA,nk...->nA...", F, grad)


def frame_inputs(metric: BundleMetric, pts, check: bool = True) -> FrameInputs:
    """``check=False`` skips the chart test (for stencil points just past the margin)."""
    pts = metric.chart.require(pts) if check else as_points(pts, metric.dim)
    base = metric.base
    x = pts[:, 2:]
    N, n = pts.shape
    m = n - 2
    g = base.g_o(x)
    Gb = christoffel_coordinate(base.g_o, x, check=check)
    common = dict(
        g=g,
        ginv=invert_metric(g),
        omega=base.omega(x),
        J=base.jmat(x),
        base_gamma=np.einsum("nmij->nijm", Gb),
        c=np.zeros((N, m, m, m)),
    )
    if metric.variant == "firm":
        prof: FirmProfile = metric.profile
        s, ds, _ = prof.sigma(pts[:, 0])
        b, db, _ = prof.beta(pts[:, 0])
        dsig = np.zeros((N, n))
        dsig[:, 0] = ds
        dbt = np.zeros((N, n))
        dbt[:, 0] = db
        return FrameInputs(sigma=s, dsigma=dsig, beta_t=b, dbeta_t=dbt,
                           alpha=1.0 / s, dalpha=-dsig / s[:, None] ** 2,
                           beta=b / s, dbeta=(dbt * s[:, None] - b[:, None] * dsig) / s[:, None] ** 2,
                           gamma=np.zeros((N, m)), dgamma_up=np.zeros((N, n, m)),
                           dgamma_low=np.zeros((N, n, m)), **common)
    if metric.variant == "general":
        prof: GeneralProfile = metric.profile

        def gamma_low(q):
            return np.einsum("nij,nj->ni", base.g_o(q[:, 2:]), prof.gamma(q))

        return FrameInputs(
            sigma=prof.sigma(pts), dsigma=_frame_directional(metric, prof.sigma, pts),
            alpha=prof.alpha(pts), dalpha=_frame_directional(metric, prof.alpha, pts),
            beta=prof.beta(pts), dbeta=_frame_directional(metric, prof.beta, pts),
            gamma=prof.gamma(pts), dgamma_up=_frame_directional(metric, prof.gamma, pts),
            dgamma_low=_frame_directional(metric, gamma_low, pts), **common)
    raise MissingDerivative(f"metric variant {metric.variant!r} carries no profile derivatives")


def christoffel_frame(inp: FrameInputs, variant: str = "ansatz") -> np.ndarray:
    """Frame connection table T[n, A, B, C] in the frame (p_o, E_1..E_m, q_o)."""
    if variant == "ansatz":
        return _table_ansatz(inp)
    if variant == "appendix-general":
        return _table_general(inp)
    raise ValueError(f"unknown variant {variant!r}")


def _table_ansatz(inp: FrameInputs) -> np.ndarray:
    if inp.beta_t is None or inp.dbeta_t is None:
        raise MissingDerivative("ansatz table needs beta_tilde and its frame derivatives")
    N, m = inp.g.shape[0], inp.g.shape[1]
    n = m + 2
    P, Q, E = 0, n - 1, slice(1, n - 1)
    s = inp.sigma[:, None, None]
    ps, qs, Es = inp.dsigma[:, 0], inp.dsigma[:, Q], inp.dsigma[:, E]
    pb, qb, Eb = inp.dbeta_t[:, 0], inp.dbeta_t[:, Q], inp.dbeta_t[:, E]
    bt = inp.beta_t
    g, ginv, w, J = inp.g, inp.ginv, inp.omega, inp.J
    eye = np.eye(m)
    JT = np.swapaxes(J, 1, 2)  # JT[n, i, m] = J_i^m
    T = np.zeros((N, n, n, n))

    T[:, E, E, E] = (inp.base_gamma
                     + (Es[:, :, None, None] * eye[None, None]) / (2 * s[..., None])
                     + (Es[:, None, :, None] * eye[None, :, None, :]) / (2 * s[..., None])
                     - g[:, :, :, None] * np.einsum("nmk,nk->nm", ginv, Es)[:, None, None, :] / (2 * s[..., None]))
    T[:, E, E, P] = g * (-qs + 2 * bt * ps)[:, None, None]
    T[:, E, E, Q] = -w / 2 - g * ps[:, None, None]
    ip_m = -JT / (4 * s) + ps[:, None, None] * eye / (2 * s)
    T[:, E, P, E] = ip_m
    T[:, P, E, E] = ip_m
    iq_m = -bt[:, None, None] * JT / (2 * s) + qs[:, None, None] * eye / (2 * s)
    T[:, E, Q, E] = iq_m
    T[:, Q, E, E] = iq_m
    T[:, E, Q, P] = Eb
    T[:, Q, E, P] = Eb
    T[:, P, Q, P] = pb
    T[:, Q, P, P] = pb
    T[:, Q, Q, E] = -np.einsum("nmk,nk->nm", ginv, Eb) / (2 * inp.sigma[:, None])
    T[:, Q, Q, P] = qb + 2 * bt * pb
    T[:, Q, Q, Q] = -pb
    return T


def _table_general(inp: FrameInputs) -> np.ndarray:
    needed = (inp.alpha, inp.dalpha, inp.beta, inp.dbeta, inp.gamma, inp.dgamma_up, inp.dgamma_low)
    if any(v is None for v in needed):
        raise MissingDerivative("general table needs (alpha, beta, gamma) and their frame derivatives")
    N, m = inp.g.shape[0], inp.g.shape[1]
    n = m + 2
    P, Q, E = 0, n - 1, slice(1, n - 1)
    g, ginv, w = inp.g, inp.ginv, inp.omega
    sig, a, b = inp.sigma, inp.alpha, inp.beta
    ps, qs, Es = inp.dsigma[:, 0], inp.dsigma[:, Q], inp.dsigma[:, E]
    pa, qa, Ea = inp.dalpha[:, 0], inp.dalpha[:, Q], inp.dalpha[:, E]
    pb, qb, Eb = inp.dbeta[:, 0], inp.dbeta[:, Q], inp.dbeta[:, E]
    gam = inp.gamma                                  # gamma^m
    glow = np.einsum("nij,nj->ni", g, gam)            # gamma_i = gamma^t g_ti
    pgam_up = inp.dgamma_up[:, 0]                     # p(gamma^m)
    qgam_up = inp.dgamma_up[:, Q]
    Eglow = inp.dgamma_low[:, E]                      # [n, i, k] = E_i(gamma_k)
    pgam_low = np.einsum("nt,nti->ni", pgam_up, g)    # p(gamma^t) g_ti
    qgam_low = np.einsum("nt,nti->ni", qgam_up, g)
    gsq = np.einsum("ni,ni->n", gam, glow)
    eye = np.eye(m)
    c = inp.c
    T = np.zeros((N, n, n, n))

    def col(v):
        return v[:, None]

    def mat(v):
        return v[:, None, None]

    grad_sig = np.einsum("nmk,nk->nm", ginv, Es)                       # g^{mk} E_k(sigma)
    shift_m = grad_sig - gam * col(ps / a)                             # (g^{mk}E_k(s) - gamma^m p(s)/alpha)
    shift_p = 2 * qs / a + (gsq - 4 * b) * ps / a ** 2 - np.einsum("nm,nm->n", gam, Es) / a

    # S_{ij|k} = (omega_ik gamma_j + omega_jk gamma_i - omega_ij gamma_k) / 4
    Sijk = 0.25 * (np.einsum("nik,nj->nijk", w, glow) + np.einsum("njk,ni->nijk", w, glow)
                   - np.einsum("nij,nk->nijk", w, glow))
    base_low = np.einsum("nijl,nlm->nijm", inp.base_gamma, g)  # g_o(nabla_{E_i} E_j, E_m)

    T[:, E, E, E] = (inp.base_gamma
                     + np.einsum("nmk,nijk->nijm", ginv, Sijk)
                     + np.einsum("nm,nij->nijm", gam, w) / 4
                     + Es[:, :, None, None] * eye[None, None] / (2 * mat(sig)[..., None])
                     + Es[:, None, :, None] * eye[None, :, None, :] / (2 * mat(sig)[..., None])
                     - g[:, :, :, None] * shift_m[:, None, None, :] / (2 * mat(sig)[..., None]))
    T[:, E, E, P] = ((Eglow + np.swapaxes(Eglow, 1, 2)) / (2 * mat(a))
                     - mat(gsq) * w / (4 * mat(a))
                     - np.einsum("nm,nijm->nij", gam, base_low) / mat(a)
                     - np.einsum("nm,nijm->nij", gam, Sijk) / mat(a)
                     - g * mat(shift_p) / (2 * mat(sig)))
    T[:, E, E, Q] = -w / 2 - g * mat(ps / (a * sig))

    ip_m = mat(a) * np.einsum("nmk,nik->nim", ginv, w) / 4 + mat(ps) * eye / (2 * mat(sig))
    T[:, E, P, E] = ip_m
    T[:, P, E, E] = ip_m
    ip_p = Ea / (2 * col(a)) + pgam_low / (2 * col(a)) - np.einsum("nm,nim->ni", gam, w) / 4 + Es / (2 * col(sig))
    T[:, E, P, P] = ip_p
    T[:, P, E, P] = ip_p

    iq_m = (np.einsum("nmk,nik->nim", ginv, Eglow) / 4
            - np.einsum("nmk,nki->nim", ginv, Eglow) / 4
            + mat(b) * np.einsum("nmk,nik->nim", ginv, w) / 2
            - np.einsum("nl,nirt,ntl,nmr->nim", gam, c, g, ginv) / 4
            - np.einsum("nm,ni->nim", gam, Ea) / (4 * mat(a))
            + np.einsum("nm,ni->nim", gam, pgam_low) / (4 * mat(a))
            + mat(qs) * eye / (2 * mat(sig))
            - np.einsum("ni,nm->nim", glow, shift_m) / (4 * mat(sig)))
    T[:, E, Q, E] = iq_m
    T[:, Q, E, E] = iq_m
    iq_p = (Eb / col(a)
            + col(gsq) * Ea / (4 * col(a) ** 2)
            - col(gsq) * pgam_low / (4 * col(a) ** 2)
            - col(b) * Ea / col(a) ** 2
            + col(b) * pgam_low / col(a) ** 2
            - np.einsum("nm,nim->ni", gam, Eglow) / (4 * col(a))
            + np.einsum("nm,nmi->ni", gam, Eglow) / (4 * col(a))
            - col(b) * np.einsum("nm,nim->ni", gam, w) / (2 * col(a))
            - glow * col(shift_p) / (4 * col(sig)))
    T[:, E, Q, P] = iq_p
    T[:, Q, E, P] = iq_p
    iq_q = Ea / (2 * col(a)) - pgam_low / (2 * col(a)) + Es / (2 * col(sig)) - glow * col(ps) / (2 * col(a * sig))
    T[:, E, Q, Q] = iq_q
    T[:, Q, E, Q] = iq_q

    T[:, P, P, P] = pa / a + ps / sig

    pq_m = (pgam_up / 4 - np.einsum("nmk,nk->nm", ginv, Ea) / 4 - col(a) * shift_m / (4 * col(sig)))
    T[:, P, Q, E] = pq_m
    T[:, Q, P, E] = pq_m
    pq_p = (pb / a - np.einsum("nm,ni,nim->n", gam, pgam_up, g) / (4 * a)
            + np.einsum("nm,nm->n", gam, Ea) / (4 * a)
            + qs / (2 * sig)
            - (qs + (gsq - 4 * b) * ps / (2 * a) - np.einsum("nm,nm->n", gam, Es) / 2) / (2 * sig))
    T[:, P, Q, P] = pq_p
    T[:, Q, P, P] = pq_p

    T[:, Q, Q, E] = (np.einsum("nmk,nk->nm", ginv, qgam_low) / 2
                     - np.einsum("nmk,nk->nm", ginv, Eb) / 2
                     - gam * col(qa / (2 * a))
                     + gam * col(pb / (2 * a))
                     - col(b) * shift_m / (2 * col(sig)))
    T[:, Q, Q, P] = (qb / a + gsq * qa / (2 * a ** 2) - gsq * pb / (2 * a ** 2)
                     - 2 * b * qa / a ** 2 + 2 * b * pb / a ** 2
                     - np.einsum("nm,nm->n", gam, qgam_low) / (2 * a)
                     + np.einsum("nm,nm->n", gam, Eb) / (2 * a)
                     - (b / sig) * (qs / a + (gsq - 4 * b) * ps / (2 * a ** 2) - np.einsum("nm,nm->n", gam, Es) / (2 * a)))
    T[:, Q, Q, Q] = qa / a - pb / a + qs / sig - b * ps / (a * sig)
    return T


def coordinate_frame_table(metric: BundleMetric, pts, scheme=None) -> np.ndarray:
    """Levi-Civita connection in the adapted frame via coordinate Christoffels."""
    pts = metric.chart.require(pts)
    F = metric.frame(pts)
    dF = metric.frame_derivative(pts)
    G = christoffel_coordinate(metric, pts, scheme)
    V = np.einsum("nkA,nkvB->nABv", F, dF) + np.einsum("nvkr,nkA,nrB->nABv", G, F, F)
    return np.einsum("nCv,nABv->nABC", np.linalg.inv(F), V)


def frame_metric(metric: BundleMetric, pts) -> np.ndarray:
    F = metric.frame(pts)
    return np.einsum("nmA,nmv,nvB->nAB", F, metric(pts), F)


def frame_brackets(metric: BundleMetric, pts) -> np.ndarray:
    """Structure functions c[n, A, B, C]: [X_A, X_B] = c^C_AB X_C."""
    pts = as_points(pts, metric.dim)
    N, n = pts.shape
    m = n - 2
    c = np.zeros((N, n, n, n))
    w = metric.base.omega(pts[:, 2:])
    c[:, 1:n - 1, 1:n - 1, n - 1] = -w
    return c


def frame_bracket_residual(metric: BundleMetric, pts) -> dict:
    """Compare finite-difference commutators of frame fields with the structure relations."""
    pts = metric.chart.require(pts)
    N, n = pts.shape

    def frame_cols(q):
        return metric.frame(q)

    F = metric.frame(pts)
    dF = fd_gradient(frame_cols, pts, FIRST.h, FIRST.order)  # [n, k, nu, B]
    # [X_A, X_B]^nu = X_A^k d_k X_B^nu - X_B^k d_k X_A^nu
    DXB = np.einsum("nkA,nkvB->nABv", F, dF)
    brackets = DXB - np.swapaxes(DXB, 1, 2)
    expected = np.einsum("nABC,nvC->nABv", frame_brackets(metric, pts), F)
    diff = np.abs(brackets - expected)
    E = slice(1, n - 1)
    horiz = diff[:, E, E].reshape(N, -1).max(axis=1)
    mask = np.ones((n, n), bool)
    mask[1:n - 1, 1:n - 1] = False
    other = diff[:, mask].reshape(N, -1).max(axis=1)
    return {"horizontal": horiz, "vertical": other}


def frame_crosscheck(metric: BundleMetric, pts, variant: Optional[str] = None, scheme=None) -> Report:
    """Max discrepancy between the frame table and the transported coordinate connection."""
    pts = metric.chart.require(pts)
    variant = variant or ("ansatz" if metric.variant == "firm" else "appendix-general")
    table = christoffel_frame(frame_inputs(metric, pts), variant)
    coord = coordinate_frame_table(metric, pts, scheme)
    n = len(pts)
    diff = np.abs(table - coord).reshape(n, -1).max(axis=1)
    report = Report()
    report.add(CheckRecord(f"frame.crosscheck.{variant}", "frame Christoffel table = Levi-Civita connection",
                           diff, 1e-6, f"{n} points on {metric.chart.name}", pts))
    return report


def killing_residuals(metric: BundleMetric, pts) -> dict:
    """Per-point max |L_X g| for X = p_o and X = q_o."""
    pts = metric.chart.require(pts)
    n = len(pts)
    out = {}
    for name, idx in (("p", 0), ("q", 1)):
        L = lie_derivative(VectorField.coordinate(metric.dim, idx), metric, pts)
        out[name] = np.abs(L).reshape(n, -1).max(axis=1)
    return out
