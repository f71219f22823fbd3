"""Shearfree decompositions, CR data from sub-Riemannian pairs, Reeb fields.

Conventions: ``a ∨ b = (a⊗b + b⊗a)/2`` and 2-forms act as
``w(X, Y) = X^a w_ab Y^b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    DegenerateOmega,
    NoDecomposition,
    NotContact,
    NotNull,
    NotSPD,
    ODEStepError,
    RankDeficientBasis,
)
from .tensor import (
    FIRST,
    DifferentialForm,
    MetricField,
    Scheme,
    VectorField,
    as_points,
    christoffel_coordinate,
    fd_gradient,
    lie_derivative,
    spd_inverse_sqrt,
    spd_sqrt,
)

# ---------------------------------------------------------------------------
# twisting degree


def twisting_degree(theta: DifferentialForm, basis, p, dtheta: Optional[DifferentialForm] = None,
                    rel_tol: float = 1e-9) -> int:
    """dim of the kernel of dtheta restricted to the span of ``basis`` (rows), at one point."""
    from .tensor import exterior_derivative

    p = as_points(p, theta.dim)
    if len(p) != 1:
        raise ValueError("twisting_degree works at a single point")
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    th = theta(p)[0]
    if np.linalg.matrix_rank(basis, tol=1e-10) < len(basis):
        raise RankDeficientBasis("basis vectors are linearly dependent")
    if np.max(np.abs(basis @ th)) > 1e-12 * max(1.0, np.abs(basis).max()):
        raise RankDeficientBasis("basis does not lie in ker theta")
    if len(basis) != theta.dim - 1:
        raise RankDeficientBasis(f"expected {theta.dim - 1} vectors spanning ker theta, got {len(basis)}")
    dth = (dtheta or exterior_derivative(theta))(p)[0]
    skew = basis @ dth @ basis.T
    s = np.linalg.svd(skew, compute_uv=False)
    if s[0] == 0:
        return len(basis)
    return int(np.sum(s < rel_tol * s[0]))


# ---------------------------------------------------------------------------
# CR structure from a sub-Riemannian pair


@dataclass(frozen=True)
class SubconformalData:
    theta: DifferentialForm
    dtheta: DifferentialForm
    basis: Callable      # point -> (N, r, dim) rows spanning ker theta
    h: Callable          # point -> (N, r, r)

    def restricted(self, pts):
        """(h, dtheta) as matrices in the basis at ``pts``."""
        pts = as_points(pts, self.theta.dim)
        b = self.basis(pts)
        th = self.theta(pts)
        if np.max(np.abs(np.einsum("nri,ni->nr", b, th))) > 1e-12:
            raise RankDeficientBasis("basis does not lie in ker theta")
        w = np.einsum("nri,nij,nsj->nrs", b, self.dtheta(pts), b)
        return self.h(pts), w


@dataclass(frozen=True)
class CRData:
    J: np.ndarray
    B: np.ndarray
    levi: np.ndarray


def cr_from_subriemannian(h, omega) -> CRData:
    """CR structure determined by a metric ``h`` and a nondegenerate 2-form ``omega``.

    K = h^{-1} omega, B = (-K^2)^{-1/2}, J = B K and levi = omega(., J .).
    The sign of J is chosen so that the Levi form is positive.  Accepts a
    single pair or batches with leading axes.
    """
    h = np.asarray(h, dtype=float)
    omega = np.asarray(omega, dtype=float)
    d = h.shape[-1]
    if d % 2:
        raise DegenerateOmega(f"odd rank {d} cannot carry a nondegenerate 2-form")
    if np.max(np.abs(omega + np.swapaxes(omega, -1, -2)), initial=0.0) > 1e-12 * max(1.0, np.abs(omega).max()):
        raise DegenerateOmega("omega is not skew")
    h_half_inv = spd_inverse_sqrt(h)
    h_half = spd_sqrt(h)
    # K conjugated into an h-orthonormal basis is skew (hence normal).  With its
    # SVD U S V^T, (-K~^2)^{1/2} = V S V^T and B~ K~ = U V^T, so the polar
    # factors give J and B without squaring K.
    Kt = h_half_inv @ omega @ h_half_inv
    U, sv, Vt = np.linalg.svd(Kt)
    if np.any(sv[..., -1] <= 1e-12 * np.maximum(sv[..., 0], 1.0)):
        raise DegenerateOmega(f"omega is degenerate relative to h (smallest singular value {np.min(sv[..., -1]):.3e})")
    V = np.swapaxes(Vt, -1, -2)
    B = h_half_inv @ (V * (1.0 / sv)[..., None, :]) @ Vt @ h_half
    J = h_half_inv @ U @ Vt @ h_half
    # with this J, omega J = -h^{1/2} (V S V^T) h^{1/2} is negative definite; flip the sign
    J = -J
    levi = omega @ J
    return CRData(J, B, 0.5 * (levi + np.swapaxes(levi, -1, -2)))


def cr_residuals(h, omega, data: CRData) -> dict:
    """Per-pair max residuals of J^2 = -I, levi B = h, and the smallest Levi eigenvalue."""
    eye = np.eye(h.shape[-1])
    flat = lambda a: np.abs(a).reshape(a.shape[:-2] + (-1,)).max(axis=-1)
    return {
        "j_squared": flat(data.J @ data.J + eye),
        "levi_b": flat(data.levi @ data.B - h),
        "levi_min_eig": np.linalg.eigvalsh(data.levi)[..., 0],
    }


def random_cr_pair(dim: int, rng: np.random.Generator, max_cond: float = 1e3):
    """A random SPD ``h`` and nondegenerate skew ``omega`` of the given even dimension."""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.exp(rng.uniform(0.0, np.log(max_cond), dim))
    h = (Q * eig) @ Q.T
    h = 0.5 * (h + h.T)
    while True:
        A = rng.standard_normal((dim, dim))
        w = A - A.T
        if np.min(np.abs(np.linalg.eigvals(w))) > 0.1:
            return h, w


# ---------------------------------------------------------------------------
# Nijenhuis tensor


def fd_bracket(X: Callable, Y: Callable, pts, scheme: Scheme = FIRST) -> np.ndarray:
    """[X, Y]^mu = X^k d_k Y^mu - Y^k d_k X^mu by central differences."""
    pts = as_points(pts)
    dX = fd_gradient(X, pts, scheme.h, scheme.order)  # [n, k, mu]
    dY = fd_gradient(Y, pts, scheme.h, scheme.order)
    return np.einsum("nk,nkm->nm", X(pts), dY) - np.einsum("nk,nkm->nm", Y(pts), dX)


def nijenhuis_tensor(J: Callable, X: Callable, Y: Callable, pts, bracket: Callable = fd_bracket) -> np.ndarray:
    """N_J(X, Y) = [X,Y] - [JX,JY] + J([JX,Y] + [X,JY]) at each point.

    ``J`` maps points to endomorphism matrices; ``X``, ``Y`` map points to
    vectors; ``bracket(A, B, pts)`` evaluates commutators.
    """
    pts = as_points(pts)

    def apply(v):
        return lambda q: np.einsum("nab,nb->na", J(q), v(q))

    JX, JY = apply(X), apply(Y)
    inner = bracket(JX, Y, pts) + bracket(X, JY, pts)
    return bracket(X, Y, pts) - bracket(JX, JY, pts) + np.einsum("nab,nb->na", J(pts), inner)


def perturbed_structure(J: Callable, eps: float, seed: int = 0) -> Callable:
    """J + eps * (position-dependent symmetric noise), renormalized so J^2 = -I."""
    rng = np.random.default_rng(seed)
    holder = {}

    def noise(q):
        d = q.shape[1]
        if "S" not in holder:
            A = rng.standard_normal((d + 1, d, d))
            holder["S"] = A + np.swapaxes(A, 1, 2)
        S = holder["S"]
        return S[0][None] + np.einsum("nk,kab->nab", np.sin(q), S[1:])

    def field(q):
        Je = J(q) + eps * noise(q)
        # J_eps (-J_eps^2)^{-1/2} commutes with J_eps and squares to -I
        M = -(Je @ Je)
        w, V = np.linalg.eig(M)
        root = (V * (1.0 / np.sqrt(w))[:, None, :]) @ np.linalg.inv(V)
        return np.real(Je @ root)

    return field


# ---------------------------------------------------------------------------
# Reeb field


def reeb_field(theta: DifferentialForm, dtheta: DifferentialForm, pts, tol: float = 1e-10) -> np.ndarray:
    """Solve theta(Z) = 1, Z contracted into dtheta = 0 pointwise."""
    pts = as_points(pts, theta.dim)
    th = theta(pts)
    dth = dtheta(pts)
    n, d = th.shape
    A = np.concatenate([th[:, None, :], np.swapaxes(dth, 1, 2)], axis=1)  # rows: theta, then (Z ⌟ dtheta)_b
    s = np.linalg.svd(A, compute_uv=False)
    if np.any(s[:, -1] < tol * np.maximum(s[:, 0], 1.0)):
        bad = int(np.argmin(s[:, -1]))
        raise NotContact(f"theta is not contact at {pts[bad].tolist()}: the Reeb system is singular")
    rhs = np.zeros((n, d + 1))
    rhs[:, 0] = 1.0
    Z = np.stack([np.linalg.lstsq(A[i], rhs[i], rcond=None)[0] for i in range(n)])
    return Z


# ---------------------------------------------------------------------------
# shearfree decomposition and geodesic factor


@dataclass
class ShearfreeDecomposition:
    """Batched fit of L_p g = f g + p_flat ∨ eta; ``eta`` holds coordinate covectors."""

    f: np.ndarray
    eta: np.ndarray
    residual: np.ndarray
    eta_p: np.ndarray
    points: np.ndarray


def adapted_frame(g: np.ndarray, p: np.ndarray):
    """(q, E) with g(p, q) = 1, g(q, q) = 0 and E (N, n, n-2) spanning {p, q}^perp."""
    n, d = p.shape
    gp = np.einsum("nij,nj->ni", g, p)
    k = np.argmax(np.abs(gp), axis=1)
    v = np.zeros_like(p)
    v[np.arange(n), k] = 1.0
    gpv = gp[np.arange(n), k]
    gvv = np.einsum("ni,nij,nj->n", v, g, v)
    q = v / gpv[:, None] - 0.5 * (gvv / gpv ** 2)[:, None] * p
    gq = np.einsum("nij,nj->ni", g, q)
    M = np.stack([gp, gq], axis=1)  # (N, 2, n)
    _, _, Vt = np.linalg.svd(M)
    E = np.swapaxes(Vt[:, 2:, :], 1, 2)
    return q, E


def shearfree_decompose(g: MetricField, p_vec: VectorField, pts, scheme: Optional[Scheme] = None,
                        null_tol: float = 1e-10, fail_tol: float = 1e-4) -> ShearfreeDecomposition:
    pts = g.chart.require(pts)
    G = g(pts)
    p = p_vec(pts)
    pp = np.einsum("ni,nij,nj->n", p, G, p)
    if np.any(np.abs(pp) > null_tol):
        bad = int(np.argmax(np.abs(pp)))
        raise NotNull(f"g(p, p) = {pp[bad]:.3e} at {pts[bad].tolist()}")
    L = lie_derivative(p_vec, g, pts, scheme)
    q, E = adapted_frame(G, p)
    gW = np.einsum("nia,nij,njb->nab", E, G, E)
    LW = np.einsum("nia,nij,njb->nab", E, L, E)
    m = E.shape[2]
    f = np.einsum("nab,nba->n", np.linalg.inv(gW), LW) / m
    Lq = np.einsum("ni,nij->nj", q, L)
    eta_E = 2.0 * np.einsum("nj,nja->na", Lq, E)
    eta_p = 2.0 * (np.einsum("nj,nj->n", Lq, p) - f)
    eta_q = np.einsum("nj,nj->n", Lq, q)
    # covector from its values on the frame (p, q, E)
    F = np.concatenate([p[:, :, None], q[:, :, None], E], axis=2)
    vals = np.concatenate([eta_p[:, None], eta_q[:, None], eta_E], axis=1)
    eta = np.linalg.solve(np.swapaxes(F, 1, 2), vals[:, :, None])[:, :, 0]
    pflat = np.einsum("nij,nj->ni", G, p)
    model = f[:, None, None] * G + 0.5 * (np.einsum("ni,nj->nij", pflat, eta) + np.einsum("ni,nj->nij", eta, pflat))
    diff = np.einsum("nia,nij,njb->nab", F, L - model, F)
    residual = np.abs(diff).reshape(len(pts), -1).max(axis=1)
    if np.any(residual > fail_tol):
        bad = int(np.argmax(residual))
        raise NoDecomposition(f"L_p g is not of shearfree form at {pts[bad].tolist()} (residual {residual[bad]:.3e})")
    return ShearfreeDecomposition(f, eta, residual, eta_p, pts)


def covariant_self_derivative(g: MetricField, p_vec: VectorField, pts, scheme: Optional[Scheme] = None) -> np.ndarray:
    """nabla_p p in coordinates."""
    pts = as_points(pts, g.dim)
    p = p_vec(pts)
    G = christoffel_coordinate(g, pts, scheme)
    return np.einsum("nk,nmk->nm", p, p_vec.jac(pts)) + np.einsum("nmkr,nk,nr->nm", G, p, p)


def geodesic_factor(g: MetricField, p_vec: VectorField, pts, scheme: Optional[Scheme] = None):
    """lambda = f + eta(p)/2 and the residual max_e |g(nabla_p p - lambda p, e)| over coordinate e."""
    dec = shearfree_decompose(g, p_vec, pts, scheme)
    lam = dec.f + 0.5 * dec.eta_p
    acc = covariant_self_derivative(g, p_vec, dec.points, scheme)
    p = p_vec(dec.points)
    gv = np.einsum("nij,nj->ni", g(dec.points), acc - lam[:, None] * p)
    return lam, np.abs(gv).max(axis=1)


# ---------------------------------------------------------------------------
# standardization along a fiber


def rk4(rhs: Callable, y0: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Classical fixed-step RK4 on the grid ``t``; ``rhs(t, y)``."""
    y = np.empty((len(t),) + np.shape(y0))
    y[0] = y0
    for i in range(len(t) - 1):
        h = t[i + 1] - t[i]
        k1 = rhs(t[i], y[i])
        k2 = rhs(t[i] + h / 2, y[i] + h / 2 * k1)
        k3 = rhs(t[i] + h / 2, y[i] + h / 2 * k2)
        k4 = rhs(t[i + 1], y[i] + h * k3)
        y[i + 1] = y[i] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y[i + 1])):
            raise ODEStepError(f"non-finite RK4 state at t = {t[i + 1]}")
    return y


@dataclass
class StandardPair:
    """Rescaling functions sigma_tilde(t), tau(t) along one fiber."""

    t: np.ndarray
    sigma_tilde: np.ndarray
    tau: np.ndarray
    d_sigma_tilde: np.ndarray
    d_tau: np.ndarray
    anchor: float

    def __post_init__(self):
        self._s = CubicHermiteSpline(self.t, self.sigma_tilde, self.d_sigma_tilde)
        self._tau = CubicHermiteSpline(self.t, self.tau, self.d_tau)

    def sigma_of(self, t, nu: int = 0):
        return self._s(t, nu)

    def tau_of(self, t, nu: int = 0):
        return self._tau(t, nu)


def _fiber_rates(g, p_vec, base_point, t):
    pts = np.repeat(np.asarray(base_point, dtype=float)[None], len(t), axis=0)
    pts = np.concatenate([t[:, None], pts], axis=1)
    dec = shearfree_decompose(g, p_vec, pts)
    return dec.f, dec.eta_p


def standardize_pair(g: MetricField, p_vec: VectorField, fiber_interval, base_point, anchor: float = 1.0,
                     step: float = 1e-3, tol: float = 1e-8) -> StandardPair:
    """Integrate sigma_tilde' = -sigma_tilde f and tau' = -tau eta(p)/2 from the anchor.

    ``base_point`` holds the non-fiber coordinates (u, x...).  Both functions
    equal 1 at the anchor; the anchor is clamped into the interval.
    """
    a, b = map(float, fiber_interval)
    anchor = min(max(anchor, a), b)
    n_lo = int(round((anchor - a) / step))
    n_hi = int(round((b - anchor) / step))
    t = np.clip(anchor + step * np.arange(-n_lo, n_hi + 1), a, b)
    half = np.clip(anchor + 0.5 * step * np.arange(-2 * n_lo, 2 * n_hi + 1), a, b)
    f, ep = _fiber_rates(g, p_vec, base_point, half)
    table = {round(float(s), 12): (fi, ei) for s, fi, ei in zip(half, f, ep)}

    def rhs(s, y):
        fi, ei = table[round(float(s), 12)]
        return np.array([-y[0] * fi, -0.5 * y[1] * ei])

    def solve(grid):
        up = rk4(rhs, np.ones(2), grid[grid >= anchor - 1e-15])
        down = rk4(rhs, np.ones(2), grid[grid <= anchor + 1e-15][::-1])[::-1]
        return np.concatenate([down[:-1], up])

    y = solve(t)
    # step-doubling estimate on every other node
    coarse = solve(t[(np.arange(len(t)) - n_lo) % 2 == 0]) if len(t) > 4 else y[::2]
    err = np.max(np.abs(coarse - y[(np.arange(len(t)) - n_lo) % 2 == 0])) / 15.0
    if err > tol:
        raise ODEStepError(f"RK4 step-doubling error {err:.3e} exceeds {tol}")
    fg, eg = f[::2], ep[::2]
    return StandardPair(t, y[:, 0], y[:, 1], -y[:, 0] * fg, -0.5 * y[:, 1] * eg, anchor)


def rescaled_pair(g: MetricField, pair: StandardPair):
    """(sigma_tilde g, tau p_o) as a metric field and vector field on the same chart."""

    def comp(pts):
        return pair.sigma_of(pts[:, 0])[:, None, None] * g(pts)

    def partials(pts):
        d = pair.sigma_of(pts[:, 0])[:, None, None, None] * g.derivative(pts)
        d[:, 0] += pair.sigma_of(pts[:, 0], 1)[:, None, None] * g(pts)
        return d

    metric = MetricField(g.chart, comp, g.signature, g.orientation, partials)
    dim = g.dim

    def vals(pts):
        out = np.zeros((len(pts), dim))
        out[:, 0] = pair.tau_of(pts[:, 0])
        return out

    def jac(pts):
        out = np.zeros((len(pts), dim, dim))
        out[:, 0, 0] = pair.tau_of(pts[:, 0], 1)
        return out

    return metric, VectorField(dim, vals, jac)
