"""Generalized electromagnetic plane waves F = Re(theta ^ dz^1 ^ ... ^ dz^{k-1}).

The complex form is carried as a pair of real forms.  Lie derivatives use
Cartan's formula L_X = d i_X + i_X d.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from .bundle import BundleMetric
from .errors import KernelDimensionMismatch
from .report import CheckRecord, Report
from .tensor import (
    DifferentialForm,
    Scheme,
    VectorField,
    as_points,
    double_star_sign,
    exterior_derivative,
    hodge_star,
    hodge_values,
    interior,
    interior_values,
    invert_metric,
    wedge_values,
)


@dataclass(frozen=True)
class WaveForm:
    F: DifferentialForm
    F_imag: DifferentialForm
    Fdual: DifferentialForm
    theta: DifferentialForm
    metric: BundleMetric

    @property
    def degree(self) -> int:
        return self.F.degree


def _complex_wave(metric: BundleMetric, pts) -> np.ndarray:
    pts = as_points(pts, metric.dim)
    base = metric.base
    n = metric.dim
    N = len(pts)
    _, dz = base.holomorphic(pts[:, 2:])
    th = metric.theta_values(pts).astype(complex)
    out, deg = th, 1
    for a in range(dz.shape[1]):
        lifted = np.zeros((N, n), dtype=complex)
        lifted[:, 2:] = dz[:, a]
        out = wedge_values(out, deg, lifted, 1)
        deg += 1
    return out


def build_wave(metric: BundleMetric) -> WaveForm:
    """Real and imaginary parts of theta ^ dz^1 ^ ... ^ dz^{k-1} on the total space."""
    n = metric.dim
    k = n // 2
    metric.base.holomorphic(metric.chart.inner_box().mean(axis=1)[None, 2:])  # raises early without a chart
    if metric.base.dim // 2 != k - 1:
        raise ValueError("base complex dimension must be n/2 - 1")
    F = DifferentialForm(k, n, lambda p: np.real(_complex_wave(metric, p)))
    Fi = DifferentialForm(k, n, lambda p: np.imag(_complex_wave(metric, p)))
    theta = DifferentialForm(1, n, metric.theta_values)
    return WaveForm(F, Fi, hodge_star(F, metric), theta, metric)


def broken_wave(w: WaveForm, eps: float = 1e-2) -> WaveForm:
    """F + eps du ^ dx^1 (degree 2) or F + eps du ^ dx^1 ^ dx^2 (higher degree): no longer coclosed."""
    n, k = w.metric.dim, w.degree
    extra = np.zeros((n,) * k)
    idx = (1,) + tuple(range(2, 2 + k - 1))
    extra[idx] = eps
    bump = DifferentialForm.from_array(extra * math.factorial(k))
    F = w.F + bump
    return WaveForm(F, w.F_imag, hodge_star(F, w.metric), w.theta, w.metric)


# the wave components are smooth, so roundoff dominates: a wider step than the
# default first-derivative stencil gives smaller residuals
WAVE_SCHEME = Scheme("central", 1e-3, 4)


def _pmax(a: np.ndarray) -> np.ndarray:
    return np.abs(a).reshape(a.shape[0], -1).max(axis=1)


def harmonicity_check(w: WaveForm, pts, scheme: Optional[Scheme] = None, tol: float = 1e-6, label: str = "") -> Report:
    """max |dF| and max |d*F| per point, by central differences."""
    pts = w.metric.chart.require(pts)
    scheme = scheme or WAVE_SCHEME
    grid = f"{len(pts)} points on {w.metric.chart.name}"
    tag = f".{label}" if label else ""
    report = Report()
    report.add(CheckRecord(f"wave.closed{tag}", "dF = 0", _pmax(exterior_derivative(w.F, scheme)(pts)), tol, grid, pts))
    report.add(CheckRecord(f"wave.coclosed{tag}", "d(*F) = 0", _pmax(exterior_derivative(w.Fdual, scheme)(pts)),
                           tol, grid, pts))
    return report


def joint_kernel(w: WaveForm, pts):
    """Singular values and the smallest right-singular vector of X -> (X ⌟ F, X ⌟ *F)."""
    pts = as_points(pts, w.metric.dim)
    F = w.F(pts)
    D = w.Fdual(pts)
    N, n = pts.shape
    M = np.concatenate([np.moveaxis(F, 1, -1).reshape(N, -1, n), np.moveaxis(D, 1, -1).reshape(N, -1, n)], axis=1)
    _, s, Vt = np.linalg.svd(M)
    return s, Vt[:, -1, :]


def lie_form(X: VectorField, form: DifferentialForm, pts, scheme: Optional[Scheme] = None) -> np.ndarray:
    """Cartan's formula d(i_X form) + i_X d(form)."""
    pts = as_points(pts, form.dim)
    scheme = scheme or WAVE_SCHEME
    first = exterior_derivative(interior(X, form), scheme)(pts)
    second = interior_values(X(pts), exterior_derivative(form, scheme)(pts))
    return first + second


def null_generator(metric: BundleMetric) -> VectorField:
    """p_o = g^{-1} theta as a vector field (equal to 2 d/dt for firm metrics)."""
    return VectorField(metric.dim, lambda p: np.einsum("nij,nj->ni", invert_metric(metric(p)), metric.theta_values(p)))


def flag_and_lie_check(w: WaveForm, pts, p_vec: Optional[VectorField] = None, scheme: Optional[Scheme] = None,
                       gap: float = 1e6, label: str = "") -> Report:
    """Joint kernel of (F, *F), Lie derivatives along the generator, and L_p theta = -f theta.

    Raises KernelDimensionMismatch when the kernel is not a line or does not
    contain ``p_vec``.
    """
    metric = w.metric
    pts = metric.chart.require(pts)
    p_vec = p_vec or null_generator(metric)
    grid = f"{len(pts)} points on {metric.chart.name}"
    tag = f".{label}" if label else ""
    s, v = joint_kernel(w, pts)
    ratio = s[:, -2] / np.maximum(s[:, -1], 1e-300)
    if np.any(ratio < gap) or np.any(s[:, -1] > 1e-8 * s[:, 0]):
        raise KernelDimensionMismatch(f"joint kernel of (F, *F) is not one-dimensional (min gap {ratio.min():.3e})")
    p = p_vec(pts)
    pn = p / np.linalg.norm(p, axis=1, keepdims=True)
    align = 1.0 - np.abs(np.einsum("ni,ni->n", pn, v))
    off = np.linalg.norm(np.concatenate([interior_values(p, w.F(pts)).reshape(len(pts), -1),
                                         interior_values(p, w.Fdual(pts)).reshape(len(pts), -1)], axis=1), axis=1)
    if np.any(align > 1e-8) or np.any(off > 1e-8 * np.linalg.norm(p, axis=1) * s[:, 0]):
        raise KernelDimensionMismatch("the vector field does not span the joint kernel of (F, *F)")
    report = Report()
    report.add(CheckRecord(f"wave.kernel_alignment{tag}", "ker F ∩ ker *F = span(p_o)", align, 1e-10, grid, pts))
    report.add(CheckRecord(f"wave.kernel_gap{tag}", "second smallest / smallest singular value >= gap",
                           gap / ratio, 1.0, grid, pts, note="residual is gap / observed ratio"))
    report.add(CheckRecord(f"wave.lie_F{tag}", "L_p F = 0", _pmax(lie_form(p_vec, w.F, pts, scheme)), 1e-7, grid, pts))
    report.add(CheckRecord(f"wave.lie_dual{tag}", "L_p *F = 0", _pmax(lie_form(p_vec, w.Fdual, pts, scheme)),
                           1e-7, grid, pts))
    Lth = lie_form(p_vec, w.theta, pts, scheme)
    th = w.theta(pts)
    f = -np.einsum("ni,ni->n", Lth, th) / np.einsum("ni,ni->n", th, th)
    report.add(CheckRecord(f"wave.lie_theta{tag}", "L_p theta = -f theta", _pmax(Lth + f[:, None] * th), 1e-8, grid, pts))
    report.quantities[f"wave.lie_theta_f{tag}"] = float(np.max(np.abs(f)))
    return report


def eigen_relation(w: WaveForm, pts):
    """Residual of *(F + iF') = c (F + iF') with c = +-i^{k-1}, one sign for the whole sample."""
    metric = w.metric
    pts = as_points(pts, metric.dim)
    k = w.degree
    Fc = w.F(pts) + 1j * w.F_imag(pts)
    g = metric(pts)
    star = hodge_values(np.real(Fc), k, g, metric.orientation) + 1j * hodge_values(np.imag(Fc), k, g, metric.orientation)
    best = None
    for sign in (1, -1):
        c = sign * (1j) ** (k - 1)
        r = _pmax(star - c * Fc)
        if best is None or r.max() < best[1].max():
            best = (sign, r)
    return best


def double_star_residual(w: WaveForm, pts) -> np.ndarray:
    metric = w.metric
    pts = as_points(pts, metric.dim)
    k, n = w.degree, metric.dim
    g = metric(pts)
    F = w.F(pts)
    twice = hodge_values(hodge_values(F, k, g, metric.orientation), n - k, g, metric.orientation)
    det_sign = int(np.sign(np.linalg.det(g[0])))
    return _pmax(twice - double_star_sign(k, n, det_sign) * F)


def structure_residuals(w: WaveForm, pts) -> dict:
    """theta ^ F, p_o ⌟ F and g(p_o, p_o) per point."""
    metric = w.metric
    pts = as_points(pts, metric.dim)
    F = w.F(pts)
    th = w.theta(pts)
    p = null_generator(metric)(pts)
    return {
        "theta_wedge_F": _pmax(wedge_values(th, 1, F, w.degree)),
        "generator_contraction": _pmax(interior_values(p, F)),
        "generator_null": np.abs(np.einsum("ni,nij,nj->n", p, metric(pts), p)),
    }
