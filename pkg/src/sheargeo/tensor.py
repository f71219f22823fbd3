"""Chart-based tensor calculus on dense component arrays.

Every pointwise routine works on a batch of points given as an ``(N, dim)``
array and evaluates all of them in one vectorised call.  Tensor values carry
the batch axis first, e.g. a metric evaluates to ``(N, dim, dim)``.

Index conventions
-----------------
* Christoffel symbols: ``G[n, l, m, k]`` is Gamma^l_{mk} at point ``n``.
* Riemann tensor: ``R[n, r, s, m, v]`` is R^r_{smv}, the ``r`` component of
  R(d_m, d_v) d_s with R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y].
* Ricci: Ric_{sv} = R^r_{srv}.
* Forms are stored as dense antisymmetric arrays whose entries are the values
  of the form on coordinate vectors, so dx^dy has entry +1 at ``[x, y]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MissingDerivative, NotSPD, OutOfChart, SingularMetric

DET_TOL = 1e-12

# central first-derivative stencils by order: (offsets, weights)
_STENCILS = {
    2: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    4: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
    6: (np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]), np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / 60.0),
    8: (np.array([-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0]),
        np.array([3.0, -32.0, 168.0, -672.0, 672.0, -168.0, 32.0, -3.0]) / 840.0),
}


@dataclass(frozen=True)
class Scheme:
    """How derivatives are taken: ``analytic`` or ``central`` differences."""

    kind: str = "central"
    h: float = 1e-5
    order: int = 4

    def __post_init__(self):
        if self.kind not in ("analytic", "central"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.order not in _STENCILS:
            raise ValueError(f"stencil order must be one of {sorted(_STENCILS)}")


ANALYTIC = Scheme("analytic")
FIRST = Scheme("central", 1e-5, 4)
CURVATURE = Scheme("central", 1e-3, 4)


def as_points(pts, dim: Optional[int] = None) -> np.ndarray:
    """Return ``pts`` as a float ``(N, dim)`` array."""
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or (dim is not None and arr.shape[1] != dim):
        raise ValueError(f"expected points of shape (N, {dim}), got {np.shape(pts)}")
    return arr


@dataclass(frozen=True)
class Chart:
    """A coordinate patch with an open validity box and a safety margin."""

    name: str
    coord_names: tuple
    box: tuple
    margin: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "coord_names", tuple(self.coord_names))
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        if len(self.coord_names) != len(self.box) or not self.coord_names:
            raise ValueError("coord_names and box must have the same positive length")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        for lo, hi in self.box:
            if not hi - lo > 2 * self.margin:
                raise ValueError(f"box interval ({lo}, {hi}) too small for margin {self.margin}")

    @property
    def dim(self) -> int:
        return len(self.coord_names)

    def index(self, name: str) -> int:
        return self.coord_names.index(name)

    def inner_box(self) -> np.ndarray:
        b = np.array(self.box)
        return np.stack([b[:, 0] + self.margin, b[:, 1] - self.margin], axis=1)

    def contains(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        ib = self.inner_box()
        return np.all((pts >= ib[:, 0]) & (pts <= ib[:, 1]), axis=1)

    def require(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        inside = self.contains(pts)
        if not inside.all():
            bad = pts[~inside][0]
            raise OutOfChart(f"point {bad.tolist()} outside chart {self.name!r} (margin {self.margin})")
        return pts

    def grid(self, counts: dict, fixed: Optional[dict] = None) -> np.ndarray:
        """Tensor grid spanning the inner box; ``fixed`` pins coordinates."""
        fixed = dict(fixed or {})
        ib = self.inner_box()
        axes = []
        for i, name in enumerate(self.coord_names):
            if name in fixed:
                axes.append(np.array([float(fixed[name])]))
            else:
                count = int(counts[name])
                if count < 2:
                    raise ValueError(f"grid count for {name!r} must be >= 2")
                axes.append(np.linspace(ib[i, 0], ib[i, 1], count))
        mesh = np.meshgrid(*axes, indexing="ij")
        return self.require(np.stack([m.ravel() for m in mesh], axis=1))

    def sample(self, n: int, rng: np.random.Generator, fixed: Optional[dict] = None) -> np.ndarray:
        ib = self.inner_box()
        pts = ib[:, 0] + (ib[:, 1] - ib[:, 0]) * rng.random((n, self.dim))
        for name, value in (fixed or {}).items():
            pts[:, self.index(name)] = value
        return pts


@dataclass(frozen=True)
class MetricField:
    """Symmetric bilinear form components on a chart.

    ``partials(pts)`` returns ``(N, dim, dim, dim)`` with ``[n, k, i, j]`` the
    derivative d_k g_ij; ``second_partials`` returns ``[n, k, l, i, j]``.
    """

    chart: Chart
    components: Callable[[np.ndarray], np.ndarray]
    signature: tuple
    orientation: int = 1
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None
    second_partials: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __call__(self, pts) -> np.ndarray:
        return self.components(as_points(pts, self.dim))

    def derivative(self, pts, scheme: Optional[Scheme] = None) -> np.ndarray:
        pts = as_points(pts, self.dim)
        scheme = scheme or (ANALYTIC if self.partials is not None else FIRST)
        if scheme.kind == "analytic":
            if self.partials is None:
                raise MissingDerivative("metric has no analytic partials")
            return self.partials(pts)
        return fd_gradient(self.components, pts, scheme.h, scheme.order)


@dataclass(frozen=True)
class VectorField:
    """Vector field with optional analytic Jacobian ``jac[n, mu, k] = d_k X^mu``."""

    dim: int
    values: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, pts) -> np.ndarray:
        return self.values(as_points(pts, self.dim))

    def jac(self, pts, scheme: Optional[Scheme] = None) -> np.ndarray:
        pts = as_points(pts, self.dim)
        if self.jacobian is not None and (scheme is None or scheme.kind == "analytic"):
            return self.jacobian(pts)
        scheme = scheme if scheme is not None and scheme.kind == "central" else FIRST
        # fd_gradient puts the derivative axis first: [n, k, mu]
        return np.swapaxes(fd_gradient(self.values, pts, scheme.h, scheme.order), 1, 2)

    @classmethod
    def coordinate(cls, dim: int, index: int, scale: float = 1.0) -> "VectorField":
        e = np.zeros(dim)
        e[index] = scale
        return cls(
            dim,
            lambda pts: np.broadcast_to(e, pts.shape).copy(),
            lambda pts: np.zeros((pts.shape[0], dim, dim)),
        )

    @classmethod
    def constant(cls, vector) -> "VectorField":
        v = np.asarray(vector, dtype=float)
        d = v.size
        return cls(d, lambda pts: np.broadcast_to(v, pts.shape).copy(), lambda pts: np.zeros((pts.shape[0], d, d)))


@dataclass(frozen=True)
class DifferentialForm:
    """A k-form given by dense antisymmetric components.

    ``partials`` (optional) returns ``(N, dim, dim, ..., dim)`` with the
    derivative index right after the batch axis.
    """

    degree: int
    dim: int
    components: Callable[[np.ndarray], np.ndarray]
    partials: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, pts) -> np.ndarray:
        return self.components(as_points(pts, self.dim))

    def derivative(self, pts, scheme: Optional[Scheme] = None) -> np.ndarray:
        pts = as_points(pts, self.dim)
        scheme = scheme or (ANALYTIC if self.partials is not None else FIRST)
        if scheme.kind == "analytic":
            if self.partials is None:
                raise MissingDerivative("form has no analytic partials")
            return self.partials(pts)
        return fd_gradient(self.components, pts, scheme.h, scheme.order)

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        _same_shape(self, other)
        partials = None
        if self.partials is not None and other.partials is not None:
            partials = lambda p, a=self, b=other: a.partials(p) + b.partials(p)
        return DifferentialForm(self.degree, self.dim, lambda p, a=self, b=other: a(p) + b(p), partials)

    def __sub__(self, other: "DifferentialForm") -> "DifferentialForm":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "DifferentialForm":
        partials = None if self.partials is None else (lambda p, a=self: c * a.partials(p))
        return DifferentialForm(self.degree, self.dim, lambda p, a=self: c * a(p), partials)

    @classmethod
    def from_array(cls, values) -> "DifferentialForm":
        """Constant form; ``values`` is antisymmetrized on construction."""
        values = np.asarray(values, dtype=float)
        k = values.ndim
        dim = values.shape[0] if k else 0
        values = antisymmetrize(values[None])[0] if k > 1 else values

        def comp(pts):
            return np.broadcast_to(values, (pts.shape[0],) + values.shape).copy()

        def part(pts):
            return np.zeros((pts.shape[0], dim) + values.shape)

        return cls(k, dim, comp, part)


def _same_shape(a: DifferentialForm, b: DifferentialForm):
    if a.degree != b.degree or a.dim != b.dim:
        raise ValueError("forms differ in degree or dimension")


# ---------------------------------------------------------------------------
# finite differences


def fd_gradient(f: Callable[[np.ndarray], np.ndarray], pts, h: float = 1e-5, order: int = 4) -> np.ndarray:
    """Central-difference gradient of a batched field.

    ``f`` maps ``(M, d)`` points to ``(M, *shape)``; the result has shape
    ``(N, d, *shape)`` with the derivative index second.
    """
    pts = as_points(pts)
    n, d = pts.shape
    offsets, weights = _STENCILS[order]
    s = offsets.size
    shift = h * offsets[None, None, :, None] * np.eye(d)[None, :, None, :]
    shifted = pts[:, None, None, :] + shift
    vals = np.asarray(f(shifted.reshape(-1, d)))
    vals = vals.reshape((n, d, s) + vals.shape[1:])
    # stencils are antisymmetric: pair f(x + kh) - f(x - kh) so constants difference to exactly zero
    half = s // 2
    paired = vals[:, :, half:] - vals[:, :, :half][:, :, ::-1]
    return np.einsum("nds...,s->nd...", paired, weights[half:]) / h


# ---------------------------------------------------------------------------
# metric algebra


def invert_metric(g) -> np.ndarray:
    """Inverse of a (batch of) symmetric matrices, symmetrized."""
    g = np.asarray(g, dtype=float)
    det = np.linalg.det(g)
    if np.any(np.abs(det) <= DET_TOL):
        raise SingularMetric(f"|det g| = {np.min(np.abs(det)):.3e} below {DET_TOL}")
    inv = np.linalg.inv(g)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))


def _christoffel_from(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    # lowered[n, r, m, k] = d_m g_kr + d_k g_mr - d_r g_mk
    lowered = np.einsum("nmkr->nrmk", dg) + np.einsum("nkmr->nrmk", dg) - dg
    return 0.5 * np.einsum("nlr,nrmk->nlmk", ginv, lowered)


def christoffel_coordinate(g: MetricField, pts, scheme: Optional[Scheme] = None, check: bool = True) -> np.ndarray:
    """Levi-Civita symbols ``G[n, l, m, k]`` = Gamma^l_{mk} in coordinates.

    ``check=False`` skips the chart test, for stencil points near the margin.
    """
    pts = g.chart.require(pts) if check else as_points(pts, g.dim)
    return _christoffel_from(invert_metric(g(pts)), g.derivative(pts, scheme))


def metric_compatibility(g: MetricField, pts, scheme: Optional[Scheme] = None) -> np.ndarray:
    """Per-point max of |nabla_k g_ij| rebuilt from the Christoffel symbols."""
    pts = g.chart.require(pts)
    gv = g(pts)
    dg = g.derivative(pts, scheme)
    G = _christoffel_from(invert_metric(gv), dg)
    nab = dg - np.einsum("nlki,nlj->nkij", G, gv) - np.einsum("nlkj,nil->nkij", G, gv)
    return np.abs(nab).reshape(len(pts), -1).max(axis=1)


@dataclass
class TensorResult:
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def riemann_from(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Riemann R^r_{smv} from Christoffels and their derivatives ``dG[n, k, l, m, j]``."""
    term = np.einsum("nmrvs->nrsmv", dG) - np.einsum("nvrms->nrsmv", dG)
    term += np.einsum("nrml,nlvs->nrsmv", G, G) - np.einsum("nrvl,nlms->nrsmv", G, G)
    return term


def curvature_coordinate(g: MetricField, pts, scheme: Optional[Scheme] = None) -> TensorResult:
    """Riemann, Ricci and scalar curvature in coordinates.

    With ``scheme.kind == 'analytic'`` the metric must supply first and second
    partials.  Otherwise the Christoffel symbols (analytic when available,
    else central differences at the same step) are differentiated with the
    requested central stencil.
    """
    pts = g.chart.require(pts)
    scheme = scheme or CURVATURE
    gv = g(pts)
    ginv = invert_metric(gv)
    if scheme.kind == "analytic":
        if g.partials is None or g.second_partials is None:
            raise MissingDerivative("analytic curvature needs first and second partials")
        dg = g.partials(pts)
        ddg = g.second_partials(pts)
        G = _christoffel_from(ginv, dg)
        dginv = -np.einsum("nla,nkab,nbr->nklr", ginv, dg, ginv)
        lowered = np.einsum("nmkr->nrmk", dg) + np.einsum("nkmr->nrmk", dg) - dg
        dlow = (np.einsum("njmkr->njrmk", ddg) + np.einsum("njkmr->njrmk", ddg) - ddg)
        dG = 0.5 * (np.einsum("njlr,nrmk->njlmk", dginv, lowered) + np.einsum("nlr,njrmk->njlmk", ginv, dlow))
    else:
        inner = ANALYTIC if g.partials is not None else Scheme("central", scheme.h, scheme.order)

        def gamma(q):
            return _christoffel_from(invert_metric(g.components(q)), g.derivative(q, inner))

        G = gamma(pts)
        dG = fd_gradient(gamma, pts, scheme.h, scheme.order)
    riem = riemann_from(G, dG)
    ric = np.einsum("nrsrv->nsv", riem)
    scal = np.einsum("nsv,nsv->n", ginv, ric)
    return TensorResult(riem, ric, scal)


# ---------------------------------------------------------------------------
# exterior algebra


def _perm_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def antisymmetrize(arr: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    """Average over signed permutations of the last ``k`` axes."""
    arr = np.asarray(arr)
    k = arr.ndim - 1 if k is None else k
    if k < 2:
        return arr
    lead = arr.ndim - k
    out = np.zeros_like(arr)
    for perm in itertools.permutations(range(k)):
        out = out + _perm_sign(perm) * np.transpose(arr, tuple(range(lead)) + tuple(lead + p for p in perm))
    return out / math.factorial(k)


def wedge_values(a: np.ndarray, k: int, b: np.ndarray, l: int) -> np.ndarray:
    """Wedge product of batched component arrays of degrees ``k`` and ``l``."""
    n = a.shape[0]
    if k == 0:
        return a.reshape((n,) + (1,) * l) * b
    if l == 0:
        return a * b.reshape((n,) + (1,) * k)
    outer = a.reshape(a.shape + (1,) * l) * b.reshape((n,) + (1,) * k + b.shape[1:])
    coef = math.factorial(k + l) / (math.factorial(k) * math.factorial(l))
    return coef * antisymmetrize(outer, k + l)


def wedge(a: DifferentialForm, b: DifferentialForm) -> DifferentialForm:
    if a.dim != b.dim:
        raise ValueError("forms live on charts of different dimension")
    return DifferentialForm(
        a.degree + b.degree, a.dim, lambda p: wedge_values(a(p), a.degree, b(p), b.degree)
    )


def interior_values(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Contraction of vectors ``(N, dim)`` into the first slot of forms."""
    if w.ndim == 1:
        return np.zeros_like(w)
    return np.einsum("ni,ni...->n...", v, w)


def interior(X: VectorField, form: DifferentialForm) -> DifferentialForm:
    if form.degree == 0:
        raise ValueError("cannot contract a vector into a 0-form")
    return DifferentialForm(form.degree - 1, form.dim, lambda p: interior_values(X(p), form(p)))


def exterior_derivative(form: DifferentialForm, scheme: Optional[Scheme] = None) -> DifferentialForm:
    """The exterior derivative as a new (lazily evaluated) form.

    Uses the form's analytic partials when present, else central differences.
    """
    k = form.degree

    def comp(pts):
        D = form.derivative(pts, scheme)
        if k == 0:
            return D
        return (k + 1) * antisymmetrize(D, k + 1)

    return DifferentialForm(k + 1, form.dim, comp)


def _raise_all(w: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    n, dim = ginv.shape[0], ginv.shape[1]
    k = w.ndim - 1
    for axis in range(1, k + 1):
        moved = np.moveaxis(w, axis, -1)
        shp = moved.shape
        moved = (moved.reshape(n, -1, dim) @ ginv).reshape(shp)
        w = np.moveaxis(moved, -1, axis)
    return w


def hodge_values(w: np.ndarray, k: int, g: np.ndarray, orientation: int = 1) -> np.ndarray:
    """Hodge star of batched k-form components ``w`` under metrics ``g``.

    (*b)_J = orientation * sqrt|det g| * b^I eps_{IJ}, summed over increasing
    multi-indices I, so that a ^ *b = <a, b> vol.
    """
    n, dim = g.shape[0], g.shape[-1]
    det = np.linalg.det(g)
    if np.any(np.abs(det) <= DET_TOL):
        raise SingularMetric(f"|det g| = {np.min(np.abs(det)):.3e} below {DET_TOL}")
    ginv = invert_metric(g)
    vol = orientation * np.sqrt(np.abs(det))
    raised = _raise_all(np.asarray(w, dtype=float).reshape((n,) + (dim,) * k), ginv)
    out = np.zeros((n,) + (dim,) * (dim - k))
    for I in itertools.combinations(range(dim), k):
        J = tuple(i for i in range(dim) if i not in I)
        value = _perm_sign(I + J) * vol * (raised[(slice(None),) + I] if k else raised)
        if dim - k == 0:
            out = out + value
            continue
        for perm in itertools.permutations(range(dim - k)):
            out[(slice(None),) + tuple(J[p] for p in perm)] = _perm_sign(perm) * value
    return out


def hodge_star(form: DifferentialForm, g: MetricField) -> DifferentialForm:
    if form.dim != g.dim:
        raise ValueError("form and metric dimensions differ")
    k = form.degree
    return DifferentialForm(g.dim - k, g.dim, lambda p: hodge_values(form(p), k, g(p), g.orientation))


def double_star_sign(k: int, n: int, det_sign: int) -> int:
    return (-1) ** (k * (n - k)) * det_sign


# ---------------------------------------------------------------------------
# Lie derivatives


def lie_derivative(X: VectorField, T, pts, scheme: Optional[Scheme] = None, rank: Optional[int] = None) -> np.ndarray:
    """Lie derivative of a covariant tensor field along ``X``.

    ``T`` is a :class:`MetricField`, a :class:`DifferentialForm` or a plain
    callable returning ``(N, dim, ..., dim)``; in the last case ``rank`` gives
    the number of tensor indices.  Uses
    (L_X T)_{a..} = X^c d_c T_{a..} + sum_i T_{..c..} d_{a_i} X^c.
    """
    pts = as_points(pts, X.dim)
    if isinstance(T, (MetricField, DifferentialForm)):
        vals = T(pts)
        dT = T.derivative(pts, scheme)
    else:
        vals = np.asarray(T(pts))
        s = scheme if scheme is not None and scheme.kind == "central" else FIRST
        dT = fd_gradient(T, pts, s.h, s.order)
    r = vals.ndim - 1 if rank is None else rank
    xv = X(pts)
    jac = X.jac(pts, None if scheme is None or scheme.kind == "analytic" else scheme)
    out = np.einsum("nc,nc...->n...", xv, dT)
    for i in range(r):
        axis = i + 1
        # T with index i contracted against d_{a_i} X^c
        moved = np.moveaxis(vals, axis, -1)  # (..., c)
        contrib = np.einsum("n...c,nca->n...a", moved, jac)
        out = out + np.moveaxis(contrib, -1, axis)
    return out


# ---------------------------------------------------------------------------
# SPD matrix functions


def spd_inverse_sqrt(S, sym_tol: float = 1e-12, eig_tol: float = 1e-12) -> np.ndarray:
    """S^{-1/2} of a symmetric positive definite matrix (or batch)."""
    S = np.asarray(S, dtype=float)
    if np.max(np.abs(S - np.swapaxes(S, -1, -2)), initial=0.0) > sym_tol * max(1.0, np.max(np.abs(S))):
        raise NotSPD("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + np.swapaxes(S, -1, -2)))
    if np.any(w <= eig_tol):
        raise NotSPD(f"smallest eigenvalue {np.min(w):.3e} not above {eig_tol}")
    R = (V * (1.0 / np.sqrt(w))[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (R + np.swapaxes(R, -1, -2))


def spd_sqrt(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    w, V = np.linalg.eigh(0.5 * (S + np.swapaxes(S, -1, -2)))
    if np.any(w <= 0):
        raise NotSPD(f"smallest eigenvalue {np.min(w):.3e} not positive")
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
