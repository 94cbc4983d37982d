"""Magnetic fluxes through triangles and the phase functions built from them.

A magnetic field is an antisymmetric matrix-valued function B(x).  The flux
through the triangle <x, y, x'> is

    Phi(x, y, x') = sum_{j,k} (y_j - x_j)(x'_k - y_k)
                    * int_0^1 dt int_0^t ds  B_jk(x + t(y-x) + s(x'-y)),

and the transverse-gauge phase attached to a pair of points is
phi(y, z) = -Phi(0, y, z).  Everything here is a pure function of
immutable inputs.
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "ConstantField",
    "GeneralField",
    "SlowlyVaryingField",
    "FieldSpec",
    "Triangle",
    "QuadratureRule",
    "unit_field_matrix",
    "flux_triangle",
    "flux_triangle_batch",
    "transverse_gauge_phase",
    "transverse_gauge_phase_batch",
    "slowly_varying_phase",
    "slowly_varying_phase_batch",
    "cocycle_defect",
    "area_bound_certificate",
]

_ANTISYM_RTOL = 1e-12


def unit_field_matrix(dimension: int) -> np.ndarray:
    """Constant unit field: B_jk = 1 for j < k, antisymmetric."""
    b = np.triu(np.ones((dimension, dimension)), k=1)
    return b - b.T


def _check_antisymmetric(values: np.ndarray) -> None:
    # values has shape (..., d, d); reject fields that are not 2-forms.
    defect = np.max(np.abs(values + np.swapaxes(values, -1, -2)))
    scale = 1.0 + np.max(np.abs(values))
    if not np.isfinite(values).all():
        raise ValueError("field evaluation returned non-finite components")
    if defect > _ANTISYM_RTOL * scale:
        raise ValueError(f"field matrix is not antisymmetric (defect {defect:.3e})")


@dataclass(frozen=True)
class ConstantField:
    """Spatially constant field given by one antisymmetric d x d matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("constant field matrix must be square")
        _check_antisymmetric(m)
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def bound(self) -> float:
        """Sup norm of the components, available for area certificates."""
        return float(np.max(np.abs(self.matrix)))

    def b_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(self.matrix, points.shape[:-1] + self.matrix.shape)


@dataclass(frozen=True)
class GeneralField:
    """Bounded smooth field.  `component` maps points (m, d) -> (m, d, d).

    `bound` is the caller-supplied sup norm of the components; it feeds the
    explicit constants of the area certificates.
    """

    dimension: int
    component: Callable[[np.ndarray], np.ndarray]
    bound: float

    def __post_init__(self):
        if not np.isfinite(self.bound) or self.bound < 0:
            raise ValueError("general field requires a finite sup-norm bound")
        probe = np.zeros((2, self.dimension))
        probe[1] = 0.37
        vals = np.asarray(self.component(probe), dtype=float)
        if vals.shape != (2, self.dimension, self.dimension):
            raise ValueError("field component must map (m, d) points to (m, d, d) matrices")
        _check_antisymmetric(vals)

    def b_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, self.dimension)
        vals = np.asarray(self.component(flat), dtype=float)
        _check_antisymmetric(vals)
        return vals.reshape(points.shape[:-1] + (self.dimension, self.dimension))


@dataclass(frozen=True)
class SlowlyVaryingField:
    """Field generated by a vector potential observed at the scale eps.

    `potential` maps points (m, d) -> (m, d); `jacobian` maps points (m, d)
    to (m, d, d) with entry [j, k] = d potential_j / d x_k.  The induced
    two-form is B = jac^T - jac, evaluated at eps * x by the phase routines.
    """

    dimension: int
    potential: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    check_points: np.ndarray | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        pts = self.check_points
        if pts is None:
            rng = np.random.default_rng(7)
            pts = rng.uniform(-2.0, 2.0, size=(8, self.dimension))
        pts = np.asarray(pts, dtype=float)
        jac = np.asarray(self.jacobian(pts), dtype=float)
        if jac.shape != pts.shape + (self.dimension,):
            raise ValueError("jacobian must map (m, d) points to (m, d, d)")
        # The supplied jacobian must agree with finite differences of A.
        h = 1e-6
        for k in range(self.dimension):
            step = np.zeros(self.dimension)
            step[k] = h
            fd = (np.asarray(self.potential(pts + step)) - np.asarray(self.potential(pts - step))) / (2 * h)
            if np.max(np.abs(fd - jac[:, :, k])) > 1e-5 * (1.0 + np.max(np.abs(jac))):
                raise ValueError("jacobian disagrees with finite differences of the potential")

    def b_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, self.dimension)
        jac = np.asarray(self.jacobian(flat), dtype=float)
        if not np.isfinite(jac).all():
            raise ValueError("jacobian evaluation returned non-finite values")
        b = np.swapaxes(jac, -1, -2) - jac
        return b.reshape(points.shape[:-1] + (self.dimension, self.dimension))


FieldSpec = ConstantField | GeneralField | SlowlyVaryingField


@dataclass(frozen=True)
class Triangle:
    """Oriented triangle <x, y, z> in R^d; collinear vertices are legal."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if not (x.shape == y.shape == z.shape) or x.ndim != 1:
            raise ValueError("triangle vertices must be d-vectors of equal dimension")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def dimension(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor rule on the simplex {0 <= s <= t <= 1}.

    The t axis uses Gauss-Jacobi nodes with the simplex Jacobian t absorbed
    into the weight, the u axis plain Gauss-Legendre, and s = t*u.  With
    `order` points per axis the rule integrates bivariate polynomials of
    total degree 2*order - 1 exactly; the weights sum to the simplex
    measure 1/2.
    """

    order: int
    t: np.ndarray = dc_field(init=False, repr=False)
    s: np.ndarray = dc_field(init=False, repr=False)
    w: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("quadrature order must be a positive integer")
        xj, wj = roots_jacobi(self.order, 0.0, 1.0)
        t = (xj + 1.0) / 2.0
        wt = wj / 4.0
        xg, wg = np.polynomial.legendre.leggauss(self.order)
        u = (xg + 1.0) / 2.0
        wu = wg / 2.0
        tt = np.repeat(t, self.order)
        uu = np.tile(u, self.order)
        ww = np.repeat(wt, self.order) * np.tile(wu, self.order)
        object.__setattr__(self, "t", tt)
        object.__setattr__(self, "s", tt * uu)
        object.__setattr__(self, "w", ww)


DEFAULT_RULE_ORDER = 20


def _require_same_dimension(field: FieldSpec, dimension: int) -> None:
    if field.dimension != dimension:
        raise ValueError(
            f"field dimension {field.dimension} does not match point dimension {dimension}"
        )


def flux_triangle(field: FieldSpec, tri: Triangle, rule: QuadratureRule) -> float:
    """Flux of the field through the triangle <x, y, z>.

    Constant fields use the closed form (1/2) (y-x)^T B (z-y); the quadrature
    rule is only consulted for position-dependent fields.
    """
    _require_same_dimension(field, tri.dimension)
    u = tri.y - tri.x
    v = tri.z - tri.y
    if isinstance(field, ConstantField):
        return 0.5 * float(u @ field.matrix @ v)
    pts = tri.x + rule.t[:, None] * u + rule.s[:, None] * v
    bvals = field.b_at(pts)
    integrand = np.einsum("mjk,j,k->m", bvals, u, v)
    return float(rule.w @ integrand)


def flux_triangle_batch(
    field: FieldSpec,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    rule: QuadratureRule,
    chunk: int = 4096,
) -> np.ndarray:
    """Vectorized fluxes for stacked triangles x, y, z of shape (n, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    _require_same_dimension(field, x.shape[1])
    u = y - x
    v = z - y
    if isinstance(field, ConstantField):
        return 0.5 * np.einsum("nj,jk,nk->n", u, field.matrix, v)
    out = np.empty(x.shape[0])
    for lo in range(0, x.shape[0], chunk):
        hi = min(lo + chunk, x.shape[0])
        pts = (
            x[lo:hi, None, :]
            + rule.t[None, :, None] * u[lo:hi, None, :]
            + rule.s[None, :, None] * v[lo:hi, None, :]
        )
        bvals = field.b_at(pts)
        integrand = np.einsum("nmjk,nj,nk->nm", bvals, u[lo:hi], v[lo:hi])
        out[lo:hi] = integrand @ rule.w
    return out


def transverse_gauge_phase(
    field: FieldSpec, y: np.ndarray, z: np.ndarray, rule: QuadratureRule
) -> float:
    """Transverse-gauge phase phi(y, z) = -Phi(0, y, z) for a unit field strength."""
    if isinstance(field, SlowlyVaryingField):
        raise ValueError("transverse gauge phase expects a constant or general field")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return -flux_triangle(field, Triangle(np.zeros_like(y), y, z), rule)


def slowly_varying_phase(
    field: SlowlyVaryingField,
    eps: float,
    x: np.ndarray,
    xp: np.ndarray,
    rule: QuadratureRule,
) -> float:
    """Phase -eps * Phi^{B_eps}(0, x, x') with B_eps(p) = (dA)(eps * p)."""
    if not isinstance(field, SlowlyVaryingField):
        raise ValueError("slowly varying phase requires a slowly varying field")
    if eps == 0.0:
        return 0.0
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    scaled = _ScaledArgumentField(field, eps)
    return -eps * flux_triangle(scaled, Triangle(np.zeros_like(x), x, xp), rule)


@dataclass(frozen=True)
class _ScaledArgumentField:
    """View of a slowly varying field's two-form evaluated at eps * x."""

    base: SlowlyVaryingField
    eps: float

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def b_at(self, points: np.ndarray) -> np.ndarray:
        return self.base.b_at(self.eps * np.asarray(points, dtype=float))


def transverse_gauge_phase_batch(
    field: FieldSpec,
    y: np.ndarray,
    z: np.ndarray,
    rule: QuadratureRule,
    chunk: int = 4096,
) -> np.ndarray:
    """Vectorized phi(y_i, z_i) = -Phi(0, y_i, z_i) for stacked pairs."""
    if isinstance(field, SlowlyVaryingField):
        raise ValueError("transverse gauge phase expects a constant or general field")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return -flux_triangle_batch(field, np.zeros_like(y), y, z, rule, chunk=chunk)


def slowly_varying_phase_batch(
    field: SlowlyVaryingField,
    eps: float,
    x: np.ndarray,
    xp: np.ndarray,
    rule: QuadratureRule,
    chunk: int = 4096,
) -> np.ndarray:
    """Vectorized -eps * Phi^{B_eps}(0, x_i, x'_i) for stacked pairs."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    if eps == 0.0:
        return np.zeros(x.shape[0])
    scaled = _ScaledArgumentField(field, eps)
    return -eps * flux_triangle_batch(scaled, np.zeros_like(x), x, xp, rule, chunk=chunk)


def cocycle_defect(
    field: FieldSpec,
    eps: float,
    x: np.ndarray,
    y: np.ndarray,
    xp: np.ndarray,
    rule: QuadratureRule,
) -> float:
    """Stokes residual phi(x,y) + phi(y,x') - phi(x,x') + Phi(x,y,x') at strength eps.

    Zero up to rounding for constant fields (the closed forms cancel
    algebraically) and up to quadrature error otherwise.
    """
    if isinstance(field, SlowlyVaryingField):
        raise ValueError("cocycle defect expects a constant or general field")
    phases = (
        transverse_gauge_phase(field, x, y, rule)
        + transverse_gauge_phase(field, y, xp, rule)
        - transverse_gauge_phase(field, x, xp, rule)
    )
    tri = Triangle(np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(xp, dtype=float))
    return eps * (phases + flux_triangle(field, tri, rule))


def _field_bound(field: FieldSpec) -> float:
    if isinstance(field, ConstantField):
        return field.bound
    if isinstance(field, GeneralField):
        return field.bound
    raise ValueError("area bound certificate requires a field carrying a sup-norm bound")


def area_bound_certificate(
    field: FieldSpec,
    eps: float,
    x: np.ndarray,
    y: np.ndarray,
    xp: np.ndarray,
    rule: QuadratureRule | None = None,
) -> tuple[float, float]:
    """Certified flux bound: returns (lhs, rhs) with lhs <= rhs + 1e-10.

    lhs = |Phi^{eps B}(x, y, x')| and
    rhs = sqrt(d(d-1)/2) * C_B * |eps|/2 * |x-x'| * |x-y|^{1/2} * |y-x'|^{1/2}.
    The combinatorial factor counts the independent field components; it is 1
    in dimension two, where the flux is bounded by C_B times the triangle
    area, and the area by the mixed product of side lengths above.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xp = np.asarray(xp, dtype=float)
    c_b = _field_bound(field)
    rule = rule if rule is not None else QuadratureRule(DEFAULT_RULE_ORDER)
    lhs = abs(eps * flux_triangle(field, Triangle(x, y, xp), rule))
    d = x.shape[0]
    components = np.sqrt(d * (d - 1) / 2.0)
    rhs = (
        components
        * c_b
        * abs(eps)
        / 2.0
        * np.linalg.norm(x - xp)
        * np.sqrt(np.linalg.norm(x - y))
        * np.sqrt(np.linalg.norm(y - xp))
    )
    return lhs, float(rhs)
