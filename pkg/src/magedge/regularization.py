"""Mollifier machinery: smoothed kernels and their difference certificates.

The smoothing weight is the autoconvolution of the scaled standard bump
f(x) = exp(-1/(1 - |x|^2)) on |x| < 1.  With f_delta(x) = f(delta x) the
weight w = f_delta * f_delta peaks at w(0) = delta^-d ||f||_2^2, vanishes
beyond |x| >= 2/delta, and deviates from its peak like |x|^alpha
delta^(alpha-d) for alpha in [1, 2].  Dividing a hopping kernel entrywise by
w(0) and multiplying by w(gamma - gamma') therefore shrinks every entry and
perturbs the operator by O(delta^min(alpha,2)) in the weighted hopping norm.

All y-integrations here are continuous quadratures on uniform tensor grids
(trapezoid weights degenerate to the plain Riemann sum because the bump
vanishes smoothly at the boundary); they are never replaced by lattice sums.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lattice_operator import GeneralKernel, HoppingSymbol, schur_alpha_norm
from .magnetic_phase import (
    ConstantField,
    FieldSpec,
    QuadratureRule,
    SlowlyVaryingField,
    flux_triangle_batch,
)

__all__ = [
    "Mollifier",
    "autoconvolution",
    "mollified_kernel",
    "mollifier_difference_bound",
    "schur_difference_certificate",
    "linear_term_integral",
]

STEP_FACTOR_DEFAULT = 0.01
STEP_FACTOR_MAX = 0.05


def bump(points: np.ndarray) -> np.ndarray:
    """The standard bump exp(-1/(1-|x|^2)) on |x| < 1, zero outside."""
    points = np.asarray(points, dtype=float)
    r2 = np.sum(points * points, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Scaled bump f_delta(x) = f(delta x) with its convolution grid.

    The grid step divides 1 exactly, so integer lattice offsets land on grid
    nodes and the Cauchy-Schwarz domination w(x) <= w(0) survives the
    quadrature without slack.  Steps above 0.05/delta are refused as
    under-resolved.
    """

    dimension: int
    delta: float
    step: float | None = None

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.dimension not in (1, 2):
            raise ValueError("the mollifier harness is restricted to dimensions 1 and 2")
        desired = self.step if self.step is not None else STEP_FACTOR_DEFAULT / self.delta
        if desired > STEP_FACTOR_MAX / self.delta:
            raise ValueError(
                f"grid step {desired} is under-resolved for delta={self.delta} "
                f"(limit {STEP_FACTOR_MAX / self.delta})"
            )
        object.__setattr__(self, "step", 1.0 / int(np.ceil(1.0 / desired)))

    @property
    def support_radius(self) -> float:
        return 1.0 / self.delta

    def f_delta(self, points: np.ndarray) -> np.ndarray:
        return bump(self.delta * np.asarray(points, dtype=float))

    def _axis(self, center: float = 0.0) -> np.ndarray:
        k = int(np.ceil(self.support_radius / self.step))
        return center + self.step * np.arange(-k, k + 1)

    @cached_property
    def grid(self) -> np.ndarray:
        """Symmetric tensor grid covering the support of f_delta, shape (m, d)."""
        axes = [self._axis()] * self.dimension
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def _f_on_grid(self) -> np.ndarray:
        return self.f_delta(self.grid)

    @cached_property
    def cell(self) -> float:
        return self.step**self.dimension

    @cached_property
    def tilde_zero(self) -> float:
        """Peak value w(0) = ||f_delta||_2^2 under the shared grid quadrature."""
        f = self._f_on_grid
        return float(np.sum(f * f) * self.cell)

    def norm_sq_refined(self, refine: int = 2) -> float:
        """||f_delta||_2^2 on a grid refined by the given factor; oracle use."""
        fine = Mollifier(self.dimension, self.delta, step=self.step / refine)
        return fine.tilde_zero

    def normalization_defect(self) -> float:
        """|w(0) / ||f_delta||_2^2 - 1| with the norm from a refined grid."""
        return abs(self.tilde_zero / self.norm_sq_refined() - 1.0)


def autoconvolution(moll: Mollifier, x: np.ndarray) -> float:
    """(f_delta * f_delta)(x); exactly zero once |x| >= 2/delta."""
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) >= 2.0 * moll.support_radius:
        return 0.0
    shifted = moll.f_delta(x[None, :] - moll.grid)
    return float(np.sum(shifted * moll._f_on_grid) * moll.cell)


def _autoconvolution_batch(moll: Mollifier, xs: np.ndarray) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return np.array([autoconvolution(moll, x) for x in xs])


def mollified_kernel(symbol: HoppingSymbol, moll: Mollifier) -> GeneralKernel:
    """Kernel lam(gamma - gamma') * w(gamma - gamma') / w(0); entrywise smaller than lam.

    Offsets beyond the support of w are annihilated; when that wipes out the
    whole off-diagonal part the result is legal but a warning is emitted.
    """
    if symbol.dimension != moll.dimension:
        raise ValueError("symbol and mollifier dimensions differ")
    w0 = moll.tilde_zero
    ratios = {}
    for offset in symbol.support:
        pt = np.asarray(offset, dtype=float)
        ratios[offset] = autoconvolution(moll, pt) / w0
    off_diagonal = [g for g in symbol.support if any(g)]
    if off_diagonal and all(ratios[g] == 0.0 for g in off_diagonal):
        warnings.warn(
            f"delta={moll.delta} annihilates the entire off-diagonal part",
            stacklevel=2,
        )
    coeffs = symbol.coefficients

    def entry(gamma, gamma_prime):
        offset = tuple(int(a - b) for a, b in zip(gamma, gamma_prime))
        lam = coeffs.get(offset)
        if lam is None:
            return 0.0j
        return lam * ratios[offset]

    return GeneralKernel(
        dimension=symbol.dimension,
        entry=entry,
        name=f"{symbol.name or 'symbol'}|delta={moll.delta!r}",
    )


def mollifier_difference_bound(moll: Mollifier, alpha: float, xs: np.ndarray) -> float:
    """Measured constant  max |w(x) - w(0)| / (|x|^alpha delta^(alpha-d)).

    Stable (within a factor of two) across delta halvings for alpha in [1, 2];
    samples must sit inside the support of w.
    """
    if not 1.0 <= alpha <= 2.0:
        raise ValueError("alpha must lie in [1, 2]")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    norms = np.linalg.norm(xs, axis=1)
    if np.any(norms >= 2.0 * moll.support_radius):
        raise ValueError("samples must lie inside the support of the autoconvolution")
    keep = norms > 0
    if not np.any(keep):
        return 0.0
    values = _autoconvolution_batch(moll, xs[keep])
    w0 = moll.tilde_zero
    scale = moll.delta ** (alpha - moll.dimension)
    return float(np.max(np.abs(values - w0) / (norms[keep] ** alpha * scale)))


def schur_difference_certificate(
    symbol: HoppingSymbol, moll: Mollifier, alpha: float
) -> tuple[float, float]:
    """Certified bound on the smoothing error in the hopping norm.

    lhs = sum_gamma |lam(gamma)| |w(gamma)/w(0) - 1| bounds the operator-norm
    distance between the smoothed and original operators (row-sum test), and
    rhs = c * delta^a * (alpha-weighted hopping sum) with a = min(alpha, 2)
    and the constant c measured as max |w(gamma)/w(0) - 1| / (|gamma|^a
    delta^a) over the support.  lhs <= rhs holds because |gamma| <= <gamma>.
    """
    if alpha < 1.0:
        raise ValueError("alpha must be at least 1")
    if symbol.dimension != moll.dimension:
        raise ValueError("symbol and mollifier dimensions differ")
    a = min(alpha, 2.0)
    w0 = moll.tilde_zero
    lhs = 0.0
    constant = 0.0
    for offset, lam in symbol.coefficients.items():
        if not any(offset):
            continue
        deviation = abs(autoconvolution(moll, np.asarray(offset, dtype=float)) / w0 - 1.0)
        lhs += abs(lam) * deviation
        dist = float(np.linalg.norm(offset))
        constant = max(constant, deviation / (dist**a * moll.delta**a))
    rhs = constant * moll.delta**a * schur_alpha_norm(symbol, a)
    return lhs, rhs


def linear_term_integral(
    moll: Mollifier,
    field: FieldSpec,
    x: np.ndarray,
    xp: np.ndarray,
    rule: QuadratureRule | None = None,
) -> float:
    """int f_delta(x-y) f_delta(y-x') Phi(x, y, x') dy over the support overlap.

    For constant fields the integrand is odd about the segment midpoint, so
    the value vanishes (to rounding on the symmetric grid).  For varying
    fields it is generally nonzero and measures the first-order obstruction.
    """
    if isinstance(field, SlowlyVaryingField):
        raise ValueError("pass the two-form directly; slowly varying scaling is probed via general fields")
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.shape != (moll.dimension,) or xp.shape != (moll.dimension,):
        raise ValueError("points must match the mollifier dimension")
    mid = 0.5 * (x + xp)
    axes = [moll._axis(center=c) for c in mid]
    grids = np.meshgrid(*axes, indexing="ij")
    ys = np.stack([g.ravel() for g in grids], axis=1)
    weights = moll.f_delta(x[None, :] - ys) * moll.f_delta(ys - xp[None, :])
    keep = weights > 0.0
    if not np.any(keep):
        return 0.0
    ys = ys[keep]
    weights = weights[keep]
    if isinstance(field, ConstantField):
        # Phi(x, y, x') = 1/2 (y-x)^T B (x'-y); exact, no flux quadrature
        u = ys - x[None, :]
        v = xp[None, :] - ys
        flux = 0.5 * np.einsum("nj,jk,nk->n", u, field.matrix, v)
    else:
        rule = rule if rule is not None else QuadratureRule(10)
        flux = flux_triangle_batch(
            field,
            np.broadcast_to(x, ys.shape),
            ys,
            np.broadcast_to(xp, ys.shape),
            rule,
        )
    return float(np.sum(weights * flux) * moll.cell)
