"""Edge sweeps over the field strength and scaling-law certificates.

Sweeps collect E(eps) on a fixed box over a grid in (0, 1/2].  Fits extract
power-law and eps*ln(1/eps) models from the edge shifts; certificates bound
the ratio of the measured shift against the model scale and flag divergence
as eps -> 0.  The mid-convexity machinery measures the defect

    E((a+b)/2) - E(a)/2 - E(b)/2 <= M |(b-a)/2|^beta

on uniform grids and turns (M, S = sup|E|) into an explicit modulus of
continuity by dyadic subdivision.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice_operator import Box, PeierlsBuilder
from .magnetic_phase import FieldSpec
from .spectral import ConvergenceError, EdgeResult, edge

__all__ = [
    "EdgeSweep",
    "FitReport",
    "ScalingCertificate",
    "ModulusBound",
    "SweepError",
    "norm_sweep",
    "sweep_edges",
    "fit_power",
    "fit_power_log",
    "verify_scaling_bound",
    "midconvex_defect",
    "midconvex_modulus",
    "dyadic_depth",
    "midpoint_telescope",
]

NOISE_FACTOR = 1e3
REGIMES = ("holder", "log", "lipschitz")


class SweepError(RuntimeError):
    """Sweep aborted on solver non-convergence; carries the partial data."""

    def __init__(self, message: str, partial: dict):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class EdgeSweep:
    """Edges E(eps) over a strictly increasing grid in (0, 1/2], plus E(0)."""

    eps: np.ndarray
    edges: np.ndarray
    edge_zero: float
    which: str
    noise_floor: float
    residuals: np.ndarray
    residual_zero: float
    field_kind: str
    source: str = ""

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        if eps.ndim != 1 or eps.size == 0:
            raise ValueError("eps grid must be a non-empty 1-d array")
        if np.any(np.diff(eps) <= 0):
            raise ValueError("eps grid must be strictly increasing")
        if eps[0] <= 0 or eps[-1] > 0.5:
            raise ValueError("eps grid must lie in (0, 1/2]")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=float))
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=float))

    @property
    def deltas(self) -> np.ndarray:
        return np.abs(self.edges - self.edge_zero)

    @property
    def flagged(self) -> np.ndarray:
        """Points whose shift sits below the noise floor; excluded from fits."""
        return self.deltas < self.noise_floor

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eps", "edge", "delta_edge", "residual", "flagged"])
            for e, v, d, r, f in zip(
                self.eps, self.edges, self.deltas, self.residuals, self.flagged
            ):
                writer.writerow([repr(float(e)), repr(float(v)), repr(float(d)), repr(float(r)), int(f)])

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "eps": [float(e) for e in self.eps],
            "edges": [float(v) for v in self.edges],
            "edge_zero": self.edge_zero,
            "which": self.which,
            "noise_floor": self.noise_floor,
            "residuals": [float(r) for r in self.residuals],
            "residual_zero": self.residual_zero,
            "field_kind": self.field_kind,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EdgeSweep":
        return cls(
            eps=np.asarray(data["eps"], dtype=float),
            edges=np.asarray(data["edges"], dtype=float),
            edge_zero=float(data["edge_zero"]),
            which=data["which"],
            noise_floor=float(data["noise_floor"]),
            residuals=np.asarray(data["residuals"], dtype=float),
            residual_zero=float(data["residual_zero"]),
            field_kind=data["field_kind"],
            source=data.get("source", ""),
        )


def sweep_edges(
    source,
    field: FieldSpec,
    which: str,
    eps_grid,
    box: Box,
    tol: float = 1e-10,
    seed: int = 0,
    rule=None,
    workers: int = 1,
    method: str = "auto",
) -> EdgeSweep:
    """E(eps) per grid point plus E(0), same box and solver settings throughout.

    Grid points are independent; `workers` > 1 dispatches them to a thread
    pool with results gathered in grid order.  Non-convergence at any point
    aborts with the partial results attached to the raised SweepError.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    builder = PeierlsBuilder(source, field, box, rule)
    matrix_zero = builder.build(0.0)
    scale = max(matrix_zero.inf_norm(), 1.0)
    noise_floor = NOISE_FACTOR * tol * scale
    zero_result = edge(matrix_zero, which, tol, seed, method=method)

    def one(e: float) -> EdgeResult:
        return edge(builder.build(e), which, tol, seed, method=method)

    results: list[EdgeResult | None] = [None] * eps_grid.size
    failure: ConvergenceError | None = None
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, float(e)) for e in eps_grid]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except ConvergenceError as err:
                    failure = failure or err
    else:
        for i, e in enumerate(eps_grid):
            try:
                results[i] = one(float(e))
            except ConvergenceError as err:
                failure = err
                break
    if failure is not None or any(r is None for r in results):
        partial = {
            "eps": eps_grid,
            "edges": [r.value if r else math.nan for r in results],
            "edge_zero": zero_result.value,
        }
        raise SweepError("edge solver did not converge on at least one grid point", partial)
    return EdgeSweep(
        eps=eps_grid,
        edges=np.array([r.value for r in results]),
        edge_zero=zero_result.value,
        which=which,
        noise_floor=noise_floor,
        residuals=np.array([r.residual for r in results]),
        residual_zero=zero_result.residual,
        field_kind=matrix_zero.field_kind,
        source=matrix_zero.source,
    )


def norm_sweep(sup: EdgeSweep, inf: EdgeSweep) -> EdgeSweep:
    """Combine sup and inf sweeps into the operator-norm sweep.

    The norm is the larger absolute edge pointwise, so no further solver work
    is needed; both sweeps must share the grid, box and solver settings.
    """
    if sup.which != "sup" or inf.which != "inf":
        raise ValueError("norm_sweep expects a sup sweep and an inf sweep")
    if sup.eps.shape != inf.eps.shape or np.any(sup.eps != inf.eps):
        raise ValueError("sweeps must share the same eps grid")
    return EdgeSweep(
        eps=sup.eps,
        edges=np.maximum(np.abs(sup.edges), np.abs(inf.edges)),
        edge_zero=max(abs(sup.edge_zero), abs(inf.edge_zero)),
        which="norm",
        noise_floor=max(sup.noise_floor, inf.noise_floor),
        residuals=np.maximum(sup.residuals, inf.residuals),
        residual_zero=max(sup.residual_zero, inf.residual_zero),
        field_kind=sup.field_kind,
        source=sup.source,
    )


@dataclass(frozen=True)
class FitReport:
    """Fitted scaling model; residual is reported in log space."""

    model: str
    coefficient: float
    exponent: float
    residual: float
    points_used: int

    def as_dict(self) -> dict:
        return {
            "schema_version": 1,
            "model": self.model,
            "coefficient": self.coefficient,
            "exponent": self.exponent,
            "residual": self.residual,
            "points_used": self.points_used,
        }


def _usable(sweep: EdgeSweep) -> np.ndarray:
    return (~sweep.flagged) & (sweep.deltas > 0)


def fit_power(sweep: EdgeSweep) -> FitReport:
    """Least squares of ln(delta E) against ln(eps): delta E = C * eps^p."""
    mask = _usable(sweep)
    if int(mask.sum()) < 3:
        raise ValueError("insufficient points above the noise floor for a power fit")
    x = np.log(sweep.eps[mask])
    y = np.log(sweep.deltas[mask])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.linalg.norm(y - (slope * x + intercept)))
    return FitReport(
        model="power",
        coefficient=float(np.exp(intercept)),
        exponent=float(slope),
        residual=residual,
        points_used=int(mask.sum()),
    )


def fit_power_log(sweep: EdgeSweep) -> FitReport:
    """Least squares for C in delta E = C * eps * ln(1/eps); exponent fixed at 1."""
    mask = _usable(sweep)
    if int(mask.sum()) < 3:
        raise ValueError("insufficient points above the noise floor for a power-log fit")
    eps = sweep.eps[mask]
    if np.any(eps >= 1.0 / math.e):
        raise ValueError("power-log fits need eps < 1/e so that ln(1/eps) > 1")
    g = eps * np.log(1.0 / eps)
    d = sweep.deltas[mask]
    coeff = float(np.sum(d * g) / np.sum(g * g))
    residual = float(np.linalg.norm(np.log(d) - np.log(coeff * g)))
    return FitReport(
        model="power_log",
        coefficient=coeff,
        exponent=1.0,
        residual=residual,
        points_used=int(mask.sum()),
    )


@dataclass(frozen=True)
class ScalingCertificate:
    """Ratio of measured edge shifts to a model scale, with a divergence flag.

    `small_eps_max` is the maximum ratio over the third of the grid with the
    smallest eps; the certificate trips when it exceeds twice the median of
    all ratios, i.e. when the ratio grows as eps -> 0.
    """

    regime: str
    which: str
    alpha: float
    norm_value: float
    eps: np.ndarray
    ratios: np.ndarray
    ratio_max: float
    ratio_median: float
    small_eps_max: float
    diverged: bool
    points_used: int

    def as_dict(self) -> dict:
        return {
            "schema_version": 1,
            "regime": self.regime,
            "which": self.which,
            "alpha": self.alpha,
            "norm_value": self.norm_value,
            "eps": [float(e) for e in self.eps],
            "ratios": [float(r) for r in self.ratios],
            "ratio_max": self.ratio_max,
            "ratio_median": self.ratio_median,
            "small_eps_max": self.small_eps_max,
            "diverged": self.diverged,
            "points_used": self.points_used,
        }


def verify_scaling_bound(
    sweep: EdgeSweep,
    alpha: float,
    schur_norms: dict[float, float],
    regime: str,
) -> ScalingCertificate:
    """Certificate for |E(eps) - E(0)| against the regime's model scale.

    holder:    delta E / (norm_alpha * eps^(alpha/2)),   1 <= alpha < 2
    log:       delta E / (norm_2 * eps * ln(1/eps)),     alpha >= 2
    lipschitz: delta E / (norm_2 * eps),                 alpha >= 2 and a
               constant or slowly varying field
    """
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    if regime == "holder":
        if not (1.0 <= alpha < 2.0):
            raise ValueError("holder regime requires 1 <= alpha < 2")
        norm_key = alpha
    else:
        if alpha < 2.0:
            raise ValueError(f"{regime} regime requires alpha >= 2")
        norm_key = 2.0
    if regime == "lipschitz" and sweep.field_kind not in ("constant", "slowly-varying"):
        raise ValueError("lipschitz regime requires a constant or slowly varying field")
    try:
        norm_value = float(schur_norms[norm_key])
    except KeyError as exc:
        raise ValueError(f"schur_norms must provide the norm at alpha={norm_key}") from exc
    eps = sweep.eps
    if regime == "holder":
        denom = norm_value * eps ** (alpha / 2.0)
    elif regime == "log":
        denom = norm_value * eps * np.log(1.0 / eps)
    else:
        denom = norm_value * eps
    ratios = sweep.deltas / denom
    # divergence is judged on points whose shift is resolved above the noise
    # floor; sub-floor ratios are solver noise over a shrinking denominator
    mask = ~sweep.flagged
    judged = ratios[mask] if np.any(mask) else ratios
    k = max(1, judged.size // 3)
    small_eps_max = float(np.max(judged[:k]))
    ratio_median = float(np.median(judged))
    return ScalingCertificate(
        regime=regime,
        which=sweep.which,
        alpha=alpha,
        norm_value=norm_value,
        eps=eps,
        ratios=ratios,
        ratio_max=float(np.max(ratios)),
        ratio_median=ratio_median,
        small_eps_max=small_eps_max,
        diverged=bool(small_eps_max > 2.0 * ratio_median),
        points_used=int(mask.sum()),
    )


def midconvex_defect(xs, values, beta: float) -> float:
    """Largest mid-convexity defect constant measured on a uniform grid.

    M = max over pairs (a, b) with an on-grid midpoint of
        [E((a+b)/2) - E(a)/2 - E(b)/2] / |(b-a)/2|^beta,
    floored at zero.  Only on-grid midpoints enter, so no interpolation
    error pollutes the estimate.
    """
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.size < 5:
        raise ValueError("need at least 5 grid points")
    steps = np.diff(xs)
    h = steps[0]
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * abs(h):
        raise ValueError("mid-convexity defects require a uniform grid")
    best = 0.0
    n = xs.size
    for gap in range(2, n, 2):
        i = np.arange(0, n - gap)
        defect = values[i + gap // 2] - 0.5 * (values[i] + values[i + gap])
        half = (gap * h) / 2.0
        best = max(best, float(np.max(defect)) / half**beta)
    return max(0.0, best)


def dyadic_depth(eta: float) -> int:
    """Number of halvings N with 1 < eta * 2^N <= 2, for 0 < eta < 1/2."""
    if not 0.0 < eta < 0.5:
        raise ValueError("eta must lie in (0, 1/2)")
    n = int(math.floor(math.log2(1.0 / eta))) + 1
    while eta * 2.0**n > 2.0:
        n -= 1
    while eta * 2.0**n <= 1.0:
        n += 1
    return n


def midconvex_modulus(defect: float, sup_bound: float, beta: float, eta: float) -> float:
    """Explicit modulus of continuity for a bounded, almost mid-convex function.

    For a function bounded by S with mid-convexity defect constant M at
    exponent beta, |E(x + eta) - E(x)| is at most

        (2 S + M / (1 - 2^(beta-1))) * eta^beta        for 1/2 <= beta < 1,
        2 S eta + M eta N(eta)                         for beta = 1,

    where N(eta) counts the dyadic halvings with 1 < eta 2^N <= 2.  The
    secant slope entering the subdivision argument is bounded explicitly by
    2S, using that the bracketing interval always has length in (1, 2].
    """
    if not 0.0 < eta < 0.5:
        raise ValueError("eta must lie in (0, 1/2)")
    if not 0.5 <= beta <= 1.0:
        raise ValueError("beta must lie in [1/2, 1]")
    if defect < 0 or sup_bound < 0:
        raise ValueError("defect and sup bound must be nonnegative")
    if beta == 1.0:
        return 2.0 * sup_bound * eta + defect * eta * dyadic_depth(eta)
    c_beta = 2.0 * sup_bound + defect / (1.0 - 2.0 ** (beta - 1.0))
    return c_beta * eta**beta


@dataclass(frozen=True)
class ModulusBound:
    """Modulus-of-continuity data produced by the mid-convexity construction."""

    beta: float
    defect: float
    sup_bound: float
    eta_range: tuple[float, float] = (0.0, 0.5)
    c_beta: float | None = dc_field(default=None)

    def __post_init__(self):
        if not 0.5 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [1/2, 1]")
        if self.beta < 1.0:
            value = 2.0 * self.sup_bound + self.defect / (1.0 - 2.0 ** (self.beta - 1.0))
            object.__setattr__(self, "c_beta", value)

    def bound(self, eta: float) -> float:
        return midconvex_modulus(self.defect, self.sup_bound, self.beta, eta)

    def as_dict(self) -> dict:
        return {
            "schema_version": 1,
            "beta": self.beta,
            "defect": self.defect,
            "sup_bound": self.sup_bound,
            "c_beta": self.c_beta,
            "eta_range": list(self.eta_range),
        }


def midpoint_telescope(a: float, b: float, n: int) -> tuple[float, float]:
    """Endpoints of n nested halvings: ((1-2^-n) a + 2^-n b, 2^-n a + (1-2^-n) b).

    The geometric sum 2^-1 + ... + 2^-n collapses to 1 - 2^-n, so the points
    must coincide with a + 2^-n (b-a) and b - 2^-n (b-a); for n <= 40 the
    two evaluations are required to agree exactly in floating point, which
    they do on the dyadic grids this is used with.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    c = 2.0 ** (-n)
    left = (1.0 - c) * a + c * b
    right = c * a + (1.0 - c) * b
    if n <= 40:
        expect_left = a + c * (b - a)
        expect_right = b - c * (b - a)
        if left != expect_left or right != expect_right:
            raise ArithmeticError(
                "telescoped midpoints disagree with the collapsed form; "
                "inputs are not exactly representable for this depth"
            )
    return left, right
