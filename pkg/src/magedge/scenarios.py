"""Shipped scenario fixtures: one per scaling regime plus null controls."""

from dataclasses import dataclass

import numpy as np

from .lattice_operator import HoppingSymbol, schur_alpha_norm
from .magnetic_phase import (
    ConstantField,
    FieldSpec,
    GeneralField,
    SlowlyVaryingField,
    unit_field_matrix,
)

__all__ = [
    "Scenario",
    "SCENARIOS",
    "identity_symbol",
    "harper_symbol",
    "long_range_symbol",
    "unit_constant_field",
    "sin_bump_field",
    "sin_potential_field",
    "named_field",
    "get_scenario",
]

DEFAULT_EPS_GRID = tuple(2.0**-k for k in range(10, 2, -1))


def identity_symbol(dimension: int = 2) -> HoppingSymbol:
    return HoppingSymbol(dimension, {tuple([0] * dimension): 1.0}, name="identity")


def harper_symbol(dimension: int = 2) -> HoppingSymbol:
    """Nearest-neighbor unit hops on Z^d; d=2 is the Harper operator."""
    coeffs = {}
    for axis in range(dimension):
        e = [0] * dimension
        e[axis] = 1
        coeffs[tuple(e)] = 1.0
        coeffs[tuple(-v for v in e)] = 1.0
    return HoppingSymbol(dimension, coeffs, name="harper")


def long_range_symbol(dimension: int = 2, radius: int = 12, rate: float = 4.6) -> HoppingSymbol:
    """Real hops lam(gamma) = <gamma>^(-rate) on |gamma| <= radius."""
    coeffs = {}
    for gamma in np.ndindex(*([2 * radius + 1] * dimension)):
        gamma = tuple(g - radius for g in gamma)
        dist2 = sum(g * g for g in gamma)
        if dist2 <= radius * radius:
            coeffs[gamma] = (1.0 + dist2) ** (-rate / 2.0)
    return HoppingSymbol(dimension, coeffs, name=f"longrange-rate{rate!r}")


def unit_constant_field(dimension: int = 2) -> ConstantField:
    return ConstantField(unit_field_matrix(dimension))


def sin_bump_field() -> GeneralField:
    """d=2 bounded field B_12(x) = 1 + sin(x_1) sin(x_2) / 2."""

    def component(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        b12 = 1.0 + 0.5 * np.sin(points[..., 0]) * np.sin(points[..., 1])
        out = np.zeros(points.shape[:-1] + (2, 2))
        out[..., 0, 1] = b12
        out[..., 1, 0] = -b12
        return out

    return GeneralField(dimension=2, component=component, bound=1.5)


def sin_potential_field() -> SlowlyVaryingField:
    """d=2 potential A(x) = (-sin(x_2)/2, sin(x_1)/2) with bounded Jacobian."""

    def potential(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.stack(
            [-0.5 * np.sin(points[..., 1]), 0.5 * np.sin(points[..., 0])], axis=-1
        )

    def jacobian(points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1] + (2, 2))
        out[..., 0, 1] = -0.5 * np.cos(points[..., 1])
        out[..., 1, 0] = 0.5 * np.cos(points[..., 0])
        return out

    return SlowlyVaryingField(dimension=2, potential=potential, jacobian=jacobian)


_FIELD_BUILDERS = {
    "unit-constant": unit_constant_field,
    "sin-bump": sin_bump_field,
    "sin-potential": sin_potential_field,
}


def named_field(name: str, dimension: int = 2) -> FieldSpec:
    if name == "unit-constant":
        return unit_constant_field(dimension)
    try:
        return _FIELD_BUILDERS[name]()
    except KeyError as exc:
        raise ValueError(f"unknown field name {name!r}; known: {sorted(_FIELD_BUILDERS)}") from exc


@dataclass(frozen=True)
class Scenario:
    """A symbol/field pairing with sweep defaults for one scaling regime."""

    name: str
    symbol: HoppingSymbol
    field: FieldSpec
    box_radius: int
    eps_grid: tuple[float, ...]
    regime: str
    alpha: float

    def schur_norms(self) -> dict[float, float]:
        keys = {0.0, 2.0, self.alpha}
        return {k: schur_alpha_norm(self.symbol, k) for k in keys}


def _build_scenarios() -> dict[str, Scenario]:
    return {
        "harper-constant": Scenario(
            name="harper-constant",
            symbol=harper_symbol(),
            field=unit_constant_field(2),
            box_radius=30,
            eps_grid=DEFAULT_EPS_GRID,
            regime="lipschitz",
            alpha=2.0,
        ),
        "harper-general-field": Scenario(
            name="harper-general-field",
            symbol=harper_symbol(),
            field=sin_bump_field(),
            box_radius=30,
            eps_grid=DEFAULT_EPS_GRID,
            regime="log",
            alpha=2.0,
        ),
        "harper-slowly-varying": Scenario(
            name="harper-slowly-varying",
            symbol=harper_symbol(),
            field=sin_potential_field(),
            box_radius=30,
            eps_grid=DEFAULT_EPS_GRID,
            regime="lipschitz",
            alpha=2.0,
        ),
        "longrange-alpha15": Scenario(
            name="longrange-alpha15",
            symbol=long_range_symbol(),
            field=unit_constant_field(2),
            box_radius=20,
            eps_grid=DEFAULT_EPS_GRID,
            regime="holder",
            alpha=1.5,
        ),
        "identity-null": Scenario(
            name="identity-null",
            symbol=identity_symbol(),
            field=unit_constant_field(2),
            box_radius=7,
            eps_grid=DEFAULT_EPS_GRID,
            regime="lipschitz",
            alpha=2.0,
        ),
    }


SCENARIOS = _build_scenarios()


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError as exc:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from exc
