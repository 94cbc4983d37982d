"""Lattice hopping operators and their magnetic-phase matrices.

A translation-invariant operator is stored through its hopping coefficients
lam(gamma) on Z^d (finite support, lam(-gamma) = conj(lam(gamma))).  Applying
a magnetic field multiplies the entry between sites gamma and gamma' by the
unimodular factor exp(i phi(gamma, gamma')), where phi is the transverse-gauge
phase scaled by the field strength.  Matrices live on hard-truncated boxes
{-R..R}^d; compressions never overshoot the true spectral edges.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .magnetic_phase import (
    ConstantField,
    FieldSpec,
    GeneralField,
    QuadratureRule,
    SlowlyVaryingField,
    DEFAULT_RULE_ORDER,
    slowly_varying_phase_batch,
    transverse_gauge_phase_batch,
)

__all__ = [
    "SymbolTail",
    "HoppingSymbol",
    "GeneralKernel",
    "Box",
    "PeierlsMatrix",
    "PeierlsBuilder",
    "schur_alpha_norm",
    "weighted_l1",
    "build_peierls_matrix",
    "recenter_kernel",
    "gauge_conjugation_check",
    "row_schur_alpha_norm",
]


def bracket(points: np.ndarray) -> np.ndarray:
    """Japanese bracket <x> = sqrt(1 + |x|^2) along the last axis."""
    points = np.asarray(points, dtype=float)
    return np.sqrt(1.0 + np.sum(points * points, axis=-1))


@dataclass(frozen=True)
class SymbolTail:
    """Decay model lam(gamma) ~ amplitude * <gamma>^(-rate) beyond the stored support."""

    rate: float
    amplitude: float


@dataclass(frozen=True)
class HoppingSymbol:
    """Finitely supported hopping coefficients gamma -> lam(gamma) on Z^d."""

    dimension: int
    coefficients: dict[tuple[int, ...], complex]
    tail: SymbolTail | None = None
    name: str = ""

    def __post_init__(self):
        coeffs = {}
        for gamma, value in self.coefficients.items():
            gamma = tuple(int(g) for g in gamma)
            if len(gamma) != self.dimension:
                raise ValueError(f"offset {gamma} does not match dimension {self.dimension}")
            coeffs[gamma] = complex(value)
        for gamma, value in coeffs.items():
            neg = tuple(-g for g in gamma)
            mirror = coeffs.get(neg)
            if mirror is None or abs(mirror - value.conjugate()) > 1e-12 * (1 + abs(value)):
                raise ValueError(
                    f"self-adjointness violated: lam({neg}) must equal conj(lam({gamma}))"
                )
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def support(self) -> list[tuple[int, ...]]:
        return sorted(self.coefficients.keys())

    @property
    def support_radius(self) -> float:
        return max((np.linalg.norm(g) for g in self.coefficients), default=0.0)

    def tail_bound(self, alpha: float) -> float:
        """Upper bound on the discarded Schur mass sum_{|gamma|>r} |lam| <gamma>^alpha.

        Uses sup-norm shells of Z^d and the tail model; zero without one.
        Requires rate > dimension + alpha for the sum to converge.
        """
        if self.tail is None:
            return 0.0
        q = alpha - self.tail.rate
        d = self.dimension
        if q + d >= 0:
            raise ValueError("tail rate must exceed dimension + alpha")
        start = int(np.floor(self.support_radius)) + 1
        total = 0.0
        n = start
        while n < 10**7:
            count = (2 * n + 1) ** d - (2 * n - 1) ** d
            term = self.tail.amplitude * count * (1.0 + n * n) ** (q / 2.0)
            total += term
            if term < 1e-16 * max(total, 1e-300):
                break
            n += 1
        # integral remainder with count(t) <= 2 d (3t)^(d-1) for t >= 1
        remainder = self.tail.amplitude * 2 * d * 3 ** (d - 1) * n ** (d + q) / (-(d + q))
        return total + remainder

    def to_json_dict(self) -> dict:
        coeffs = {
            ",".join(str(g) for g in gamma): [value.real, value.imag]
            for gamma, value in sorted(self.coefficients.items())
        }
        return {"dimension": self.dimension, "coefficients": coeffs}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, data: dict, name: str = "") -> "HoppingSymbol":
        coeffs = {
            tuple(int(part) for part in key.split(",")): complex(re, im)
            for key, (re, im) in data["coefficients"].items()
        }
        return cls(dimension=int(data["dimension"]), coefficients=coeffs, name=name)

    @classmethod
    def load(cls, path) -> "HoppingSymbol":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh), name=str(path))


@dataclass(frozen=True)
class GeneralKernel:
    """Kernel entry(gamma, gamma') on Z^d x Z^d with entry(g, g') = conj(entry(g', g))."""

    dimension: int
    entry: callable
    name: str = ""
    schur_alpha_bound: dict | None = None

    def __post_init__(self):
        rng = np.random.default_rng(11)
        for _ in range(6):
            g = tuple(int(v) for v in rng.integers(-3, 4, size=self.dimension))
            gp = tuple(int(v) for v in rng.integers(-3, 4, size=self.dimension))
            a = complex(self.entry(g, gp))
            b = complex(self.entry(gp, g))
            if abs(a - b.conjugate()) > 1e-10 * (1.0 + abs(a)):
                raise ValueError("kernel is not Hermitian at sampled pairs")


@dataclass(frozen=True)
class Box:
    """Truncation box {-R..R}^d with a fixed lexicographic site ordering."""

    radius: int
    dimension: int

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("box radius must be a positive integer")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def site_count(self) -> int:
        return self.side**self.dimension

    def sites(self) -> np.ndarray:
        """All sites as an (N, d) integer array in enumeration order."""
        axes = [np.arange(-self.radius, self.radius + 1)] * self.dimension
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def index(self, gamma) -> int:
        gamma = np.asarray(gamma, dtype=int)
        if np.any(np.abs(gamma) > self.radius):
            raise ValueError(f"site {tuple(gamma)} outside box of radius {self.radius}")
        idx = 0
        for g in gamma:
            idx = idx * self.side + (int(g) + self.radius)
        return idx

    def indices(self, gammas: np.ndarray) -> np.ndarray:
        gammas = np.asarray(gammas, dtype=int)
        shifted = gammas + self.radius
        strides = self.side ** np.arange(self.dimension - 1, -1, -1)
        return shifted @ strides


@dataclass(frozen=True)
class PeierlsMatrix:
    """Hermitian matrix of a phase-dressed operator on a box, with provenance."""

    matrix: sp.csr_matrix
    box: Box
    source: str
    field_kind: str
    eps: float
    phase_variant: str

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def site_count(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def entry(self, gamma, gamma_prime) -> complex:
        return complex(self.matrix[self.box.index(gamma), self.box.index(gamma_prime)])

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.getH()
        if diff.nnz == 0:
            return 0.0
        return float(np.max(np.abs(diff.data)))

    def inf_norm(self) -> float:
        """Max absolute row sum; upper bound on the spectral norm."""
        return float(np.max(np.abs(self.matrix).sum(axis=1)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix.data))) if self.matrix.nnz else 0.0

    def to_coo_csv(self, path) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "re", "im"])
            for k in order:
                writer.writerow(
                    [coo.row[k], coo.col[k], repr(float(coo.data[k].real)), repr(float(coo.data[k].imag))]
                )

    @classmethod
    def from_dense(cls, array: np.ndarray, source: str = "dense", eps: float = 0.0) -> "PeierlsMatrix":
        array = np.asarray(array, dtype=complex)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError("matrix must be square")
        if np.max(np.abs(array - array.conj().T)) > 1e-12 * (1 + np.max(np.abs(array))):
            raise ValueError("matrix must be Hermitian")
        n = array.shape[0]
        box = Box(radius=max(1, (n - 1) // 2), dimension=1)
        return cls(
            matrix=sp.csr_matrix(array),
            box=box,
            source=source,
            field_kind="none",
            eps=eps,
            phase_variant="none",
        )


def schur_alpha_norm(symbol: HoppingSymbol, alpha: float) -> float:
    """Weighted hopping sum  sum_gamma |lam(gamma)| <gamma>^alpha.

    For translation-invariant symbols this equals both the row and column
    suprema of the off-diagonal decay norm of order alpha.
    """
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    gammas = np.array(list(symbol.coefficients.keys()), dtype=float)
    vals = np.array([abs(v) for v in symbol.coefficients.values()])
    if gammas.size == 0:
        return 0.0
    return float(np.sum(vals * bracket(gammas) ** alpha))


def weighted_l1(symbol: HoppingSymbol, weight: str) -> float:
    """Sum of |lam(gamma)| against |gamma| ("distance") or <gamma>^2 ("bracket_squared")."""
    gammas = np.array(list(symbol.coefficients.keys()), dtype=float)
    vals = np.array([abs(v) for v in symbol.coefficients.values()])
    if gammas.size == 0:
        return 0.0
    if weight == "distance":
        w = np.linalg.norm(gammas, axis=1)
    elif weight == "bracket_squared":
        w = bracket(gammas) ** 2
    else:
        raise ValueError("weight must be 'distance' or 'bracket_squared'")
    return float(np.sum(vals * w))


def _field_kind(field: FieldSpec) -> str:
    if isinstance(field, ConstantField):
        return "constant"
    if isinstance(field, GeneralField):
        return "general"
    return "slowly-varying"


def _half_support(symbol: HoppingSymbol) -> list[tuple[int, ...]]:
    # one representative per +-pair; lexicographically positive side
    return [g for g in symbol.support if g > tuple([0] * symbol.dimension)]


class PeierlsBuilder:
    """Assembles phase-dressed matrices on a fixed box, caching what is eps-independent.

    For constant and general fields the phase is linear in the field strength,
    so the per-pair flux table is computed once and rescaled per eps.  Slowly
    varying fields need a fresh quadrature pass for every eps.
    """

    def __init__(
        self,
        source: HoppingSymbol | GeneralKernel,
        field: FieldSpec,
        box: Box,
        rule: QuadratureRule | None = None,
    ):
        if source.dimension != box.dimension:
            raise ValueError("source and box dimensions differ")
        if field.dimension != box.dimension:
            raise ValueError("field and box dimensions differ")
        self.source = source
        self.field = field
        self.box = box
        self.rule = rule if rule is not None else QuadratureRule(DEFAULT_RULE_ORDER)
        self._linear_phase = not isinstance(field, SlowlyVaryingField)
        if isinstance(source, HoppingSymbol):
            self._prepare_symbol_pairs()
        else:
            self._prepare_kernel_pairs()

    def _prepare_symbol_pairs(self):
        box, symbol = self.box, self.source
        sites = box.sites()
        rows, cols, vals = [], [], []
        diag = symbol.coefficients.get(tuple([0] * symbol.dimension))
        if diag is not None:
            if abs(diag.imag) > 1e-14 * (1 + abs(diag)):
                raise ValueError("diagonal coefficient must be real")
            idx = np.arange(box.site_count)
            rows.append(idx)
            cols.append(idx)
            vals.append(np.full(box.site_count, diag.real, dtype=complex))
        pair_rows, pair_cols = [], []
        pair_vals = []
        for offset in _half_support(symbol):
            off = np.asarray(offset, dtype=int)
            mask = np.all(np.abs(sites + off) <= box.radius, axis=1)
            src = sites[mask]
            dst = src + off
            pair_rows.append(src)
            pair_cols.append(dst)
            # entry (row gamma, col gamma') carries lam(gamma - gamma') = conj(lam(offset))
            pair_vals.append(
                np.full(src.shape[0], symbol.coefficients[offset].conjugate(), dtype=complex)
            )
        if pair_rows:
            self._pair_src = np.concatenate(pair_rows)
            self._pair_dst = np.concatenate(pair_cols)
            self._pair_val = np.concatenate(pair_vals)
        else:
            self._pair_src = np.zeros((0, box.dimension), dtype=int)
            self._pair_dst = np.zeros((0, box.dimension), dtype=int)
            self._pair_val = np.zeros(0, dtype=complex)
        self._diag_rows = rows
        self._diag_cols = cols
        self._diag_vals = vals
        if self._linear_phase and self._pair_src.shape[0]:
            self._phase_unit = transverse_gauge_phase_batch(
                self.field, self._pair_src, self._pair_dst, self.rule
            )
        else:
            self._phase_unit = np.zeros(self._pair_src.shape[0])

    def _prepare_kernel_pairs(self):
        box = self.box
        sites = box.sites()
        n = box.site_count
        if n > 4096:
            raise ValueError("general kernels are assembled densely; box too large")
        iu, ju = np.triu_indices(n, k=1)
        self._pair_src = sites[iu]
        self._pair_dst = sites[ju]
        entry = self.source.entry
        self._pair_val = np.array(
            [entry(tuple(g), tuple(gp)) for g, gp in zip(self._pair_src, self._pair_dst)],
            dtype=complex,
        )
        self._diag_idx = np.arange(n)
        diag_vals = np.array([entry(tuple(g), tuple(g)) for g in sites], dtype=complex)
        if np.max(np.abs(diag_vals.imag), initial=0.0) > 1e-12 * (1 + np.max(np.abs(diag_vals), initial=0.0)):
            raise ValueError("kernel diagonal must be real")
        self._diag_rows = [self._diag_idx]
        self._diag_cols = [self._diag_idx]
        self._diag_vals = [diag_vals.real.astype(complex)]
        if self._linear_phase and self._pair_src.shape[0]:
            self._phase_unit = transverse_gauge_phase_batch(
                self.field, self._pair_src, self._pair_dst, self.rule
            )
        else:
            self._phase_unit = np.zeros(self._pair_src.shape[0])

    def _phases(self, eps: float) -> np.ndarray:
        if self._linear_phase:
            return eps * self._phase_unit
        return slowly_varying_phase_batch(
            self.field, eps, self._pair_src, self._pair_dst, self.rule
        )

    def build(self, eps: float) -> PeierlsMatrix:
        box = self.box
        n = box.site_count
        if self._pair_src.shape[0]:
            if eps == 0.0:
                upper = self._pair_val
            else:
                upper = self._pair_val * np.exp(1j * self._phases(eps))
            rows_u = box.indices(self._pair_src)
            cols_u = box.indices(self._pair_dst)
            rows = np.concatenate([rows_u, cols_u] + [r for r in self._diag_rows])
            cols = np.concatenate([cols_u, rows_u] + [c for c in self._diag_cols])
            data = np.concatenate([upper, upper.conjugate()] + [v for v in self._diag_vals])
        else:
            rows = np.concatenate([r for r in self._diag_rows]) if self._diag_rows else np.zeros(0, int)
            cols = np.concatenate([c for c in self._diag_cols]) if self._diag_cols else np.zeros(0, int)
            data = np.concatenate([v for v in self._diag_vals]) if self._diag_vals else np.zeros(0, complex)
        matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        result = PeierlsMatrix(
            matrix=matrix,
            box=box,
            source=getattr(self.source, "name", "") or type(self.source).__name__,
            field_kind=_field_kind(self.field),
            eps=eps,
            phase_variant="slowly-varying" if not self._linear_phase else "transverse-gauge",
        )
        defect = result.hermiticity_defect()
        if defect > 1e-14 * max(result.max_abs(), 1e-300):
            raise AssertionError(f"assembled matrix is not Hermitian (defect {defect:.3e})")
        return result


def build_peierls_matrix(
    source: HoppingSymbol | GeneralKernel,
    field: FieldSpec,
    eps: float,
    box: Box,
    rule: QuadratureRule | None = None,
) -> PeierlsMatrix:
    """One-shot assembly; use PeierlsBuilder directly for sweeps over eps."""
    return PeierlsBuilder(source, field, box, rule).build(eps)


def recenter_kernel(
    symbol: HoppingSymbol,
    field: FieldSpec,
    eps0: float,
    rule: QuadratureRule | None = None,
) -> GeneralKernel:
    """Absorbs the phase at strength eps0 into the kernel, for sweeps near eps0.

    The result has |entries| equal to the symbol's, hence identical weighted
    hopping norms.  Slowly varying fields are refused: their phase is not
    linear in the strength, so recentering does not commute with it.
    """
    if isinstance(field, SlowlyVaryingField):
        raise ValueError("recentering is not defined for slowly varying fields")
    rule = rule if rule is not None else QuadratureRule(DEFAULT_RULE_ORDER)
    coeffs = symbol.coefficients

    def entry(gamma, gamma_prime):
        offset = tuple(int(a - b) for a, b in zip(gamma, gamma_prime))
        lam = coeffs.get(offset)
        if lam is None:
            return 0.0j
        phase = eps0 * transverse_gauge_phase_batch(
            field,
            np.asarray([gamma], dtype=float),
            np.asarray([gamma_prime], dtype=float),
            rule,
        )[0]
        return lam * complex(np.exp(1j * phase))

    name = f"{symbol.name or 'symbol'}@eps0={eps0!r}"
    return GeneralKernel(dimension=symbol.dimension, entry=entry, name=name)


def gauge_conjugation_check(matrix: PeierlsMatrix, chi) -> float:
    """Max sorted-spectrum shift under the diagonal unitary exp(i chi(site)).

    Gauge transforms are exact unitary equivalences, so the return value is
    eigensolver noise only; the contract is <= 1e-10 * ||M||.
    """
    sites = matrix.box.sites()
    if sites.shape[0] != matrix.site_count:
        sites = sites[: matrix.site_count]
    chis = np.array([float(chi(tuple(s))) for s in sites])
    phase = np.exp(1j * chis)
    dense = matrix.toarray()
    conjugated = phase[:, None] * dense * phase.conjugate()[None, :]
    ev_a = np.linalg.eigvalsh(dense)
    ev_b = np.linalg.eigvalsh(conjugated)
    return float(np.max(np.abs(ev_a - ev_b)))


def row_schur_alpha_norm(matrix: PeierlsMatrix, gamma, alpha: float) -> float:
    """Row sum of |entries| weighted by <gamma - gamma'>^alpha, from the matrix itself."""
    row = matrix.matrix.getrow(matrix.box.index(gamma)).tocoo()
    if row.nnz == 0:
        return 0.0
    sites = matrix.box.sites()
    offsets = np.asarray(gamma, dtype=float) - sites[row.col]
    return float(np.sum(np.abs(row.data) * bracket(offsets) ** alpha))
