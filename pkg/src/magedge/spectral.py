"""Spectral edges, full spectra and gap structure of finite Hermitian matrices.

The iterative path is a Lanczos iteration with full reorthogonalization and a
seeded random start; small matrices fall back to a dense solver.  The infimum
is computed as minus the supremum of the negated matrix, and the operator
norm as the larger absolute edge.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .lattice_operator import Box, PeierlsBuilder, PeierlsMatrix

__all__ = [
    "EdgeResult",
    "SpectrumReport",
    "ConvergenceError",
    "dense_cap",
    "edge",
    "full_spectrum",
    "truncation_study",
]

DENSE_CAP_DEFAULT = 3000
DENSE_CAP_ENV = "MAGEDGE_DENSE_CAP"
ITERATION_CAP = 5000
DENSE_THRESHOLD = 256


def dense_cap() -> int:
    """Site cap for dense solves; the MAGEDGE_DENSE_CAP env var overrides it."""
    raw = os.environ.get(DENSE_CAP_ENV)
    if raw is None:
        return DENSE_CAP_DEFAULT
    cap = int(raw)
    if cap < 1:
        raise ValueError(f"{DENSE_CAP_ENV} must be a positive integer")
    return cap


@dataclass(frozen=True)
class EdgeResult:
    value: float
    which: str
    residual: float
    iterations: int
    method: str
    converged: bool = True


class ConvergenceError(RuntimeError):
    """Raised when the iteration cap is hit; carries the best Ritz pair seen."""

    def __init__(self, result: EdgeResult):
        super().__init__(
            f"edge iteration did not converge (best value {result.value!r}, "
            f"residual {result.residual:.3e} after {result.iterations} iterations)"
        )
        self.result = result


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    gaps: list[tuple[float, float]]
    gap_threshold: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "eigenvalue"])
            for i, ev in enumerate(self.eigenvalues):
                writer.writerow([i, repr(float(ev))])

    def gaps_dict(self) -> dict:
        return {
            "schema_version": 1,
            "gap_threshold": self.gap_threshold,
            "gaps": [{"left_edge": left, "right_edge": right} for left, right in self.gaps],
        }

    def gaps_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.gaps_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _dense_sup(matrix: PeierlsMatrix) -> tuple[float, float]:
    dense = matrix.toarray()
    vals, vecs = np.linalg.eigh(dense)
    v = vecs[:, -1]
    theta = float(vals[-1])
    residual = float(np.linalg.norm(dense @ v - theta * v))
    return theta, residual

BASIS_CAP = 200
RESTART_KEEP = 40


def _project_out(basis: np.ndarray, w: np.ndarray) -> np.ndarray:
    # two passes of classical Gram-Schmidt against the rows of `basis`
    for _ in range(2):
        coeffs = (basis @ w.conj()).conj()
        w = w - basis.T @ coeffs
    return w


def _lanczos_sup(
    matrix: PeierlsMatrix,
    tol_abs: float,
    seed: int,
    maxiter: int,
    basis_cap: int = 0,
    restart_keep: int = 0,
) -> tuple[float, float, int, bool]:
    """Largest Ritz value, true residual, matvec count, converged flag.

    Lanczos with full reorthogonalization; once the basis reaches the cap it
    is compressed to the best Ritz vectors plus the current residual
    direction (thick restart).  The restarted subspace contains the previous
    best Ritz vector, so the edge estimate is monotone across restarts.
    """
    m = matrix.matrix
    n = m.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    cap = min(basis_cap or BASIS_CAP, n)
    keep = min(restart_keep or RESTART_KEEP, max(1, cap - 2))
    cap_limit = min(n, max(4 * cap, 800))
    q_store = np.zeros((cap + 1, n), dtype=complex)
    h = np.zeros((cap + 1, cap + 1), dtype=complex)
    q_store[0] = v
    size = 1
    breakdown = 1e-14 * max(matrix.inf_norm(), 1.0)
    matvecs = 0
    done = False
    last_restart_estimate = np.inf
    while not done:
        w = m @ q_store[size - 1]
        matvecs += 1
        coeffs = (q_store[:size] @ w.conj()).conj()
        w = w - q_store[:size].T @ coeffs
        extra = (q_store[:size] @ w.conj()).conj()
        w = w - q_store[:size].T @ extra
        coeffs += extra
        h[:size, size - 1] = coeffs
        h[size - 1, :size] = coeffs.conj()
        beta = float(np.linalg.norm(w))
        at_cap = size == cap
        check = at_cap or beta <= breakdown or matvecs >= maxiter or size % 5 == 0
        if check:
            vals, vecs = np.linalg.eigh(h[:size, :size])
            estimate = beta * abs(vecs[size - 1, -1])
            if estimate <= tol_abs or matvecs >= maxiter:
                done = True
                continue
        if beta <= breakdown:
            # invariant subspace without convergence: deflate with a fresh start
            w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            w = _project_out(q_store[:size], w)
            beta = float(np.linalg.norm(w))
            if beta <= breakdown:
                done = True
                continue
        if at_cap:
            # a stagnating restart signals an edge cluster wider than `keep`:
            # retain more Ritz vectors and, if needed, a longer cycle
            if estimate > 0.5 * last_restart_estimate:
                keep = min(int(1.6 * keep) + 1, cap - 2)
                if keep >= cap - 2 and cap < cap_limit:
                    cap = min(2 * cap, cap_limit)
                    keep = min(keep, cap - 2)
                    q_grown = np.zeros((cap + 1, n), dtype=complex)
                    q_grown[:size] = q_store[:size]
                    q_store = q_grown
                    h_grown = np.zeros((cap + 1, cap + 1), dtype=complex)
                    h_grown[:size, :size] = h[:size, :size]
                    h = h_grown
            last_restart_estimate = estimate
            # thick restart: best Ritz vectors plus the residual direction
            top = vecs[:, -keep:]
            new_basis = (q_store[:size].T @ top).T
            new_basis = np.vstack([new_basis, (w / beta)[None, :]])
            q, _ = np.linalg.qr(new_basis.T)
            basis = q.T.copy()
            size = basis.shape[0]
            images = (m @ basis.T).T
            matvecs += size
            q_store[:size] = basis
            h[:, :] = 0.0
            h[:size, :size] = basis.conj() @ images.T
            h[:size, :size] = 0.5 * (h[:size, :size] + h[:size, :size].conj().T)
        else:
            q_store[size] = w / beta
            h[size, size - 1] = beta
            h[size - 1, size] = beta
            size += 1
    _, vecs = np.linalg.eigh(h[:size, :size])
    ritz_vec = q_store[:size].T @ vecs[:, -1].astype(complex)
    ritz_vec /= np.linalg.norm(ritz_vec)
    theta = float(np.real(np.vdot(ritz_vec, m @ ritz_vec)))
    residual = float(np.linalg.norm(m @ ritz_vec - theta * ritz_vec))
    return theta, residual, matvecs, residual <= tol_abs


def _negated(matrix: PeierlsMatrix) -> PeierlsMatrix:
    return PeierlsMatrix(
        matrix=-matrix.matrix,
        box=matrix.box,
        source=matrix.source,
        field_kind=matrix.field_kind,
        eps=matrix.eps,
        phase_variant=matrix.phase_variant,
    )


def edge(
    matrix: PeierlsMatrix,
    which: str = "sup",
    tol: float = 1e-10,
    seed: int = 0,
    method: str = "auto",
    maxiter: int = ITERATION_CAP,
    dense_threshold: int = DENSE_THRESHOLD,
    basis_cap: int = 0,
    restart_keep: int = 0,
) -> EdgeResult:
    """Extremal eigenvalue (or norm) of a Hermitian matrix.

    The residual stop is ||M v - theta v|| <= tol * (max absolute row sum),
    reported back in absolute terms.  Results are reproducible for a fixed
    seed; non-convergence raises ConvergenceError carrying the best pair.
    basis_cap/restart_keep tune the restarted iteration for matrices with
    strongly clustered edges (defaults BASIS_CAP/RESTART_KEEP).
    """
    if which not in ("sup", "inf", "norm"):
        raise ValueError("which must be 'sup', 'inf' or 'norm'")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if which == "norm":
        top = edge(matrix, "sup", tol, seed, method, maxiter, dense_threshold, basis_cap, restart_keep)
        bottom = edge(matrix, "inf", tol, seed, method, maxiter, dense_threshold, basis_cap, restart_keep)
        return EdgeResult(
            value=max(abs(top.value), abs(bottom.value)),
            which="norm",
            residual=max(top.residual, bottom.residual),
            iterations=top.iterations + bottom.iterations,
            method=top.method,
            converged=top.converged and bottom.converged,
        )
    work = matrix if which == "sup" else _negated(matrix)
    sign = 1.0 if which == "sup" else -1.0
    n = work.shape[0]
    use_dense = method == "dense" or (method == "auto" and n <= dense_threshold)
    if method not in ("auto", "dense", "iterative"):
        raise ValueError("method must be 'auto', 'dense' or 'iterative'")
    tol_abs = tol * max(work.inf_norm(), 1.0)
    if use_dense:
        if n > dense_cap():
            raise ValueError(f"matrix of size {n} exceeds the dense cap {dense_cap()}")
        theta, residual = _dense_sup(work)
        return EdgeResult(sign * theta, which, residual, n, "dense", True)
    theta, residual, iterations, converged = _lanczos_sup(
        work, tol_abs, seed, maxiter, basis_cap, restart_keep
    )
    result = EdgeResult(sign * theta, which, residual, iterations, "iterative", converged)
    if not converged:
        raise ConvergenceError(result)
    return result


def full_spectrum(matrix: PeierlsMatrix, gap_threshold: float = 1e-3) -> SpectrumReport:
    """All eigenvalues by a dense solver, with gaps of width >= gap_threshold."""
    n = matrix.shape[0]
    cap = dense_cap()
    if n > cap:
        raise ValueError(f"matrix of size {n} exceeds the dense cap {cap}")
    eigenvalues = np.linalg.eigvalsh(matrix.toarray())
    widths = np.diff(eigenvalues)
    gaps = [
        (float(eigenvalues[i]), float(eigenvalues[i + 1]))
        for i in np.nonzero(widths >= gap_threshold)[0]
    ]
    return SpectrumReport(eigenvalues=eigenvalues, gaps=gaps, gap_threshold=gap_threshold)


def truncation_study(
    source,
    field,
    eps: float,
    radii: list[int],
    which: str = "sup",
    tol: float = 1e-10,
    seed: int = 0,
    rule=None,
) -> list[tuple[int, EdgeResult]]:
    """Edges on nested boxes.  sup edges are nondecreasing in the radius and
    inf edges nonincreasing, up to the solver tolerance."""
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    results = []
    for radius in radii:
        box = Box(radius=radius, dimension=source.dimension)
        matrix = PeierlsBuilder(source, field, box, rule).build(eps)
        results.append((radius, edge(matrix, which, tol, seed)))
    return results
