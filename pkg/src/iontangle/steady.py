"""Liouvillian assembly and direct steady-state solves.

The steady state is obtained by replacing one row of the (singular)
generator with the trace functional and solving the sparse linear
system; degeneracy of the fixed-point space is detected and reported
rather than silently resolved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .qop import (
    DensityMatrix,
    InputError,
    Operator,
    SuperOperator,
    dissipator_super,
    hamiltonian_super,
    unvec,
    vec,
)

RESIDUAL_TOL = 1e-8
NULLSPACE_REL_TOL = 1e-10
DENSE_SVD_LIMIT = 1600        # largest vectorized dimension for exact SVD counting


class NumericError(RuntimeError):
    """Solver breakdown or an unusable numerical result."""


class AmbiguousSteadyStateError(RuntimeError):
    """The generator has a degenerate fixed-point space."""

    def __init__(self, nullspace_dim: int):
        super().__init__(f"steady state is not unique: nullspace dimension {nullspace_dim}")
        self.nullspace_dim = nullspace_dim


@dataclass(frozen=True)
class SteadyResult:
    rho_ss: DensityMatrix
    residual: float
    nullspace_dim: int
    method: str = "direct"


def liouvillian(h: Operator, dissipators) -> SuperOperator:
    """hamiltonian_super(h) plus the rate-weighted dissipators, sparse."""
    gen = hamiltonian_super(h)
    for rate, c in dissipators:
        if c.space != h.space:
            raise InputError("dissipator operator lives on a different space")
        gen = gen + dissipator_super(c, rate)
    return gen


def _norm_scale(l_data: sp.csr_matrix) -> float:
    """Upper bound on the generator's 2-norm, sqrt(norm1 * norminf)."""
    a = abs(l_data)
    n1 = a.sum(axis=0).max()
    ninf = a.sum(axis=1).max()
    return float(np.sqrt(n1 * ninf)) or 1.0


def nullspace_dimension(l_op: SuperOperator, k_max: int = 6) -> int:
    """Count the (numerically) zero singular directions of the generator.

    Small systems get an exact SVD; larger ones a shift-inverted Arnoldi
    count of eigenvalues within 1e-10 * ||L|| of zero.
    """
    l_data = l_op.data
    n = l_data.shape[0]
    if n <= DENSE_SVD_LIMIT:
        svals = np.linalg.svd(l_data.toarray(), compute_uv=False)
        scale = svals[0] if svals[0] > 0 else 1.0
        return int(np.count_nonzero(svals < NULLSPACE_REL_TOL * scale))
    scale = _norm_scale(l_data)
    sigma = 1e-8 * scale
    try:
        evals = spla.eigs(l_data.tocsc(), k=min(k_max, n - 2), sigma=sigma,
                          which="LM", return_eigenvectors=False)
    except Exception as exc:  # ARPACK failures surface as numeric errors
        raise NumericError(f"nullspace estimation failed: {exc}") from exc
    dim = int(np.count_nonzero(np.abs(evals) < NULLSPACE_REL_TOL * scale))
    return dim


def steady_state(l_op: SuperOperator, *, compute_nullspace: bool = True) -> SteadyResult:
    """Solve L x = 0 with trace(x) = 1 by trace-row replacement.

    The solution is Hermitized, eigenvalue dust in (-1e-9, 0) is
    clipped, and the trace renormalized.  Raises
    AmbiguousSteadyStateError when the fixed-point space is degenerate
    and NumericError on solver breakdown or an invalid state.
    """
    defect = l_op.trace_defect()
    if defect > 1e-10:
        raise InputError(f"generator is not trace preserving (defect {defect:.3e})")
    d = l_op.space.total_dim
    n = d * d
    coo = l_op.data.tocoo()
    keep = coo.row != 0
    diag_cols = np.arange(d) * (d + 1)
    rows = np.concatenate([coo.row[keep], np.zeros(d, dtype=coo.row.dtype)])
    cols = np.concatenate([coo.col[keep], diag_cols])
    vals = np.concatenate([coo.data[keep], np.ones(d, dtype=complex)])
    a = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0

    try:
        x = spla.splu(a, permc_spec="MMD_AT_PLUS_A").solve(b)
    except Exception:
        dim = nullspace_dimension(l_op)
        if dim != 1:
            raise AmbiguousSteadyStateError(dim) from None
        raise NumericError("sparse factorization of the steady-state system failed") from None
    if not np.all(np.isfinite(x)):
        dim = nullspace_dimension(l_op)
        if dim != 1:
            raise AmbiguousSteadyStateError(dim)
        raise NumericError("steady-state solve produced non-finite values")

    rho = unvec(x, d)
    rho = 0.5 * (rho + rho.conj().T)
    evals, u = np.linalg.eigh(rho)
    if evals.min() < -1e-9:
        dim = nullspace_dimension(l_op) if compute_nullspace else -1
        if dim != 1:
            raise AmbiguousSteadyStateError(dim)
        raise NumericError(f"steady state has eigenvalue {evals.min():.3e} < -1e-9")
    rho = (u * np.clip(evals, 0.0, None)) @ u.conj().T
    rho = rho / rho.trace()

    residual = float(np.linalg.norm(l_op.data @ vec(rho)))
    if residual > RESIDUAL_TOL:
        dim = nullspace_dimension(l_op) if compute_nullspace else -1
        if dim != 1:
            raise AmbiguousSteadyStateError(dim)
        raise NumericError(f"steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL}")

    nullspace_dim = 1
    if compute_nullspace:
        nullspace_dim = nullspace_dimension(l_op)
        if nullspace_dim != 1:
            raise AmbiguousSteadyStateError(nullspace_dim)
    return SteadyResult(DensityMatrix(l_op.space, rho), residual, nullspace_dim)
