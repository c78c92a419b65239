"""Operator algebra on labeled tensor-product Hilbert spaces.

Conventions used throughout the package:

* density matrices are vectorized column-major (columns stacked), so
  vec(A X B) = (B^T kron A) vec(X);
* Hamiltonians generate ``rho -> i[rho, H]`` (equivalent to -i[H, rho]);
* operators are stored dense, superoperators sparse (CSR).

Internal units are angular frequency in rad/ms and time in ms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
EIGENVALUE_FLOOR = -1e-9


class InputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of labeled factors.

    ``factors`` is a tuple of (label, dim) pairs; the order fixes the
    tensor order of every operator on the space.
    """

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lbl), int(dim)) for lbl, dim in self.factors)
        object.__setattr__(self, "factors", factors)
        labels = [lbl for lbl, _ in factors]
        if len(set(labels)) != len(labels):
            raise InputError(f"duplicate factor labels: {labels}")
        if any(dim < 1 for _, dim in factors):
            raise InputError("all factor dimensions must be >= 1")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def dim_of(self, label: str) -> int:
        for lbl, dim in self.factors:
            if lbl == label:
                return dim
        raise InputError(f"unknown factor label {label!r}; have {self.labels}")

    def index_of(self, label: str) -> int:
        for i, (lbl, _) in enumerate(self.factors):
            if lbl == label:
                return i
        raise InputError(f"unknown factor label {label!r}; have {self.labels}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Operator:
    """Complex square matrix acting on a HilbertSpace."""

    space: HilbertSpace
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        d = self.space.total_dim
        if data.shape != (d, d):
            raise InputError(f"operator shape {data.shape} != space dim {(d, d)}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def dag(self) -> "Operator":
        return Operator(self.space, self.data.conj().T)

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return bool(np.max(np.abs(self.data - self.data.conj().T)) <= tol)

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_space(self, other)
        return Operator(self.space, self.data + other.data)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same_space(self, other)
        return Operator(self.space, self.data - other.data)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.data)

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_same_space(self, other)
        return Operator(self.space, self.data @ other.data)


def _check_same_space(a: Operator, b: Operator):
    if a.space != b.space:
        raise InputError("operators live on different spaces")


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, (numerically) positive state.

    ``check='strict'`` enforces Hermiticity within 1e-10, trace within
    1e-9 and eigenvalues >= -1e-9.  ``check='loose'`` relaxes to the
    trajectory-recording tolerances (trace 1e-6, Hermiticity 1e-8) and
    skips the eigenvalue test.  ``check='none'`` skips validation.
    """

    space: HilbertSpace
    data: np.ndarray
    check: str = field(default="strict", compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        d = self.space.total_dim
        if data.shape != (d, d):
            raise InputError(f"state shape {data.shape} != space dim {(d, d)}")
        if self.check == "strict":
            self._validate(data, HERMITICITY_TOL, TRACE_TOL, eig=True)
        elif self.check == "loose":
            self._validate(data, 1e-8, 1e-6, eig=False)
        elif self.check != "none":
            raise InputError(f"unknown check level {self.check!r}")
        object.__setattr__(self, "data", _freeze(data))

    @staticmethod
    def _validate(data, herm_tol, trace_tol, eig):
        herm = np.max(np.abs(data - data.conj().T))
        if herm > herm_tol:
            raise InputError(f"state not Hermitian: max |rho - rho^dag| = {herm:.3e}")
        tr = data.trace()
        if abs(tr - 1.0) > trace_tol:
            raise InputError(f"state trace {tr} not 1 within {trace_tol:.0e}")
        if eig:
            evals = np.linalg.eigvalsh(0.5 * (data + data.conj().T))
            if evals.min() < EIGENVALUE_FLOOR:
                raise InputError(f"state has eigenvalue {evals.min():.3e} < {EIGENVALUE_FLOOR}")

    @property
    def dim(self) -> int:
        return self.space.total_dim


@dataclass(frozen=True)
class SuperOperator:
    """Sparse matrix acting on column-major vectorized density matrices."""

    space: HilbertSpace
    data: sp.csr_matrix

    def __post_init__(self):
        d2 = self.space.total_dim ** 2
        data = sp.csr_matrix(self.data, dtype=complex)
        if data.shape != (d2, d2):
            raise InputError(f"superoperator shape {data.shape} != {(d2, d2)}")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        if self.space != other.space:
            raise InputError("superoperators live on different spaces")
        return SuperOperator(self.space, self.data + other.data)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Apply the map to a density matrix given as a square array."""
        d = self.space.total_dim
        return unvec(self.data @ vec(np.asarray(rho, dtype=complex)), d)

    def trace_defect(self) -> float:
        """max |vec(I)^dag L|: zero for a trace-preserving generator."""
        d = self.space.total_dim
        return float(np.max(np.abs(vec(np.eye(d)).conj() @ self.data)))


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization (columns stacked)."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape((d, d), order="F")


# ---------------------------------------------------------------------------
# elementary constructors


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim))


def destroy(n: int) -> np.ndarray:
    """Annihilation operator on an n-level Fock ladder."""
    return np.diag(np.sqrt(np.arange(1, n)), k=1).astype(complex)


def embed(space: HilbertSpace, parts: dict[str, np.ndarray]) -> Operator:
    """Tensor the given single-factor matrices with identities elsewhere.

    ``parts`` maps factor labels to square matrices of the factor's
    dimension; unmentioned factors get identity.
    """
    out = np.ones((1, 1), dtype=complex)
    for lbl, dim in space.factors:
        block = parts.get(lbl)
        if block is None:
            block = np.eye(dim)
        else:
            block = np.asarray(block, dtype=complex)
            if block.shape != (dim, dim):
                raise InputError(f"factor {lbl!r} expects shape {(dim, dim)}, got {block.shape}")
        out = np.kron(out, block)
    unknown = set(parts) - set(space.labels)
    if unknown:
        raise InputError(f"unknown factor labels {sorted(unknown)}; have {space.labels}")
    return Operator(space, out)


def basis_ket(space: HilbertSpace, indices: dict[str, int]) -> np.ndarray:
    """Product basis vector |i_1 i_2 ...> with one index per factor."""
    missing = set(space.labels) - set(indices)
    if missing:
        raise InputError(f"missing indices for factors {sorted(missing)}")
    out = np.ones(1, dtype=complex)
    for lbl, dim in space.factors:
        i = indices[lbl]
        if not 0 <= i < dim:
            raise InputError(f"index {i} out of range for factor {lbl!r} (dim {dim})")
        e = np.zeros(dim, dtype=complex)
        e[i] = 1.0
        out = np.kron(out, e)
    return out


# ---------------------------------------------------------------------------
# operations


def kron(a: Operator, b: Operator) -> Operator:
    """Tensor product; the result's factor order is a's factors then b's."""
    joint = HilbertSpace(a.space.factors + b.space.factors)
    return Operator(joint, np.kron(a.data, b.data))


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Trace out every factor not named in ``keep``; kept order preserved."""
    keep = set(keep)
    if not keep:
        raise InputError("keep must be a nonempty set of factor labels")
    unknown = keep - set(rho.space.labels)
    if unknown:
        raise InputError(f"unknown factor labels {sorted(unknown)}; have {rho.space.labels}")
    reduced = partial_trace_array(rho.data, rho.space.dims,
                                  [i for i, lbl in enumerate(rho.space.labels) if lbl in keep])
    kept_factors = tuple(f for f in rho.space.factors if f[0] in keep)
    return DensityMatrix(HilbertSpace(kept_factors), reduced, check="none")


def partial_trace_array(data: np.ndarray, dims, keep_positions) -> np.ndarray:
    """Partial trace on a raw array with factor dims; keeps the listed positions."""
    n = len(dims)
    keep_positions = sorted(keep_positions)
    tens = np.asarray(data).reshape(tuple(dims) * 2)
    # contract each traced factor's ket index with its bra index
    src = list(range(2 * n))
    for pos in range(n):
        if pos not in keep_positions:
            src[n + pos] = src[pos]
    kept_out = [src[p] for p in keep_positions] + [src[n + p] for p in keep_positions]
    reduced = np.einsum(tens, src, kept_out)
    dk = int(np.prod([dims[p] for p in keep_positions], dtype=np.int64))
    return reduced.reshape(dk, dk)


def dissipator_super(c: Operator, rate: float) -> SuperOperator:
    """rate * (c rho c^dag - 1/2 {c^dag c, rho}) as a sparse matrix."""
    if rate < 0:
        raise InputError(f"dissipation rate must be nonnegative, got {rate}")
    d = c.dim
    csp = sp.csr_matrix(c.data)
    cdc = (csp.conj().T @ csp).tocsr()
    eye = sp.identity(d, dtype=complex, format="csr")
    lind = sp.kron(csp.conj(), csp, format="csr") \
        - 0.5 * sp.kron(eye, cdc, format="csr") \
        - 0.5 * sp.kron(cdc.T, eye, format="csr")
    return SuperOperator(c.space, rate * lind)


def hamiltonian_super(h: Operator) -> SuperOperator:
    """Matrix form of rho -> i[rho, h] (the -i[h, rho] convention)."""
    if not h.is_hermitian():
        raise InputError("hamiltonian_super requires a Hermitian operator")
    return commutator_piece_super(h)


def commutator_piece_super(g: Operator) -> SuperOperator:
    """Matrix form of rho -> i(rho g - g rho) for one Hamiltonian piece.

    Used to decompose oscillating Hamiltonians into fixed superoperator
    blocks with scalar phases; the piece itself need not be Hermitian
    (its conjugate partner restores Hermiticity of the total).
    """
    d = g.dim
    gsp = sp.csr_matrix(g.data)
    eye = sp.identity(d, dtype=complex, format="csr")
    gen = 1j * (sp.kron(gsp.T, eye, format="csr") - sp.kron(eye, gsp, format="csr"))
    return SuperOperator(g.space, gen)
