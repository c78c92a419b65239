"""Bell states, populations and the CHSH correlation.

The qubit lives in the {|g>, |e>} block of each ion, with |g> = (1,0)^T
and |e> = (0,1)^T.  Pauli operators are zero-extended over the remaining
levels: steady states carry a little |r> population, and extending by
zeros evaluates the correlation without renormalizing the qubit block.
"""

from __future__ import annotations

import numpy as np

from .model import E, G, ION_LABELS, LEVELS_3, MODE_LABELS, internal_space
from .qop import (
    DensityMatrix,
    HilbertSpace,
    InputError,
    Operator,
    basis_ket,
    embed,
    partial_trace_array,
)


def embedded_pauli(axis: str, dim: int = 3) -> np.ndarray:
    """sigma_x / sigma_y / sigma_z on the qubit block, zero elsewhere."""
    m = np.zeros((dim, dim), dtype=complex)
    if axis == "x":
        m[G, E] = m[E, G] = 1.0
    elif axis == "y":
        m[G, E] = -1j
        m[E, G] = 1j
    elif axis == "z":
        m[G, G] = 1.0
        m[E, E] = -1.0
    else:
        raise InputError(f"unknown Pauli axis {axis!r}")
    return m


def qubit_projector(dim: int = 3) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[G, G] = m[E, E] = 1.0
    return m


def _ion_only_space(space: HilbertSpace) -> bool:
    return set(space.labels) == set(ION_LABELS)


def bell_state(kind: str, space: HilbertSpace | None = None) -> np.ndarray:
    """|S> = (|eg> - |ge>)/sqrt(2) or |T> = (|eg> + |ge>)/sqrt(2)."""
    space = space if space is not None else internal_space()
    if not _ion_only_space(space):
        raise InputError("bell_state expects a two-ion internal space")
    eg = basis_ket(space, {"ion1": E, "ion2": G})
    ge = basis_ket(space, {"ion1": G, "ion2": E})
    if kind == "S":
        return (eg - ge) / np.sqrt(2.0)
    if kind == "T":
        return (eg + ge) / np.sqrt(2.0)
    raise InputError(f"unknown Bell state {kind!r}; use 'S' or 'T'")


_LEVEL_INDEX = {name: i for i, name in enumerate(LEVELS_3)}


def internal_vector(x, space: HilbertSpace | None = None) -> np.ndarray:
    """Resolve a state label ('S', 'T', 'ee', 'gg', 'er', ...) or vector."""
    space = space if space is not None else internal_space()
    if isinstance(x, str):
        if x in ("S", "T"):
            return bell_state(x, space)
        if len(x) == 2 and all(c in _LEVEL_INDEX for c in x):
            return basis_ket(space, {"ion1": _LEVEL_INDEX[x[0]],
                                     "ion2": _LEVEL_INDEX[x[1]]})
        raise InputError(f"unknown state label {x!r}")
    v = np.asarray(x, dtype=complex)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise InputError("state vector must be normalized")
    return v


def reduced_internal(rho: DensityMatrix) -> np.ndarray:
    """Trace out any vibrational factors, keeping the two ions."""
    labels = rho.space.labels
    keep = [i for i, lbl in enumerate(labels) if lbl in ION_LABELS]
    if len(keep) != 2:
        raise InputError("state must contain the two ion factors")
    if len(keep) == len(labels):
        return np.array(rho.data)
    return partial_trace_array(rho.data, rho.space.dims, keep)


def population(rho: DensityMatrix, x) -> float:
    """<X| Tr_modes[rho] |X> for a label or normalized internal vector."""
    rho_int = reduced_internal(rho)
    v = internal_vector(x)
    return float(np.real(v.conj() @ rho_int @ v))


def population_operator(space: HilbertSpace, x) -> Operator:
    """Projector |X><X| on the ions, identity on any vibrational factors."""
    v = internal_vector(x)
    proj9 = np.outer(v, v.conj())
    if _ion_only_space(space):
        return Operator(space, proj9)
    # expand |X><X| over the two ion factors, identity elsewhere
    d = space.dim_of("ion1")
    proj = proj9.reshape(d, d, d, d)
    out = np.zeros((space.total_dim,) * 2, dtype=complex)
    for i1 in range(d):
        for j1 in range(d):
            block = proj[i1, :, j1, :]
            if np.any(block):
                m1 = np.zeros((d, d), dtype=complex)
                m1[i1, j1] = 1.0
                out += embed(space, {"ion1": m1, "ion2": block}).data
    return Operator(space, out)


def standard_population_observables(space: HilbertSpace) -> dict[str, Operator]:
    return {f"P_{name}": population_operator(space, name)
            for name in ("S", "T", "ee", "gg")}


def chsh_operator(space: HilbertSpace | None = None) -> Operator:
    """The four-setting CHSH combination for the singlet's optimal angles.

    sigma_y1 (-sy2 - sx2)/sqrt2 + sigma_x1 (-sy2 - sx2)/sqrt2
    + sigma_x1 (sy2 - sx2)/sqrt2 - sigma_y1 (sy2 - sx2)/sqrt2.
    """
    space = space if space is not None else internal_space()
    if not _ion_only_space(space):
        raise InputError("chsh_operator expects a two-ion internal space")
    d = space.dim_of("ion1")
    sx, sy = embedded_pauli("x", d), embedded_pauli("y", d)
    b1 = (-sy - sx) / np.sqrt(2.0)
    b2 = (sy - sx) / np.sqrt(2.0)
    terms = (
        embed(space, {"ion1": sy, "ion2": b1}).data
        + embed(space, {"ion1": sx, "ion2": b1}).data
        + embed(space, {"ion1": sx, "ion2": b2}).data
        - embed(space, {"ion1": sy, "ion2": b2}).data
    )
    return Operator(space, terms)


def chsh_correlation(rho: DensityMatrix) -> float:
    """Tr[O_CHSH Tr_modes[rho]]."""
    rho_int = reduced_internal(rho)
    return float(np.real(np.trace(chsh_operator().data @ rho_int)))
