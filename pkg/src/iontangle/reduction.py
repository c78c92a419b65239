"""Adiabatic elimination of the short-lived level of a single ion.

A resonant pump couples the metastable |r> to the fast-decaying |a>,
which branches to the qubit states.  The module carries the optical
Bloch equations of the four-level ion written element by element (kept
independent of the generic superoperator machinery on purpose -- the
two routes cross-check each other), the quasi-steady eliminated
elements, the resulting effective decay rate and the full-vs-effective
validation harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    A,
    E,
    G,
    LEVELS_4,
    R,
    SystemParams,
    build_dissipators,
    single_ion_space,
)
from .qop import DensityMatrix, InputError, Operator, embed


@dataclass(frozen=True)
class SingleIonOBEState:
    """Density-matrix elements rho_kl of one four-level ion.

    Stored as a 4x4 complex array over the level order (g, e, r, a);
    ``element('a', 'r')`` style access follows the level names.  A state
    and its time derivative share this container, so invariants are
    checked via :meth:`validate` rather than on construction.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (4, 4):
            raise InputError("single-ion state needs a 4x4 element array")
        object.__setattr__(self, "data", data)

    _IDX = {name: i for i, name in enumerate(LEVELS_4)}

    @classmethod
    def from_populations(cls, **pops) -> "SingleIonOBEState":
        m = np.zeros((4, 4), dtype=complex)
        for name, value in pops.items():
            m[cls._IDX[name], cls._IDX[name]] = value
        return cls(m)

    def element(self, k: str, l: str) -> complex:
        return complex(self.data[self._IDX[k], self._IDX[l]])

    def validate(self, tol: float = 1e-9):
        tr = self.data.trace().real
        if abs(tr - 1.0) > tol:
            raise InputError(f"populations sum to {tr}, not 1")
        if np.max(np.abs(self.data - self.data.conj().T)) > tol:
            raise InputError("elements violate rho_kl = conj(rho_lk)")


def obe_rhs(state: SingleIonOBEState, omega_b: float, gamma: float) -> SingleIonOBEState:
    """Element-wise optical Bloch equations of the pumped four-level ion.

    d/dt rho_aa = i(Omega_b/2)(rho_ar - rho_ra) - gamma rho_aa
    d/dt rho_ar = i(Omega_b/2)(rho_aa - rho_rr) - (gamma/2) rho_ar
    d/dt rho_ae = -i(Omega_b/2) rho_re - (gamma/2) rho_ae
    d/dt rho_ag = -i(Omega_b/2) rho_rg - (gamma/2) rho_ag
    d/dt rho_rr = i(Omega_b/2)(rho_ra - rho_ar)
    d/dt rho_ee = d/dt rho_gg = (gamma/2) rho_aa
    d/dt rho_re = -i(Omega_b/2) rho_ae
    d/dt rho_rg = -i(Omega_b/2) rho_ag
    plus complex conjugates; the g-e coherence is untouched.
    """
    s = state.element
    hob = 0.5j * omega_b
    d = np.zeros((4, 4), dtype=complex)
    idx = SingleIonOBEState._IDX

    def put(k, l, value):
        d[idx[k], idx[l]] = value
        if k != l:
            d[idx[l], idx[k]] = np.conj(value)

    put("a", "a", hob * (s("a", "r") - s("r", "a")) - gamma * s("a", "a"))
    put("a", "r", hob * (s("a", "a") - s("r", "r")) - 0.5 * gamma * s("a", "r"))
    put("a", "e", -hob * s("r", "e") - 0.5 * gamma * s("a", "e"))
    put("a", "g", -hob * s("r", "g") - 0.5 * gamma * s("a", "g"))
    put("r", "r", hob * (s("r", "a") - s("a", "r")))
    put("e", "e", 0.5 * gamma * s("a", "a"))
    put("g", "g", 0.5 * gamma * s("a", "a"))
    put("r", "e", -hob * s("a", "e"))
    put("r", "g", -hob * s("a", "g"))
    return SingleIonOBEState(d)


def eliminated_elements(rho_rr, rho_re, rho_rg, omega_b: float, gamma: float):
    """Quasi-steady elements of the short-lived level.

    rho_aa = Ob^2/(Ob^2 + g^2) rho_rr,   rho_ar = -i Ob g/(Ob^2 + g^2) rho_rr,
    rho_ae = -(i Ob / g) rho_re,         rho_ag = -(i Ob / g) rho_rg.
    """
    if gamma <= 0:
        raise InputError("gamma must be positive for adiabatic elimination")
    k = omega_b**2 + gamma**2
    rho_aa = omega_b**2 / k * rho_rr
    rho_ar = -1j * omega_b * gamma / k * rho_rr
    rho_ae = -1j * omega_b / gamma * rho_re
    rho_ag = -1j * omega_b / gamma * rho_rg
    return rho_aa, rho_ar, rho_ae, rho_ag


def effective_decay_rate(omega_b: float, gamma: float) -> float:
    """Engineered decay of the metastable state, Omega_b^2 / gamma."""
    if gamma <= 0:
        raise InputError("gamma must be positive")
    return omega_b**2 / gamma


def integrate_obe(state0: SingleIonOBEState, omega_b: float, gamma: float,
                  t_grid) -> list[SingleIonOBEState]:
    """Fixed-step RK4 on the element-wise equations, recorded at t_grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    scale = max(gamma, omega_b)
    h_max = 0.1 / scale
    out = [state0]
    m = state0.data.copy()

    def rhs(arr):
        return obe_rhs(SingleIonOBEState(arr), omega_b, gamma).data

    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        n = max(1, int(np.ceil((t1 - t0) / h_max)))
        h = (t1 - t0) / n
        for _ in range(n):
            k1 = rhs(m)
            k2 = rhs(m + 0.5 * h * k1)
            k3 = rhs(m + 0.5 * h * k2)
            k4 = rhs(m + h * k3)
            m = m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(SingleIonOBEState(m.copy()))
    return out


@dataclass(frozen=True)
class FullEffectiveComparison:
    times: np.ndarray            # dimensionless Omega_b * t
    p_ground_full: np.ndarray
    p_a_full: np.ndarray
    p_ground_eff: np.ndarray
    max_deviation: float
    peak_a_population: float


def single_ion_curves(omega_b: float, gamma: float, t_end: float,
                      n_points: int = 400) -> FullEffectiveComparison:
    """Ground-state population from |r> under the full four-level
    equations and under the eliminated metastable-decay model."""
    from .dynamics import evolve  # local import to avoid a cycle at import time

    t_grid = np.linspace(0.0, t_end, n_points)
    full = integrate_obe(SingleIonOBEState.from_populations(r=1.0), omega_b, gamma, t_grid)
    idx = SingleIonOBEState._IDX
    p_ground_full = np.array([(s.data[idx["g"], idx["g"]] + s.data[idx["e"], idx["e"]]).real
                              for s in full])
    p_a_full = np.array([s.data[idx["a"], idx["a"]].real for s in full])

    geff = effective_decay_rate(omega_b, gamma)
    space3 = single_ion_space(3)
    params = SystemParams(gamma_eff_override=geff)
    channels = [(geff / 2, _single_ion_lower(space3, G, R)),
                (geff / 2, _single_ion_lower(space3, E, R))]
    rho0 = np.zeros((3, 3), dtype=complex)
    rho0[R, R] = 1.0
    h_zero = Operator(space3, np.zeros((3, 3)))
    traj = evolve(DensityMatrix(space3, rho0), h_zero, channels, t_grid,
                  record={"P_g": _proj(space3, G), "P_e": _proj(space3, E)})
    p_ground_eff = traj.observables["P_g"] + traj.observables["P_e"]

    dev = float(np.max(np.abs(p_ground_full - p_ground_eff)))
    return FullEffectiveComparison(omega_b * t_grid, p_ground_full, p_a_full,
                                   p_ground_eff, dev, float(p_a_full.max()))


def _single_ion_lower(space, k, l):
    d = space.dim_of("ion")
    m = np.zeros((d, d), dtype=complex)
    m[k, l] = 1.0
    return embed(space, {"ion": m})


def _proj(space, k):
    d = space.dim_of("ion")
    m = np.zeros((d, d), dtype=complex)
    m[k, k] = 1.0
    return embed(space, {"ion": m})


def compare_full_effective(omega_b: float, gamma: float, t_end: float) -> tuple[float, float]:
    """Max |P_ground^full - P_ground^eff| over the window and the peak
    short-lived-level population."""
    if t_end <= 0:
        raise InputError("t_end must be positive")
    res = single_ion_curves(omega_b, gamma, t_end)
    return res.max_deviation, res.peak_a_population


def fit_decay_rate(times, populations, *, skip_fraction: float = 0.05) -> float:
    """Exponential-decay rate from a log-linear fit of rho_rr(t)."""
    times = np.asarray(times, float)
    populations = np.asarray(populations, float)
    mask = (times > skip_fraction * times[-1]) & (populations > 1e-12)
    coeffs = np.polyfit(times[mask], np.log(populations[mask]), 1)
    return float(-coeffs[0])
