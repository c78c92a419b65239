"""Physical parameters and builders for the two-ion Hamiltonians and dissipators.

Two ions in a linear trap, each with ground states |g>, |e| (microwave
coupled), a metastable |r> (laser coupled to |e> on the carrier) and,
where needed, a short-lived |a>.  The two collective vibrational modes
sit at nu and sqrt(3) nu, with Lamb-Dicke couplings
eta_11 = eta_21 = eta, eta_12 = -eta/3^(1/4), eta_22 = +eta/3^(1/4).

All rates and frequencies are angular (rad/ms); time is in ms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .qop import HilbertSpace, InputError, Operator, basis_ket, destroy, embed

# per-ion level ordering; |a> is appended for four-level spaces
LEVELS_3 = ("g", "e", "r")
LEVELS_4 = ("g", "e", "r", "a")
G, E, R, A = 0, 1, 2, 3

DISSIPATOR_KINDS = (
    "natural_r",
    "engineered_eff",
    "single_ion_full",
    "phonon_thermal",
    "collective_dephasing",
    "engineered_branching",
)


@dataclass(frozen=True)
class SystemParams:
    """All physical rates of the model, in rad/ms.

    ``gamma_eff_override`` short-circuits the engineered decay rate
    (otherwise omega_b**2 / gamma); ``n_cut`` is the Fock states kept
    per vibrational mode (n = 0 .. n_cut-1).
    """

    nu: float = 2 * np.pi * 2000.0          # trap frequency (com mode)
    eta: float = 0.1                        # Lamb-Dicke parameter eta_11
    omega_a: float = 2 * np.pi * 200.0      # carrier Rabi frequency |e>-|r>
    omega_b: float = 2 * np.pi * 200.0      # pump Rabi frequency |r>-|a>
    omega_mw: float = 0.0                   # microwave Rabi frequency |g>-|e>
    gamma: float = 2 * np.pi * 1.0e5        # short-lived |a> decay
    gamma_r: float = 0.0                    # natural metastable decay
    gamma_eff_override: float | None = None
    kappa1: float = 0.0                     # com-mode phonon decay
    kappa2: float = 0.0                     # breathing-mode phonon decay
    nbar_th: float = 0.0                    # thermal occupation of the bath
    gamma_cd: float = 0.0                   # collective dephasing rate
    phi: float = 0.0                        # standing-wave phase offset
    n_cut: int = 3
    p_s: float = 0.94                       # branching back to the qubit states
    p_d: float = 0.06                       # branching back to |r>

    def __post_init__(self):
        for name in ("nu", "omega_b", "gamma", "gamma_r", "kappa1", "kappa2",
                     "nbar_th", "gamma_cd", "p_s", "p_d"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.gamma_eff_override is not None and self.gamma_eff_override < 0:
            raise InputError("gamma_eff_override must be nonnegative")
        if self.n_cut < 1:
            raise InputError("n_cut must be >= 1")
        if abs(self.p_s + self.p_d - 1.0) > 1e-12:
            raise InputError(f"branching fractions must sum to 1, got {self.p_s + self.p_d}")
        if self.nu > 0 and self.eta * abs(self.omega_a) / 2 > self.nu / 10:
            warnings.warn(
                "eta*omega_a/2 = %.3g is not small against nu = %.3g; the "
                "phonon-decoupled description degrades" % (self.eta * abs(self.omega_a) / 2, self.nu),
                stacklevel=2,
            )

    def with_(self, **kw) -> "SystemParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class DerivedParams:
    nu_modes: tuple[float, float]        # (nu, sqrt(3) nu)
    eta_matrix: np.ndarray               # eta[j, p], ions x modes
    lam: float                           # two-ion exchange coefficient (negative)
    g: float                             # sideband coupling eta*omega_a/2
    gamma_eff: float                     # engineered decay rate


def derive(params: SystemParams) -> DerivedParams:
    """Mode frequencies, Lamb-Dicke matrix and the derived couplings.

    The microwave Rabi frequency is not set here; the scenario layer
    chooses omega_mw = -2*lam.
    """
    if params.nu <= 0:
        raise InputError("nu must be positive")
    nu1 = params.nu
    nu2 = np.sqrt(3.0) * params.nu
    eta = params.eta
    eta_matrix = np.array([
        [eta, -eta / 3**0.25],
        [eta, +eta / 3**0.25],
    ])
    lam = -eta**2 * params.omega_a**2 / (3.0 * params.nu)
    g = eta * params.omega_a / 2.0
    if params.gamma_eff_override is not None:
        gamma_eff = params.gamma_eff_override
    else:
        if params.gamma <= 0:
            raise InputError("gamma must be positive to derive gamma_eff")
        gamma_eff = params.omega_b**2 / params.gamma
    eta_matrix.setflags(write=False)
    return DerivedParams((nu1, nu2), eta_matrix, lam, g, gamma_eff)


# ---------------------------------------------------------------------------
# spaces and per-ion matrices

ION_LABELS = ("ion1", "ion2")
MODE_LABELS = ("mode1", "mode2")


def internal_space() -> HilbertSpace:
    """Two three-level ions, no vibrational factors."""
    return HilbertSpace((("ion1", 3), ("ion2", 3)))


def full_space(n_cut: int) -> HilbertSpace:
    """Two three-level ions and both vibrational modes truncated at n_cut."""
    return HilbertSpace((("ion1", 3), ("ion2", 3), ("mode1", n_cut), ("mode2", n_cut)))


def single_ion_space(levels: int = 4) -> HilbertSpace:
    return HilbertSpace((("ion", levels),))


def lower(k: int, l: int, dim: int = 3) -> np.ndarray:
    """|k><l| on a single ion."""
    m = np.zeros((dim, dim), dtype=complex)
    m[k, l] = 1.0
    return m


def _ion_dim(space: HilbertSpace) -> int:
    return space.dim_of("ion1")


def _sx_half(dim: int) -> np.ndarray:
    """s_x = (|e><r| + |r><e|)/2 on one ion."""
    return 0.5 * (lower(E, R, dim) + lower(R, E, dim))


def microwave_hamiltonian(params: SystemParams, space: HilbertSpace) -> Operator:
    """(omega_mw/2) sum_j (|g_j><e_j| + h.c.)."""
    d = _ion_dim(space)
    coupling = lower(G, E, d) + lower(E, G, d)
    out = np.zeros((space.total_dim,) * 2, dtype=complex)
    for ion in ION_LABELS:
        out += embed(space, {ion: coupling}).data
    return Operator(space, 0.5 * params.omega_mw * out)


def _sideband_pieces(params: SystemParams, space: HilbertSpace):
    """G_p = (omega_a/2) sum_j eta_jp X_j a_p^dag for the two modes.

    The lab Hamiltonian groups as  sum_p (G_p e^{i nu_p t} + h.c.)  in the
    phonon-rotating frame, or sum_p (G_p + G_p^dag) in the static frame.
    """
    der = derive(params)
    d = _ion_dim(space)
    n_cut = space.dim_of("mode1")
    a = destroy(n_cut)
    pieces = []
    for p, mode in enumerate(MODE_LABELS):
        gp = np.zeros((space.total_dim,) * 2, dtype=complex)
        for j, ion in enumerate(ION_LABELS):
            x = lower(E, R, d) + lower(R, E, d)
            gp += der.eta_matrix[j, p] * embed(space, {ion: x, mode: a.conj().T}).data
        pieces.append(0.5 * params.omega_a * gp)
    return der, pieces


def build_h_interaction(params: SystemParams, t: float) -> Operator:
    """Phonon-rotating-frame Hamiltonian at time t (perfect alignment).

    H(t) = sum_j { (omega_a/2)|e_j><r_j| sum_p eta_jp (a_p^dag e^{i nu_p t}
    + a_p e^{-i nu_p t}) + (omega_mw/2)|g_j><e_j| + h.c. }.
    """
    space = full_space(params.n_cut)
    der, pieces = _sideband_pieces(params, space)
    h = microwave_hamiltonian(params, space).data.copy()
    for nu_p, gp in zip(der.nu_modes, pieces):
        ph = np.exp(1j * nu_p * t)
        h += ph * gp + np.conj(ph) * gp.conj().T
    return Operator(space, h)


def interaction_hamiltonian_factory(params: SystemParams):
    """Callable t -> Operator for build_h_interaction with cached pieces."""
    space = full_space(params.n_cut)
    der, pieces = _sideband_pieces(params, space)
    h_mw = microwave_hamiltonian(params, space).data

    def h_of_t(t: float) -> Operator:
        h = h_mw.copy()
        for nu_p, gp in zip(der.nu_modes, pieces):
            ph = np.exp(1j * nu_p * t)
            h += ph * gp + np.conj(ph) * gp.conj().T
        return Operator(space, h)

    h_of_t.space = space
    h_of_t.fastest_frequency = der.nu_modes[1]
    return h_of_t


def build_h_static(params: SystemParams) -> Operator:
    """Time-independent frame: phonon energies plus the t=0 couplings.

    Related to build_h_interaction by the phonon rotation
    exp(i sum_p nu_p a_p^dag a_p t), which leaves the reduced internal
    state invariant.
    """
    space = full_space(params.n_cut)
    der, pieces = _sideband_pieces(params, space)
    h = microwave_hamiltonian(params, space).data.copy()
    n_cut = params.n_cut
    number = np.diag(np.arange(n_cut)).astype(complex)
    for nu_p, mode, gp in zip(der.nu_modes, MODE_LABELS, pieces):
        h += nu_p * embed(space, {mode: number}).data
        h += gp + gp.conj().T
    return Operator(space, h)


def phonon_rotation(params: SystemParams, t: float) -> Operator:
    """exp(i sum_p nu_p a_p^dag a_p t) connecting the two frames."""
    space = full_space(params.n_cut)
    der = derive(params)
    n = np.arange(params.n_cut)
    phases = {mode: np.diag(np.exp(1j * nu_p * n * t))
              for nu_p, mode in zip(der.nu_modes, MODE_LABELS)}
    return embed(space, phases)


def build_h_effective(params: SystemParams) -> Operator:
    """Phonon-number-independent two-ion Hamiltonian (second order).

    lam * X_1 X_2 + lam * sum_j (|e_j><e_j| + |r_j><r_j|)
    + (omega_mw/2) sum_j (|g_j><e_j| + h.c.),  X = |e><r| + |r><e|.

    The coefficients are evaluated from the Lamb-Dicke mode sums, which
    collapse to -eta^2 omega_a^2 / (3 nu) for both terms.  The light
    shift acts on the two laser-coupled levels |e> and |r>; this is
    what averaging the sideband drive to second order produces, and it
    is required to match the full-model dynamics (the singlet is its
    eigenstate at eigenvalue lam).
    """
    space = internal_space()
    der = derive(params)
    x = lower(E, R) + lower(R, E)
    shift = lower(E, E) + lower(R, R)
    xx_coeff = -sum(der.eta_matrix[0, p] * der.eta_matrix[1, p] * params.omega_a**2
                    / (2 * der.nu_modes[p]) for p in range(2))
    h = xx_coeff * embed(space, {"ion1": x, "ion2": x}).data
    for j, ion in enumerate(ION_LABELS):
        shift_coeff = -sum(der.eta_matrix[j, p] ** 2 * params.omega_a**2
                           / (4 * der.nu_modes[p]) for p in range(2))
        h += shift_coeff * embed(space, {ion: shift}).data
    h += microwave_hamiltonian(params, space).data
    return Operator(space, h)


def build_h_misaligned(params: SystemParams, sign: int, t: float) -> Operator:
    """Laser-ion Hamiltonian with the ions displaced from the field node.

    sign * omega_a sum_j s_jx [sum_p eta_jp (a_p^dag e^{i nu_p t} +
    a_p e^{-i nu_p t}) cos(phi) + sin(phi)]; sign=-1 is the phase-echoed
    pulse (laser phase advanced by pi).  No microwave term.
    """
    if sign not in (+1, -1):
        raise InputError(f"sign must be +1 or -1, got {sign}")
    space = full_space(params.n_cut)
    der, pieces = _sideband_pieces(params, space)
    h = np.zeros((space.total_dim,) * 2, dtype=complex)
    for nu_p, gp in zip(der.nu_modes, pieces):
        ph = np.exp(1j * nu_p * t)
        h += np.cos(params.phi) * (ph * gp + np.conj(ph) * gp.conj().T)
    d = _ion_dim(space)
    for ion in ION_LABELS:
        h += params.omega_a * np.sin(params.phi) * embed(space, {ion: _sx_half(d)}).data
    return Operator(space, sign * h)


def build_h_misaligned_eff(params: SystemParams, sign: int) -> Operator:
    """Second-order internal Hamiltonian at phase offset phi.

    cos^2(phi)-scaled exchange and level-shift terms plus the carrier
    sign * omega_a sin(phi) sum_j s_jx.  The microwave term is added
    separately by the caller.
    """
    if sign not in (+1, -1):
        raise InputError(f"sign must be +1 or -1, got {sign}")
    space = internal_space()
    base = build_h_effective(params.with_(omega_mw=0.0))
    h = np.cos(params.phi) ** 2 * base.data
    for ion in ION_LABELS:
        h = h + sign * params.omega_a * np.sin(params.phi) * embed(space, {ion: _sx_half(3)}).data
    return Operator(space, h)


# ---------------------------------------------------------------------------
# misaligned-drive evolution operator


@dataclass(frozen=True)
class EvolutionCoeffs:
    """Closed-form coefficients of the displaced-drive evolution operator."""

    a_p: tuple[complex, complex]
    b_p: tuple[complex, complex]
    c_p: tuple[complex, complex]


def evolution_coeffs(params: SystemParams, t: float) -> EvolutionCoeffs:
    """A_p, B_p, C_p of the factorized evolution operator at time t.

    A_p(t) = eta^2 omega_a^2 cos^2 phi [-t/nu_p + (e^{i nu_p t}-1)/(i nu_p^2)],
    B_p(t) = (eta omega_a / -i nu_p) cos phi (e^{-i nu_p t} - 1),
    C_p(t) = (eta omega_a /  i nu_p) cos phi (e^{i nu_p t} - 1).

    C_p = conj(B_p); together with Im A_p these make the assembled
    operator exactly unitary.
    """
    if t < 0:
        raise InputError("t must be nonnegative")
    der = derive(params)
    cphi = np.cos(params.phi)
    a, b, c = [], [], []
    for nu_p in der.nu_modes:
        a.append(params.eta**2 * params.omega_a**2 * cphi**2
                 * (-t / nu_p + (np.exp(1j * nu_p * t) - 1.0) / (1j * nu_p**2)))
        b.append(params.eta * params.omega_a / (-1j * nu_p) * cphi
                 * (np.exp(-1j * nu_p * t) - 1.0))
        c.append(params.eta * params.omega_a / (1j * nu_p) * cphi
                 * (np.exp(1j * nu_p * t) - 1.0))
    return EvolutionCoeffs(tuple(a), tuple(b), tuple(c))


def misaligned_evolution_operator(params: SystemParams, t: float) -> Operator:
    """Assembled evolution operator for the displaced drive (sign +1).

    prod_j e^{-i omega_a sin(phi) s_jx t} prod_p e^{-i A_p J_px^2}
    e^{-i B_p J_px a_p} e^{-i C_p J_px a_p^dag},
    with J_px = sum_j eta_jp s_jx / eta.
    """
    import scipy.linalg

    space = full_space(params.n_cut)
    der = derive(params)
    coeffs = evolution_coeffs(params, t)
    a = destroy(params.n_cut)
    u = np.eye(space.total_dim, dtype=complex)
    for j, ion in enumerate(ION_LABELS):
        carrier = embed(space, {ion: _sx_half(3)}).data
        u = u @ scipy.linalg.expm(-1j * params.omega_a * np.sin(params.phi) * t * carrier)
    for p, mode in enumerate(MODE_LABELS):
        jpx = sum(der.eta_matrix[j, p] / params.eta * embed(space, {ion: _sx_half(3)}).data
                  for j, ion in enumerate(ION_LABELS))
        ap = embed(space, {mode: a}).data
        u = u @ scipy.linalg.expm(-1j * coeffs.a_p[p] * jpx @ jpx)
        u = u @ scipy.linalg.expm(-1j * coeffs.b_p[p] * jpx @ ap)
        u = u @ scipy.linalg.expm(-1j * coeffs.c_p[p] * jpx @ ap.conj().T)
    return Operator(space, u)


# ---------------------------------------------------------------------------
# dissipators


def build_dissipators(params: SystemParams, kind: str,
                      space: HilbertSpace | None = None) -> list[tuple[float, Operator]]:
    """Decay channels as (rate, collapse operator) pairs.

    Kinds: natural_r (metastable decay at gamma_r/2 per channel),
    engineered_eff (pumped decay at gamma_eff/2 per channel),
    single_ion_full (|a> decay at gamma/2 to each qubit state),
    phonon_thermal (kappa_p (nbar+1) on a_p and kappa_p nbar on a_p^dag),
    collective_dephasing (gamma_cd on sum_j (|g_j><g_j| - |r_j><r_j|)),
    engineered_branching (qubit branches at gamma_eff p_s/2 each plus a
    gamma_eff p_d pure-dephasing channel on |r_j>).
    """
    if kind not in DISSIPATOR_KINDS:
        raise InputError(f"unknown dissipator kind {kind!r}; choose from {DISSIPATOR_KINDS}")

    if kind == "single_ion_full":
        space = space if space is not None else single_ion_space(4)
        d = space.dim_of("ion")
        return [
            (params.gamma / 2, embed(space, {"ion": lower(G, A, d)})),
            (params.gamma / 2, embed(space, {"ion": lower(E, A, d)})),
        ]

    if space is None:
        space = internal_space() if kind in ("natural_r", "collective_dephasing") \
            else full_space(params.n_cut)
    d = _ion_dim(space)
    out: list[tuple[float, Operator]] = []

    if kind == "natural_r":
        for ion in ION_LABELS:
            out.append((params.gamma_r / 2, embed(space, {ion: lower(G, R, d)})))
            out.append((params.gamma_r / 2, embed(space, {ion: lower(E, R, d)})))
    elif kind == "engineered_eff":
        geff = derive(params).gamma_eff
        for ion in ION_LABELS:
            out.append((geff / 2, embed(space, {ion: lower(G, R, d)})))
            out.append((geff / 2, embed(space, {ion: lower(E, R, d)})))
    elif kind == "engineered_branching":
        geff = derive(params).gamma_eff
        for ion in ION_LABELS:
            out.append((geff * params.p_s / 2, embed(space, {ion: lower(G, R, d)})))
            out.append((geff * params.p_s / 2, embed(space, {ion: lower(E, R, d)})))
            out.append((geff * params.p_d, embed(space, {ion: lower(R, R, d)})))
    elif kind == "phonon_thermal":
        a = destroy(space.dim_of("mode1"))
        kappas = (params.kappa1, params.kappa2)
        for kappa, mode in zip(kappas, MODE_LABELS):
            if kappa == 0:
                continue
            out.append((kappa * (params.nbar_th + 1), embed(space, {mode: a})))
            if params.nbar_th > 0:
                out.append((kappa * params.nbar_th, embed(space, {mode: a.conj().T})))
    elif kind == "collective_dephasing":
        if params.gamma_cd > 0:
            op = sum(embed(space, {ion: lower(G, G, d) - lower(R, R, d)}).data
                     for ion in ION_LABELS)
            out.append((params.gamma_cd, Operator(space, op)))
    return out


def rotating_generator_pieces(params: SystemParams, dissipators):
    """Decompose the phonon-rotating-frame generator for fast stepping.

    Returns (static SuperOperator, [(nu_p, K_plus, K_minus)]) such that
    L(t) = static + sum_p (e^{i nu_p t} K_plus + e^{-i nu_p t} K_minus).
    """
    from .qop import commutator_piece_super, dissipator_super, hamiltonian_super

    space = full_space(params.n_cut)
    der, pieces = _sideband_pieces(params, space)
    l0 = hamiltonian_super(microwave_hamiltonian(params, space))
    for rate, c in dissipators:
        l0 = l0 + dissipator_super(c, rate)
    mods = []
    for nu_p, gp in zip(der.nu_modes, pieces):
        op = Operator(space, gp)
        mods.append((nu_p, commutator_piece_super(op), commutator_piece_super(op.dag())))
    return l0, mods


def exchange_parity_operator(space: HilbertSpace) -> Operator:
    """Ion-exchange symmetry of the two-ion crystal.

    Swapping the ions flips the sign of both breathing-mode Lamb-Dicke
    couplings, so the combined operation SWAP(ion1, ion2) x parity on
    mode 2 commutes with every Hamiltonian and dissipator set built
    here.  On an internal-only space it is the plain swap.
    """
    d = _ion_dim(space)
    n = space.total_dim
    labels = space.labels
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[j * d + i, i * d + j] = 1.0
    # place the two-ion swap at the front (ions are the leading factors)
    rest = 1
    for lbl, dim in space.factors:
        if lbl not in ION_LABELS:
            rest *= dim
    p = np.kron(swap, np.eye(rest))
    if "mode2" in labels:
        parity = np.diag((-1.0) ** np.arange(space.dim_of("mode2")))
        p = p @ embed(space, {"mode2": parity}).data.real
    return Operator(space, p)


# ---------------------------------------------------------------------------
# common initial states


def mixed_qubit_state(space: HilbertSpace) -> np.ndarray:
    """Fully mixed two-qubit state sum_{k,l=g,e} |kl><kl| / 4 on the ions.

    When the space carries vibrational factors each mode is put in the
    mixed occupation (|0><0| + |1><1|)/2.
    """
    d = _ion_dim(space)
    qubit = np.zeros((d, d), dtype=complex)
    qubit[G, G] = qubit[E, E] = 0.5
    parts = {ion: qubit for ion in ION_LABELS}
    for mode in MODE_LABELS:
        if mode in space.labels:
            n = space.dim_of(mode)
            if n < 2:
                raise InputError("mixed phonon occupation needs n_cut >= 2")
            ph = np.zeros((n, n), dtype=complex)
            ph[0, 0] = ph[1, 1] = 0.5
            parts[mode] = ph
    return embed(space, parts).data.copy()
