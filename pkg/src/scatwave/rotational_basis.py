"""Parity-adapted rotational-electronic basis and Hamiltonian block assembly.

For total angular momentum K the nuclear-rotation Hamiltonian contributes a
centrifugal diagonal (K(K+1) - Lambda^2)/(2 mu R^2) and ladder couplings
between |dLambda| = 1 states, -L(R) [K(K+1) - Lambda*Lambda']^(1/2)/(2 mu R^2).
Working in the parity-adapted (e/f) basis halves the Lambda > 0 states; the
only trace left by the transformation is a sqrt(2) enhancement of elements
that connect a Sigma state to a Lambda = 1 state.

Convention: epsilon = +1 labels the block that contains the Sigma states
("e" for them); epsilon = -1 is the block without Sigma.  The K-dependent
phase of the textbook e/f definition only flips signs of basis vectors and
cannot affect |S|^2, so it is absorbed into the labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diabatization import DiabaticModel
from .errors import DomainError, ValidationError
from .molecular_data import CouplingSet, ElectronicChannel, RadialMesh


@dataclass(frozen=True)
class ParityState:
    """One rotational-electronic basis state for fixed (K, epsilon)."""

    channel: ElectronicChannel
    K: int
    epsilon: int

    def __post_init__(self):
        if self.K < abs(self.channel.lam):
            raise ValidationError(
                f"K={self.K} < |Lambda|={self.channel.lam} for {self.channel.describe()}"
            )
        if self.epsilon not in (+1, -1):
            raise ValidationError("epsilon must be +1 (e) or -1 (f)")
        if self.channel.lam == 0 and self.epsilon != +1:
            raise ValidationError("Sigma states live in the epsilon=+1 block only")


def build_basis(channels, K: int, epsilon: int, include_rotational: bool,
                initial_lambda: int | None = None) -> list[ParityState]:
    """Channels admitted to the (K, epsilon) block, as parity states.

    With rotational couplings disabled Lambda is conserved, so only the
    initial state's Lambda block enters (``initial_lambda`` is then required).
    """
    if K < 0:
        raise DomainError("K must be non-negative")
    if not include_rotational:
        if initial_lambda is None:
            raise DomainError("initial_lambda is required when rotational couplings are off")
        selected = [ch for ch in channels if ch.lam == initial_lambda and ch.lam <= K]
        eps = +1 if initial_lambda == 0 else epsilon
        return [ParityState(ch, K, eps) for ch in selected]
    states = []
    for ch in channels:
        if ch.lam > K:
            continue
        if ch.lam == 0 and epsilon == -1:
            continue
        states.append(ParityState(ch, K, epsilon))
    return states


def centrifugal_term(K: int, lam: int, mu: float, r):
    """(K(K+1) - Lambda^2) / (2 mu R^2) in hartree."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("centrifugal term requires R > 0")
    out = (K * (K + 1) - lam * lam) / (2.0 * mu * r**2)
    return out if out.shape else float(out)


def ladder_coefficient(K: int, lam: int, lamp: int) -> float:
    """[K(K+1) - Lambda*Lambda']^(1/2) with the parity-basis sqrt(2) for Sigma."""
    if abs(lam - lamp) != 1:
        raise DomainError(f"rotational coupling needs |dLambda| = 1, got {lam}<->{lamp}")
    arg = K * (K + 1) - lam * lamp
    if arg < 0:
        raise DomainError(f"K={K} cannot connect Lambda={lam} and Lambda'={lamp}")
    coeff = np.sqrt(float(arg))
    if lam == 0 or lamp == 0:
        coeff *= np.sqrt(2.0)
    return float(coeff)


def rotational_coupling_element(K: int, lam: int, lamp: int, l_pm_value, mu: float, r):
    """Off-diagonal H^rot element -L(R) [K(K+1) - Lambda Lambda']^(1/2) / (2 mu R^2)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("rotational element requires R > 0")
    coeff = ladder_coefficient(K, lam, lamp)
    out = -np.asarray(l_pm_value, dtype=float) * coeff / (2.0 * mu * r**2)
    return out if out.shape else float(out)


class HamiltonianBlock:
    """V(R) = U^d + H^rot for one (K, epsilon) block on a uniform mesh."""

    def __init__(self, states, mesh: RadialMesh, v, mu: float):
        self.states = list(states)
        self.mesh = mesh
        self.v = np.asarray(v, dtype=float)        # [n_points, n, n]
        self.mu = float(mu)
        eps = {s.epsilon for s in self.states}
        if len(eps) > 1:
            raise ValidationError("mixed-parity Hamiltonian block")
        ks = {s.K for s in self.states}
        if len(ks) > 1:
            raise ValidationError("mixed-K Hamiltonian block")
        if self.v.shape != (len(mesh), len(self.states), len(self.states)):
            raise ValidationError("V array shape does not match states x mesh")

    @property
    def K(self) -> int:
        return self.states[0].K

    @property
    def epsilon(self) -> int:
        return self.states[0].epsilon

    @property
    def nstates(self) -> int:
        return len(self.states)

    def thresholds(self) -> np.ndarray:
        return np.array([s.channel.asymptotic_energy for s in self.states])

    def state_index(self, channel: ElectronicChannel) -> int:
        for i, s in enumerate(self.states):
            if s.channel.key == channel.key:
                return i
        raise KeyError(f"channel {channel.describe()} not in block")


def assemble_block(diabatic: DiabaticModel, couplings: CouplingSet | None,
                   mu: float, K: int, epsilon: int, include_rotational: bool,
                   initial_lambda: int | None = None) -> HamiltonianBlock:
    """Evaluate V(R) for the (K, epsilon) block on the diabatic model's mesh.

    Rotational L(R) matrix elements are tabulated between adiabatic states;
    they are rotated into the diabatic basis with the per-block ADT matrices
    before entering V.
    """
    states = build_basis(diabatic.channels, K, epsilon, include_rotational,
                         initial_lambda=initial_lambda)
    if not states:
        raise ValidationError(f"no channels admitted for K={K}, epsilon={epsilon}")
    mesh = diabatic.mesh
    r = mesh.points
    n = len(states)
    # position of each selected channel in the full diabatic matrix
    chan_pos = {ch.key: i for i, ch in enumerate(diabatic.channels)}
    sel = np.array([chan_pos[s.channel.key] for s in states])
    v = diabatic.ud[:, sel[:, None], sel[None, :]].copy()
    for i, s in enumerate(states):
        v[:, i, i] += centrifugal_term(K, s.channel.lam, mu, r)
    if include_rotational and couplings is not None:
        _add_rotational(v, states, diabatic, couplings, mu, K)
    return HamiltonianBlock(states, mesh, v, mu)


def _add_rotational(v, states, diabatic: DiabaticModel, couplings: CouplingSet,
                    mu: float, K: int):
    r = diabatic.mesh.points
    npts = r.size
    state_pos = {s.channel.key: i for i, s in enumerate(states)}
    mult = states[0].channel.spin_multiplicity
    inv_2mur2 = 1.0 / (2.0 * mu * r**2)
    for entry in couplings.rotational_entries(mult):
        key_a = (mult, entry.lam, entry.m)
        key_b = (mult, entry.lamp, entry.mp)
        if key_a not in state_pos or key_b not in state_pos:
            continue
        coeff = ladder_coefficient(K, entry.lam, entry.lamp)
        l_of_r = couplings.rotational_function(entry)(r)
        # rotate the adiabatic-state element into the diabatic basis:
        # L^d = D_a^T L D_b over the two Lambda blocks involved
        da = diabatic.adt_blocks.get((mult, entry.lam))
        db = diabatic.adt_blocks.get((mult, entry.lamp))
        block_a = [ch for ch in diabatic.channels if ch.block == (mult, entry.lam)]
        block_b = [ch for ch in diabatic.channels if ch.block == (mult, entry.lamp)]
        pa = next(i for i, ch in enumerate(block_a) if ch.m == entry.m)
        pb = next(i for i, ch in enumerate(block_b) if ch.m == entry.mp)
        ld = np.zeros((npts, len(block_a), len(block_b)))
        ld[:, pa, pb] = l_of_r
        if da is not None:
            ld = np.einsum("pki,pkj->pij", da.d, ld)
        if db is not None:
            ld = np.einsum("pik,pkj->pij", ld, db.d)
        elem = -coeff * inv_2mur2
        for ia, ch_a in enumerate(block_a):
            i = state_pos.get((mult, entry.lam, ch_a.m))
            if i is None:
                continue
            for ib, ch_b in enumerate(block_b):
                j = state_pos.get((mult, entry.lamp, ch_b.m))
                if j is None:
                    continue
                contrib = elem * ld[:, ia, ib]
                v[:, i, j] += contrib
                v[:, j, i] += contrib
