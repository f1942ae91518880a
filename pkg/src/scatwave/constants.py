"""Physical constants and unit conversions.

Everything inside the engine is in Hartree atomic units (hbar = m_e = e = 1,
lengths in bohr, energies in hartree, time in atomic time units).  Collision
energies quoted in eV/amu are converted at the interface only.
"""

# 1 amu in electron masses
AMU_TO_EMASS = 1822.888486

# 1 hartree in eV
HARTREE_TO_EV = 27.211386245988

# bohr radius in cm, and bohr^2 in cm^2 (cross-section conversion)
BOHR_TO_CM = 5.29177210903e-9
BOHR2_TO_CM2 = BOHR_TO_CM**2


def collision_energy_hartree(e_ev_amu: float, mu: float) -> float:
    """Relative (CM) collision energy in hartree for a given energy per amu.

    The eV/amu scale fixes the collision velocity: E_cm = (E/amu) * mu[amu].
    ``mu`` is the reduced mass in electron masses.
    """
    return e_ev_amu * (mu / AMU_TO_EMASS) / HARTREE_TO_EV


def collision_energy_ev_amu(e_hartree: float, mu: float) -> float:
    """Inverse of :func:`collision_energy_hartree`."""
    return e_hartree * HARTREE_TO_EV / (mu / AMU_TO_EMASS)
