"""Bundled model systems for validation, demos and regression tests.

Each builder returns a :class:`ModelSystem` holding the molecular inputs
(either adiabatic curves + couplings, or a ready-made diabatic matrix), the
reduced mass, and engine parameters tuned so that a desk-scale run resolves
the dynamics.  The models are small but physical: repulsive wall, open
channels across the packet band, couplings confined to an interaction region.

* ``well1``      one channel in a Morse-like well (elastic only).
* ``twochan``    two diabatic channels, near-constant coupling switched off
                 smoothly outside the interaction region.
* ``threechan``  three adiabatic channels with Gaussian radial couplings,
                 including a weak non-adjacent (1,3) lobe so the banded and
                 full diabatization routes genuinely differ.
* ``n2like``     four Sigma channels with the published n=2 asymptotic
                 energies, paper-scale grid defaults.
* ``sigmapi``    Sigma/Pi toy with one radial and one (tail-switched)
                 rotational coupling, for Lambda-conservation studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import AMU_TO_EMASS
from .diabatization import ADTMatrix, DiabaticModel, diabatize
from .molecular_data import (
    CouplingEntry,
    CouplingSet,
    CurveSet,
    ElectronicChannel,
    RadialMesh,
)
from .propagation import CAPSpec


@dataclass
class EngineParams:
    """Grid / packet / absorber / clock defaults for one model."""

    r_min: float
    r_max: float
    n_points: int
    r0: float
    sigma: float
    e_center_col: float       # collision energy at the packet center, hartree
    cap: CAPSpec
    dt: float
    t_max: float
    norm_floor: float = 1e-6
    n_energies: int = 120


@dataclass
class ModelSystem:
    name: str
    mu: float                              # electron masses
    curves: CurveSet | None
    couplings: CouplingSet | None
    diabatic_direct: np.ndarray | None     # [n_mesh, n, n] if defined diabatically
    params: EngineParams
    initial: tuple[int, int, int] = (1, 0, 1)   # (mult, lambda, m)

    def channel(self, mult, lam, m) -> ElectronicChannel:
        for ch in self.curves.channels:
            if ch.key == (mult, lam, m):
                return ch
        raise KeyError((mult, lam, m))


def _channel(m, lam, e_inf, arrangement, label, n=1, l=0, mult=1):
    return ElectronicChannel(
        m=m, lam=lam, spin_multiplicity=mult, asymptotic_energy=e_inf,
        arrangement=arrangement, atomic_label=label, n=n, l=l,
    )


def _wall(r, height=2.5, steep=1.5, r_wall=0.8):
    return height * np.exp(-steep * (r - r_wall))


def _gauss(r, center, width, amp):
    return amp * np.exp(-((r - center) / width) ** 2)


def _sigmoid_off(r, r_off, w):
    return 1.0 / (1.0 + np.exp(np.clip((r - r_off) / w, -500, 500)))


def well1_model() -> ModelSystem:
    """Single channel: Morse-like well, repulsive wall, purely elastic."""
    mu = 300.0
    mesh = RadialMesh(np.linspace(0.2, 30.0, 900))
    r = mesh.points
    d, a, re = 0.04, 1.2, 3.0
    u = d * (np.exp(-2 * a * (r - re)) - 2 * np.exp(-a * (r - re)))
    ch = _channel(1, 0, 0.0, "H_nl_plus_HeIon", "H(1s)")
    curves = CurveSet([ch], mesh, u[None, :])
    couplings = CouplingSet(mesh, [])
    params = EngineParams(
        r_min=0.2, r_max=28.0, n_points=512,
        r0=14.0, sigma=0.8, e_center_col=0.25,
        cap=CAPSpec(eta_c=0.03, r_c=19.0),
        dt=0.5, t_max=16000.0, norm_floor=1e-9,
    )
    return ModelSystem("well1", mu, curves, couplings, None, params)


def twochan_model() -> ModelSystem:
    """Two diabatic channels with a near-constant coupling in the inner region.

    Defined directly in the diabatic representation; the diabatic matrix is
    produced by :func:`build_diabatic_direct`.
    """
    mu = 300.0
    mesh = RadialMesh(np.linspace(0.2, 30.0, 900))
    ch1 = _channel(1, 0, 0.0, "H_nl_plus_HeIon", "H(1s)")
    ch2 = _channel(2, 0, 0.02, "He_1snl_plus_proton", "He(1s2s 1S)", n=2, l=0)
    r = mesh.points
    wall = _wall(r)
    u11 = wall
    u22 = wall + 0.02
    curves = CurveSet([ch1, ch2], mesh, np.stack([u11, u22]))
    couplings = CouplingSet(mesh, [])
    params = EngineParams(
        r_min=0.2, r_max=28.0, n_points=512,
        r0=14.0, sigma=0.8, e_center_col=0.25,
        cap=CAPSpec(eta_c=0.03, r_c=19.0),
        dt=0.5, t_max=16000.0, norm_floor=1e-9,
    )
    return ModelSystem("twochan", mu, curves, couplings,
                       _twochan_ud(mesh), params)


def _twochan_ud(mesh: RadialMesh) -> np.ndarray:
    r = mesh.points
    wall = _wall(r)
    ud = np.zeros((r.size, 2, 2))
    ud[:, 0, 0] = wall
    ud[:, 1, 1] = wall + 0.02
    ud[:, 0, 1] = ud[:, 1, 0] = 0.008 * _sigmoid_off(r, 6.0, 0.5)
    return ud


def threechan_model() -> ModelSystem:
    """Three adiabatic channels, Gaussian radial couplings, weak (1,3) lobe."""
    mu = 400.0
    mesh = RadialMesh(np.linspace(0.2, 30.0, 1200))
    r = mesh.points
    wall = _wall(r, height=2.2, steep=1.4)
    ch1 = _channel(1, 0, 0.0, "H_nl_plus_HeIon", "H(2s)", n=2, l=0)
    ch2 = _channel(2, 0, 0.010, "He_1snl_plus_proton", "He(1s2s 1S)", n=2, l=0)
    ch3 = _channel(3, 0, 0.022, "He_1snl_plus_proton", "He(1s2p 1P)", n=2, l=1)
    u1 = wall + 0.0 - _gauss(r, 4.0, 1.6, 0.010)
    u2 = wall + 0.010
    u3 = wall + 0.022 + _gauss(r, 5.0, 2.0, 0.004)
    curves = CurveSet([ch1, ch2, ch3], mesh, np.stack([u1, u2, u3]))
    entries = [
        CouplingEntry("radial", 1, 1, 0, 2, 0, _gauss(r, 5.5, 0.45, 1.2)),
        CouplingEntry("radial", 1, 2, 0, 3, 0, _gauss(r, 4.0, 0.40, 1.0)),
        # non-adjacent lobe sits on the repulsive wall: low-energy flux turns
        # around before sampling it, so the banded route is accurate at the
        # bottom of the band and degrades toward the top
        CouplingEntry("radial", 1, 1, 0, 3, 0, _gauss(r, 2.4, 0.35, 0.5)),
    ]
    couplings = CouplingSet(mesh, entries)
    params = EngineParams(
        r_min=0.2, r_max=28.0, n_points=1024,
        r0=14.0, sigma=0.8, e_center_col=0.20,
        cap=CAPSpec(eta_c=0.03, r_c=19.0),
        dt=0.4, t_max=16000.0, norm_floor=1e-9,
    )
    return ModelSystem("threechan", mu, curves, couplings, None, params)


def n2like_model() -> ModelSystem:
    """Four Sigma channels with the published n=2 asymptotes, paper-scale grid."""
    mu = reduced_mass_h_he()
    mesh = RadialMesh(np.linspace(0.2, 70.0, 2100))
    r = mesh.points
    wall = _wall(r, height=2.0, steep=1.1, r_wall=0.6)
    chans = [
        _channel(3, 0, -2.14589424, "He_1snl_plus_proton", "He(1s2s 1S)", n=2, l=0),
        _channel(4, 0, -2.12556499, "H_nl_plus_HeIon", "H(2p)", n=2, l=1),
        _channel(5, 0, -2.12433765, "H_nl_plus_HeIon", "H(2s)", n=2, l=0),
        _channel(6, 0, -2.12374055, "He_1snl_plus_proton", "He(1s2p 1P)", n=2, l=1),
    ]
    well = _gauss(r, 4.0, 1.5, 0.006)
    rows = [wall + ch.asymptotic_energy - well for ch in chans]
    curves = CurveSet(chans, mesh, np.stack(rows))
    entries = [
        CouplingEntry("radial", 1, 3, 0, 4, 0, _gauss(r, 6.0, 0.5, 0.8)),
        CouplingEntry("radial", 1, 4, 0, 5, 0, _gauss(r, 8.0, 0.5, 0.5)),
        CouplingEntry("radial", 1, 5, 0, 6, 0, _gauss(r, 10.0, 0.6, 0.9)),
    ]
    couplings = CouplingSet(mesh, entries)
    params = EngineParams(
        r_min=0.2, r_max=60.0, n_points=4096,
        r0=40.0, sigma=0.2, e_center_col=0.12,
        cap=CAPSpec(eta_c=0.01, r_c=45.0),
        dt=1.0, t_max=12000.0,
    )
    return ModelSystem("n2like", mu, curves, couplings, None, params,
                       initial=(1, 0, 5))


def sigmapi_model() -> ModelSystem:
    """Sigma/Pi toy: one radial (CT) coupling, one tail-switched L coupling."""
    mu = 350.0
    mesh = RadialMesh(np.linspace(0.2, 30.0, 900))
    r = mesh.points
    wall = _wall(r, height=2.2, steep=1.5)
    cha = _channel(1, 0, 0.0, "H_nl_plus_HeIon", "H(2s)", n=2, l=0)
    chb = _channel(2, 0, -0.012, "He_1snl_plus_proton", "He(1s2s 1S)", n=2, l=0)
    chp = _channel(1, 1, -0.009, "He_1snl_plus_proton", "He(1s2p 1P)", n=2, l=1)
    u_a = wall
    u_b = wall - 0.012
    u_p = wall - 0.009
    curves = CurveSet([cha, chb, chp], mesh, np.stack([u_a, u_b, u_p]))
    entries = [
        CouplingEntry("radial", 1, 1, 0, 2, 0, _gauss(r, 5.0, 0.45, 1.0)),
        # raw rotational coupling grows linearly (the problematic behaviour);
        # conditioned to the atomic value 0 by the logistic switch
        CouplingEntry("L-", 1, 2, 0, 1, 1, 0.9 + 0.04 * r,
                      atomic_value=0.0, r_s=10.0, w=0.8),
    ]
    couplings = CouplingSet(mesh, entries)
    params = EngineParams(
        r_min=0.2, r_max=28.0, n_points=512,
        r0=14.0, sigma=0.8, e_center_col=0.18,
        cap=CAPSpec(eta_c=0.03, r_c=19.0),
        dt=0.5, t_max=16000.0, norm_floor=1e-9,
    )
    return ModelSystem("sigmapi", mu, curves, couplings, None, params)


def reduced_mass_h_he() -> float:
    """Reduced mass of H + He from standard atomic masses, in electron masses."""
    ma, mb = 1.00782503, 4.00260325
    return ma * mb / (ma + mb) * AMU_TO_EMASS


# Published asymptotic energies (hartree, R = 70 a.u.) and dissociation
# products of the 22 singlet channels: (lambda, m, n, l, energy, arrangement,
# label).  The second n=3 Sigma H(3s) state lies below the He(1s3p) one.
TABLE1_SINGLETS = [
    (0, 1, 1, 0, "-2.90324307", "He_1snl_plus_proton", "He(1s2 1S)"),
    (0, 2, 1, 0, "-2.49995502", "H_nl_plus_HeIon", "H(1s)"),
    (0, 3, 2, 0, "-2.14589424", "He_1snl_plus_proton", "He(1s2s 1S)"),
    (0, 4, 2, 1, "-2.12556499", "H_nl_plus_HeIon", "H(2p)"),
    (0, 5, 2, 0, "-2.12433765", "H_nl_plus_HeIon", "H(2s)"),
    (0, 6, 2, 1, "-2.12374055", "He_1snl_plus_proton", "He(1s2p 1P)"),
    (0, 7, 3, 0, "-2.06157066", "He_1snl_plus_proton", "He(1s3s 1S)"),
    (0, 8, 3, 2, "-2.05758300", "H_nl_plus_HeIon", "H(3d)"),
    (0, 9, 3, 2, "-2.05632793", "He_1snl_plus_proton", "He(1s3d 1D)"),
    (0, 10, 3, 1, "-2.05537040", "H_nl_plus_HeIon", "H(3p)"),
    (0, 11, 3, 1, "-2.05379172", "He_1snl_plus_proton", "He(1s3p 1P)"),
    (0, 12, 3, 0, "-2.05411889", "H_nl_plus_HeIon", "H(3s)"),
    (0, 13, 4, 0, "-2.03701879", "He_1snl_plus_proton", "He(1s4s 1S)"),
    (0, 14, 4, 1, "-2.03502013", "H_nl_plus_HeIon", "H(4p)"),
    (1, 1, 2, 1, "-2.12491660", "H_nl_plus_HeIon", "H(2p)"),
    (1, 2, 2, 1, "-2.12368473", "He_1snl_plus_proton", "He(1s2p 1P)"),
    (1, 3, 3, 2, "-2.05639837", "H_nl_plus_HeIon", "H(3d)"),
    (1, 4, 3, 2, "-2.05616425", "He_1snl_plus_proton", "He(1s3d 1D)"),
    (1, 5, 3, 1, "-2.05456333", "H_nl_plus_HeIon", "H(3p)"),
    (1, 6, 3, 1, "-2.05419837", "He_1snl_plus_proton", "He(1s3p 1P)"),
    (2, 1, 3, 2, "-2.05540649", "H_nl_plus_HeIon", "H(3d)"),
    (2, 2, 3, 2, "-2.05537712", "He_1snl_plus_proton", "He(1s3d 1D)"),
]


def table1_curve_set() -> CurveSet:
    """All 22 singlet channels with their published asymptotes.

    The curve shapes are synthetic (a common repulsive wall on every channel,
    which keeps the same-symmetry ordering intact at every R); the channel
    metadata and asymptotic energies are the published values, preserved
    bit-exactly through the file round trip.
    """
    mesh = RadialMesh(np.linspace(0.9, 70.0, 240))
    r = mesh.points
    wall = 2.0 * np.exp(-1.3 * (r - 0.7))
    channels = []
    rows = []
    for lam, mm, n, l, e_str, arr, label in TABLE1_SINGLETS:
        e_inf = float(e_str)
        channels.append(_channel(mm, lam, e_inf, arr, label, n=n, l=l))
        rows.append(wall + e_inf)
    return CurveSet(channels, mesh, np.stack(rows))


def table1_fixture_path():
    """Path of the bundled Table-I curve file (importlib.resources)."""
    from importlib.resources import files

    return files("scatwave").joinpath("data/table1_singlets.curves")


def build_diabatic_direct(model: ModelSystem, mesh: RadialMesh) -> DiabaticModel:
    """Diabatic model for systems defined directly by a diabatic matrix.

    The stored matrix lives on the model's raw mesh; it is re-evaluated on the
    requested uniform mesh by the same builder functions (exact, no spline).
    """
    if model.name != "twochan":
        raise ValueError("direct diabatic construction only defined for 'twochan'")
    ud = _twochan_ud(mesh)
    eye = np.broadcast_to(np.eye(2), (len(mesh), 2, 2)).copy()
    adt = ADTMatrix(mesh, eye)
    return DiabaticModel(model.curves.channels, mesh, ud,
                         {(1, 0): adt})


def build_model_diabatic(model: ModelSystem, mesh: RadialMesh,
                         banded: bool = True) -> DiabaticModel:
    """Diabatic model on the given uniform mesh, whichever way the model is defined."""
    if model.diabatic_direct is not None:
        return build_diabatic_direct(model, mesh)
    return diabatize(model.curves, model.couplings, mesh, banded=banded)
