"""Tabulated molecular inputs: potential curves and non-adiabatic couplings.

Loads plain-text curve/coupling tables, validates their physical invariants,
and wraps every tabulated function in an interpolator that is total on R > 0:

* inside the mesh: natural cubic spline (couplings are narrow and sharply
  peaked, so a continuous second derivative matters);
* beyond the outer mesh point: potentials hold their asymptotic energy,
  radial couplings drop to zero, rotational couplings follow their tail
  policy (optionally blended to the atomic value by a logistic switch);
* below the inner mesh point: potentials grow along an exponential repulsive
  wall fitted to the two innermost points, couplings hold the innermost value.
"""

from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .constants import AMU_TO_EMASS
from .errors import DomainError, MeshError, ParseError, ValidationError

ARRANGEMENTS = ("H_nl_plus_HeIon", "He_1snl_plus_proton")

# |U(R_max) - E_inf| tolerance used when validating a loaded CurveSet
ASYMPTOTE_TOL = 1e-6
# radial couplings must have decayed below this at the outer mesh boundary
RADIAL_DECAY_TOL = 1e-4


@dataclass(frozen=True)
class ElectronicChannel:
    """One molecular electronic state: the identity of a scattering channel."""

    m: int                      # 1-based index within its |Lambda| block
    lam: int                    # |Lambda|: 0=Sigma, 1=Pi, 2=Delta
    spin_multiplicity: int      # 1 or 3
    asymptotic_energy: float    # hartree, at the outer mesh boundary
    arrangement: str            # which fragment carries the electron
    atomic_label: str           # e.g. "H(2s)" or "He(1s2p 1P)"
    n: int                      # principal quantum number of the valence electron
    l: int                      # orbital quantum number of the valence electron

    def __post_init__(self):
        if self.arrangement not in ARRANGEMENTS:
            raise ValidationError(
                f"unknown arrangement {self.arrangement!r}; expected one of {ARRANGEMENTS}"
            )
        if self.lam < 0:
            raise ValidationError("lambda must be |Lambda| >= 0")

    @property
    def block(self) -> tuple[int, int]:
        """(spin multiplicity, |Lambda|) symmetry block key."""
        return (self.spin_multiplicity, self.lam)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.spin_multiplicity, self.lam, self.m)

    def describe(self) -> str:
        sym = {0: "Sigma", 1: "Pi", 2: "Delta"}.get(self.lam, f"Lambda={self.lam}")
        return f"{self.atomic_label} [{sym}, m={self.m}]"


class RadialMesh:
    """Strictly increasing array of R values in bohr."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size < 4:
            raise MeshError("mesh needs at least 4 points for spline interpolation")
        if not np.all(np.diff(pts) > 0.0):
            raise MeshError("mesh points must be strictly increasing")
        self.points = pts

    def __len__(self):
        return self.points.size

    @property
    def rmin(self) -> float:
        return float(self.points[0])

    @property
    def rmax(self) -> float:
        return float(self.points[-1])

    def __eq__(self, other):
        return isinstance(other, RadialMesh) and np.array_equal(self.points, other.points)


def reduced_mass(mass_a: float, mass_b: float) -> float:
    """Nuclear-motion reduced mass in electron masses from atomic masses in amu."""
    if mass_a <= 0.0 or mass_b <= 0.0:
        raise DomainError("masses must be positive")
    return mass_a * mass_b / (mass_a + mass_b) * AMU_TO_EMASS


def _fit_repulsive_wall(r0, u0, r1, u1, slope0):
    """Fit U(R) = U0 + A*(exp(-beta*(R-R0)) - 1) to the innermost segment.

    Matches the spline slope at R0 and the tabulated value at R1.  Returns
    (A, beta), or None when the data is not wall-like (then the caller falls
    back to a linear continuation).
    """
    h = r1 - r0
    d = u1 - u0
    if slope0 >= 0.0 or d >= 0.0 or d <= slope0 * h:
        return None
    # g(beta) = (-slope0/beta)*(exp(-beta*h) - 1) - d, monotone on (0, inf)
    def g(beta):
        return (-slope0 / beta) * (math.expm1(-beta * h)) - d

    lo, hi = 1e-8, 1.0
    while g(hi) < 0.0 and hi < 1e8:
        hi *= 2.0
    if g(lo) * g(hi) > 0.0:
        return None
    beta = brentq(g, lo, hi, xtol=1e-14, rtol=1e-14)
    return (-slope0 / beta, beta)


class PotentialCurve:
    """Callable adiabatic potential U(R), total on R > 0."""

    def __init__(self, mesh: RadialMesh, values, asymptote: float):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        self.asymptote = float(asymptote)
        self._spline = CubicSpline(mesh.points, self.values, bc_type="natural")
        slope0 = float(self._spline(mesh.rmin, 1))
        self._slope0 = slope0
        self._wall = _fit_repulsive_wall(
            mesh.points[0], self.values[0], mesh.points[1], self.values[1], slope0
        )

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        below = r < self.mesh.rmin
        above = r > self.mesh.rmax
        inside = ~(below | above)
        out[inside] = self._spline(r[inside])
        out[above] = self.asymptote
        if np.any(below):
            dr = r[below] - self.mesh.rmin
            if self._wall is not None:
                a, beta = self._wall
                out[below] = self.values[0] + a * np.expm1(-beta * dr)
            else:
                out[below] = self.values[0] + self._slope0 * dr
        return out if out.shape else float(out)


class CouplingCurve:
    """Callable coupling function with tail policy.

    Radial couplings continue as zero beyond the mesh; rotational couplings
    continue linearly (the raw ab initio behaviour) and rely on an explicit
    tail switch to stay bounded.  Below the mesh both hold the innermost value.
    """

    def __init__(self, mesh: RadialMesh, values, kind: str):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        self.kind = kind
        self._spline = CubicSpline(mesh.points, self.values, bc_type="natural")
        self._end_slope = float(self._spline(mesh.rmax, 1))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        below = r < self.mesh.rmin
        above = r > self.mesh.rmax
        inside = ~(below | above)
        out[inside] = self._spline(r[inside])
        out[below] = self.values[0]
        if self.kind == "radial":
            out[above] = 0.0
        else:
            out[above] = self.values[-1] + self._end_slope * (r[above] - self.mesh.rmax)
        return out if out.shape else float(out)


class SwitchedCoupling:
    """Rotational coupling blended to its atomic value outside R_s.

    g(R) = s(R) * raw(R) + (1 - s(R)) * atomic,  s(R) = 1/(1 + exp((R-R_s)/w)).
    """

    def __init__(self, raw, r_s: float, w: float, atomic_value: float):
        if w <= 0.0:
            raise DomainError("switch width w must be positive")
        self.raw = raw
        self.r_s = float(r_s)
        self.w = float(w)
        self.atomic_value = float(atomic_value)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        # clip the argument: exp overflow is irrelevant once s is 0 or 1
        z = np.clip((r - self.r_s) / self.w, -700.0, 700.0)
        s = 1.0 / (1.0 + np.exp(z))
        out = s * np.asarray(self.raw(r), dtype=float) + (1.0 - s) * self.atomic_value
        return out if out.shape else float(out)


def apply_tail_switch(coupling, r_s: float, w: float, atomic_value: float) -> SwitchedCoupling:
    """Condition a rotational coupling so it tends to the atomic value."""
    return SwitchedCoupling(coupling, r_s, w, atomic_value)


class CurveSet:
    """Adiabatic potential curves for a list of channels on a common mesh."""

    def __init__(self, channels, mesh: RadialMesh, energies, asymptote_tol=ASYMPTOTE_TOL):
        energies = np.asarray(energies, dtype=float)
        if energies.shape != (len(channels), len(mesh)):
            raise ValidationError(
                f"energy table shape {energies.shape} does not match "
                f"{len(channels)} channels x {len(mesh)} mesh points"
            )
        if not np.all(np.isfinite(energies)):
            raise ValidationError("potential curves contain non-finite values")
        order = sorted(
            range(len(channels)),
            key=lambda i: (channels[i].spin_multiplicity, channels[i].lam,
                           channels[i].asymptotic_energy),
        )
        self.channels = [channels[i] for i in order]
        self.energies = energies[order]
        self.mesh = mesh
        self._check_unique()
        self._check_asymptotes(asymptote_tol)
        self._check_noncrossing()
        self._curves = [
            PotentialCurve(mesh, self.energies[i], self.channels[i].asymptotic_energy)
            for i in range(len(self.channels))
        ]

    def _check_unique(self):
        seen = set()
        for ch in self.channels:
            if ch.key in seen:
                raise ValidationError(f"duplicate channel (mult,lambda,m)={ch.key}")
            seen.add(ch.key)

    def _check_asymptotes(self, tol):
        for ch, row in zip(self.channels, self.energies):
            if abs(row[-1] - ch.asymptotic_energy) > tol:
                raise ValidationError(
                    f"channel {ch.describe()}: tabulated value at R_max "
                    f"({row[-1]!r}) does not match declared asymptote "
                    f"({ch.asymptotic_energy!r}) within {tol}"
                )

    def _check_noncrossing(self):
        for block, idx in self.blocks().items():
            for a, b in zip(idx[:-1], idx[1:]):
                diff = self.energies[b] - self.energies[a]
                bad = np.nonzero(diff < -1e-12)[0]
                if bad.size:
                    r_bad = self.mesh.points[bad[0]]
                    raise ValidationError(
                        f"same-symmetry crossing in block {block} between "
                        f"m={self.channels[a].m} and m={self.channels[b].m} "
                        f"at R={r_bad:g}"
                    )

    def blocks(self) -> dict[tuple[int, int], list[int]]:
        """Channel indices grouped by (spin multiplicity, |Lambda|), energy-ordered."""
        out: dict[tuple[int, int], list[int]] = {}
        for i, ch in enumerate(self.channels):
            out.setdefault(ch.block, []).append(i)
        return out

    def index_of(self, mult: int, lam: int, m: int) -> int:
        for i, ch in enumerate(self.channels):
            if ch.key == (mult, lam, m):
                return i
        raise KeyError(f"no channel with (mult,lambda,m)=({mult},{lam},{m})")

    def potential(self, i: int) -> PotentialCurve:
        return self._curves[i]


@dataclass
class CouplingEntry:
    """One tabulated coupling column.

    ``kind`` is "radial" for <i|d/dR|j> within a Lambda block (bohr^-1) or
    "L+"/"L-" for rotational ladder matrix elements (|dLambda| = 1,
    dimensionless).  The stored direction is (m,lam) -> (mp,lamp); radial
    couplings are antisymmetric under exchange.
    """

    kind: str
    mult: int
    m: int
    lam: int
    mp: int
    lamp: int
    values: np.ndarray
    atomic_value: float = 0.0
    r_s: float | None = None
    w: float | None = None

    def pair(self):
        return (self.mult, self.lam, self.m, self.lamp, self.mp)


class CouplingSet:
    """Radial and rotational coupling functions on a common mesh."""

    def __init__(self, mesh: RadialMesh, entries, radial_decay_tol=RADIAL_DECAY_TOL):
        self.mesh = mesh
        self.entries = list(entries)
        for e in self.entries:
            e.values = np.asarray(e.values, dtype=float)
            if e.values.shape != (len(mesh),):
                raise ValidationError("coupling column length does not match mesh")
            if not np.all(np.isfinite(e.values)):
                raise ValidationError("coupling contains non-finite values")
            if e.kind == "radial":
                if e.lam != e.lamp:
                    raise ValidationError("radial coupling must stay within a Lambda block")
                if abs(e.values[-1]) > radial_decay_tol:
                    raise ValidationError(
                        f"radial coupling {e.pair()} has not decayed at the outer "
                        f"boundary (|F(R_max)| = {abs(e.values[-1]):.3e})"
                    )
            elif e.kind in ("L+", "L-"):
                if abs(e.lam - e.lamp) != 1:
                    raise ValidationError("rotational coupling requires |dLambda| = 1")
            else:
                raise ValidationError(f"unknown coupling kind {e.kind!r}")
        self._check_antisymmetry()

    def _check_antisymmetry(self):
        radial = {}
        for e in self.entries:
            if e.kind != "radial":
                continue
            key = (e.mult, e.lam, e.m, e.mp)
            radial[key] = e
        for (mult, lam, m, mp), e in radial.items():
            rev = radial.get((mult, lam, mp, m))
            if rev is not None and not np.allclose(rev.values, -e.values, atol=1e-12):
                raise ValidationError(
                    f"radial couplings ({m},{mp}) and ({mp},{m}) in block "
                    f"(mult={mult},lambda={lam}) are not antisymmetric"
                )

    def radial_entries(self, mult: int, lam: int):
        return [e for e in self.entries if e.kind == "radial" and e.mult == mult and e.lam == lam]

    def rotational_entries(self, mult: int):
        return [e for e in self.entries if e.kind != "radial" and e.mult == mult]

    def radial_matrix(self, curves: CurveSet, mult: int, lam: int):
        """Antisymmetric F(R) over the (mult, lam) block, as a callable -> [n,n]."""
        idx = curves.blocks().get((mult, lam), [])
        n = len(idx)
        pos = {curves.channels[i].m: p for p, i in enumerate(idx)}
        funcs = []
        for e in self.radial_entries(mult, lam):
            if e.m not in pos or e.mp not in pos:
                raise ValidationError(
                    f"radial coupling {e.pair()} references channels missing "
                    f"from block (mult={mult},lambda={lam})"
                )
            funcs.append((pos[e.m], pos[e.mp], CouplingCurve(self.mesh, e.values, "radial")))

        def f_matrix(r):
            r = np.asarray(r, dtype=float)
            out = np.zeros(r.shape + (n, n))
            for i, j, fn in funcs:
                v = fn(r)
                out[..., i, j] += v
                out[..., j, i] -= v
            return out

        return f_matrix

    def rotational_function(self, entry: CouplingEntry):
        """Conditioned callable for one rotational coupling entry."""
        raw = CouplingCurve(self.mesh, entry.values, "rotational")
        if entry.r_s is not None:
            return apply_tail_switch(raw, entry.r_s, entry.w or 1.0, entry.atomic_value)
        return raw

    def with_switch(self, r_s: float, w: float) -> "CouplingSet":
        """Copy with the given tail switch applied to every rotational coupling."""
        entries = [
            replace(e, r_s=r_s, w=w) if e.kind != "radial" else e
            for e in self.entries
        ]
        return CouplingSet(self.mesh, entries)


# ----------------------------------------------------------------------------
# file format
#
# Curve file:
#   # scatwave curves
#   # channel m=1 lambda=0 mult=1 n=1 l=0 arrangement=... label="..." e_inf=-2.9
#   <R> <U1> <U2> ...          (one row per mesh point)
#
# Coupling file:
#   # scatwave couplings
#   # coupling col=1 kind=radial mult=1 m=1 lambda=0 mp=2 lambdap=0
#   # coupling col=2 kind=L- mult=1 m=2 lambda=0 mp=1 lambdap=1 atomic=0.0
#   <R> <F1> <F2> ...
# ----------------------------------------------------------------------------


def _parse_attrs(text: str, lineno: int) -> dict[str, str]:
    attrs = {}
    try:
        tokens = shlex.split(text)
    except ValueError as exc:
        raise ParseError(f"bad header token: {exc}", line=lineno)
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", line=lineno)
        key, val = tok.split("=", 1)
        attrs[key] = val
    return attrs


def _require(attrs: dict, keys, lineno: int):
    for k in keys:
        if k not in attrs:
            raise ParseError(f"missing header field {k!r}", line=lineno)


def _read_table(lines, ncols: int, first_lineno: int):
    rows = []
    for off, line in enumerate(lines):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != ncols:
            raise ParseError(
                f"expected {ncols} columns, found {len(parts)}", line=first_lineno + off
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(str(exc), line=first_lineno + off)
    if not rows:
        raise ParseError("no data rows found", line=first_lineno)
    return np.asarray(rows, dtype=float)


def load_curve_set(path) -> CurveSet:
    """Load and validate a curve file (see module docstring for the format)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    channels = []
    data_start = 0
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.startswith("channel"):
                attrs = _parse_attrs(body[len("channel"):], lineno)
                _require(attrs, ("m", "lambda", "mult", "label", "e_inf",
                                 "arrangement", "n", "l"), lineno)
                try:
                    channels.append(ElectronicChannel(
                        m=int(attrs["m"]),
                        lam=int(attrs["lambda"]),
                        spin_multiplicity=int(attrs["mult"]),
                        asymptotic_energy=float(attrs["e_inf"]),
                        arrangement=attrs["arrangement"],
                        atomic_label=attrs["label"],
                        n=int(attrs["n"]),
                        l=int(attrs["l"]),
                    ))
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno)
            continue
        data_start = lineno
        break
    if not channels:
        raise ParseError("no channel headers found", line=1)
    table = _read_table(lines[data_start - 1:], 1 + len(channels), data_start)
    try:
        mesh = RadialMesh(table[:, 0])
    except MeshError:
        raise
    return CurveSet(channels, mesh, table[:, 1:].T)


def save_curve_set(curves: CurveSet, path):
    """Write a CurveSet back out; floats use repr so a reload is bit-exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# scatwave curves\n")
        for ch in curves.channels:
            fh.write(
                "# channel m={m} lambda={lam} mult={mult} n={n} l={l} "
                "arrangement={arr} label={label} e_inf={e}\n".format(
                    m=ch.m, lam=ch.lam, mult=ch.spin_multiplicity, n=ch.n, l=ch.l,
                    arr=ch.arrangement, label=shlex.quote(ch.atomic_label),
                    e=repr(ch.asymptotic_energy),
                )
            )
        for j, r in enumerate(curves.mesh.points):
            row = [repr(float(r))] + [repr(float(v)) for v in curves.energies[:, j]]
            fh.write(" ".join(row) + "\n")


def load_coupling_set(path) -> CouplingSet:
    """Load and validate a coupling file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    headers = []
    data_start = 0
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.startswith("coupling"):
                attrs = _parse_attrs(body[len("coupling"):], lineno)
                _require(attrs, ("col", "kind", "mult", "m", "lambda", "mp", "lambdap"),
                         lineno)
                headers.append((int(attrs["col"]), attrs, lineno))
            continue
        data_start = lineno
        break
    if not headers:
        raise ParseError("no coupling headers found", line=1)
    headers.sort(key=lambda h: h[0])
    expected = list(range(1, len(headers) + 1))
    if [h[0] for h in headers] != expected:
        raise ParseError("coupling col= indices must be 1..ncols without gaps", line=1)
    table = _read_table(lines[data_start - 1:], 1 + len(headers), data_start)
    mesh = RadialMesh(table[:, 0])
    entries = []
    for col, attrs, lineno in headers:
        try:
            entries.append(CouplingEntry(
                kind=attrs["kind"],
                mult=int(attrs["mult"]),
                m=int(attrs["m"]),
                lam=int(attrs["lambda"]),
                mp=int(attrs["mp"]),
                lamp=int(attrs["lambdap"]),
                values=table[:, col],
                atomic_value=float(attrs.get("atomic", 0.0)),
                r_s=float(attrs["rs"]) if "rs" in attrs else None,
                w=float(attrs["w"]) if "w" in attrs else None,
            ))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno)
    return CouplingSet(mesh, entries)


def save_coupling_set(couplings: CouplingSet, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# scatwave couplings\n")
        for col, e in enumerate(couplings.entries, start=1):
            extra = ""
            if e.kind != "radial":
                extra = f" atomic={e.atomic_value!r}"
                if e.r_s is not None:
                    extra += f" rs={e.r_s!r} w={e.w!r}"
            fh.write(
                f"# coupling col={col} kind={e.kind} mult={e.mult} m={e.m} "
                f"lambda={e.lam} mp={e.mp} lambdap={e.lamp}{extra}\n"
            )
        cols = np.column_stack([couplings.mesh.points] +
                               [e.values for e in couplings.entries])
        for row in cols:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
