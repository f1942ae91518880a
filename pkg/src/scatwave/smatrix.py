"""S-matrix extraction from absorbed flux, and cross-section assembly.

|S|^2 between channels comes out of the time correlation of the amplitudes
absorbed by the CAP,

    |S_fi(E)|^2 = 1/(pi |Gamma_i(E)|^2) * sum_j W_j |phi~_f(R_j, E)|^2 dR,

where phi~ is the time-Fourier transform of the recorded amplitudes on the
CAP support (the double time integral factorizes because the flux kernel is
diagonal in channel and grid point) and Gamma is the overlap of the initial
Gaussian with the energy-normalized stationary states,

The 1/pi constant (rather than 1/2pi) is fixed by probability conservation
for the absorbed dynamics: integrating |Gamma|^2 sum_f |S_fi|^2 over E must
reproduce the total norm removed by the CAP, 2 * int dt <W>; the absorber
eats the amplitudes as they traverse it, which halves the W-weighted spectral
density relative to the unabsorbed flux.  Verified against the independent
coupled-channel solver (see cc_oracle).

    Gamma_i^K(E) = sqrt(mu / 2 pi k) * integral h+_K(k R) g(R) dR.

Riccati-Hankel convention: h+-_K(x) = x [j_K(x) +- i y_K(x)], which gives
h+-_0(x) = -+ i exp(+- i x) and the Wronskian h+ h-' - h- h+' = -2i.

Partial cross sections follow sigma = pi/k^2 sum_K (2K+1)|S^K - delta|^2;
only |S|^2 is available here, so the elastic entry (which needs the phase)
is flagged and excluded rather than assembled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import BOHR2_TO_CM2, collision_energy_ev_amu
from .errors import DomainError, EnergyOutOfBandError, IncompleteDataError
from .molecular_data import ElectronicChannel
from .propagation import TimeSeries

# |Gamma|^2 below this fraction of its peak: unusable energy
GAMMA_FLOOR_REL = 1e-12
# band edge used when emitting results
BAND_EDGE_REL = 1e-4
# saturation magnitude for the irregular solution deep under the
# centrifugal barrier (keeps Gamma finite; |S|^2 -> 0 there)
_SATURATE = 1e250


def _riccati_upward(K, x, f0, f1):
    """Three-term upward recurrence f_{n+1} = (2n+1)/x f_n - f_{n-1}.

    Returns orders K and K-1.  The pair is rescaled when it saturates (only
    happens for the irregular solution deep under the barrier).
    """
    fm, fc = f0.copy(), f1.copy()
    for n in range(1, K):
        fn = (2 * n + 1) / x * fc - fm
        fm, fc = fc, fn
        mag = np.abs(fc)
        if np.any(mag > _SATURATE):
            factor = np.where(mag > _SATURATE, _SATURATE / mag, 1.0)
            fc = fc * factor
            fm = fm * factor
    return fc, fm


def _riccati_j_miller(K, x):
    """Downward (Miller) recurrence for the regular solution, orders K and K-1."""
    n_start = K + int(np.sqrt(40.0 * (K + 1))) + 20
    sp = np.zeros_like(x)            # s_{n+1}
    sc = np.full_like(x, 1e-280)     # s_n
    jk = np.zeros_like(x)
    jkm = np.zeros_like(x)
    for n in range(n_start, 0, -1):
        sm = (2 * n + 1) / x * sc - sp
        sp, sc = sc, sm              # now sc = s_{n-1}, sp = s_n
        if n - 1 == K:
            jk = sc
        elif n - 1 == K - 1:
            jkm = sc
        mag = np.abs(sc)
        if np.any(mag > 1e250):
            factor = np.where(mag > 1e250, 1.0 / mag, 1.0)
            sc = sc * factor
            sp = sp * factor
            jk = jk * factor
            jkm = jkm * factor
    # after the loop sc = s_0 and sp = s_1; normalize with whichever closed
    # form is away from its zeros
    j0 = np.sin(x)
    j1 = np.sin(x) / x - np.cos(x)
    use1 = np.abs(j0) < 0.1
    ref = np.where(use1, j1, j0)
    got = np.where(use1, sp, sc)
    ratio = np.where(np.abs(got) > 0.0, ref / np.where(got == 0.0, 1.0, got), 0.0)
    return jk * ratio, jkm * ratio


def riccati_jy(K: int, x):
    """Riccati-Bessel j^ = x j_K(x), y^ = x y_K(x) and their derivatives.

    Stable everywhere: upward recurrences where x >= K, Miller's downward
    recurrence for j^ where x < K.  Returns (j, y, j', y') arrays.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0.0):
        raise DomainError("Riccati-Bessel functions need x > 0")
    if K < 0:
        raise DomainError("order K must be non-negative")
    sin_x, cos_x = np.sin(x), np.cos(x)
    j0, j1 = sin_x, sin_x / x - cos_x
    y0, y1 = -cos_x, -cos_x / x - sin_x
    yk, ykm = _riccati_upward(K, x, y0, y1)
    if K == 0:
        j, jp = j0, cos_x
        y, yp = y0, sin_x
        return j, y, jp, yp
    up = x >= K
    jk = np.empty_like(x)
    jkm = np.empty_like(x)
    if np.any(up):
        a, b = _riccati_upward(K, x[up], j0[up], j1[up])
        jk[up], jkm[up] = a, b
    if np.any(~up):
        a, b = _riccati_j_miller(K, x[~up])
        jk[~up], jkm[~up] = a, b
    jp = jkm - K * jk / x
    yp = ykm - K * yk / x
    return jk, yk, jp, yp


def riccati_hankel(K: int, x):
    """Outgoing/incoming pair h^+- = j^ +- i y^ (h^+-_0(x) = -+ i e^{+- i x})."""
    j, y, _, _ = riccati_jy(K, x)
    return j + 1j * y, j - 1j * y


def riccati_hankel_with_derivatives(K: int, x):
    """(h+, h-, h+', h-') for asymptotic matching."""
    j, y, jp, yp = riccati_jy(K, x)
    return j + 1j * y, j - 1j * y, jp + 1j * yp, jp - 1j * yp


@dataclass(frozen=True)
class ChannelKinematics:
    """Channel wave number at total energy E (atomic units)."""

    channel: ElectronicChannel
    e_total: float
    mu: float

    @property
    def u_inf(self) -> float:
        return self.channel.asymptotic_energy

    @property
    def open(self) -> bool:
        return self.e_total > self.u_inf

    @property
    def k(self) -> float:
        if not self.open:
            raise DomainError(
                f"channel {self.channel.describe()} closed at E={self.e_total:g}"
            )
        return math.sqrt(2.0 * self.mu * (self.e_total - self.u_inf))


@dataclass(frozen=True)
class PacketSpec:
    """Initial Gaussian parameters (Eq.-of-motion inputs for Gamma)."""

    r0: float
    sigma: float
    k0: float          # negative = inward


def gaussian_on(r, packet: PacketSpec):
    return (2.0 / (np.pi * packet.sigma**2)) ** 0.25 * np.exp(
        1j * packet.k0 * r - (r - packet.r0) ** 2 / packet.sigma**2
    )


def gamma_amplitude(packet: PacketSpec, u_inf: float, mu: float, K: int,
                    e_grid, r, dr: float):
    """Gamma^K(E) = sqrt(mu/2 pi k) * integral h+_K(kR) g(R) dR on the grid.

    Vectorized over the energy grid; closed energies yield 0.  The quadrature
    window is restricted to where the Gaussian has support.
    """
    e_grid = np.atleast_1d(np.asarray(e_grid, dtype=float))
    g = gaussian_on(r, packet)
    support = np.abs(g) > 1e-18 * np.max(np.abs(g))
    rs, gs = r[support], g[support]
    out = np.zeros(e_grid.size, dtype=complex)
    for i, e in enumerate(e_grid):
        if e <= u_inf:
            continue
        k = math.sqrt(2.0 * mu * (e - u_inf))
        hp, _ = riccati_hankel(K, k * rs)
        out[i] = math.sqrt(mu / (2.0 * np.pi * k)) * np.sum(hp * gs) * dr
    return out


def energy_band(packet: PacketSpec, u_inf: float, mu: float, K: int,
                r, dr: float, n_energies: int = 200,
                band_rel: float = BAND_EDGE_REL):
    """Uniform energy grid spanning the band where |Gamma|^2 >= band_rel * peak."""
    k_abs = abs(packet.k0)
    dk = math.sqrt(-2.0 * math.log(band_rel)) / packet.sigma
    k_lo = max(k_abs - dk, 0.05 * k_abs, 1e-3)
    k_hi = k_abs + dk
    e_scan = u_inf + np.linspace(k_lo**2, k_hi**2, 4 * n_energies) / (2.0 * mu)
    g2 = np.abs(gamma_amplitude(packet, u_inf, mu, K, e_scan, r, dr)) ** 2
    peak = float(np.max(g2))
    if peak <= 0.0:
        raise EnergyOutOfBandError("packet has no spectral weight above threshold")
    ok = np.nonzero(g2 >= band_rel * peak)[0]
    e_min, e_max = e_scan[ok[0]], e_scan[ok[-1]]
    return np.linspace(e_min, e_max, n_energies)


def extract_s2(series: TimeSeries, gamma_sq, final_index: int,
               open_mask=None) -> np.ndarray:
    """|S_fi|^2(E) for one final channel from a recorded series.

    ``gamma_sq`` is |Gamma_i(E)|^2 on the series' energy grid.  Entries where
    the final channel is closed are zero by construction (no flux reaches the
    CAP in a closed channel); the caller flags them.
    """
    gamma_sq = np.asarray(gamma_sq, dtype=float)
    if gamma_sq.shape != series.energies.shape:
        raise DomainError("gamma grid does not match the recorded energy grid")
    num = np.sum(series.w_cap * np.abs(series.spectrum[:, final_index, :]) ** 2,
                 axis=1) * series.grid.dr
    out = np.zeros_like(num)
    good = gamma_sq > 0.0
    out[good] = num[good] / (np.pi * gamma_sq[good])
    if open_mask is not None:
        out = np.where(open_mask, out, 0.0)
    return out


@dataclass
class SMatrixEntry:
    K: int
    epsilon: int
    initial: ElectronicChannel
    final: ElectronicChannel
    energies: np.ndarray          # total energy, hartree
    s2: np.ndarray
    in_band: np.ndarray           # bool per energy
    final_open: np.ndarray        # bool per energy


class SMatrixTable:
    """|S^K|^2 per (K, epsilon, initial, final) over each packet's energy grid."""

    def __init__(self, metadata=None):
        self.entries: list[SMatrixEntry] = []
        self.metadata = dict(metadata or {})

    def add(self, entry: SMatrixEntry):
        self.entries.append(entry)

    def select(self, initial=None, final=None, K=None, epsilon=None):
        out = []
        for e in self.entries:
            if initial is not None and e.initial.key != initial.key:
                continue
            if final is not None and e.final.key != final.key:
                continue
            if K is not None and e.K != K:
                continue
            if epsilon is not None and e.epsilon != epsilon:
                continue
            out.append(e)
        return out

    def unitarity_defects(self):
        """max_E |sum_f |S|^2 - 1| per (K, epsilon, initial), in-band only."""
        sums = {}
        for e in self.entries:
            key = (e.K, e.epsilon, e.initial.key)
            acc, band = sums.setdefault(
                key, (np.zeros_like(e.s2), np.ones_like(e.in_band))
            )
            acc += e.s2
            band &= e.in_band
            sums[key] = (acc, band)
        out = {}
        for key, (acc, band) in sums.items():
            if np.any(band):
                out[key] = float(np.max(np.abs(acc[band] - 1.0)))
            else:
                out[key] = float("nan")
        return out


def partial_cross_section(s2, k_initial, K: int, elastic: bool = False):
    """(pi/k^2)(2K+1)|S - delta|^2 contribution; elastic entries are not assembled."""
    if elastic:
        raise DomainError(
            "elastic cross sections need the S-matrix phase, which the flux "
            "extraction does not provide"
        )
    k = np.asarray(k_initial, dtype=float)
    if np.any(k <= 0.0):
        raise DomainError("initial channel must be open")
    return np.pi / k**2 * (2 * K + 1) * np.asarray(s2)


@dataclass
class CrossSectionRow:
    initial: ElectronicChannel
    final: ElectronicChannel
    e_ev_amu: np.ndarray
    sigma: np.ndarray             # bohr^2
    k_max_used: int
    rotational: bool
    unitarity_defect: float = float("nan")

    @property
    def sigma_cm2(self) -> np.ndarray:
        return self.sigma * BOHR2_TO_CM2


class CrossSectionTable:
    """State-to-state sigma(E) rows plus the Eq.-(20/21)-style totals."""

    def __init__(self, mu: float, rotational: bool):
        self.mu = mu
        self.rotational = rotational
        self.rows: list[CrossSectionRow] = []

    def add(self, row: CrossSectionRow):
        self.rows.append(row)

    def find(self, initial_key, final_key):
        for row in self.rows:
            if row.initial.key == initial_key and row.final.key == final_key:
                return row
        return None

    def initial_channels(self):
        seen, out = set(), []
        for row in self.rows:
            if row.initial.key not in seen:
                seen.add(row.initial.key)
                out.append(row.initial)
        return out

    def _charge_transfer_rows(self, initial: ElectronicChannel):
        return [r for r in self.rows
                if r.initial.key == initial.key
                and r.final.arrangement != initial.arrangement]

    def sigma_nl_lambda(self, n: int, l: int, lam: int, mult: int = 1):
        """Charge-transfer total from the (n, l, Lambda) initial state (Eq. 20)."""
        rows = []
        for r in self.rows:
            ch = r.initial
            if (ch.n, ch.l, ch.lam, ch.spin_multiplicity) == (n, l, lam, mult) \
                    and r.final.arrangement != ch.arrangement:
                rows.append(r)
        if not rows:
            raise IncompleteDataError(
                f"no cross sections from (n={n}, l={l}, Lambda={lam})",
                missing=[(n, l, lam)],
            )
        e = rows[0].e_ev_amu
        total = np.zeros_like(rows[0].sigma)
        for r in rows:
            total = total + np.interp(e, r.e_ev_amu, r.sigma)
        return e, total

    def total_from_initial(self, n: int, l: int, mult: int = 1):
        """sigma(nl) = 1/(2l+1) [sigma(nl, 0) + 2 sum_{Lambda>0} sigma(nl Lambda)]."""
        missing = []
        parts = {}
        for lam in range(0, l + 1):
            try:
                parts[lam] = self.sigma_nl_lambda(n, l, lam, mult)
            except IncompleteDataError:
                missing.append((n, l, lam))
        if missing:
            names = {0: "Sigma", 1: "Pi", 2: "Delta"}
            raise IncompleteDataError(
                "missing Lambda blocks for sigma(n={}, l={}): {}".format(
                    n, l, ", ".join(names.get(lam, str(lam)) for (_, _, lam) in missing)
                ),
                missing=missing,
            )
        e = parts[0][0] if 0 in parts else next(iter(parts.values()))[0]
        total = np.zeros_like(e)
        for lam, (e_lam, sig) in parts.items():
            weight = 1.0 if lam == 0 else 2.0
            total = total + weight * np.interp(e, e_lam, sig)
        return e, total / (2 * l + 1)

    def total_to_final(self, final: ElectronicChannel):
        """Total into one final state, initial Lambda statistically weighted."""
        rows = [r for r in self.rows if r.final.key == final.key
                and r.initial.arrangement != final.arrangement]
        if not rows:
            raise IncompleteDataError(
                f"no cross sections into {final.describe()}", missing=[final.key]
            )
        e = rows[0].e_ev_amu
        total = np.zeros_like(rows[0].sigma)
        for r in rows:
            li, lam = r.initial.l, r.initial.lam
            weight = (2.0 if lam > 0 else 1.0) / (2 * li + 1)
            total = total + weight * np.interp(e, r.e_ev_amu, r.sigma)
        return e, total
