"""Split-operator propagation of multichannel wave packets.

H = -(1/2 mu) d^2/dR^2 + V(R) - i W(R) on a uniform FFT grid.  One step is

    psi <- exp(-i(V - iW) dt/2) . IFFT exp(-i k^2 dt / 2 mu) FFT . exp(-i(V - iW) dt/2) psi

The potential factor is applied through a per-grid-point eigendecomposition of
the real symmetric channel matrix V(R_j), precomputed once.  The CAP is the
same function of R in every channel, so at each grid point it is proportional
to the identity and its damping factor commutes exactly with the V factor.

The recorder accumulates the time-Fourier transform of the amplitudes on the
CAP support while the propagation runs (trapezoid weights, chunked matrix
products), which is all the S-matrix extraction needs; storing the raw series
is optional and only used for the binary dump format.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BlowupError, ConvergenceWarning, DomainError, PlacementError, ValidationError
from .rotational_basis import HamiltonianBlock

EDGE_AMPLITUDE_TOL = 1e-8


class UniformGrid:
    """Uniform radial grid with its conjugate momentum grid (FFT convention)."""

    def __init__(self, r_min: float, r_max: float, n: int):
        if n < 4 or (n & (n - 1)) != 0:
            raise ValidationError("grid size must be a power of two")
        if not (0.0 < r_min < r_max):
            raise ValidationError("need 0 < r_min < r_max")
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.n = int(n)
        self.dr = (self.r_max - self.r_min) / n
        self.r = self.r_min + self.dr * np.arange(n)
        self.k = 2.0 * np.pi * np.fft.fftfreq(n, d=self.dr)

    @property
    def k_grid_max(self) -> float:
        return np.pi / self.dr

    def resolves(self, k_phys: float, margin: float = 1.5) -> bool:
        """Whether the grid momentum cutoff exceeds ``margin`` times k_phys."""
        return self.k_grid_max > margin * k_phys

    def mesh_points(self) -> np.ndarray:
        return self.r


@dataclass(frozen=True)
class CAPSpec:
    """Quadratic complex absorbing potential W(R) = eta_c (R-R_c)^2/(R_inf-R_c)."""

    eta_c: float      # hartree / bohr
    r_c: float        # onset, bohr

    def __post_init__(self):
        if self.eta_c <= 0.0:
            raise ValidationError("CAP strength must be positive")


def cap_values(grid: UniformGrid, cap: CAPSpec) -> np.ndarray:
    """W on the grid; zero up to R_c, quadratic to eta_c*(R_inf - R_c) at the edge."""
    r_inf = grid.r[-1]
    if cap.r_c >= r_inf:
        raise ValidationError("CAP onset must lie inside the grid")
    w = np.zeros(grid.n)
    tail = grid.r > cap.r_c
    w[tail] = cap.eta_c * (grid.r[tail] - cap.r_c) ** 2 / (r_inf - cap.r_c)
    return w


class WavePacketState:
    """Complex channel amplitudes on a grid at one time instant."""

    def __init__(self, grid: UniformGrid, amplitudes, time: float = 0.0):
        self.grid = grid
        self.amplitudes = np.asarray(amplitudes, dtype=complex)
        if self.amplitudes.ndim != 2 or self.amplitudes.shape[1] != grid.n:
            raise ValidationError("amplitudes must be [channels, grid points]")
        self.time = float(time)

    @property
    def nchannels(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dr)

    def channel_norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1) * self.grid.dr

    def copy(self) -> "WavePacketState":
        return WavePacketState(self.grid, self.amplitudes.copy(), self.time)


def gaussian_packet(grid: UniformGrid, n_channels: int, channel: int,
                    r0: float, sigma: float, k0: float,
                    r_cap: float | None = None) -> WavePacketState:
    """Normalized Gaussian g(R) = (2/(pi sigma^2))^(1/4) exp(i k0 R - (R-R0)^2/sigma^2).

    k0 < 0 moves the packet inward.  The packet must fit between the inner
    wall and the absorber: R0 in [R_min + 4 sigma, R_c - 4 sigma].
    """
    if sigma <= 0.0:
        raise DomainError("sigma must be positive")
    if r0 < grid.r_min + 4.0 * sigma:
        raise PlacementError(
            f"packet at R0={r0:g} clips the inner wall (need R0 >= "
            f"{grid.r_min + 4.0 * sigma:g})"
        )
    if r_cap is not None and r0 > r_cap - 4.0 * sigma:
        raise PlacementError(
            f"packet at R0={r0:g} starts inside the absorber (need R0 <= "
            f"{r_cap - 4.0 * sigma:g})"
        )
    amps = np.zeros((n_channels, grid.n), dtype=complex)
    g = (2.0 / (np.pi * sigma**2)) ** 0.25 * np.exp(
        1j * k0 * grid.r - (grid.r - r0) ** 2 / sigma**2
    )
    amps[channel] = g
    return WavePacketState(grid, amps, 0.0)


class SplitStepPropagator:
    """Precomputed split-operator factors for one Hamiltonian block."""

    def __init__(self, block: HamiltonianBlock, grid: UniformGrid,
                 w: np.ndarray | None, dt: float):
        if not np.allclose(block.mesh.points, grid.r, rtol=0.0, atol=1e-12):
            raise ValidationError("Hamiltonian block mesh does not match the grid")
        if dt <= 0.0:
            raise DomainError("dt must be positive")
        self.block = block
        self.grid = grid
        self.dt = float(dt)
        self.w = np.zeros(grid.n) if w is None else np.asarray(w, dtype=float)
        evals, evecs = np.linalg.eigh(block.v)           # [N,n], [N,n,n]
        phase = np.exp(-0.5j * self.dt * evals)
        half = np.einsum("pik,pk,pjk->pij", evecs, phase, evecs)
        damp = np.exp(-0.5 * self.dt * self.w)
        self._half_v = half * damp[:, None, None]
        self._kinetic = np.exp(-0.5j * self.dt * grid.k**2 / block.mu)

    def step(self, psi: np.ndarray) -> np.ndarray:
        """One full dt step on amplitudes [channels, grid points]."""
        psi = np.einsum("pij,jp->ip", self._half_v, psi)
        psi = np.fft.ifft(self._kinetic * np.fft.fft(psi, axis=1), axis=1)
        return np.einsum("pij,jp->ip", self._half_v, psi)


def split_step(psi: WavePacketState, block: HamiltonianBlock, w, dt: float,
               propagator: SplitStepPropagator | None = None) -> WavePacketState:
    """Single split-operator step (convenience wrapper around the propagator)."""
    prop = propagator or SplitStepPropagator(block, psi.grid, w, dt)
    out = prop.step(psi.amplitudes)
    if not np.all(np.isfinite(out)):
        raise BlowupError("non-finite amplitudes", time=psi.time + dt)
    return WavePacketState(psi.grid, out, psi.time + dt)


class SpectralRecorder:
    """Streaming time-Fourier transform of the amplitudes on the CAP support.

    Accumulates  phi~(E, c, j) = sum_t w_t exp(i E t) psi_c(R_j, t)  for the
    requested energies, with trapezoid weights in t.  ``decimate`` records
    every that-many steps; the sampling must stay below the Nyquist limit of
    the largest |E| requested.
    """

    def __init__(self, energies, cap_mask, n_channels: int, dt: float,
                 decimate: int = 1, chunk: int = 256, store_raw: bool = False):
        self.energies = np.asarray(energies, dtype=float)
        self.cap_mask = np.asarray(cap_mask, dtype=bool)
        self.n_channels = int(n_channels)
        self.dt_sample = float(dt) * int(decimate)
        self.decimate = int(decimate)
        if self.energies.size and np.max(np.abs(self.energies)) * self.dt_sample >= np.pi:
            raise ValidationError(
                "recorder sampling violates the Nyquist bound max|E| * dt < pi; "
                "reduce dt or the decimation factor"
            )
        ncap = int(np.count_nonzero(self.cap_mask))
        self.spectrum = np.zeros((self.energies.size, self.n_channels, ncap),
                                 dtype=complex)
        self._chunk = int(chunk)
        self._buf = np.empty((self._chunk, self.n_channels * ncap), dtype=complex)
        self._buf_t = np.empty(self._chunk)
        self._fill = 0
        self._count = 0
        self.times = []
        self.norms = []
        self._first = None
        self._last = None
        self.store_raw = store_raw
        self.raw = [] if store_raw else None
        self.edge_max = 0.0

    def record(self, state: WavePacketState):
        if self._count % self.decimate != 0:
            self._count += 1
            return
        self._count += 1
        frame = state.amplitudes[:, self.cap_mask]
        self.times.append(state.time)
        self.norms.append(state.norm())
        edge = max(np.max(np.abs(state.amplitudes[:, 0])),
                   np.max(np.abs(state.amplitudes[:, -1])))
        self.edge_max = max(self.edge_max, float(edge))
        if self.store_raw:
            self.raw.append(frame.copy())
        sample = (state.time, frame.reshape(-1))
        if self._first is None:
            self._first = sample
        self._last = sample
        self._buf[self._fill] = sample[1]
        self._buf_t[self._fill] = state.time
        self._fill += 1
        if self._fill == self._chunk:
            self._flush()

    def _flush(self):
        if self._fill == 0:
            return
        t = self._buf_t[: self._fill]
        phases = self.dt_sample * np.exp(1j * np.outer(self.energies, t))
        self.spectrum += (phases @ self._buf[: self._fill]).reshape(self.spectrum.shape)
        self._fill = 0

    def finalize(self) -> None:
        """Apply the trapezoid endpoint correction."""
        self._flush()
        if getattr(self, "_finalized", False) or self._first is None:
            return
        self._finalized = True
        for t, frame in (self._first, self._last):
            corr = 0.5 * self.dt_sample * np.exp(1j * self.energies * t)
            self.spectrum -= corr[:, None, None] * frame.reshape(
                1, self.n_channels, -1
            )


class TimeSeries:
    """Outcome of one propagation: spectra on the CAP support plus diagnostics."""

    def __init__(self, recorder: SpectralRecorder, grid: UniformGrid,
                 w: np.ndarray, final_state: WavePacketState):
        self.energies = recorder.energies
        self.cap_mask = recorder.cap_mask
        self.spectrum = recorder.spectrum           # [nE, nchan, ncap]
        self.times = np.asarray(recorder.times)
        self.norms = np.asarray(recorder.norms)
        self.grid = grid
        self.w_cap = np.asarray(w)[recorder.cap_mask]
        self.final_state = final_state
        self.final_norm = self.norms[-1] if self.norms.size else final_state.norm()
        self.edge_max = recorder.edge_max
        self.raw = (np.asarray(recorder.raw) if recorder.store_raw else None)

    def save_binary(self, path):
        """Fixed-width dump of the raw recorded series.

        Layout (little endian): magic ``SWTS``, version u32, n_steps u32,
        n_channels u32, n_cap u32, f64 dt_sample, f64 r_min, f64 dr, u32 N,
        then n_cap u32 grid indices, n_steps f64 times, n_steps f64 norms,
        and the complex128 amplitude block [n_steps, n_channels, n_cap].
        """
        if self.raw is None:
            raise ValidationError("time series was recorded without raw storage")
        nsteps, nchan, ncap = self.raw.shape
        dt_sample = float(self.times[1] - self.times[0]) if nsteps > 1 else 0.0
        with open(path, "wb") as fh:
            fh.write(b"SWTS")
            fh.write(struct.pack("<IIII", 1, nsteps, nchan, ncap))
            fh.write(struct.pack("<dddI", dt_sample, self.grid.r_min,
                                 self.grid.dr, self.grid.n))
            np.nonzero(self.cap_mask)[0].astype("<u4").tofile(fh)
            self.times.astype("<f8").tofile(fh)
            self.norms.astype("<f8").tofile(fh)
            self.raw.astype("<c16").tofile(fh)


def load_time_series_binary(path):
    """Read back a :meth:`TimeSeries.save_binary` dump.

    Returns a dict with times, norms, cap_indices, grid parameters and the
    raw amplitude block; enough to redo the spectral analysis offline.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"SWTS":
            raise ValidationError("not a scatwave time-series file")
        version, nsteps, nchan, ncap = struct.unpack("<IIII", fh.read(16))
        if version != 1:
            raise ValidationError(f"unsupported time-series version {version}")
        dt_sample, r_min, dr, n = struct.unpack("<dddI", fh.read(28))
        cap_idx = np.fromfile(fh, dtype="<u4", count=ncap)
        times = np.fromfile(fh, dtype="<f8", count=nsteps)
        norms = np.fromfile(fh, dtype="<f8", count=nsteps)
        raw = np.fromfile(fh, dtype="<c16", count=nsteps * nchan * ncap)
    return {
        "dt_sample": dt_sample, "r_min": r_min, "dr": dr, "n": int(n),
        "cap_indices": cap_idx, "times": times, "norms": norms,
        "amplitudes": raw.reshape(nsteps, nchan, ncap),
    }


def propagate_and_record(psi0: WavePacketState, block: HamiltonianBlock,
                         cap: CAPSpec | None, dt: float, t_max: float,
                         recorder: SpectralRecorder | None = None,
                         norm_floor: float = 1e-6) -> TimeSeries:
    """Propagate until t_max or until the surviving norm drops below the floor.

    Records every (decimated) step on the CAP support.  Emits a
    ConvergenceWarning when the packet is not absorbed by t_max.
    """
    grid = psi0.grid
    w = cap_values(grid, cap) if cap is not None else np.zeros(grid.n)
    if recorder is None:
        recorder = SpectralRecorder(np.empty(0), w > 0.0, psi0.nchannels, dt)
    prop = SplitStepPropagator(block, grid, w, dt)
    psi = psi0.amplitudes.copy()
    t = psi0.time
    nsteps = int(np.ceil((t_max - t) / dt))
    state = WavePacketState(grid, psi, t)
    recorder.record(state)
    norm = state.norm()
    for _ in range(nsteps):
        psi = prop.step(psi)
        t += dt
        if not np.all(np.isfinite(psi)):
            raise BlowupError(f"non-finite amplitudes at t={t:g}", time=t)
        state = WavePacketState(grid, psi, t)
        recorder.record(state)
        norm = state.norm()
        if norm < norm_floor:
            break
    else:
        if norm > 0.05:
            warnings.warn(
                f"packet not fully absorbed at t_max={t_max:g} (norm={norm:.3g})",
                ConvergenceWarning,
            )
    recorder.finalize()
    if recorder.edge_max > EDGE_AMPLITUDE_TOL:
        warnings.warn(
            f"amplitude {recorder.edge_max:.2e} reached the grid edge; "
            "possible FFT wrap-around",
            ConvergenceWarning,
        )
    return TimeSeries(recorder, grid, w, state)
