"""Orchestration: one (initial channel, K, epsilon, packet) task end to end,
K sweeps with the adaptive tail criterion, and cross-section assembly.

The task pipeline is: uniform grid -> diabatic model on that grid ->
Hamiltonian block -> Gaussian packet -> Gamma spectrum and energy band ->
propagation with streaming spectral recorder -> |S|^2 per final channel.

Every task is deterministic and independent, so K sweeps parallelize over a
process pool; the adaptive stop decision is evaluated strictly in K order on
the collected results, which makes the output independent of worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import collision_energy_ev_amu
from .diabatization import DiabaticModel, diabatize
from .errors import DomainError, EnergyOutOfBandError
from .models import EngineParams, ModelSystem, build_model_diabatic
from .molecular_data import CouplingSet, CurveSet, RadialMesh
from .propagation import (
    SpectralRecorder,
    UniformGrid,
    cap_values,
    gaussian_packet,
    propagate_and_record,
)
from .rotational_basis import HamiltonianBlock, assemble_block
from .smatrix import (
    BAND_EDGE_REL,
    CrossSectionRow,
    CrossSectionTable,
    PacketSpec,
    SMatrixEntry,
    SMatrixTable,
    energy_band,
    gamma_amplitude,
)


@dataclass
class KPolicy:
    """Partial-wave policy: an explicit list, or adaptive with a tail criterion."""

    mode: str = "adaptive"                  # "adaptive" | "fixed"
    k_values: tuple = ()                    # used when fixed
    k_start: int = 0
    k_cap: int = 4000
    tail_rel: float = 1e-4
    tail_consecutive: int = 200


@dataclass
class TaskResult:
    """|S|^2 rows of one propagation, on the task's energy grid."""

    K: int
    epsilon: int
    initial_key: tuple
    energies: np.ndarray
    gamma_sq: np.ndarray
    in_band: np.ndarray
    s2: dict                       # final channel key -> array over E
    final_open: dict               # final channel key -> bool array
    final_norm: float
    unitarity: np.ndarray          # sum_f |S|^2 over E


def make_grid(params: EngineParams) -> UniformGrid:
    return UniformGrid(params.r_min, params.r_max, params.n_points)


def build_diabatic_on(curves: CurveSet, couplings: CouplingSet, grid: UniformGrid,
                      banded: bool = True) -> DiabaticModel:
    return diabatize(curves, couplings, RadialMesh(grid.r), banded=banded)


def packet_for(params: EngineParams, mu: float) -> PacketSpec:
    """Inward Gaussian whose mean collision energy is params.e_center_col."""
    k0 = -math.sqrt(2.0 * mu * params.e_center_col)
    return PacketSpec(r0=params.r0, sigma=params.sigma, k0=k0)


def run_task(diabatic: DiabaticModel, couplings: CouplingSet | None, mu: float,
             K: int, epsilon: int, include_rotational: bool,
             initial_key: tuple, params: EngineParams,
             e_grid: np.ndarray | None = None,
             store_raw: bool = False) -> TaskResult:
    """One propagation plus spectral analysis for fixed (K, epsilon, packet)."""
    grid = make_grid(params)
    if not np.allclose(diabatic.mesh.points, grid.r, rtol=0.0, atol=1e-12):
        raise DomainError("diabatic model was not built on the task grid")
    mult, lam0, m0 = initial_key
    block = assemble_block(diabatic, couplings, mu, K, epsilon,
                           include_rotational, initial_lambda=lam0)
    idx0 = None
    for i, s in enumerate(block.states):
        if s.channel.key == initial_key:
            idx0 = i
            break
    if idx0 is None:
        raise DomainError(f"initial channel {initial_key} not in (K={K}, eps={epsilon}) block")
    u_inf0 = block.states[idx0].channel.asymptotic_energy
    packet = packet_for(params, mu)
    if e_grid is None:
        e_grid = energy_band(packet, u_inf0, mu, K, grid.r, grid.dr,
                             n_energies=params.n_energies)
    gamma = gamma_amplitude(packet, u_inf0, mu, K, e_grid, grid.r, grid.dr)
    gamma_sq = np.abs(gamma) ** 2
    peak = float(np.max(gamma_sq)) if gamma_sq.size else 0.0
    if peak <= 0.0:
        raise EnergyOutOfBandError(
            f"packet has no spectral weight on the requested grid at K={K}"
        )
    in_band = gamma_sq >= BAND_EDGE_REL * peak
    w = cap_values(grid, params.cap)
    recorder = SpectralRecorder(e_grid, w > 0.0, block.nstates, params.dt,
                                store_raw=store_raw)
    psi0 = gaussian_packet(grid, block.nstates, idx0, params.r0, params.sigma,
                           packet.k0, r_cap=params.cap.r_c)
    series = propagate_and_record(psi0, block, params.cap, params.dt,
                                  params.t_max, recorder,
                                  norm_floor=params.norm_floor)
    dr = grid.dr
    s2 = {}
    final_open = {}
    unit = np.zeros_like(e_grid)
    for f, state in enumerate(block.states):
        fkey = state.channel.key
        open_mask = e_grid > state.channel.asymptotic_energy
        num = np.sum(series.w_cap * np.abs(series.spectrum[:, f, :]) ** 2,
                     axis=1) * dr
        vals = np.zeros_like(e_grid)
        good = gamma_sq > 0.0
        vals[good] = num[good] / (np.pi * gamma_sq[good])
        vals = np.where(open_mask, vals, 0.0)
        s2[fkey] = vals
        final_open[fkey] = open_mask
        unit += vals
    return TaskResult(
        K=K, epsilon=epsilon, initial_key=initial_key, energies=e_grid,
        gamma_sq=gamma_sq, in_band=in_band, s2=s2, final_open=final_open,
        final_norm=series.final_norm, unitarity=unit,
    )


# --- K sweep ----------------------------------------------------------------


def _task_worker(args):
    return run_task(*args)


@dataclass
class SweepResult:
    initial_key: tuple
    energies: np.ndarray            # total energy, hartree
    e_col: np.ndarray               # collision energy above the initial threshold
    sigma: dict                     # final key -> array (bohr^2)
    k_used: list
    tail_estimate_rel: float
    smatrix: SMatrixTable
    coverage: np.ndarray            # fraction of K in band per E
    max_unitarity_defect: float


def sweep_k(diabatic_by_eps, couplings, mu, initial_key, params,
            policy: KPolicy, include_rotational: bool,
            epsilons: tuple = (+1,), workers: int = 1,
            progress=None) -> SweepResult:
    """Accumulate sigma = pi/k^2 sum_K (2K+1)|S|^2 over the fixed packet grid.

    ``diabatic_by_eps`` maps epsilon -> DiabaticModel (usually the same model);
    both parities contribute (averaged) for Lambda > 0 initial states.
    """
    mult, lam0, m0 = initial_key
    grid = make_grid(params)
    any_diab = diabatic_by_eps[epsilons[0]]
    packet = packet_for(params, mu)
    chan0 = next(ch for ch in any_diab.channels if ch.key == initial_key)
    u_inf0 = chan0.asymptotic_energy
    k_lowest = max(policy.k_start, lam0)
    e_grid = energy_band(packet, u_inf0, mu, k_lowest, grid.r, grid.dr,
                         n_energies=params.n_energies)
    e_col = e_grid - u_inf0
    k_of_e = np.sqrt(2.0 * mu * e_col)

    if policy.mode == "fixed":
        k_list = [k for k in policy.k_values if k >= lam0]
    else:
        k_list = None                       # generated adaptively

    accum = {}
    smat = SMatrixTable()
    k_used = []
    consecutive = 0
    tail_contribs = []
    coverage = np.zeros_like(e_grid)
    max_defect = 0.0
    chan_by_key = {ch.key: ch for ch in any_diab.channels}

    def handle(res: TaskResult, weight: float):
        nonlocal consecutive, coverage, max_defect
        contrib_max = 0.0
        coverage += res.in_band.astype(float)
        for fkey, vals in res.s2.items():
            entry = SMatrixEntry(
                K=res.K, epsilon=res.epsilon,
                initial=chan_by_key[initial_key], final=chan_by_key[fkey],
                energies=e_grid, s2=vals, in_band=res.in_band,
                final_open=res.final_open[fkey],
            )
            smat.add(entry)
            if fkey == initial_key:
                continue
            part = weight * np.pi / k_of_e**2 * (2 * res.K + 1) * vals
            part = np.where(res.in_band, part, 0.0)
            prev = accum.setdefault(fkey, np.zeros_like(e_grid))
            total = prev + part
            accum[fkey] = total
            denom = np.where(total > 0.0, total, 1.0)
            contrib_max = max(contrib_max, float(np.max(part / denom)))
        if np.any(res.in_band):
            max_defect = max(
                max_defect, float(np.max(np.abs(res.unitarity[res.in_band] - 1.0)))
            )
        return contrib_max

    def tasks_for(k):
        out = []
        for eps in epsilons:
            out.append((diabatic_by_eps[eps], couplings, mu, k, eps,
                        include_rotational, initial_key, params, e_grid, False))
        return out

    weight = 1.0 / len(epsilons) if lam0 > 0 else 1.0

    def consume(k, results):
        nonlocal consecutive
        contrib = 0.0
        for res in results:
            contrib = max(contrib, handle(res, weight))
        k_used.append(k)
        tail_contribs.append(contrib)
        if k_used and len(k_used) > 1 and contrib < policy.tail_rel:
            consecutive += 1
        else:
            consecutive = 0
        if progress is not None:
            progress(k, contrib)

    if k_list is not None:
        batches = [(k, tasks_for(k)) for k in k_list]
        _run_batches(batches, consume, workers)
    else:
        k = k_lowest
        stop = False
        while not stop and k <= policy.k_cap:
            wave = list(range(k, min(k + max(workers, 1), policy.k_cap + 1)))
            batches = [(kk, tasks_for(kk)) for kk in wave]
            for kk, results in _iter_batches(batches, workers):
                consume(kk, results)
                if consecutive >= policy.tail_consecutive:
                    stop = True
                    break
            k = wave[-1] + 1

    # geometric tail estimate from the last recorded contributions
    tail_rel = 0.0
    tail = [c for c in tail_contribs[-max(2, min(10, len(tail_contribs))):] if c > 0]
    if len(tail) >= 2 and tail[-1] > 0:
        rho = min(0.95, tail[-1] / max(tail[0], 1e-300)) ** (1.0 / max(len(tail) - 1, 1))
        tail_rel = tail[-1] * rho / max(1e-12, 1.0 - rho)
    elif tail:
        tail_rel = tail[-1]

    sigma = dict(accum)
    return SweepResult(
        initial_key=initial_key,
        energies=e_grid,
        e_col=e_col,
        sigma=sigma,
        k_used=k_used,
        tail_estimate_rel=float(tail_rel),
        smatrix=smat,
        coverage=coverage / max(len(k_used), 1),
        max_unitarity_defect=max_defect,
    )


def _run_batches(batches, consume, workers):
    for k, results in _iter_batches(batches, workers):
        consume(k, results)


def _iter_batches(batches, workers):
    """Run task batches, yielding (k, results) strictly in submission order."""
    if workers <= 1:
        for k, tasks in batches:
            yield k, [run_task(*t) for t in tasks]
        return
    flat = [(k, t) for k, tasks in batches for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [(k, pool.submit(_task_worker, t)) for k, t in flat]
        by_k = {}
        for k, fut in futures:
            by_k.setdefault(k, []).append(fut)
        for k, tasks in batches:
            yield k, [f.result() for f in by_k[k]]


def cross_section_table(sweeps, mu, rotational, channels) -> CrossSectionTable:
    """Assemble state-to-state rows (bohr^2 vs eV/amu) from per-initial sweeps."""
    table = CrossSectionTable(mu, rotational)
    chan_by_key = {ch.key: ch for ch in channels}
    for sweep in sweeps:
        init = chan_by_key[sweep.initial_key]
        e_ev = np.array([collision_energy_ev_amu(e, mu) for e in sweep.e_col])
        defects = sweep.max_unitarity_defect
        for fkey, ch in chan_by_key.items():
            if fkey == sweep.initial_key:
                continue
            sig = sweep.sigma.get(fkey)
            if sig is None:
                sig = np.zeros_like(e_ev)
            table.add(CrossSectionRow(
                initial=init, final=ch, e_ev_amu=e_ev, sigma=sig,
                k_max_used=max(sweep.k_used) if sweep.k_used else 0,
                rotational=rotational, unitarity_defect=defects,
            ))
    return table


def model_diabatic_for_grid(model: ModelSystem, params: EngineParams,
                            banded: bool = True) -> DiabaticModel:
    grid = make_grid(params)
    return build_model_diabatic(model, RadialMesh(grid.r), banded=banded)
