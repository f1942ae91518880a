"""Adiabatic-to-diabatic transformation.

The transformation matrix D(R) solves dD/dR = -F(R) D with D = I at the outer
grid edge, so the diabatic and atomic bases coincide asymptotically.  The
diabatic potential matrix is the similarity transform U^d = D^T diag(U) D
(D is orthogonal, so the inverse is the transpose).

Integration runs inward with classical RK4 on the uniform propagation mesh.
Antisymmetry of F keeps D on the orthogonal group, but roundoff drifts; a
polar re-orthonormalization (closest orthogonal matrix in Frobenius norm)
pulls D back whenever the drift exceeds a tight threshold.
"""

from __future__ import annotations

import numpy as np

from .errors import IntegrationError, ValidationError
from .molecular_data import CouplingSet, CurveSet, RadialMesh

# drift above this triggers re-orthonormalization ...
REORTH_TRIGGER = 1e-12
# ... and drift above this means the step itself was too inaccurate
DRIFT_FAIL = 1e-8


def band_reduce(f_matrix, block_size: int):
    """Keep only couplings between energy-adjacent states (first off-diagonals).

    ``f_matrix`` is a callable R -> [n,n]; the result is the same callable with
    all |i-j| > 1 entries zeroed.
    """
    mask = np.zeros((block_size, block_size), dtype=bool)
    for i in range(block_size - 1):
        mask[i, i + 1] = mask[i + 1, i] = True

    def banded(r):
        full = np.asarray(f_matrix(r))
        return np.where(mask, full, 0.0)

    return banded


def _orthogonality_drift(d):
    return float(np.max(np.abs(d @ d.T - np.eye(d.shape[0]))))


def _polar_orthonormalize(d):
    u, _, vt = np.linalg.svd(d)
    return u @ vt


class ADTMatrix:
    """Orthogonal D(R) on a uniform mesh; D(R_max) = I exactly."""

    def __init__(self, mesh: RadialMesh, d):
        self.mesh = mesh
        self.d = np.asarray(d, dtype=float)   # [n_points, n, n]
        if self.d.shape[0] != len(mesh):
            raise ValidationError("ADT matrix count does not match mesh")

    @property
    def nstates(self) -> int:
        return self.d.shape[1]

    def max_drift(self) -> float:
        eye = np.eye(self.nstates)
        return float(np.max(np.abs(self.d @ np.swapaxes(self.d, 1, 2) - eye)))


def solve_adt(f_matrix, mesh: RadialMesh, n: int | None = None) -> ADTMatrix:
    """Integrate dD/dR = -F D inward from R_max with D(R_max) = I.

    ``f_matrix`` must return an antisymmetric [n,n] array for scalar R.
    RK4 with F evaluated at step midpoints; re-orthonormalizes on drift.
    """
    r = mesh.points
    if n is None:
        n = np.asarray(f_matrix(r[-1])).shape[0]
    npts = r.size
    d = np.empty((npts, n, n))
    d[-1] = np.eye(n)
    cur = np.eye(n)
    for i in range(npts - 1, 0, -1):
        h = r[i - 1] - r[i]          # negative: inward
        rm = r[i] + 0.5 * h
        f0 = f_matrix(r[i])
        fm = f_matrix(rm)
        f1 = f_matrix(r[i - 1])
        k1 = -f0 @ cur
        k2 = -fm @ (cur + 0.5 * h * k1)
        k3 = -fm @ (cur + 0.5 * h * k2)
        k4 = -f1 @ (cur + h * k3)
        cur = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = _orthogonality_drift(cur)
        if drift > DRIFT_FAIL:
            raise IntegrationError(
                f"orthogonality drift {drift:.3e} at R={r[i - 1]:g}; "
                "refine the propagation mesh"
            )
        if drift > REORTH_TRIGGER:
            cur = _polar_orthonormalize(cur)
        d[i - 1] = cur
    return ADTMatrix(mesh, d)


class DiabaticModel:
    """Diabatic potential matrices per mesh point, with the ADT that made them."""

    def __init__(self, channels, mesh: RadialMesh, ud, adt_blocks):
        self.channels = list(channels)
        self.mesh = mesh
        self.ud = np.asarray(ud, dtype=float)      # [n_points, n, n]
        self.adt_blocks = adt_blocks               # {(mult, lam): ADTMatrix}

    @property
    def nstates(self) -> int:
        return self.ud.shape[1]

    def asymptotic_offdiag(self) -> float:
        last = self.ud[-1]
        return float(np.max(np.abs(last - np.diag(np.diag(last)))))


def diabatize_block(curves: CurveSet, block_idx, adt: ADTMatrix):
    """U^d(R) = D^T diag(U(R)) D for one Lambda block on the ADT mesh."""
    r = adt.mesh.points
    u_diag = np.stack([curves.potential(i)(r) for i in block_idx], axis=1)  # [npts, n]
    d = adt.d
    # D^T diag(u) D, batched over mesh points
    return np.einsum("pki,pk,pkj->pij", d, u_diag, d)


def diabatize(curves: CurveSet, couplings: CouplingSet, mesh: RadialMesh,
              banded: bool = True) -> DiabaticModel:
    """Build the full diabatic model, one ADT solve per Lambda block.

    ``banded`` keeps only the couplings between energy-adjacent states, the
    approximation used throughout; pass False to diabatize with the complete
    F matrix instead.
    """
    blocks = curves.blocks()
    ntot = len(curves.channels)
    ud = np.zeros((len(mesh), ntot, ntot))
    adt_blocks = {}
    for block, idx in blocks.items():
        mult, lam = block
        nb = len(idx)
        f_mat = couplings.radial_matrix(curves, mult, lam)
        if banded:
            f_mat = band_reduce(f_mat, nb)
        adt = solve_adt(f_mat, mesh, n=nb)
        adt_blocks[block] = adt
        ud_block = diabatize_block(curves, idx, adt)
        rows = np.asarray(idx)
        ud[:, rows[:, None], rows[None, :]] = ud_block
    return DiabaticModel(curves.channels, mesh, ud, adt_blocks)
