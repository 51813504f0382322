"""Incremental truncated SVD with retained-energy truncation.

An orthonormal mode matrix is extended by rank-b additive updates: project
the new snapshot bunch onto the current modes, orthogonalize the remainder,
recombine through a small dense SVD, and truncate by the retained-energy
criterion.  The energy denominator is the running total of the squared
norms of every snapshot ever fed, including energy lost to earlier
truncations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

__all__ = ["PodBasis", "energy_fraction", "truncation_rank", "ipod_update"]

logger = logging.getLogger(__name__)

ORTHOGONALITY_GUARD = 1e-10
REORTH_UPDATE_LIMIT = 50


@dataclass(frozen=True)
class PodBasis:
    """Column-orthonormal modes with their singular values and energy ledger.

    ``version`` increments whenever the modes change, so downstream reduced
    operators can detect staleness.
    """

    modes: np.ndarray
    singular_values: np.ndarray
    energy_threshold: float
    total_energy: float = 0.0
    snapshot_count: int = 0
    updates_since_reorth: int = 0
    version: int = 0

    @classmethod
    def empty(cls, n: int, energy_threshold: float) -> "PodBasis":
        if not 0.0 <= energy_threshold <= 1.0:
            raise ValueError("energy threshold must lie in [0, 1]")
        return cls(np.empty((n, 0)), np.empty(0), energy_threshold)

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    def orthonormality_defect(self) -> float:
        if self.rank == 0:
            return 0.0
        gram = self.modes.T @ self.modes
        return float(np.abs(gram - np.eye(self.rank)).max())


def energy_fraction(singular_values: np.ndarray, total_energy: float,
                    N: int) -> float:
    """Retained energy of the leading N modes relative to all fed snapshots."""
    singular_values = np.asarray(singular_values, dtype=float)
    if total_energy <= 0.0:
        raise ValueError("energy fraction undefined for zero total energy")
    if not 0 <= N <= singular_values.size:
        raise ValueError(f"N={N} outside 0..{singular_values.size}")
    return float(np.sum(singular_values[:N] ** 2) / total_energy)


def truncation_rank(singular_values: np.ndarray, total_energy: float,
                    eps: float) -> int:
    """Smallest rank whose retained energy reaches ``eps``; full rank if none."""
    singular_values = np.asarray(singular_values, dtype=float)
    d = singular_values.size
    if d == 0:
        raise ValueError("need at least one singular value")
    cumulative = np.cumsum(singular_values**2) / total_energy
    meeting = np.flatnonzero(cumulative >= eps)
    if meeting.size == 0:
        return d
    return int(meeting[0]) + 1


def ipod_update(basis: PodBasis, bunch: np.ndarray) -> PodBasis:
    """Fold a bunch of new snapshot columns into the basis.

    Zero-norm columns are skipped (logged); they still count toward the
    snapshot tally but carry no energy.  The rank after truncation never
    drops below the incoming rank: snapshot removal/coarsening is out of
    scope, and the adaptive driver relies on monotone basis growth.
    """
    B = np.asarray(bunch, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.shape[0] != basis.n:
        raise ValueError(
            f"snapshot length {B.shape[0]} does not match basis rows {basis.n}")
    n_fed = B.shape[1]
    col_energy = np.sum(B * B, axis=0)
    keep = col_energy > 0.0
    if not np.all(keep):
        logger.warning("skipping %d zero-norm snapshot column(s)",
                       int(np.sum(~keep)))
    B = B[:, keep]
    total_energy = basis.total_energy + float(col_energy.sum())
    count = basis.snapshot_count + n_fed
    if B.shape[1] == 0:
        return PodBasis(basis.modes, basis.singular_values,
                        basis.energy_threshold, total_energy, count,
                        basis.updates_since_reorth, basis.version)

    if basis.rank == 0:
        Q, sigs = _fresh_svd(B)
        reorth_counter = 0
    else:
        Q, sigs, reorth_counter = _brand_update(basis, B)

    rank = truncation_rank(sigs, total_energy, basis.energy_threshold)
    rank = min(max(rank, basis.rank), sigs.size)
    return PodBasis(Q[:, :rank], sigs[:rank], basis.energy_threshold,
                    total_energy, count, reorth_counter, basis.version + 1)


def _fresh_svd(B: np.ndarray):
    psi, sigs, _ = np.linalg.svd(B, full_matrices=False)
    positive = sigs > 0.0
    return psi[:, positive], sigs[positive]


def _brand_update(basis: PodBasis, B: np.ndarray):
    psi = basis.modes
    H = psi.T @ B
    P = B - psi @ H
    Q_p, R_p = np.linalg.qr(P)
    b = B.shape[1]
    N = basis.rank
    F = np.zeros((N + b, N + b))
    F[:N, :N] = np.diag(basis.singular_values)
    F[:N, N:] = H
    F[N:, N:] = R_p

    Q = np.hstack([psi, Q_p])
    counter = basis.updates_since_reorth + 1
    drift = np.abs(psi.T @ Q_p).max() if Q_p.size else 0.0
    if drift > ORTHOGONALITY_GUARD or counter > REORTH_UPDATE_LIMIT:
        Q, R = np.linalg.qr(Q)
        F = R @ F
        counter = 0

    U_f, sigs, _ = np.linalg.svd(F)
    return Q @ U_f, sigs, counter
