"""Second-order Schrieffer-Wolff effective Hamiltonians.

For ``H`` block diagonal over a low space (projector P0) and a high space
(P1, with ``H1 >= gap``), the effective Hamiltonian of ``H + V`` on the low
space is ``H0 + V0 - V01 H1^-1 V10`` up to ``O(v^3 / gap^2)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .eigensolve import lowest_eigs
from .fitting import FitResult, loglog_fit


def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=complex)


@dataclass(frozen=True)
class BlockSplit:
    """Orthonormal bases of the low and high spaces of ``H``."""

    low: np.ndarray
    high: np.ndarray
    gap: float
    v: float

    @classmethod
    def from_hamiltonian(cls, H, gap: float, V=None, v: float | None = None) -> "BlockSplit":
        """Split at ``gap / 2`` on the exact eigenspaces of ``H``."""
        if gap <= 0:
            raise ValueError("gap must be positive")
        h = _dense(H)
        energies, vectors = la.eigh(h)
        cut = 0.5 * gap
        if np.any(np.abs(energies - cut) < 1e-8 * gap):
            raise ValueError("an eigenvalue of H lies at the energy cut")
        low = vectors[:, energies < cut]
        high = vectors[:, energies > cut]
        if np.any(energies[energies > cut] < gap * (1 - 1e-9)):
            raise ValueError(f"high-space eigenvalue below the declared gap {gap}")
        return cls._with_bound(low, high, gap, h, V, v)

    @classmethod
    def from_low_basis(cls, H, low: np.ndarray, gap: float, V=None, v: float | None = None) -> "BlockSplit":
        """Use a prescribed low basis; the high basis is its orthogonal complement."""
        h = _dense(H)
        low = np.asarray(low, dtype=complex)
        q, _ = np.linalg.qr(low)
        complement = la.null_space(q.conj().T)
        hh = complement.conj().T @ h @ complement
        if np.linalg.eigvalsh(0.5 * (hh + hh.conj().T)).min() < gap * (1 - 1e-9):
            raise ValueError(f"high-space eigenvalue below the declared gap {gap}")
        return cls._with_bound(q, complement, gap, h, V, v)

    @classmethod
    def _with_bound(cls, low, high, gap, h, V, v) -> "BlockSplit":
        h0 = low.conj().T @ h @ low
        measured = float(np.linalg.norm(h0, 2)) if h0.size else 0.0
        if V is not None:
            measured = max(measured, float(np.linalg.norm(_dense(V), 2)))
        if v is None:
            v = measured
        elif v < measured * (1 - 1e-12):
            raise ValueError(f"declared norm bound {v} is below the measured {measured}")
        return cls(low, high, float(gap), float(v))

    @property
    def dims(self) -> tuple[int, int]:
        return self.low.shape[1], self.high.shape[1]


@dataclass
class EffectiveReport:
    h_eff: np.ndarray
    exact: np.ndarray
    effective: np.ndarray
    deviation: float
    bound: float
    bound_constant: float
    v: float
    gap: float
    parameters: dict = field(default_factory=dict)
    predicted: dict | None = None
    measured: dict | None = None

    def to_dict(self) -> dict:
        return {
            "parameters": self.parameters,
            "exact_eigenvalues": [float(x) for x in self.exact],
            "effective_eigenvalues": [float(x) for x in self.effective],
            "deviation": float(self.deviation),
            "bound": float(self.bound),
            "bound_constant": float(self.bound_constant),
            "v": float(self.v),
            "gap": float(self.gap),
            "predicted": self.predicted,
            "measured": self.measured,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def effective_hamiltonian_2nd(
    H,
    V,
    split: BlockSplit,
    bound_constant: float = 1.0,
    parameters: dict | None = None,
) -> EffectiveReport:
    """Second-order effective Hamiltonian on the low space of ``split``.

    The report compares the spectrum of ``H_eff`` with the ``d0`` lowest exact
    eigenvalues of ``H + V`` and carries the bound ``C v^3 / gap^2``.
    """
    h = _dense(H)
    vm = _dense(V)
    p0, p1 = split.low, split.high
    scale = max(1.0, float(np.abs(h).max()))
    off = p0.conj().T @ h @ p1
    if off.size and np.abs(off).max() > 1e-12 * scale:
        raise ValueError("H is not block diagonal in the split")
    h0 = p0.conj().T @ h @ p0
    h1 = p1.conj().T @ h @ p1
    v0 = p0.conj().T @ vm @ p0
    v01 = p0.conj().T @ vm @ p1
    if h1.size:
        h1 = 0.5 * (h1 + h1.conj().T)
        if np.linalg.eigvalsh(h1).min() <= 0:
            raise ValueError("H1 is singular or indefinite on the high space")
        second = v01 @ la.solve(h1, v01.conj().T, assume_a="her")
    else:
        second = np.zeros_like(v0)
    h_eff = h0 + v0 - second
    h_eff = 0.5 * (h_eff + h_eff.conj().T)
    d0 = h_eff.shape[0]
    effective = np.linalg.eigvalsh(h_eff)
    exact = lowest_eigs(h + vm, d0, tol=1e-8 * max(1.0, scale), method="dense").eigenvalues
    deviation = float(np.max(np.abs(exact - effective))) if d0 else 0.0
    bound = bound_constant * split.v**3 / split.gap**2
    return EffectiveReport(
        h_eff, exact, effective, deviation, bound, bound_constant, split.v, split.gap, dict(parameters or {})
    )


def projected_effective_operator(H_total, low: np.ndarray, energies: np.ndarray | None = None, vectors: np.ndarray | None = None) -> np.ndarray:
    """Exact effective operator on ``span(low)`` from the lowest eigenpairs.

    The ``d`` lowest eigenvectors are projected onto the low basis and
    orthonormalized symmetrically (polar factor), which yields the Hermitian
    operator ``W diag(E) W^dagger`` with the exact low eigenvalues.
    """
    d = low.shape[1]
    if energies is None or vectors is None:
        spec = lowest_eigs(H_total, d, tol=1e-8 * max(1.0, _scale(H_total)))
        energies, vectors = spec.eigenvalues, spec.vectors
    c = low.conj().T @ vectors[:, :d]
    u, s, vh = np.linalg.svd(c)
    if s.min() < 1e-6:
        raise ValueError("low eigenvectors have negligible overlap with the model space")
    w = u @ vh
    # centre the energies so rounding in W does not scale with a large offset
    shift = float(np.mean(energies[:d]))
    heff = w @ np.diag(energies[:d] - shift) @ w.conj().T
    heff = 0.5 * (heff + heff.conj().T)
    return heff + shift * np.eye(d)


def _scale(op) -> float:
    if sp.issparse(op):
        return float(abs(op).max()) if op.nnz else 0.0
    return float(np.abs(op).max())


@dataclass(frozen=True)
class ScanResult:
    points: tuple[tuple[float, float], ...]
    fit: FitResult | None

    def to_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


def deviation_scan(
    builder: Callable[[float], tuple[object, object, BlockSplit]],
    b_values: Sequence[float],
    floor: float | None = None,
) -> ScanResult:
    """Deviation of the second-order spectrum as a function of the field ``B``.

    ``builder(B)`` returns ``(H, V, split)``.  A log-log fit is attached when
    enough points lie above the numerical floor.
    """
    b_values = sorted(float(b) for b in b_values)
    if len(b_values) < 3 or b_values[-1] / b_values[0] < 100 * (1 - 1e-12):
        raise ValueError("a deviation scan needs at least 3 fields spanning 2 decades")
    points = []
    for b in b_values:
        H, V, split = builder(b)
        points.append((b, effective_hamiltonian_2nd(H, V, split).deviation))
    try:
        fit = loglog_fit(points) if floor is None else loglog_fit(points, floor)
    except ValueError:
        fit = None
    return ScanResult(tuple(points), fit)
