"""Sparse matrix representations of spin and fermion Hamiltonians."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionCapError
from .fermion import FermionHamiltonian, sector_basis
from .pauli import SpinHamiltonian

DEFAULT_CAP = 2**18


def _check_cap(dim: int, cap: int) -> None:
    if dim > cap:
        raise DimensionCapError(dim, cap)


def _assemble(rows, cols, vals, dim: int) -> sp.csr_matrix:
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0, dtype=complex)
    mat = sp.coo_matrix((v, (r, c)), shape=(dim, dim)).tocsr()
    mat.sum_duplicates()
    # exact Hermitian symmetrisation: equal-order float sums are conjugate-exact
    mat = ((mat + mat.getH()) * 0.5).tocsr()
    mat.eliminate_zeros()
    return mat


def spin_matrix(h: SpinHamiltonian, sector: int | None = None, cap: int = DEFAULT_CAP) -> sp.csr_matrix:
    """Matrix of a spin Hamiltonian; ``sector`` fixes the number of |1> qubits."""
    n = h.nqubits
    basis = sector_basis(n, sector)
    dim = basis.size
    _check_cap(dim, cap)
    rows, cols, vals = [], [], []
    positions = np.arange(dim)
    # single terms such as X X may leave the sector while their sum (X X + Y Y) does not
    leak: dict[tuple[int, int], complex] = {}
    for term in h.terms:
        flip = phase_mask = 0
        ny = 0
        for q, a in term.factors:
            bit = 1 << (n - 1 - q)
            if a in ("X", "Y"):
                flip |= bit
            if a in ("Y", "Z"):
                phase_mask |= bit
            if a == "Y":
                ny += 1
        value = term.coefficient * (1j**ny)
        signs = 1.0 - 2.0 * (np.bitwise_count(basis & phase_mask) & 1)
        targets = basis ^ flip
        if sector is None:
            idx = targets
        else:
            idx = np.searchsorted(basis, targets)
            idx = np.minimum(idx, dim - 1)
            inside = basis[idx] == targets
            if not inside.all():
                for target, col, v in zip(targets[~inside], positions[~inside], (value * signs)[~inside]):
                    key = (int(target), int(col))
                    leak[key] = leak.get(key, 0.0) + v
                idx, positions_used, signs = idx[inside], positions[inside], signs[inside]
                rows.append(idx)
                cols.append(positions_used)
                vals.append(value * signs)
                continue
        rows.append(idx)
        cols.append(positions)
        vals.append(value * signs)
    scale = max(1.0, h.norm_bound())
    if any(abs(v) > 1e-12 * scale for v in leak.values()):
        raise ValueError("spin Hamiltonian does not conserve the requested sector")
    return _assemble(rows, cols, vals, dim)


def apply_ladder_string(states: np.ndarray, operators, nmodes: int):
    """Apply a product of ladder operators (rightmost first) to basis states.

    Returns ``(new_states, signs, valid)``; ``signs`` is zero where the product
    annihilates the state.
    """
    s = states.copy()
    sign = np.ones(states.shape, dtype=float)
    valid = np.ones(states.shape, dtype=bool)
    full = (1 << nmodes) - 1
    for mode, dagger in reversed(operators):
        bit = 1 << (nmodes - 1 - mode)
        above = ~((1 << (nmodes - mode)) - 1) & full
        occupied = (s & bit) != 0
        valid &= ~occupied if dagger else occupied
        sign *= 1.0 - 2.0 * (np.bitwise_count(s & above) & 1)
        s = s ^ bit
    return s, np.where(valid, sign, 0.0), valid


def fermion_matrix(h: FermionHamiltonian, sector: int | None = None, cap: int = DEFAULT_CAP) -> sp.csr_matrix:
    """Matrix in the occupation basis, optionally restricted to N particles."""
    if sector is None:
        sector = h.sector
    n = h.nmodes
    basis = sector_basis(n, sector)
    dim = basis.size
    _check_cap(dim, cap)
    if sector is not None and not h.conserves_number():
        raise ValueError("Hamiltonian does not conserve particle number; no sector restriction")
    rows, cols, vals = [], [], []
    positions = np.arange(dim)
    # single terms such as X X may leave the sector while their sum (X X + Y Y) does not
    leak: dict[tuple[int, int], complex] = {}
    for term in h.terms:
        targets, signs, valid = apply_ladder_string(basis, term.operators, n)
        if not valid.any():
            continue
        if sector is None:
            idx = targets[valid]
        else:
            idx = np.searchsorted(basis, targets[valid])
        rows.append(idx)
        cols.append(positions[valid])
        vals.append(term.coefficient * signs[valid])
    return _assemble(rows, cols, vals, dim)


def to_matrix(h: SpinHamiltonian | FermionHamiltonian, sector: int | None = None, cap: int = DEFAULT_CAP) -> sp.csr_matrix:
    if isinstance(h, SpinHamiltonian):
        return spin_matrix(h, sector, cap)
    if isinstance(h, FermionHamiltonian):
        return fermion_matrix(h, sector, cap)
    raise TypeError(f"cannot build a matrix from {type(h).__name__}")
