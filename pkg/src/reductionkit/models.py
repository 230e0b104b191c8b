"""Builders for the lattice models: Pauli lattice, Heisenberg and Hubbard."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .fermion import FermionHamiltonian, FermionTerm
from .lattice import LatticeGraph, ModeOrdering
from .pauli import AXES, PAULI_MATRICES, PauliString, SpinHamiltonian, check_axis


def build_pauli_lattice(
    lattice: LatticeGraph,
    couplings: Iterable[tuple[Sequence[int], str, str, float]],
    strict: bool = True,
) -> SpinHamiltonian:
    """``sum lambda_e A_i B_j`` over the given edges.

    ``strict`` enforces the unit-strength bound ``|lambda| <= 1``.
    """
    terms = []
    for edge, axis_a, axis_b, lam in couplings:
        i, j = (int(v) for v in edge)
        if not lattice.has_edge(i, j):
            raise ValueError(f"coupling on ({i}, {j}) which is not a lattice edge")
        if strict and abs(lam) > 1:
            raise ValueError(f"coupling strength {lam} on ({i}, {j}) exceeds 1")
        terms.append(PauliString(((i, check_axis(axis_a)), (j, check_axis(axis_b))), lam))
    return SpinHamiltonian(lattice.nsites, tuple(terms))


def _field_array(fields, nsites: int) -> np.ndarray:
    if fields is None:
        return np.zeros((nsites, 3))
    arr = np.asarray(fields, dtype=float).reshape(-1, 3)
    if arr.shape[0] != nsites:
        raise ValueError(f"expected {nsites} field vectors, got {arr.shape[0]}")
    return arr


def build_heisenberg(lattice: LatticeGraph, J: float, fields=None) -> SpinHamiltonian:
    """``J sum_<ij> sigma_i . sigma_j - sum_i B_i . sigma_i``."""
    if lattice.nsites == 0:
        raise ValueError("empty lattice")
    b = _field_array(fields, lattice.nsites)
    terms = []
    for i, j in lattice.edges:
        for a in AXES:
            terms.append(PauliString(((i, a), (j, a)), J))
    for i in range(lattice.nsites):
        for a, value in zip(AXES, b[i]):
            if value != 0.0:
                terms.append(PauliString(((i, a),), -value))
    return SpinHamiltonian(lattice.nsites, tuple(terms))


def build_hubbard(
    lattice: LatticeGraph,
    t: float,
    U: float,
    fields=None,
    ordering: ModeOrdering | None = None,
    sector: int | None = None,
) -> FermionHamiltonian:
    """Hubbard model with hopping ``-t``, on-site ``U n_up n_dn`` and a field.

    The field enters as ``-sum_i B_i . sigma_i`` with the quadratic spin
    operator ``sigma^a_i = sum_{ss'} sigma^a_{ss'} a+_{is} a_{is'}``, without an
    energy offset.
    """
    if not (np.isfinite(t) and np.isfinite(U)):
        raise ValueError("t and U must be finite")
    n = lattice.nsites
    ordering = ordering or ModeOrdering(n)
    if ordering.nsites != n:
        raise ValueError("mode ordering does not match the lattice")
    b = _field_array(fields, n)
    terms = []
    for i, j in lattice.edges:
        for s in (0, 1):
            mi, mj = ordering.index(i, s), ordering.index(j, s)
            terms.append(FermionTerm(((mi, True), (mj, False)), -t))
            terms.append(FermionTerm(((mj, True), (mi, False)), -t))
    for i in range(n):
        up, dn = ordering.index(i, 0), ordering.index(i, 1)
        if U != 0.0:
            terms.append(FermionTerm(((up, True), (up, False), (dn, True), (dn, False)), U))
        if np.any(b[i] != 0.0):
            block = -sum(value * PAULI_MATRICES[a] for a, value in zip(AXES, b[i]))
            for s in (0, 1):
                for s2 in (0, 1):
                    c = block[s, s2]
                    if c != 0:
                        terms.append(
                            FermionTerm(((ordering.index(i, s), True), (ordering.index(i, s2), False)), c)
                        )
    return FermionHamiltonian(2 * n, tuple(terms), sector, ordering)


def total_spin_operators(nsites: int) -> list[SpinHamiltonian]:
    """``sum_i sigma^a_i`` for a = X, Y, Z."""
    return [
        SpinHamiltonian(nsites, tuple(PauliString(((i, a),), 1.0) for i in range(nsites)))
        for a in AXES
    ]


def hubbard_spin_operators(nsites: int, ordering: ModeOrdering | None = None) -> list[FermionHamiltonian]:
    """Quadratic total-spin generators ``sum_i sigma^a_i`` in fermion form."""
    ordering = ordering or ModeOrdering(nsites)
    out = []
    for a in AXES:
        mat = PAULI_MATRICES[a]
        terms = []
        for i in range(nsites):
            for s in (0, 1):
                for s2 in (0, 1):
                    if mat[s, s2] != 0:
                        terms.append(
                            FermionTerm(((ordering.index(i, s), True), (ordering.index(i, s2), False)), mat[s, s2])
                        )
        out.append(FermionHamiltonian(2 * nsites, tuple(terms), None, ordering))
    return out
