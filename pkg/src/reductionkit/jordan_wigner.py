"""Jordan-Wigner mapping from fermionic modes to qubits.

``a_j = Z_0 ... Z_{j-1} (X_j + i Y_j) / 2``: an occupied mode is the qubit state
|1>, and the Z string counts occupied modes earlier in the ordering.  With the
same bit convention for occupation-basis matrices, the fermionic and spin
matrices coincide entry by entry.
"""

from __future__ import annotations

from .fermion import FermionHamiltonian
from .lattice import ModeOrdering
from .pauli import PauliSum, SpinHamiltonian, pauli_key


def ladder_pauli(qubit: int, dagger: bool) -> PauliSum:
    """Pauli expansion of ``a_qubit`` or ``a+_qubit`` with its Z string."""
    z_string = (1 << qubit) - 1
    x_only = (1 << qubit, z_string)
    y_part = (1 << qubit, z_string | (1 << qubit))
    # Z...Z X and Z...Z Y as symplectic keys; the Z string commutes with X_j, Y_j
    return PauliSum({x_only: 0.5, y_part: -0.5j if dagger else 0.5j})


def _qubit_map(h: FermionHamiltonian, ordering: ModeOrdering | None) -> list[int]:
    if ordering is None:
        return list(range(h.nmodes))
    if ordering.nmodes != h.nmodes:
        raise ValueError(
            f"ordering covers {ordering.nmodes} modes but the Hamiltonian has {h.nmodes}"
        )
    source = h.ordering or ModeOrdering(h.nmodes // 2)
    return [ordering.index(*source.label(m)) for m in range(h.nmodes)]


def jordan_wigner(h: FermionHamiltonian, ordering: ModeOrdering | None = None) -> SpinHamiltonian:
    """Map ``h`` to qubits; ``ordering`` places each (site, spin) on a qubit.

    Without an ordering, mode ``m`` becomes qubit ``m``.
    """
    qubit_of = _qubit_map(h, ordering)
    total = PauliSum()
    cache: dict[tuple[int, bool], PauliSum] = {}
    for term in h.terms:
        product = PauliSum.identity(term.coefficient)
        for mode, dagger in term.operators:
            key = (qubit_of[mode], dagger)
            if key not in cache:
                cache[key] = ladder_pauli(*key)
            product = product @ cache[key]
        total = total + product
    return total.pruned().to_spin_hamiltonian(h.nmodes)


def number_operator_pauli(qubit: int) -> PauliSum:
    """``(1 - Z) / 2``."""
    return PauliSum({(0, 0): 0.5, pauli_key({qubit: "Z"}): -0.5})
