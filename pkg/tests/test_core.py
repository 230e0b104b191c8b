"""Pauli algebra, lattices, fermions, Jordan-Wigner, matrices, models and eigensolvers."""

from __future__ import annotations

import itertools
from functools import reduce

import numpy as np
import pytest
import scipy.sparse as sp

from reductionkit.eigensolve import DENSE_LIMIT, expectation, lowest_eigs, spectral_gap
from reductionkit.exceptions import ConvergenceError, DimensionCapError
from reductionkit.fermion import (
    FermionHamiltonian,
    FermionTerm,
    from_tables,
    ladder_matrices,
    normal_order,
    sector_basis,
)
from reductionkit.jordan_wigner import jordan_wigner, ladder_pauli
from reductionkit.lattice import LatticeGraph, ModeOrdering
from reductionkit.matrices import to_matrix
from reductionkit.models import (
    build_heisenberg,
    build_hubbard,
    build_pauli_lattice,
    hubbard_spin_operators,
    total_spin_operators,
)
from reductionkit.pauli import (
    PAULI_MATRICES,
    PauliString,
    PauliSum,
    SpinHamiltonian,
    key_factors,
    pauli_decompose,
    pauli_key,
    single_qubit_field,
)


def kron_all(mats):
    return reduce(np.kron, mats, np.array([[1.0 + 0j]]))


def dense_pauli(label: str) -> np.ndarray:
    return kron_all([PAULI_MATRICES[a] for a in label])


def random_spin_hamiltonian(rng, n: int, nterms: int = 12) -> SpinHamiltonian:
    terms = []
    for _ in range(nterms):
        qubits = rng.choice(n, size=rng.integers(1, n + 1), replace=False)
        terms.append(PauliString(tuple((int(q), "XYZ"[rng.integers(3)]) for q in qubits), rng.normal()))
    return SpinHamiltonian(n, tuple(terms))


# Pauli algebra ---------------------------------------------------------------


def test_qubit_zero_is_most_significant():
    h = SpinHamiltonian(2, (PauliString(((0, "X"), (1, "Z")), 1.0),))
    assert np.allclose(to_matrix(h).toarray(), np.kron(PAULI_MATRICES["X"], PAULI_MATRICES["Z"]))
    z0 = to_matrix(SpinHamiltonian(1, (PauliString(((0, "Z"),)),))).toarray()
    assert z0[0, 0] == 1.0  # |0> has Z = +1


def test_pauli_string_validation():
    with pytest.raises(ValueError):
        PauliString(((0, "X"), (0, "Z")))
    with pytest.raises(ValueError):
        PauliString(((-1, "X"),))
    with pytest.raises(ValueError):
        PauliString(((0, "Q"),))
    with pytest.raises(ValueError):
        SpinHamiltonian(1, (PauliString(((3, "X"),)),))


def test_terms_merge_and_sort():
    a = PauliString.of({1: "Z", 0: "X"}, 0.5)
    b = PauliString(((0, "X"), (1, "Z")), 0.25)
    h1 = SpinHamiltonian(2, (a, b, PauliString(((1, "Y"),), 1.0)))
    h2 = SpinHamiltonian(2, (PauliString(((1, "Y"),), 1.0), b, a))
    assert h1 == h2
    assert h1.coefficient({0: "X", 1: "Z"}) == pytest.approx(0.75)
    assert a.label(3) == "XZI"
    cancelled = SpinHamiltonian(2, (a, PauliString(a.factors, -0.5)))
    assert cancelled.terms == ()


def test_spin_hamiltonian_text_round_trip():
    h = random_spin_hamiltonian(np.random.default_rng(3), 4)
    assert SpinHamiltonian.from_text(h.to_text()) == h


def test_spin_hamiltonian_arithmetic_matches_matrices():
    rng = np.random.default_rng(1)
    a, b = random_spin_hamiltonian(rng, 3), random_spin_hamiltonian(rng, 3)
    ma, mb = to_matrix(a).toarray(), to_matrix(b).toarray()
    assert np.allclose(to_matrix(a + b).toarray(), ma + mb)
    assert np.allclose(to_matrix(a - b).toarray(), ma - mb)
    assert np.allclose(to_matrix(a * 2.5).toarray(), 2.5 * ma)
    assert np.linalg.norm(ma, 2) <= a.norm_bound() + 1e-12


def test_embed_moves_qubits():
    h = SpinHamiltonian(2, (PauliString(((0, "X"), (1, "Y")), 1.0),))
    e = h.embed(4, {0: 3, 1: 1})
    assert e.coefficient({1: "Y", 3: "X"}) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_pauli_product_phases(seed):
    rng = np.random.default_rng(seed)
    n = 3
    labels = ["".join(rng.choice(list("IXYZ"), n)) for _ in range(2)]
    keys = [pauli_key({q: a for q, a in enumerate(lab) if a != "I"}) for lab in labels]
    product = PauliSum({keys[0]: 1.0}) @ PauliSum({keys[1]: 1.0})
    expected = dense_pauli(labels[0]) @ dense_pauli(labels[1])
    ((key, phase),) = product.terms.items()
    label = ["I"] * n
    for q, a in key_factors(key):
        label[q] = a
    assert np.allclose(phase * dense_pauli("".join(label)), expected)


def test_pauli_decompose_round_trip():
    h = random_spin_hamiltonian(np.random.default_rng(7), 3)
    coefficients = pauli_decompose(to_matrix(h).toarray())
    for term in h.terms:
        assert coefficients[term.label(3)] == pytest.approx(term.coefficient)
    with pytest.raises(ValueError):
        pauli_decompose(np.eye(3))


def test_single_qubit_field():
    h = single_qubit_field(1, (0.0, 2.0, -1.0), 2, sign=-1.0)
    assert h.coefficient({1: "Y"}) == -2.0 and h.coefficient({1: "Z"}) == 1.0
    assert h.coefficient({1: "X"}) == 0.0


def test_non_hermitian_pauli_sum_rejected():
    with pytest.raises(ValueError):
        PauliSum({pauli_key({0: "X"}): 1j}).to_spin_hamiltonian(1)


# Lattices ------------------------------------------------------------------


def test_square_lattice_edges_row_major():
    lat = LatticeGraph.square(2, 3)
    assert lat.nsites == 6
    assert (0, 1) in lat.edges and (0, 2) in lat.edges and (1, 3) in lat.edges
    assert len(lat.edges) == 7
    assert sorted(lat.neighbors(2)) == [0, 3, 4]
    assert lat.has_edge(3, 1) and not lat.has_edge(0, 3)


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeGraph.custom(2, 1, [(0, 0)])
    with pytest.raises(ValueError):
        LatticeGraph.custom(2, 1, [(0, 5)])
    with pytest.raises(ValueError):
        LatticeGraph.custom(2, 1, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        LatticeGraph(2, 2, ((0, 1),), "full-2d")


def test_induced_subgraph():
    kept, edges = LatticeGraph.chain(4).induced([0, 1, 3])
    assert kept == [0, 1, 3]
    assert edges == [(0, 1)]


def test_mode_ordering():
    default = ModeOrdering(2)
    assert default.index(1, 0) == 2 and default.label(3) == (1, 1)
    blocked = ModeOrdering.from_function(2, lambda site, spin: spin * 2 + site)
    assert blocked.index(1, 0) == 1 and blocked.index(0, 1) == 2
    with pytest.raises(ValueError):
        ModeOrdering(2, (0, 0, 1, 2))


# Fermions --------------------------------------------------------------------


def dense_fermion(term: FermionTerm, nmodes: int) -> np.ndarray:
    a = ladder_matrices(nmodes)
    mats = [a[m].T if dagger else a[m] for m, dagger in term.operators]
    return term.coefficient * reduce(np.matmul, mats, np.eye(2**nmodes))


def test_ladder_matrices_anticommute():
    a = ladder_matrices(3)
    eye = np.eye(8)
    for i, j in itertools.product(range(3), repeat=2):
        assert np.allclose(a[i] @ a[j].T + a[j].T @ a[i], eye * (i == j))
        assert np.allclose(a[i] @ a[j] + a[j] @ a[i], 0)


@pytest.mark.parametrize("seed", range(6))
def test_normal_order_preserves_operator(seed):
    rng = np.random.default_rng(seed)
    n = 3
    ops = tuple((int(rng.integers(n)), bool(rng.integers(2))) for _ in range(4))
    term = FermionTerm(ops, 1.0 + 0.5j)
    ordered = normal_order(term)
    total = sum((dense_fermion(t, n) for t in ordered), np.zeros((2**n, 2**n), dtype=complex))
    assert np.allclose(total, dense_fermion(term, n))
    for t in ordered:
        daggers = [d for _, d in t.operators]
        assert daggers == sorted(daggers, reverse=True)
        creators = [m for m, d in t.operators if d]
        annihilators = [m for m, d in t.operators if not d]
        assert creators == sorted(creators) and annihilators == sorted(annihilators, reverse=True)


def test_fermion_hamiltonian_hermiticity_and_text():
    with pytest.raises(ValueError):
        FermionHamiltonian(2, (FermionTerm(((0, True), (1, False)), 1.0),))
    rng = np.random.default_rng(0)
    h1 = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = from_tables(h1 + h1.conj().T)
    assert h.conserves_number()
    again = FermionHamiltonian.from_text(h.to_text())
    assert again.terms == h.terms and again.nmodes == h.nmodes


def test_fermion_matrix_matches_ladder_products():
    rng = np.random.default_rng(2)
    h1 = rng.normal(size=(3, 3))
    h = from_tables(h1 + h1.T)
    dense = sum(dense_fermion(t, 3) for t in h.terms)
    assert np.allclose(to_matrix(h).toarray(), dense)
    basis = sector_basis(3, 1)
    assert np.allclose(to_matrix(h, sector=1).toarray(), dense[np.ix_(basis, basis)])


# Jordan-Wigner ---------------------------------------------------------------


def test_ladder_pauli_matches_fock_matrices():
    a = ladder_matrices(3)
    for q in range(3):
        terms = ladder_pauli(q, dagger=False).terms
        mat = np.zeros((8, 8), dtype=complex)
        for key, c in terms.items():
            label = ["I"] * 3
            for qq, ax in key_factors(key):
                label[qq] = ax
            mat += c * dense_pauli("".join(label))
        assert np.allclose(mat, a[q])


@pytest.mark.parametrize("seed", range(3))
def test_jordan_wigner_preserves_full_matrix(seed):
    rng = np.random.default_rng(seed)
    fields = rng.normal(size=(3, 3))
    h = build_hubbard(LatticeGraph.chain(3), 1.0, 3.0, fields)
    assert np.allclose(to_matrix(jordan_wigner(h)).toarray(), to_matrix(h).toarray(), atol=1e-12)


def test_jordan_wigner_ordering_changes_strings_not_spectrum():
    h = build_hubbard(LatticeGraph.chain(2), 1.0, 2.0)
    blocked = ModeOrdering.from_function(2, lambda site, spin: spin * 2 + site)
    a = jordan_wigner(h)
    b = jordan_wigner(h, blocked)
    assert a != b
    ea = np.linalg.eigvalsh(to_matrix(a).toarray())
    eb = np.linalg.eigvalsh(to_matrix(b).toarray())
    assert np.allclose(ea, eb, atol=1e-12)


# Matrices ------------------------------------------------------------------------


def test_dimension_cap():
    h = build_heisenberg(LatticeGraph.chain(6), 1.0)
    with pytest.raises(DimensionCapError):
        to_matrix(h, cap=32)
    assert to_matrix(h, sector=3).shape == (20, 20)
    with pytest.raises(ValueError):
        to_matrix(SpinHamiltonian(2, (PauliString(((0, "X"),)),)), sector=1)


def test_spin_sector_is_restriction():
    h = build_heisenberg(LatticeGraph.chain(4), 1.0)
    full = to_matrix(h).toarray()
    basis = sector_basis(4, 2)
    assert sp.issparse(to_matrix(h))
    assert np.allclose(to_matrix(h, sector=2).toarray(), full[np.ix_(basis, basis)])


# Models ------------------------------------------------------------------------


def test_pauli_lattice_rejects_non_edges_and_strong_couplings():
    lat = LatticeGraph.chain(3)
    h = build_pauli_lattice(lat, [((0, 1), "X", "Y", 0.5)])
    assert h.coefficient({0: "X", 1: "Y"}) == 0.5
    with pytest.raises(ValueError):
        build_pauli_lattice(lat, [((0, 2), "X", "Y", 0.5)])
    with pytest.raises(ValueError):
        build_pauli_lattice(lat, [((0, 1), "X", "Y", 2.0)])
    build_pauli_lattice(lat, [((0, 1), "X", "Y", 2.0)], strict=False)


def test_heisenberg_dimer_spectrum():
    e = np.linalg.eigvalsh(to_matrix(build_heisenberg(LatticeGraph.chain(2), 1.0)).toarray())
    assert np.allclose(e, [-3, 1, 1, 1])


def test_heisenberg_commutes_with_total_spin():
    h = to_matrix(build_heisenberg(LatticeGraph.square(2), 1.0)).toarray()
    for s in total_spin_operators(4):
        m = to_matrix(s).toarray()
        assert np.allclose(h @ m, m @ h)


def test_hubbard_conserves_number_and_spin():
    h = build_hubbard(LatticeGraph.square(2), 1.0, 4.0)
    assert h.conserves_number()
    hm = to_matrix(h).toarray()
    for s in hubbard_spin_operators(4):
        m = to_matrix(s).toarray()
        assert np.allclose(hm @ m, m @ hm)


def test_hubbard_two_site_ground_energy():
    t, u = 1.0, 4.0
    h = build_hubbard(LatticeGraph.chain(2), t, u, sector=2)
    e0 = lowest_eigs(to_matrix(h, sector=2), 1).eigenvalues[0]
    assert e0 == pytest.approx((u - np.sqrt(u * u + 16 * t * t)) / 2, abs=1e-12)


def test_hubbard_field_sign():
    h = build_hubbard(LatticeGraph.chain(1), 0.0, 0.0, [(0.0, 0.0, 1.0)], sector=1)
    e = np.linalg.eigvalsh(to_matrix(h, sector=1).toarray())
    # -B.sigma favors spin up by 2B
    assert np.allclose(e, [-1.0, 1.0])


# Eigensolvers --------------------------------------------------------------------


def test_dense_and_krylov_agree():
    h = to_matrix(build_heisenberg(LatticeGraph.chain(10), 1.0, np.random.default_rng(0).normal(size=(10, 3)) * 0.3))
    dense = lowest_eigs(h, 4, method="dense")
    krylov = lowest_eigs(h, 4, tol=1e-9, method="krylov", seed=3)
    assert np.allclose(dense.eigenvalues, krylov.eigenvalues, atol=1e-9)
    assert krylov.residuals.max() <= 1e-9
    assert krylov.method == "krylov" and krylov.seed == 3


def test_krylov_is_deterministic():
    h = to_matrix(build_heisenberg(LatticeGraph.chain(8), 1.0))
    a = lowest_eigs(h, 3, method="krylov", seed=5)
    b = lowest_eigs(h, 3, method="krylov", seed=5)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert a.to_csv() == b.to_csv()


def test_krylov_resolves_degeneracy():
    h = to_matrix(build_heisenberg(LatticeGraph.chain(2), 1.0))
    big = sp.kron(h, sp.identity(2**8)) + sp.kron(sp.identity(4), to_matrix(build_heisenberg(LatticeGraph.chain(8), 0.01)))
    spec = lowest_eigs(big.tocsr(), 4, method="krylov")
    ref = np.linalg.eigvalsh(big.toarray())[:4]
    assert np.allclose(spec.eigenvalues, ref, atol=1e-8)


def test_lowest_eigs_argument_checks():
    with pytest.raises(ValueError):
        lowest_eigs(np.eye(3), 4)
    with pytest.raises(ValueError):
        lowest_eigs(np.eye(3), 1, method="magic")
    with pytest.raises(ValueError):
        lowest_eigs(np.eye(3), 1, tol=0)
    assert DENSE_LIMIT == 4096


def test_krylov_raises_when_iterations_run_out():
    h = to_matrix(build_heisenberg(LatticeGraph.chain(10), 1.0))
    with pytest.raises(ConvergenceError) as info:
        lowest_eigs(h, 2, tol=1e-14, method="krylov", max_iter=2)
    assert info.value.best_residual > 0


def test_expectation_and_gap():
    h = to_matrix(build_heisenberg(LatticeGraph.chain(2), 1.0))
    spec = lowest_eigs(h, 1)
    assert expectation(h, spec.vectors[:, 0]) == pytest.approx(-3.0)
    assert spectral_gap(h) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        expectation(h, np.ones(4))
    assert spectral_gap(np.eye(2)) == 0.0
