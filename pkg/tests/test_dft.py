"""Lattice spin-density functional: densities, the exact functional and the ground-energy descent."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import unitary_group

from reductionkit.dft import (
    SectorKernel,
    SpinDensity,
    convexity_probe,
    dft_ground_energy,
    ground_state_density,
    potential_blocks,
    potential_coords,
    project_density,
    project_simplex,
    universal_functional,
)
from reductionkit.exceptions import UnboundedDualError
from reductionkit.fermion import FermionHamiltonian, FermionTerm
from reductionkit.harness import random_density, random_potentials
from reductionkit.lattice import LatticeGraph
from reductionkit.models import build_hubbard


@pytest.fixture(scope="module")
def kernel():
    return build_hubbard(LatticeGraph.chain(2), 1.0, 4.0)


@pytest.fixture(scope="module")
def sector(kernel):
    return SectorKernel(kernel, 2, 2)


def exact_energy(sk: SectorKernel, potentials) -> float:
    return float(np.linalg.eigvalsh(sk.hamiltonian(potential_coords(potentials)))[0])


# Densities and potentials ----------------------------------------------------


def test_density_coordinates_round_trip():
    d = random_density(np.random.default_rng(0), 3, 2)
    again = SpinDensity.from_coords(d.coords(), 2)
    assert np.allclose(again.blocks, d.blocks)
    assert SpinDensity.from_json(d.to_json()).blocks == pytest.approx(d.blocks)
    assert d.coords()[:, 0].sum() == pytest.approx(2.0)


def test_density_validation():
    with pytest.raises(ValueError):
        SpinDensity(np.array([[[1.5, 0], [0, 0.5]]]), 2)
    with pytest.raises(ValueError):
        SpinDensity(np.array([[[0.5, 0], [0, 0.25]]]), 1)
    with pytest.raises(ValueError):
        SpinDensity(np.array([[[0.5, 0.1], [0.3, 0.5]]]), 1)


def test_pairing_of_potentials_and_densities():
    rng = np.random.default_rng(1)
    v = random_potentials(rng, 2, 1.0)
    d = random_density(rng, 2, 2)
    x = potential_coords(v)
    assert np.allclose(potential_blocks(x), v)
    # sum_i tr(v_i lambda_i) equals x . r
    assert np.sum(x * d.coords()) == pytest.approx(np.real(np.einsum("nij,nji->", v, d.blocks)))


def test_operator_expectations_match_density_convention(sector):
    rng = np.random.default_rng(2)
    x = potential_coords(random_potentials(rng, 2, 1.0))
    e, u = sector.ground(x)
    coords = sector.density(u[:, 0])
    blocks = SpinDensity.from_coords(coords, 2).blocks
    # the energy of the site potential is tr(v lambda) summed over sites
    assert np.real(u[:, 0].conj() @ (sector.hamiltonian(x) - sector.kernel) @ u[:, 0]) == pytest.approx(
        np.sum(x * coords)
    )
    assert np.all(np.linalg.eigvalsh(blocks) > -1e-12)


def test_kernel_with_local_terms_is_rejected():
    local = FermionHamiltonian(4, (FermionTerm(((0, True), (0, False)), 1.0),))
    with pytest.raises(ValueError):
        SectorKernel(local, 2, 2)


def test_simplex_projections():
    w = project_simplex(np.array([0.9, 0.5, -0.2]), 1.0)
    assert w.sum() == pytest.approx(1.0) and w.min() >= 0
    capped = project_simplex(np.array([2.0, 2.0, 0.0]), 1.5, cap=1.0)
    assert capped.max() <= 1.0 + 1e-15 and capped.sum() == pytest.approx(1.5)
    with pytest.raises(ValueError):
        project_simplex(np.zeros(2), 3.0, cap=1.0)
    coords = project_density(np.array([[3.0, 0.0, 0.0, 0.5], [0.0, 0.0, 0.0, 0.0]]), 2, floor=1e-3)
    d = SpinDensity.from_coords(coords, 2)
    assert np.linalg.eigvalsh(d.blocks).min() >= 1e-3 - 1e-12


# The functional -----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_functional_at_ground_state_density(sector, seed):
    x = potential_coords(random_potentials(np.random.default_rng(seed), 2, 1.0))
    density = ground_state_density(sector.hamiltonian(x), sector, 2)
    f = universal_functional(density, sector).value
    e0 = float(np.linalg.eigvalsh(sector.hamiltonian(x))[0])
    # the potential x is optimal in the dual, so F = E0 - x . r
    assert f == pytest.approx(e0 - np.sum(x * density.coords()), abs=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_primal_and_dual_agree_on_interior_densities(sector, seed):
    density = random_density(np.random.default_rng(seed), 2, 2).shrink(0.2)
    dual = universal_functional(density, sector).value
    primal = universal_functional(density, sector, method="primal-oracle").value
    assert primal == pytest.approx(dual, abs=1e-6)


def test_supergradient_is_a_lower_bound(sector):
    density = random_density(np.random.default_rng(4), 2, 2).shrink(0.2)
    dual = universal_functional(density, sector)
    ascent = universal_functional(density, sector, method="supergradient", max_iter=500)
    assert ascent.value <= dual.value + 1e-9
    with pytest.raises(ValueError):
        universal_functional(density, sector, method="unknown")


def test_functional_is_spin_rotation_invariant(sector):
    density = random_density(np.random.default_rng(5), 2, 2).shrink(0.1)
    u = unitary_group.rvs(2, random_state=5)
    a = universal_functional(density, sector).value
    b = universal_functional(density.rotate(u), sector).value
    assert a == pytest.approx(b, abs=1e-8)


def test_convexity_on_random_pairs(sector):
    rng = np.random.default_rng(6)
    for _ in range(4):
        report = convexity_probe(random_density(rng, 2, 2), random_density(rng, 2, 2), sector)
        assert report.holds, report.to_dict()


def test_unrepresentable_densities_are_unbounded(sector):
    wrong_count = SpinDensity(np.tile(np.eye(2) * 0.25, (2, 1, 1)), 2, validate=False)
    with pytest.raises(UnboundedDualError) as info:
        universal_functional(wrong_count, sector)
    assert info.value.direction[0] > 0
    overfull = SpinDensity(np.array([np.diag([1.2, 0.3]), np.diag([0.3, 0.2])]), 2, validate=False)
    with pytest.raises(UnboundedDualError):
        universal_functional(overfull, sector)


# Ground-energy descent ------------------------------------------------------------


@pytest.mark.parametrize("nelectrons", [1, 2, 3])
def test_dft_matches_exact_diagonalization(kernel, nelectrons):
    v = random_potentials(np.random.default_rng(10 + nelectrons), 2, 1.0)
    result = dft_ground_energy(v, kernel, nelectrons)
    exact = exact_energy(SectorKernel(kernel, 2, nelectrons), v)
    assert result.energy == pytest.approx(exact, abs=1e-4)
    # the reported energy is variational
    assert result.energy >= exact - 1e-9


def test_uniform_potential_shift_moves_energy_by_mu_n(kernel):
    v = random_potentials(np.random.default_rng(20), 2, 1.0)
    mu = 0.7
    shifted = v + mu * np.eye(2)
    a = dft_ground_energy(v, kernel, 2).energy
    b = dft_ground_energy(shifted, kernel, 2).energy
    assert b - a == pytest.approx(2 * mu, abs=2e-4)


def test_dft_result_serializes(kernel):
    v = random_potentials(np.random.default_rng(21), 2, 0.5)
    d = dft_ground_energy(v, kernel, 2).to_dict()
    assert set(d) == {"energy", "density", "iterations", "gradient_norm"}
