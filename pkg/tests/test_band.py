"""Kronig-Penney band, Wannier orbitals, Coulomb constant and the error budget."""

from __future__ import annotations

import math

import numpy as np
import pytest

from reductionkit.band import (
    CU_REFERENCE,
    BandModelParams,
    NoBoundStateError,
    adaptive_tensor_gauss,
    bandwidth_scan,
    closed_form_orbital,
    coulomb_reduced,
    decay_constant,
    error_budget,
    green_function,
    hubbard_parameters,
    magnetic_overlaps,
    onsite_prefactors,
    onsite_repulsion,
    symmetric_grid,
    solve_dispersion,
    wannier_profile,
)
from reductionkit.exceptions import ConvergenceError


@pytest.mark.parametrize("c", [3.0, 8.0, 12.0])
@pytest.mark.parametrize("k", [0.0, 0.7, np.pi / 2, np.pi])
def test_decay_constant_solves_kronig_penney_relation(c, k):
    kappa = decay_constant(c, k)
    # attractive delta comb: cos k = cosh(kappa) - (c / kappa) sinh(kappa)
    lhs = math.cosh(kappa) - c / kappa * math.sinh(kappa)
    assert lhs == pytest.approx(math.cos(k), abs=1e-9 * math.cosh(kappa))


def test_no_bound_state_for_weak_wells():
    with pytest.raises(NoBoundStateError):
        decay_constant(0.5, 0.0)


def test_symmetric_grid_pairs_negatives():
    k = symmetric_grid(9)
    assert k[0] == -np.pi and k[-1] == np.pi
    assert np.array_equal(k, -k[::-1])
    with pytest.raises(ValueError):
        symmetric_grid(1)


def test_band_is_even_and_approaches_asymptotic_form():
    band = solve_dispersion(BandModelParams(10.0), 33)
    assert np.allclose(band.energy, band.energy[::-1], rtol=0, atol=1e-12)
    assert band.energy[16] == band.energy.min()  # k = 0 is the band bottom
    dev = band.deviations()
    assert dev["asymptotic"] < 0.05 * band.bandwidth
    assert band.gap > 0
    assert band.to_csv().splitlines()[0] == "k,kappa,energy"


def test_conventions_differ_by_strength_and_energy_scale():
    half = BandModelParams(8.0, convention="half")
    unit = BandModelParams(8.0, convention="unit")
    assert half.strength == 8.0 and unit.strength == 4.0
    assert half.energy(2.0) == -2.0 and unit.energy(2.0) == -4.0
    with pytest.raises(ValueError):
        BandModelParams(8.0, convention="other")
    with pytest.raises(ValueError):
        solve_dispersion(BandModelParams(2.0))


def test_bandwidth_decays_exponentially():
    scan = bandwidth_scan(np.linspace(5, 12, 8))
    assert all(a > b for a, b in zip(scan.bandwidths, scan.bandwidths[1:]))
    assert scan.reduced.slope == pytest.approx(-1.0, abs=0.05)
    # the raw fit also carries the slowly varying prefactor
    assert scan.raw.slope > scan.reduced.slope


def test_wannier_profile():
    params = BandModelParams(8.0)
    data = wannier_profile(solve_dispersion(params, 33))
    assert data.normalization == pytest.approx(1.0, abs=1e-8)
    assert abs(data.overlaps["signed"]) < 1e-8
    assert data.overlaps["absolute"] > 0
    assert data.closed_form_deviation < 0.01
    centre = data.w0[np.argmin(np.abs(data.r))]
    assert centre == pytest.approx(closed_form_orbital(params, 0.0), rel=0.01)
    assert data.to_csv().startswith("r,w0\n")


def test_wannier_ring_convergence_check():
    params = BandModelParams(3.0, nwells=2)
    with pytest.raises(ConvergenceError):
        wannier_profile(solve_dispersion(params, 9), check_tol=1e-14)


def test_magnetic_envelope_tends_to_unity():
    weak = magnetic_overlaps(BandModelParams(5.0), (0.0, 0.0, 1.0))
    strong = magnetic_overlaps(BandModelParams(12.0), (0.0, 0.0, 1.0))
    assert strong.onsite_relative_error < weak.onsite_relative_error < 0.1
    assert abs(strong.neighbor_factor) < abs(weak.neighbor_factor)
    assert strong.onsite[2] == pytest.approx(strong.onsite_factor)


def test_green_function_and_adaptive_quadrature():
    assert green_function(np.zeros(3)) == 1.0
    assert green_function(np.array([1.0, 0.0, 0.0])) == pytest.approx(2 * math.exp(-1))
    value, panels = adaptive_tensor_gauss(lambda x, y: np.sin(x) * np.cos(y) + 0 * x, 0, np.pi, 0, np.pi / 2, 1e-10)
    assert value == pytest.approx(2.0, abs=1e-10)
    assert panels >= 4
    with pytest.raises(ConvergenceError):
        adaptive_tensor_gauss(lambda x, y: 1.0 / np.sqrt(np.abs(x - 0.3) + 1e-300) + 0 * y, 0, 1, 0, 1, 1e-14, max_depth=2)


def test_coulomb_constant_reduced_route():
    assert coulomb_reduced(1e-4) == pytest.approx(CU_REFERENCE, abs=5e-3)


def test_onsite_repulsion_and_prefactors():
    params = BandModelParams.from_schedule(1e3, 8.0, 2.0)
    u = onsite_repulsion(params, CU_REFERENCE)
    assert u == pytest.approx(CU_REFERENCE / 64 * 1e3**-2.0)
    p = onsite_prefactors(CU_REFERENCE)
    assert p["ratio"] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        onsite_repulsion(BandModelParams(8.0), CU_REFERENCE)
    with pytest.raises(ValueError):
        BandModelParams.from_schedule(1e3, 4.0, 2.0)


def test_hubbard_parameters_match_band_hopping():
    params = BandModelParams.from_schedule(1e3, 8.0, 2.0)
    hp = hubbard_parameters(params, CU_REFERENCE)
    band = solve_dispersion(params, 65)
    # a cosine band of hopping t has width 4 t
    assert hp.t_band == pytest.approx(band.bandwidth / 4, rel=1e-3)
    assert set(hp.error_terms) == {"onsite_correction", "magnetic_neighbor"}
    assert hp.gap > 0


def test_error_budget_flags():
    ok = error_budget(1e3, 10.0, 2.0)
    assert ok.precondition_ok
    assert ok.delta_e_numeric == pytest.approx(ok.delta_e, rel=0.05)
    bad = error_budget(1e3, 4.0, 2.0)
    assert not bad.precondition_ok and bad.flags
