"""Second-order perturbation theory, gadget compilation and the nested chain."""

from __future__ import annotations

import json

import numpy as np
import pytest

from reductionkit.chain import CompiledChain, compile_full_chain, schedule_strengths, verify_chain
from reductionkit.exceptions import InfeasibleCouplingError
from reductionkit.gadgets import (
    calibrate_gadget,
    compile_erasure,
    compile_ising_to_xx,
    compile_pauli_to_ising,
    compile_pauli_tune,
    compile_xx_to_heisenberg,
    gadget_scan_builder,
    hubbard_effective_exchange,
    measured_couplings,
    mediator_ground_state,
    product_low_basis,
    tuning_angle,
    verify_crosstalk,
    verify_erasure,
    verify_gadget,
)
from reductionkit.lattice import LatticeGraph
from reductionkit.pauli import PAULI_MATRICES
from reductionkit.perturbation import (
    BlockSplit,
    deviation_scan,
    effective_hamiltonian_2nd,
    projected_effective_operator,
)


def two_level_problem(gap: float, coupling: float):
    """A qubit pair where only the second qubit is gapped: H = gap |1><1| on qubit 1."""
    h = np.kron(np.eye(2), np.diag([0.0, gap]))
    v = coupling * np.kron(PAULI_MATRICES["Z"], PAULI_MATRICES["X"]).real
    return h, v


# Perturbation theory ---------------------------------------------------------


def test_effective_hamiltonian_matches_closed_form():
    gap, g = 100.0, 1.0
    h, v = two_level_problem(gap, g)
    split = BlockSplit.from_hamiltonian(h, gap, v)
    report = effective_hamiltonian_2nd(h, v, split)
    # each low state shifts by -g^2 / gap
    assert np.allclose(report.effective, [-g * g / gap] * 2)
    exact = (gap - np.sqrt(gap * gap + 4 * g * g)) / 2
    assert np.allclose(report.exact, [exact] * 2)
    assert report.deviation <= report.bound


def test_deviation_scan_fits_fourth_order_residual():
    def builder(b):
        h, v = two_level_problem(b, 1.0)
        return h, v, BlockSplit.from_hamiltonian(h, b, v)

    scan = deviation_scan(builder, [10.0, 100.0, 1000.0])
    # the fourth-order term g^4 / gap^3 dominates when V has no low-space part
    assert scan.fit is not None and scan.fit.slope == pytest.approx(-3.0, abs=0.05)
    with pytest.raises(ValueError):
        deviation_scan(builder, [10.0, 20.0, 30.0])


def test_block_split_checks():
    h, v = two_level_problem(10.0, 1.0)
    with pytest.raises(ValueError):
        BlockSplit.from_hamiltonian(h, 0.0)
    with pytest.raises(ValueError):
        BlockSplit.from_hamiltonian(h, 20.0)
    with pytest.raises(ValueError):
        BlockSplit.from_hamiltonian(h, 10.0, v, v=0.1)
    low = np.kron(np.eye(2), np.array([[1.0], [0.0]]))
    split = BlockSplit.from_low_basis(h, low, 10.0, v)
    assert split.dims == (2, 2)
    assert split.v == pytest.approx(1.0)


def test_effective_hamiltonian_requires_block_diagonal_h():
    h, v = two_level_problem(10.0, 1.0)
    split = BlockSplit.from_hamiltonian(h, 10.0, v)
    with pytest.raises(ValueError):
        effective_hamiltonian_2nd(h + v, v, split)


def test_projected_operator_reproduces_low_spectrum():
    h, v = two_level_problem(50.0, 1.0)
    low = np.kron(np.eye(2), np.array([[1.0], [0.0]]))
    heff = projected_effective_operator(h + v, low)
    exact = np.linalg.eigvalsh(h + v)[:2]
    assert np.allclose(np.linalg.eigvalsh(heff), exact, atol=1e-12)


# Gadgets -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "spec",
    [
        compile_pauli_tune("Y", "Z", 0.5e-3, 1.0, 1000.0),
        compile_pauli_tune("X", "X", -0.3e-3, 1.0, 1000.0),
        compile_pauli_to_ising("Y", "Z", 1.0, 1000.0),
        compile_ising_to_xx(1.0, 1000.0, axis="Y"),
        compile_xx_to_heisenberg(1.0, 1000.0, field_axis="Z"),
    ],
    ids=["tune-yz", "tune-xx-negative", "ising", "xx", "heisenberg"],
)
def test_gadget_reproduces_prediction(spec):
    report = verify_gadget(spec)
    assert report.parameters["relative_error"] <= 10 * spec.lam / spec.bfield
    for label, value in spec.predicted:
        assert np.sign(report.measured[label]) == np.sign(value)
    assert report.deviation <= 20 * spec.lam**3 / spec.bfield**2


def test_predicted_coefficients():
    lam, b = 1.0, 1000.0
    assert compile_pauli_to_ising("X", "Z", lam, b).predicted_map == {"XZ": pytest.approx(lam**2 / b)}
    assert compile_ising_to_xx(lam, b, axis="X").predicted_map == {"XX": pytest.approx(-2 * lam**2 / b)}
    heis = compile_xx_to_heisenberg(lam, b, field_axis="Z").predicted_map
    assert heis == {"XX": pytest.approx(-2 * lam**2 / b), "YY": pytest.approx(-2 * lam**2 / b)}
    phi = tuning_angle(0.25e-3, lam, b)
    tune = compile_pauli_tune("Y", "Z", 0.25e-3, lam, b)
    assert tune.phi == pytest.approx(phi)
    assert tune.predicted_map["YZ"] == pytest.approx(2 * lam**2 / b * np.sin(phi) * np.cos(phi))


def test_infeasible_and_out_of_regime_gadgets():
    with pytest.raises(InfeasibleCouplingError) as info:
        compile_pauli_tune("Y", "Z", 2e-3, 1.0, 1000.0)
    assert info.value.achievable == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        compile_pauli_to_ising("Y", "Z", 1.0, 50.0)
    compile_pauli_to_ising("Y", "Z", 1.0, 50.0, check_regime=False)
    with pytest.raises(ValueError):
        compile_pauli_to_ising("Z", "Z", 1.0, 1000.0)


def test_zero_coupling_gadget_is_trivial():
    spec = compile_pauli_to_ising("Y", "Z", 0.0, 1000.0)
    measured = measured_couplings(spec)
    assert all(abs(c) < 1e-12 for label, c in measured.items() if label != "II")


def test_gadget_json_round_trip_fields():
    spec = compile_pauli_tune("Y", "Z", 0.5e-3, 1.0, 1000.0)
    d = json.loads(spec.to_json())
    assert d["kind"] == "pauli-tune" and d["predicted"]["YZ"] == pytest.approx(0.5e-3)


def test_mediator_ground_state_is_aligned():
    for direction in [(1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.6, 0.0, 0.8)]:
        psi = mediator_ground_state(direction)
        field = sum(c * PAULI_MATRICES[a] for c, a in zip(direction, "XYZ"))
        # the ground state of B(1 - n.sigma) has n.sigma = +1
        assert np.allclose(field @ psi, psi)
    low = product_low_basis(3, {1: mediator_ground_state((0.0, 0.0, 1.0))})
    assert low.shape == (8, 4)
    assert np.allclose(low.conj().T @ low, np.eye(4))


def test_sw_scan_slope_for_tunable_gadget():
    builder = gadget_scan_builder(lambda b: compile_pauli_tune("Y", "Z", 0.5 / b, 1.0, b))
    scan = deviation_scan(builder, [1e2, 1e3, 1e4])
    assert scan.fit.slope == pytest.approx(-2.0, abs=0.15)


def test_crosstalk_is_absent():
    left = compile_pauli_to_ising("Y", "Z", 1.0, 1000.0)
    right = compile_pauli_tune("X", "Y", 0.5e-3, 1.0, 1000.0)
    report = verify_crosstalk(left, right)
    assert report.cross_coupling <= report.envelope
    assert report.interference <= report.envelope


def test_calibration_hits_target_exactly():
    spec = compile_xx_to_heisenberg(1.0, 200.0, field_axis="Z")
    tuned = calibrate_gadget(spec, tol=1e-12)
    measured = measured_couplings(tuned, "derived")
    assert measured["XX"] == pytest.approx(spec.predicted_map["XX"], rel=1e-9)
    assert abs(measured.get("ZI", 0.0)) < 1e-10 and abs(measured.get("IZ", 0.0)) < 1e-10


def test_erasure_plan_and_scaling():
    plan = compile_erasure(LatticeGraph.chain(3), [0, 2], 100.0)
    assert plan.kept == (0, 2) and plan.erased == (1,)
    assert plan.target.nqubits == 2 and plan.target.terms == ()
    deviations = [verify_erasure(LatticeGraph.chain(3), [0, 2], b).deviation for b in (1e2, 1e3, 1e4)]
    slope = np.polyfit(np.log([1e2, 1e3, 1e4]), np.log(deviations), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)
    with pytest.raises(ValueError):
        compile_erasure(LatticeGraph.chain(3), [5], 100.0)


def test_erasure_keeps_edges_between_kept_sites():
    report = verify_erasure(LatticeGraph.chain(3), [0, 1], 1e4)
    assert np.allclose(report.predicted, [-3, 1, 1, 1], atol=1e-12)
    assert report.deviation < 1e-3


def test_hubbard_exchange():
    r = hubbard_effective_exchange(1.0, 100.0)
    assert r.exact_gap == pytest.approx(r.analytic_gap, abs=1e-10)
    assert r.relative_error < 0.01
    assert r.j_sigma == pytest.approx(0.01)
    with pytest.raises(ValueError):
        hubbard_effective_exchange(1.0, 10.0)
    with pytest.raises(ValueError):
        hubbard_effective_exchange(1.0, -1.0)


# Chain -----------------------------------------------------------------------


def test_geometric_schedule_links_layers():
    s = schedule_strengths(mode="geometric", ratio=20)
    v = s.as_floats()
    assert v["lam_i"] / v["lam_p"] == pytest.approx(20)
    assert v["lam_i"] ** 2 / v["b_i"] == pytest.approx(v["lam_p"])
    assert 2 * v["lam_xx"] ** 2 / v["b_xx"] == pytest.approx(v["lam_i"])
    assert 2 * v["lam_h"] ** 2 / v["b_h"] == pytest.approx(v["lam_xx"])
    with pytest.raises(ValueError):
        schedule_strengths(mode="geometric", ratio=5)


def test_polynomial_schedule_is_exact():
    s = schedule_strengths(N=2, q=1, mode="paper")
    assert s.lam_p == 16 and s.b_p == 256
    huge = schedule_strengths(N=10**4, q=3, mode="paper")
    assert not huge.simulable
    with pytest.raises(OverflowError):
        huge.as_floats()


@pytest.mark.parametrize("layers", [1, 2, 3])
def test_partial_chain_reproduces_target(layers):
    schedule = schedule_strengths(mode="geometric", ratio=20)
    chain = compile_full_chain("Y", "Z", 0.01, schedule, layers=layers)
    assert chain.nqubits == 2**layers + 1
    report = verify_chain(chain, method="dense")
    assert report.passed
    assert abs(report.strength_ratio - 1.0) < 0.05


def test_compiled_chain_json_round_trip():
    chain = compile_full_chain("Y", "Z", 0.01, schedule_strengths(mode="geometric", ratio=20), layers=2)
    again = CompiledChain.from_json(chain.to_json())
    assert again.to_json() == chain.to_json()
    assert again.hamiltonian() == chain.hamiltonian()


@pytest.mark.slow
def test_full_chain_has_sixteen_heisenberg_couplings():
    chain = compile_full_chain("Y", "Z", 0.01, schedule_strengths(mode="geometric", ratio=20), layers=4)
    assert chain.nqubits == 17
    assert len(chain.heisenberg_edges) == 16
