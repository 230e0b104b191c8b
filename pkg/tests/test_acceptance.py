"""Acceptance criteria 1 to 11, one test each, with a one-line verdict per criterion.

Each test records ``criterion N: PASS|FAIL (<seconds> s) <detail>`` in
``VERDICTS``; ``conftest.py`` prints the collected lines at the end of the
session.  Running this file directly prints the same lines without pytest.
"""

from __future__ import annotations

import sys
import time

import numpy as np
import pytest

from reductionkit.gadgets import verify_crosstalk
from reductionkit.harness import make_gadget, parse_config, run
from reductionkit.jordan_wigner import jordan_wigner
from reductionkit.lattice import LatticeGraph
from reductionkit.matrices import to_matrix
from reductionkit.models import build_hubbard

VERDICTS: dict[int, str] = {}


def record(number: int, passed: bool, seconds: float, budget: float, detail: str) -> bool:
    in_time = seconds <= budget
    ok = passed and in_time
    verdict = "PASS" if ok else "FAIL"
    timing = f"{seconds:.1f} s of {budget:g} s"
    VERDICTS[number] = f"criterion {number}: {verdict} ({timing}) {detail}"
    print(VERDICTS[number])
    return ok


def harness(kind: str, text: str = ""):
    status, result, messages = run(parse_config(text, kind), write=False)
    assert result is not None, messages
    return status, result


def details(result) -> str:
    return "; ".join(f"{a.name}: {a.detail}" for a in result.assertions)


def test_criterion_01_sw_scaling():
    start = time.perf_counter()
    _, result = harness("sw-scan", "[sw-scan]\nkind = pauli-tune\naxis_a = Y\naxis_b = Z\nlam = 1\n[sweep]\nname = bfield\nvalues = 100 1000 10000\n")
    assert record(1, result.passed, time.perf_counter() - start, 10, details(result))


def test_criterion_02_gadget_couplings():
    start = time.perf_counter()
    parts, passed = [], True
    for kind in ("pauli-tune", "pauli-to-ising", "ising-to-xx", "xx-to-heisenberg"):
        _, result = harness("gadget-verify", f"[gadget-verify]\nkind = {kind}\nlam = 1\nbfield = 1000\n")
        passed &= result.passed
        parts.append(f"{kind} {result.rows[0][4]:.3g}")
    detail = "relative errors " + ", ".join(parts) + " (limit 0.01)"
    assert record(2, passed, time.perf_counter() - start, 30, detail)


def test_criterion_03_crosstalk():
    start = time.perf_counter()
    left = make_gadget("pauli-to-ising", 1.0, 1000.0)
    right = make_gadget("ising-to-xx", 1.0, 1000.0)
    report = verify_crosstalk(left, right)
    passed = report.cross_coupling <= report.envelope
    detail = f"cross coupling {report.cross_coupling:.3g} <= {report.envelope:.3g}"
    assert record(3, passed, time.perf_counter() - start, 10, detail)


def test_criterion_04_erasure():
    start = time.perf_counter()
    _, result = harness("erasure-scan", "[sweep]\nname = b_e\nvalues = 100 1000 10000\n")
    assert record(4, result.passed, time.perf_counter() - start, 10, details(result))


def test_criterion_05_hubbard_exchange():
    start = time.perf_counter()
    _, result = harness("hubbard-exchange", "[hubbard-exchange]\nt = 1\n[sweep]\nname = U\nvalues = 100 1000 10000\n")
    worst = max(abs(e - a) for _, e, a, _, _ in result.rows)
    detail = f"worst |gap - closed form| {worst:.3g}; {result.assertions[-1].detail}"
    assert record(5, result.passed, time.perf_counter() - start, 5, detail)


def test_criterion_06_jordan_wigner():
    start = time.perf_counter()
    worst = 0.0
    for seed in (0, 1, 2):
        fields = np.random.default_rng(seed).normal(size=(4, 3))
        h = build_hubbard(LatticeGraph.square(2), 1.0, 4.0, fields)
        fermion = np.linalg.eigvalsh(to_matrix(h).toarray())
        spin = np.linalg.eigvalsh(to_matrix(jordan_wigner(h)).toarray())
        worst = max(worst, float(np.max(np.abs(fermion - spin))))
    assert record(6, worst <= 1e-12, time.perf_counter() - start, 20, f"worst spectral difference {worst:.3g} over 3 seeds")


def test_criterion_07_kronig_penney():
    start = time.perf_counter()
    _, result = harness("kp-band", "[kp-band]\nwell = 8\nscan_min = 5\nscan_max = 12\n")
    raw = result.fits["bandwidth_raw"].slope
    detail = f"{details(result)}; raw bandwidth slope {raw:.4g} includes the prefactor"
    assert record(7, result.passed, time.perf_counter() - start, 10, detail)


def test_criterion_08_coulomb_constant():
    start = time.perf_counter()
    _, result = harness("coulomb-cu")
    assert record(8, result.passed, time.perf_counter() - start, 60, details(result))


def test_criterion_09_dft():
    start = time.perf_counter()
    _, result = harness("dft-solve", "[dft-solve]\nseeds = 5\nconvexity_pairs = 20\n")
    worst = result.summary["max_error"]
    detail = f"worst energy error {worst:.3g}; {result.assertions[-1].detail}"
    assert record(9, result.passed, time.perf_counter() - start, 300, detail)


def test_criterion_10_hartree_fock_ising():
    start = time.perf_counter()
    _, result = harness(
        "hf-ising",
        "[hf-ising]\nside = 2\ninstances = 20\nrestarts = 32\nmin_hits = 18\nvariational_instances = 6\nvariational_modes = 8\n",
    )
    assert record(10, result.passed, time.perf_counter() - start, 300, details(result))


@pytest.mark.slow
def test_criterion_11_full_chain():
    start = time.perf_counter()
    _, result = harness("chain-verify", "[chain-verify]\nratio = 20\nlayers = 4\nmethod = krylov\n")
    detail = f"{result.summary['nqubits']} qubits, strength ratio {result.summary['strength_ratio']:.6g}; " + ", ".join(
        f"{a.name} {'ok' if a.passed else 'failed'}" for a in result.assertions
    )
    assert record(11, result.passed, time.perf_counter() - start, 900, detail)


if __name__ == "__main__":
    failures = 0
    for name, func in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                func()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
