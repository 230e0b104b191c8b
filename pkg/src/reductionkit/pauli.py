"""Pauli strings, spin Hamiltonians and a small Pauli algebra.

Qubit 0 is the most significant tensor factor, so the matrix of ``X@0 Z@1``
equals ``kron(X, Z)``.  The computational state |0> is the +1 eigenstate of Z.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

AXES = ("X", "Y", "Z")
DROP_TOL = 1e-15

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def check_axis(axis: str) -> str:
    axis = str(axis).upper()
    if axis not in AXES:
        raise ValueError(f"unknown Pauli axis {axis!r}; expected one of {AXES}")
    return axis


@dataclass(frozen=True, order=True)
class PauliString:
    """A real-weighted tensor product of single-qubit Pauli operators.

    ``factors`` is stored as a tuple of ``(qubit, axis)`` pairs sorted by qubit.
    An empty tuple denotes the identity.
    """

    factors: tuple[tuple[int, str], ...] = ()
    coefficient: float = 1.0

    def __post_init__(self):
        seen = {}
        for qubit, axis in self.factors:
            qubit = int(qubit)
            if qubit < 0:
                raise ValueError(f"negative qubit index {qubit}")
            if qubit in seen:
                raise ValueError(f"qubit {qubit} appears twice in one Pauli string")
            seen[qubit] = check_axis(axis)
        object.__setattr__(self, "factors", tuple(sorted(seen.items())))
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @classmethod
    def of(cls, factors: Mapping[int, str] | Iterable[tuple[int, str]], coefficient: float = 1.0) -> "PauliString":
        items = factors.items() if isinstance(factors, Mapping) else factors
        return cls(tuple(items), coefficient)

    @property
    def factor_map(self) -> dict[int, str]:
        return dict(self.factors)

    @property
    def max_qubit(self) -> int:
        return max((q for q, _ in self.factors), default=-1)

    def label(self, nqubits: int) -> str:
        chars = ["I"] * nqubits
        for q, a in self.factors:
            chars[q] = a
        return "".join(chars)

    def to_text(self) -> str:
        parts = [repr(self.coefficient)] + [f"{a}@{q}" for q, a in self.factors]
        return " ".join(parts)

    @classmethod
    def from_text(cls, line: str) -> "PauliString":
        tokens = line.split()
        if not tokens:
            raise ValueError("empty Pauli-string line")
        factors = []
        for tok in tokens[1:]:
            axis, _, qubit = tok.partition("@")
            if not qubit:
                raise ValueError(f"malformed factor {tok!r}")
            factors.append((int(qubit), axis))
        return cls(tuple(factors), float(tokens[0]))


@dataclass(frozen=True)
class SpinHamiltonian:
    """A Hermitian sum of real-weighted Pauli strings on ``nqubits`` qubits.

    Terms are merged and sorted on construction, so two Hamiltonians built from
    the same terms in any order compare equal.
    """

    nqubits: int
    terms: tuple[PauliString, ...] = field(default=())

    def __post_init__(self):
        if self.nqubits < 0:
            raise ValueError("nqubits must be non-negative")
        merged: dict[tuple, float] = {}
        for term in self.terms:
            if term.max_qubit >= self.nqubits:
                raise ValueError(
                    f"term {term.to_text()!r} acts outside {self.nqubits} qubits"
                )
            merged[term.factors] = merged.get(term.factors, 0.0) + term.coefficient
        canonical = tuple(
            PauliString(key, coeff)
            for key, coeff in sorted(merged.items(), key=lambda kv: _sort_key(kv[0]))
            if abs(coeff) > DROP_TOL
        )
        object.__setattr__(self, "terms", canonical)

    @classmethod
    def from_terms(cls, nqubits: int, terms: Iterable[PauliString]) -> "SpinHamiltonian":
        return cls(nqubits, tuple(terms))

    def __add__(self, other: "SpinHamiltonian") -> "SpinHamiltonian":
        if not isinstance(other, SpinHamiltonian):
            return NotImplemented
        return SpinHamiltonian(max(self.nqubits, other.nqubits), self.terms + other.terms)

    def __mul__(self, scalar: float) -> "SpinHamiltonian":
        return SpinHamiltonian(
            self.nqubits, tuple(PauliString(t.factors, t.coefficient * scalar) for t in self.terms)
        )

    __rmul__ = __mul__

    def __sub__(self, other: "SpinHamiltonian") -> "SpinHamiltonian":
        return self + (-1.0) * other

    def coefficient(self, factors: Mapping[int, str]) -> float:
        key = PauliString.of(factors).factors
        for term in self.terms:
            if term.factors == key:
                return term.coefficient
        return 0.0

    def embed(self, nqubits: int, qubit_map: Mapping[int, int] | None = None) -> "SpinHamiltonian":
        """Relabel qubits through ``qubit_map`` into a larger register."""
        qubit_map = qubit_map or {q: q for q in range(self.nqubits)}
        terms = []
        for t in self.terms:
            terms.append(PauliString(tuple((qubit_map[q], a) for q, a in t.factors), t.coefficient))
        return SpinHamiltonian(nqubits, tuple(terms))

    def norm_bound(self) -> float:
        """Sum of absolute coefficients (an upper bound on the operator norm)."""
        return float(sum(abs(t.coefficient) for t in self.terms))

    def to_text(self) -> str:
        lines = [f"# nqubits {self.nqubits}"]
        lines.extend(t.to_text() for t in self.terms)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SpinHamiltonian":
        nqubits = None
        terms = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if len(tokens) == 2 and tokens[0] == "nqubits":
                    nqubits = int(tokens[1])
                continue
            terms.append(PauliString.from_text(line))
        if nqubits is None:
            nqubits = max((t.max_qubit for t in terms), default=-1) + 1
        return cls(nqubits, tuple(terms))


def _sort_key(factors: tuple[tuple[int, str], ...]):
    return (len(factors), factors)


# ---------------------------------------------------------------------------
# Complex Pauli algebra in the symplectic (x, z) representation.
#
# A key (x, z) with bit q set for qubit q denotes i^{|x&z|} X^x Z^z, which is a
# Hermitian Pauli string (Y = iXZ on qubits where both bits are set).
# ---------------------------------------------------------------------------


def _popcount(value: int) -> int:
    return bin(value).count("1")


def pauli_key(factors: Mapping[int, str] | Iterable[tuple[int, str]]) -> tuple[int, int]:
    items = factors.items() if isinstance(factors, Mapping) else factors
    x = z = 0
    for q, a in items:
        a = check_axis(a)
        if a in ("X", "Y"):
            x |= 1 << q
        if a in ("Z", "Y"):
            z |= 1 << q
    return x, z


def key_factors(key: tuple[int, int]) -> tuple[tuple[int, str], ...]:
    x, z = key
    out = []
    q = 0
    while (x >> q) or (z >> q):
        bx, bz = (x >> q) & 1, (z >> q) & 1
        if bx or bz:
            out.append((q, "Y" if bx and bz else ("X" if bx else "Z")))
        q += 1
    return tuple(out)


def multiply_keys(a: tuple[int, int], b: tuple[int, int]) -> tuple[complex, tuple[int, int]]:
    """Product of two Hermitian Pauli strings as ``phase * string``."""
    x1, z1 = a
    x2, z2 = b
    x, z = x1 ^ x2, z1 ^ z2
    exponent = _popcount(x1 & z1) + _popcount(x2 & z2) + 2 * _popcount(z1 & x2) - _popcount(x & z)
    return 1j ** (exponent % 4), (x, z)


class PauliSum:
    """A complex linear combination of Pauli strings, used for algebra only."""

    def __init__(self, terms: Mapping[tuple[int, int], complex] | None = None):
        self.terms: dict[tuple[int, int], complex] = dict(terms or {})

    @classmethod
    def identity(cls, coefficient: complex = 1.0) -> "PauliSum":
        return cls({(0, 0): complex(coefficient)})

    def __add__(self, other: "PauliSum") -> "PauliSum":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return PauliSum(out)

    def scale(self, c: complex) -> "PauliSum":
        return PauliSum({k: v * c for k, v in self.terms.items()})

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        out: dict[tuple[int, int], complex] = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                phase, k = multiply_keys(ka, kb)
                out[k] = out.get(k, 0.0) + phase * va * vb
        return PauliSum(out)

    def pruned(self, tol: float = DROP_TOL) -> "PauliSum":
        return PauliSum({k: v for k, v in self.terms.items() if abs(v) > tol})

    def to_spin_hamiltonian(self, nqubits: int, imag_tol: float = 1e-12) -> SpinHamiltonian:
        terms = []
        for key, value in self.terms.items():
            if abs(value.imag) > imag_tol * max(1.0, abs(value)):
                raise ValueError(
                    f"non-Hermitian Pauli coefficient {value!r} on {key_factors(key)}"
                )
            terms.append(PauliString(key_factors(key), value.real))
        return SpinHamiltonian(nqubits, tuple(terms))


def pauli_decompose(matrix: np.ndarray, tol: float = 1e-14) -> dict[str, float]:
    """Real Pauli-basis coefficients ``tr(P M) / 2^n`` of a Hermitian matrix.

    Keys are length-n labels over ``IXYZ`` with qubit 0 first.
    """
    matrix = np.asarray(matrix)
    dim = matrix.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim or matrix.shape != (dim, dim):
        raise ValueError(f"matrix shape {matrix.shape} is not a qubit operator")
    out = {}
    for label in itertools.product("IXYZ", repeat=n):
        p = np.array([[1.0]], dtype=complex)
        for a in label:
            p = np.kron(p, PAULI_MATRICES[a])
        # tr(P M) with P Hermitian equals the elementwise sum of conj(P) * M
        value = np.vdot(p, matrix) / dim
        if abs(value) > tol:
            out["".join(label)] = value.real
    return out


def single_qubit_field(qubit: int, vector, nqubits: int, sign: float = 1.0) -> SpinHamiltonian:
    """``sign * (v_x X + v_y Y + v_z Z)`` on one qubit."""
    terms = [
        PauliString(((qubit, axis),), sign * float(c))
        for axis, c in zip(AXES, vector)
        if c != 0.0
    ]
    return SpinHamiltonian(nqubits, tuple(terms))


def identity_term(coefficient: float) -> PauliString:
    return PauliString((), coefficient)
