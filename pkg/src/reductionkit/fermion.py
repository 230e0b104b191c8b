"""Fermionic operators in normal-ordered canonical form.

Canonical normal order puts creation operators first in ascending mode order,
followed by annihilation operators in descending mode order, so the number
operator product ``n_0 n_1`` reads ``a+_0 a+_1 a_1 a_0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .lattice import ModeOrdering

DROP_TOL = 1e-15

Operator = tuple[int, bool]  # (mode, is_creation)


@dataclass(frozen=True)
class FermionTerm:
    operators: tuple[Operator, ...]
    coefficient: complex = 1.0

    def __post_init__(self):
        ops = tuple((int(m), bool(d)) for m, d in self.operators)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @property
    def max_mode(self) -> int:
        return max((m for m, _ in self.operators), default=-1)

    def adjoint(self) -> "FermionTerm":
        ops = tuple((m, not d) for m, d in reversed(self.operators))
        return FermionTerm(ops, self.coefficient.conjugate())

    def to_text(self) -> str:
        c = self.coefficient
        parts = [f"{c.real!r}", f"{c.imag!r}"]
        parts += [("+" if d else "-") + str(m) for m, d in self.operators]
        return " ".join(parts)

    @classmethod
    def from_text(cls, line: str) -> "FermionTerm":
        tokens = line.split()
        if len(tokens) < 2:
            raise ValueError(f"malformed fermion line {line!r}")
        coefficient = complex(float(tokens[0]), float(tokens[1]))
        ops = []
        for tok in tokens[2:]:
            if tok[0] not in "+-":
                raise ValueError(f"malformed ladder operator {tok!r}")
            ops.append((int(tok[1:]), tok[0] == "+"))
        return cls(tuple(ops), coefficient)


def _canonical_rank(op: Operator) -> tuple[int, int]:
    mode, dagger = op
    return (0, mode) if dagger else (1, -mode)


def normal_order(term: FermionTerm) -> list[FermionTerm]:
    """Rewrite a product of ladder operators as a sum of canonical terms.

    Uses ``{a_i, a+_j} = delta_ij`` and ``{a_i, a_j} = 0``; repeated operators
    of the same kind annihilate the term.
    """
    out: dict[tuple[Operator, ...], complex] = {}
    stack = [(list(term.operators), term.coefficient)]
    while stack:
        ops, coeff = stack.pop()
        if coeff == 0:
            continue
        swapped = False
        for p in range(len(ops) - 1):
            left, right = ops[p], ops[p + 1]
            if _canonical_rank(left) < _canonical_rank(right):
                continue
            if left == right:
                coeff = 0
                swapped = True
                break
            # anticommute neighbours; an annihilator passing its own creator
            # leaves a contraction term behind
            new_ops = ops[:p] + [right, left] + ops[p + 2 :]
            stack.append((new_ops, -coeff))
            if left[0] == right[0] and (not left[1]) and right[1]:
                stack.append((ops[:p] + ops[p + 2 :], coeff))
            swapped = True
            break
        if not swapped:
            key = tuple(ops)
            out[key] = out.get(key, 0.0) + coeff
    return [FermionTerm(k, v) for k, v in out.items()]


@dataclass(frozen=True)
class FermionHamiltonian:
    """A Hermitian sum of canonical normal-ordered fermionic terms.

    ``ordering`` labels each mode by ``(site, spin)`` when the Hamiltonian was
    built on a lattice; ``sector`` records an intended particle number.
    """

    nmodes: int
    terms: tuple[FermionTerm, ...] = field(default=())
    sector: int | None = None
    ordering: ModeOrdering | None = None
    check_hermitian: bool = True

    def __post_init__(self):
        merged: dict[tuple[Operator, ...], complex] = {}
        for term in self.terms:
            if term.max_mode >= self.nmodes:
                raise ValueError(f"term {term.to_text()!r} acts outside {self.nmodes} modes")
            for t in normal_order(term):
                merged[t.operators] = merged.get(t.operators, 0.0) + t.coefficient
        canonical = tuple(
            FermionTerm(k, v)
            for k, v in sorted(merged.items(), key=lambda kv: _term_sort_key(kv[0]))
            if abs(v) > DROP_TOL
        )
        object.__setattr__(self, "terms", canonical)
        if self.ordering is not None and self.ordering.nmodes != self.nmodes:
            raise ValueError("ordering size does not match the mode count")
        if self.sector is not None and not (0 <= self.sector <= self.nmodes):
            raise ValueError(f"sector {self.sector} outside 0..{self.nmodes}")
        if self.check_hermitian:
            residual = self.hermiticity_residual()
            if residual > 1e-12 * max(1.0, self.norm_bound()):
                raise ValueError(f"fermion Hamiltonian is not Hermitian (residual {residual:.3e})")

    def coefficients(self) -> dict[tuple[Operator, ...], complex]:
        return {t.operators: t.coefficient for t in self.terms}

    def hermiticity_residual(self) -> float:
        table = self.coefficients()
        adj: dict[tuple[Operator, ...], complex] = {}
        for term in self.terms:
            for t in normal_order(term.adjoint()):
                adj[t.operators] = adj.get(t.operators, 0.0) + t.coefficient
        keys = set(table) | set(adj)
        return max((abs(table.get(k, 0.0) - adj.get(k, 0.0)) for k in keys), default=0.0)

    def norm_bound(self) -> float:
        return float(sum(abs(t.coefficient) for t in self.terms))

    def conserves_number(self) -> bool:
        return all(
            sum(1 if d else -1 for _, d in t.operators) == 0 for t in self.terms
        )

    def __add__(self, other: "FermionHamiltonian") -> "FermionHamiltonian":
        if self.nmodes != other.nmodes:
            raise ValueError("mode counts differ")
        return FermionHamiltonian(
            self.nmodes, self.terms + other.terms, self.sector, self.ordering or other.ordering
        )

    def to_text(self) -> str:
        lines = [f"# nmodes {self.nmodes}"]
        if self.sector is not None:
            lines.append(f"# sector {self.sector}")
        lines.extend(t.to_text() for t in self.terms)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FermionHamiltonian":
        nmodes = None
        sector = None
        terms = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if len(tokens) == 2 and tokens[0] == "nmodes":
                    nmodes = int(tokens[1])
                elif len(tokens) == 2 and tokens[0] == "sector":
                    sector = int(tokens[1])
                continue
            terms.append(FermionTerm.from_text(line))
        if nmodes is None:
            nmodes = max((t.max_mode for t in terms), default=-1) + 1
        return cls(nmodes, tuple(terms), sector)


def _term_sort_key(ops: tuple[Operator, ...]):
    return (len(ops), tuple((0 if d else 1, m) for m, d in ops))


def one_body(nmodes: int, i: int, j: int, coefficient: complex) -> FermionTerm:
    """``coefficient * a+_i a_j``."""
    return FermionTerm(((i, True), (j, False)), coefficient)


def from_tables(h1: np.ndarray, h2: np.ndarray | None = None, sector: int | None = None) -> FermionHamiltonian:
    """Build ``sum H1_ij a+_i a_j + sum H2_ijkl a+_i a+_j a_k a_l``."""
    h1 = np.asarray(h1, dtype=complex)
    m = h1.shape[0]
    terms = [
        FermionTerm(((i, True), (j, False)), h1[i, j])
        for i in range(m)
        for j in range(m)
        if abs(h1[i, j]) > DROP_TOL
    ]
    if h2 is not None:
        h2 = np.asarray(h2, dtype=complex)
        for idx in zip(*np.nonzero(np.abs(h2) > DROP_TOL)):
            i, j, k, l = (int(v) for v in idx)
            terms.append(FermionTerm(((i, True), (j, True), (k, False), (l, False)), h2[i, j, k, l]))
    return FermionHamiltonian(m, tuple(terms), sector)


def ladder_matrices(nmodes: int) -> list[np.ndarray]:
    """Dense annihilation matrices ``a_j`` on the full Fock space.

    Occupation bit of mode j is bit ``nmodes-1-j`` of the basis index, and
    ``a_j`` carries the sign ``(-1)^(number of occupied modes below j)``.
    """
    dim = 2**nmodes
    states = np.arange(dim)
    out = []
    for j in range(nmodes):
        bit = 1 << (nmodes - 1 - j)
        mat = np.zeros((dim, dim))
        occupied = (states & bit) != 0
        below_mask = ~((1 << (nmodes - j)) - 1) & (dim - 1)
        signs = (-1.0) ** np.bitwise_count(states & below_mask)
        cols = states[occupied]
        mat[cols ^ bit, cols] = signs[occupied]
        out.append(mat)
    return out


def sector_basis(nmodes: int, nparticles: int | None) -> np.ndarray:
    """Occupation bitmasks, ascending, restricted to a particle number if given."""
    states = np.arange(2**nmodes, dtype=np.int64)
    if nparticles is None:
        return states
    return states[np.bitwise_count(states) == nparticles]


def particle_number_matrix(nmodes: int, nparticles: int | None = None) -> np.ndarray:
    basis = sector_basis(nmodes, nparticles)
    return np.diag(np.bitwise_count(basis).astype(float))
