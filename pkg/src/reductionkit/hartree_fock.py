"""Hartree-Fock energies and optimization, and the Ising spin-glass embedding.

The Hamiltonian is ``sum H1_ij a+_i a_j + sum H2_ijkl a+_i a+_j a_k a_l``
with the operator order taken literally.  A determinant
``b+_N ... b+_1 |0>`` with ``b_n = sum_j u_nj a_j`` is represented by the
projector ``P = u^H u``, whose entries are ``P_ij = <a+_j a_i>``.  Wick's
theorem gives

    <a+_i a_j> = P_ji,
    <a+_i a+_j a_k a_l> = P_li P_kj - P_ki P_lj.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as la
from scipy.optimize import minimize

from .fermion import FermionHamiltonian, FermionTerm

PROJECTOR_TOL = 1e-10
BRUTEFORCE_CAP = 24


# ---------------------------------------------------------------------------
# States and energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HFState:
    projector: np.ndarray
    nelectrons: int

    def __post_init__(self):
        p = np.asarray(self.projector, dtype=complex)
        object.__setattr__(self, "projector", p)
        problems = projector_problems(p, self.nelectrons)
        if problems:
            raise ValueError("invalid HF state: " + "; ".join(problems))

    @classmethod
    def from_orbitals(cls, u) -> "HFState":
        """State from an ``N x M`` matrix of orthonormal rows ``u``."""
        u = np.asarray(u, dtype=complex)
        return cls(u.conj().T @ u, u.shape[0])

    @classmethod
    def from_occupations(cls, occupied, nmodes: int) -> "HFState":
        p = np.zeros((nmodes, nmodes), dtype=complex)
        for m in occupied:
            p[m, m] = 1.0
        return cls(p, len(set(occupied)))

    @property
    def nmodes(self) -> int:
        return self.projector.shape[0]

    def occupations(self) -> np.ndarray:
        return np.real(np.diag(self.projector))

    def to_dict(self) -> dict:
        return {
            "nelectrons": self.nelectrons,
            "real": np.real(self.projector).tolist(),
            "imag": np.imag(self.projector).tolist(),
        }


def projector_problems(p: np.ndarray, nelectrons: int, tol: float = PROJECTOR_TOL) -> list[str]:
    out = []
    if np.max(np.abs(p - p.conj().T), initial=0.0) > tol:
        out.append("P is not Hermitian")
    if np.max(np.abs(p @ p - p), initial=0.0) > tol:
        out.append("P is not idempotent")
    if abs(np.real(np.trace(p)) - nelectrons) > tol:
        out.append(f"trace(P) = {np.real(np.trace(p)):.12g}, expected {nelectrons}")
    return out


def _tables(h1, h2):
    h1 = np.asarray(h1, dtype=complex)
    m = h1.shape[0]
    h2 = np.zeros((m, m, m, m), dtype=complex) if h2 is None else np.asarray(h2, dtype=complex)
    return h1, h2


def hf_energy(h1, h2, state: HFState | np.ndarray) -> float:
    """``<Psi(P)| H |Psi(P)>`` by Wick contraction with both pairings."""
    p = state.projector if isinstance(state, HFState) else np.asarray(state, dtype=complex)
    h1, h2 = _tables(h1, h2)
    one = np.einsum("ij,ji->", h1, p)
    two = np.einsum("ijkl,li,kj->", h2, p, p) - np.einsum("ijkl,ki,lj->", h2, p, p)
    return float(np.real(one + two))


def fock_matrix(h1, h2, p: np.ndarray) -> np.ndarray:
    """Hermitian ``F`` with ``dE = tr(F dP)`` for Hermitian variations ``dP``."""
    h1, h2 = _tables(h1, h2)
    g = h1.T.copy()
    g += np.einsum("ijkl,kj->li", h2, p)
    g += np.einsum("ijkl,li->kj", h2, p)
    g -= np.einsum("ijkl,lj->ki", h2, p)
    g -= np.einsum("ijkl,ki->lj", h2, p)
    f = g.T
    return 0.5 * (f + f.conj().T)


def tables_from_fermion(h: FermionHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """``(H1, H2)`` tables of a Hamiltonian made of ``a+ a`` and ``a+ a+ a a`` terms."""
    m = h.nmodes
    h1 = np.zeros((m, m), dtype=complex)
    h2 = np.zeros((m, m, m, m), dtype=complex)
    for term in h.terms:
        ops = term.operators
        daggers = [d for _, d in ops]
        modes = [q for q, _ in ops]
        if daggers == [True, False]:
            h1[modes[0], modes[1]] += term.coefficient
        elif daggers == [True, True, False, False]:
            h2[tuple(modes)] += term.coefficient
        elif ops:
            raise ValueError(f"term {term.to_text()!r} is not of the form a+a or a+a+aa")
    return h1, h2


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------


def _round_projector(y: np.ndarray, nelectrons: int) -> np.ndarray:
    """Nearest rank-N projector: span of the N leading eigenvectors."""
    w, v = la.eigh(0.5 * (y + y.conj().T))
    top = v[:, -nelectrons:] if nelectrons else v[:, :0]
    return top @ top.conj().T


def random_projector(nmodes: int, nelectrons: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    a = rng.normal(size=(nmodes, nelectrons))
    if not real:
        a = a + 1j * rng.normal(size=(nmodes, nelectrons))
    q, _ = np.linalg.qr(a)
    return q @ q.conj().T


def hf_descent(h1, h2, p0: np.ndarray, nelectrons: int, tol: float = 1e-10, max_iter: int = 2000):
    """Monotone projected descent on rank-N projectors.

    Each step rounds ``P - t F`` back to a rank-N projector by keeping its N
    leading eigenvectors.  Small ``t`` is a gradient step along the tangent
    part ``P F (1 - P) + (1 - P) F P`` of the Fock matrix; large ``t`` is a
    level-shifted Roothaan step.  The step length doubles after every
    accepted move and halves until the energy decreases, so the energy is
    monotone.  Stops when the tangent gradient norm drops below ``tol``.
    """
    h1, h2 = _tables(h1, h2)
    p = p0
    energy = hf_energy(h1, h2, p)
    eye = np.eye(p.shape[0])
    scale = max(1.0, np.linalg.norm(h1, 2) + 4 * np.max(np.abs(h2)) * p.shape[0])
    step, max_step = 1.0 / scale, 1e6 / scale
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = fock_matrix(h1, h2, p)
        q = eye - p
        gnorm = float(np.linalg.norm(p @ f @ q + q @ f @ p))
        if gnorm < tol:
            break
        t = step
        while True:
            trial = _round_projector(p - t * f, nelectrons)
            e_trial = hf_energy(h1, h2, trial)
            if e_trial < energy or t < 1e-16:
                break
            t *= 0.5
        if e_trial >= energy:
            break
        p, energy = trial, e_trial
        step = min(2.0 * t, max_step)
    return energy, p, it, gnorm


class HFProblem:
    """Fast energies and Fock matrices for fixed tables.

    The two-body energy ``sum H2_ijkl (P_li P_kj - P_ki P_lj)`` is the
    quadratic form ``x^T W x`` in ``x_(il) = P_li`` with ``W`` built once
    from the antisymmetrized table.
    """

    def __init__(self, h1, h2):
        self.h1, h2 = _tables(h1, h2)
        m = self.h1.shape[0]
        self.nmodes = m
        anti = h2 - h2.transpose(0, 1, 3, 2)
        self.w = anti.transpose(0, 3, 1, 2).reshape(m * m, m * m)
        self.w_sym = self.w + self.w.T
        self.real = not (np.any(np.imag(self.h1)) or np.any(np.imag(self.w)))
        if self.real:
            self.h1, self.w, self.w_sym = np.real(self.h1), np.real(self.w), np.real(self.w_sym)

    def energy(self, p: np.ndarray) -> float:
        x = p.T.ravel()
        return float(np.real(np.sum(self.h1 * p.T) + x @ self.w @ x))

    def fock(self, p: np.ndarray) -> np.ndarray:
        f = self.h1 + (self.w_sym @ p.T.ravel()).reshape(self.nmodes, self.nmodes)
        return 0.5 * (f + f.conj().T)


def _lowdin(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s_inv = np.linalg.inv(u.conj().T @ u)
    return u @ s_inv @ u.conj().T, s_inv


def hf_lbfgs(problem: HFProblem, u0: np.ndarray, tol: float = 1e-10, max_iter: int = 5000):
    """Quasi-Newton descent over unnormalized orbitals ``U`` (``M x N``).

    The state is ``P = U (U^H U)^-1 U^H``, so every iterate is a valid
    rank-N projector.  The energy gradient is ``2 (1 - P) F U (U^H U)^-1``.
    """
    m, n = u0.shape
    complex_ = not problem.real or np.iscomplexobj(u0)

    def unpack(z):
        if complex_:
            half = z.size // 2
            return (z[:half] + 1j * z[half:]).reshape(m, n)
        return z.reshape(m, n)

    def fun(z):
        u = unpack(z)
        p, s_inv = _lowdin(u)
        grad = 2.0 * (np.eye(m) - p) @ problem.fock(p) @ u @ s_inv
        g = np.concatenate([np.real(grad).ravel(), np.imag(grad).ravel()]) if complex_ else np.real(grad).ravel()
        return problem.energy(p), g

    z0 = np.concatenate([np.real(u0).ravel(), np.imag(u0).ravel()]) if complex_ else np.real(u0).ravel()
    res = minimize(fun, z0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-16, "maxcor": 30})
    p, _ = _lowdin(unpack(res.x))
    p = 0.5 * (p + p.conj().T)
    q = np.eye(m) - p
    f = problem.fock(p)
    return problem.energy(p), p, int(res.nit), float(np.linalg.norm(p @ f @ q + q @ f @ p))


@dataclass(frozen=True)
class HFResult:
    energy: float
    state: HFState
    restarts: int
    seed: int
    distinct_minima: int
    energies: tuple[float, ...]
    method: str = "lbfgs"

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "restarts": self.restarts,
            "seed": self.seed,
            "method": self.method,
            "distinct_minima": self.distinct_minima,
            "energies": list(self.energies),
            "occupations": self.state.occupations().tolist(),
        }


def count_distinct(energies, rel: float = 1e-6) -> int:
    scale = max([1.0] + [abs(e) for e in energies])
    distinct: list[float] = []
    for e in sorted(energies):
        if not distinct or e - distinct[-1] > rel * scale:
            distinct.append(e)
    return len(distinct)


def hf_optimize(h1, h2, nelectrons: int, restarts: int = 8, seed: int = 0, real: bool | None = None,
                tol: float = 1e-10, method: str = "lbfgs") -> HFResult:
    """Best of ``restarts`` local descents from seeded random determinants.

    ``method`` is ``"lbfgs"`` (quasi-Newton over Lowdin-normalized
    orbitals) or ``"projected"`` (monotone projected descent, see
    :func:`hf_descent`).  Real tables get real starting orbitals unless
    ``real=False``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if method not in ("lbfgs", "projected"):
        raise ValueError(f"unknown HF method {method!r}")
    problem = HFProblem(h1, h2)
    m = problem.nmodes
    if not 0 < nelectrons <= m:
        raise ValueError(f"{nelectrons} electrons do not fit in {m} modes")
    use_real = problem.real if real is None else real
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(restarts):
        a = rng.normal(size=(m, nelectrons))
        if not use_real:
            a = a + 1j * rng.normal(size=(m, nelectrons))
        u0, _ = np.linalg.qr(a)
        if method == "lbfgs":
            energy, p, _, _ = hf_lbfgs(problem, u0, tol)
        else:
            energy, p, _, _ = hf_descent(problem.h1, h2, u0 @ u0.conj().T, nelectrons, tol)
        results.append((energy, p))
    energies = [e for e, _ in results]
    best = int(np.argmin(energies))
    p = results[best][1]
    p = 0.5 * (p + p.conj().T)
    return HFResult(energies[best], HFState(p, nelectrons), restarts, seed, count_distinct(energies),
                    tuple(energies), method)


# ---------------------------------------------------------------------------
# Ising spin glass
# ---------------------------------------------------------------------------


def bilayer_edges(side: int) -> list[tuple[int, int]]:
    """Nearest-neighbour edges of the open ``side x side x 2`` lattice; site ``z side^2 + y side + x``."""
    edges = []
    for z in range(2):
        for y in range(side):
            for x in range(side):
                i = z * side * side + y * side + x
                if x + 1 < side:
                    edges.append((i, i + 1))
                if y + 1 < side:
                    edges.append((i, i + side))
                if z == 0:
                    edges.append((i, i + side * side))
    return sorted(edges)


@dataclass(frozen=True)
class IsingInstance:
    side: int
    couplings: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        allowed = set(bilayer_edges(self.side))
        clean = []
        for i, j, value in self.couplings:
            i, j = (int(i), int(j)) if i < j else (int(j), int(i))
            if (i, j) not in allowed:
                raise ValueError(f"({i}, {j}) is not an edge of the {self.side}x{self.side}x2 lattice")
            if value not in (-1, 0, 1):
                raise ValueError(f"coupling {value!r} not in {{-1, 0, 1}}")
            clean.append((i, j, int(value)))
        object.__setattr__(self, "couplings", tuple(sorted(clean)))

    @property
    def nspins(self) -> int:
        return 2 * self.side * self.side

    @classmethod
    def random(cls, side: int, seed: int) -> "IsingInstance":
        rng = np.random.default_rng(seed)
        edges = bilayer_edges(side)
        values = rng.integers(-1, 2, size=len(edges))
        return cls(side, tuple((i, j, int(v)) for (i, j), v in zip(edges, values)))

    def energy(self, spins) -> float:
        s = np.asarray(spins)
        return float(sum(v * s[i] * s[j] for i, j, v in self.couplings))

    def max_degree(self) -> int:
        deg = np.zeros(self.nspins, dtype=int)
        for i, j, v in self.couplings:
            if v:
                deg[i] += 1
                deg[j] += 1
        return int(deg.max(initial=0))

    def to_text(self) -> str:
        lines = [str(self.side)] + [f"{i} {j} {v}" for i, j, v in self.couplings]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "IsingInstance":
        lines = [ln.split("#")[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ValueError("empty Ising instance")
        side = int(lines[0])
        couplings = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 3:
                raise ValueError(f"malformed edge line {ln!r}")
            couplings.append((int(parts[0]), int(parts[1]), int(parts[2])))
        return cls(side, tuple(couplings))


def default_penalty(instance: IsingInstance) -> float:
    """``10 N^2`` for ``N`` spins."""
    return 10.0 * instance.nspins**2


def embed_ising(instance: IsingInstance, penalty: float | None = None) -> FermionHamiltonian:
    """Fermionic Hamiltonian on ``2 N`` modes whose single-occupancy states encode spins.

    Spin ``i`` owns modes ``2i`` (spin up) and ``2i + 1`` (spin down).  Each
    spin carries ``penalty n_2i n_2i+1`` and each edge
    ``J sum_{p,q} (-1)^(p+q) n_{2i+p} n_{2j+q}``, which equals ``J s_i s_j``
    on singly occupied pairs.  The intended sector is ``N`` electrons.
    """
    lam = default_penalty(instance) if penalty is None else float(penalty)
    bound = 4 * instance.max_degree() * instance.nspins
    if lam <= bound:
        warnings.warn(f"penalty {lam} does not dominate the coupling bound {bound}", stacklevel=2)
    terms = []

    def nn(a, b, c):
        return FermionTerm(((a, True), (a, False), (b, True), (b, False)), c)

    for i in range(instance.nspins):
        terms.append(nn(2 * i, 2 * i + 1, lam))
    for i, j, v in instance.couplings:
        if v == 0:
            continue
        for p_, q in itertools.product((0, 1), repeat=2):
            terms.append(nn(2 * i + p_, 2 * j + q, v * (-1) ** (p_ + q)))
    return FermionHamiltonian(2 * instance.nspins, tuple(terms), instance.nspins)


@dataclass(frozen=True)
class DecodedSpins:
    spins: tuple[int, ...]
    ambiguous: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"spins": list(self.spins), "ambiguous": list(self.ambiguous)}


def decode_spins(state: HFState, instance: IsingInstance, offdiag_limit: float = 0.1) -> DecodedSpins:
    """``+1`` where mode ``2i`` is occupied, ``-1`` where mode ``2i + 1`` is.

    An occupation counts when it exceeds 1/2.  Sites with both or neither
    mode occupied, and sites whose modes carry off-diagonal coherences above
    ``offdiag_limit``, are listed as ambiguous and decoded as ``0``.
    """
    p = state.projector
    occ = np.real(np.diag(p))
    off = np.abs(p - np.diag(np.diag(p)))
    spins, ambiguous = [], []
    for i in range(instance.nspins):
        up, dn = occ[2 * i] > 0.5, occ[2 * i + 1] > 0.5
        coherent = max(off[2 * i].max(), off[2 * i + 1].max()) > offdiag_limit
        if up != dn and not coherent:
            spins.append(1 if up else -1)
        else:
            spins.append(0)
            ambiguous.append(i)
    return DecodedSpins(tuple(spins), tuple(ambiguous))


def spins_to_state(spins, nspins: int | None = None) -> HFState:
    spins = list(spins)
    occupied = [2 * i if s > 0 else 2 * i + 1 for i, s in enumerate(spins)]
    return HFState.from_occupations(occupied, 2 * len(spins))


def ising_bruteforce(instance: IsingInstance, chunk: int = 1 << 18) -> tuple[float, tuple[int, ...]]:
    """Exhaustive minimum; ties go to the lexicographically smallest configuration (-1 < +1)."""
    n = instance.nspins
    if n > BRUTEFORCE_CAP:
        raise ValueError(f"{n} spins exceed the brute-force cap {BRUTEFORCE_CAP}")
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best_e, best_idx = np.inf, -1
    total = 1 << n
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        spins = 2 * ((idx[:, None] >> shifts) & 1) - 1
        energy = np.zeros(idx.size)
        for i, j, v in instance.couplings:
            if v:
                energy += v * spins[:, i] * spins[:, j]
        k = int(np.argmin(energy))
        if energy[k] < best_e:
            best_e, best_idx = float(energy[k]), int(idx[k])
    config = tuple(int(2 * ((best_idx >> s) & 1) - 1) for s in shifts)
    return best_e, config
