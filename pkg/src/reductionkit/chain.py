"""Strength schedules and the full four-layer reduction of one Pauli coupling.

A target ``lam A (x) B`` between two endpoint qubits is rewritten in four
nested gadget layers:

1. a tunable mediator turns it into two Pauli couplings of strength ``lam_P``;
2. each of these becomes two Ising couplings ``-lam_I a a`` via a mediator;
3. each Ising coupling becomes two XY couplings ``-lam_XX (a a + p p)``;
4. each XY coupling becomes two Heisenberg couplings ``lam_H sigma . sigma``.

The result is a line of 17 qubits joined by 16 Heisenberg couplings plus
local fields.
"""

from __future__ import annotations

import json
import time
from functools import reduce
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .eigensolve import lowest_eigs
from .exceptions import InfeasibleCouplingError
from .gadgets import (
    GadgetSpec,
    calibrate_gadget,
    compile_ising_to_xx,
    compile_pauli_to_ising,
    compile_pauli_tune,
    compile_xx_to_heisenberg,
    mediator_ground_state,
    product_low_basis,
)
from .matrices import to_matrix
from .pauli import AXES, PAULI_MATRICES, PauliString, SpinHamiltonian, check_axis, pauli_decompose
from .perturbation import projected_effective_operator

SCHEDULE_FIELDS = ("lam_p", "b_p", "lam_i", "b_i", "lam_xx", "b_xx", "lam_h", "b_h", "b_e", "U", "t")
LAYER_NAMES = ("tune", "ising", "xx", "heisenberg")


@dataclass(frozen=True)
class StrengthSchedule:
    """Coupling and field strengths for every layer of the reduction.

    In ``paper`` mode the values are exact fractions of the polynomial
    schedule; ``simulable`` is false when any of them overflows a float.
    """

    mode: str
    lam_p: Fraction | float
    b_p: Fraction | float
    lam_i: Fraction | float
    b_i: Fraction | float
    lam_xx: Fraction | float
    b_xx: Fraction | float
    lam_h: Fraction | float
    b_h: Fraction | float
    b_e: Fraction | float
    U: Fraction | float
    t: Fraction | float
    ratio: float | None = None
    simulable: bool = True

    @property
    def layer_strengths(self) -> tuple:
        return (self.lam_p, self.lam_i, self.lam_xx, self.lam_h)

    def as_floats(self) -> dict[str, float]:
        if not self.simulable:
            raise OverflowError("schedule values exceed floating-point range")
        return {name: float(getattr(self, name)) for name in SCHEDULE_FIELDS}

    def to_dict(self) -> dict:
        values = {}
        for name in SCHEDULE_FIELDS:
            v = getattr(self, name)
            values[name] = str(v) if isinstance(v, Fraction) else v
        return {"mode": self.mode, "ratio": self.ratio, "simulable": self.simulable, "values": values}


def schedule_strengths(
    N: int = 1,
    q: int | Fraction = 1,
    mode: str = "paper",
    ratio: float = 20.0,
    base: float = 1.0,
) -> StrengthSchedule:
    """Polynomial (``paper``) or geometric strength schedule.

    The geometric schedule sets ``lam_k = base * ratio^k`` for the four layers
    and picks every mediator field so that the second-order coupling of one
    layer equals the bare coupling of the next.  The tunable layer uses
    ``B_P = ratio * lam_P``.
    """
    if mode == "paper":
        if N < 1 or q < 1:
            raise ValueError("paper schedule needs N >= 1 and q >= 1")
        N = Fraction(N)
        q = Fraction(q)
        lam_p = N**4 * q
        b_p = N**8 * q**2
        lam_i = N**12 * q**3
        b_i = N**20 * q**5
        lam_xx = N**28 * q**7 / 4
        b_xx = N**44 * q**11 / 8
        lam_h = N**60 * q**15 / 64
        b_h = N**92 * q**23 / 512
        b_e = N**3 * lam_h**2 * q
        U = N**8 * lam_h**3 * q**2 / 8
        t = N**4 * lam_h**2 * q / 4
        values = (lam_p, b_p, lam_i, b_i, lam_xx, b_xx, lam_h, b_h, b_e, U, t)
        simulable = True
        for v in values:
            try:
                if not np.isfinite(float(v)):
                    simulable = False
            except OverflowError:
                simulable = False
        return StrengthSchedule("paper", *values, ratio=None, simulable=simulable)
    if mode == "geometric":
        if ratio < 10:
            raise ValueError("geometric schedule needs ratio >= 10")
        r = float(ratio)
        lam_p, lam_i, lam_xx, lam_h = (base * r**k for k in range(4))
        b_p = r * lam_p
        b_i = lam_i**2 / lam_p
        b_xx = 2 * lam_xx**2 / lam_i
        b_h = 2 * lam_h**2 / lam_xx
        t = r * lam_h / 2
        U = 2 * t**2 / lam_h
        b_e = r * lam_h
        return StrengthSchedule(
            "geometric", lam_p, b_p, lam_i, b_i, lam_xx, b_xx, lam_h, b_h, b_e, U, t, ratio=r
        )
    raise ValueError(f"unknown schedule mode {mode!r}")


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


@dataclass
class _Level:
    order: list[int]
    couplings: list[tuple[int, int, str, str, float]]
    fields: dict[int, np.ndarray]
    constant: float = 0.0
    mediators: dict[int, tuple[tuple[float, float, float], str]] = field(default_factory=dict)
    next_id: int = 2

    def add_field(self, qubit: int, vec) -> None:
        self.fields.setdefault(qubit, np.zeros(3))
        self.fields[qubit] = self.fields[qubit] + np.asarray(vec, dtype=float)


def _expand(level: _Level, groups, make_spec: Callable, layer: str, compensation: str, records: list):
    """Replace every coupling group with a gadget through a fresh mediator."""
    new_couplings = []
    environment = {q: vec.copy() for q, vec in level.fields.items()}
    for (q1, q2), members in groups:
        env = {0: environment.get(q1, np.zeros(3)), 2: environment.get(q2, np.zeros(3))}
        spec: GadgetSpec = make_spec(members, env)
        predicted = spec.predicted_map
        for _, _, a1, a2, s in members:
            got = predicted.get(a1 + a2, 0.0)
            if not np.isclose(got, s, rtol=1e-9, atol=0.0) and not (s == 0 and abs(got) < 1e-300):
                raise InfeasibleCouplingError(s, got)
        m = level.next_id
        level.next_id += 1
        pos = level.order.index(q2)
        level.order.insert(pos, m)
        qmap = {0: q1, 1: m, 2: q2}
        for i, j, a, b, s in spec.couplings:
            new_couplings.append((qmap[i], qmap[j], a, b, s))
        level.add_field(m, -0.5 * spec.bfield * np.asarray(spec.field_direction))
        level.constant += 0.5 * spec.bfield
        level.mediators[m] = (tuple(spec.field_direction), layer)
        for q, vec in spec.compensation(compensation):
            level.add_field(qmap[q], vec)
        records.append({"layer": layer, "mediator": m, "outer": [q1, q2], "phi": spec.phi, "B": spec.bfield, "lambda": spec.lam})
    level.couplings = new_couplings


def _group_by_edge(couplings):
    groups: dict[tuple[int, int], list] = {}
    for c in couplings:
        groups.setdefault((c[0], c[1]), []).append(c)
    return list(groups.items())


@dataclass(frozen=True)
class CompiledChain:
    """A line of qubits with Heisenberg couplings and local fields.

    The Hamiltonian is ``sum_e J_e sigma_i . sigma_j`` over ``edges`` (or the
    explicit ``couplings`` for partial chains) ``+ sum_i c_i . sigma_i +
    constant``, where ``c_i`` are the entries of ``fields``.
    """

    axis_a: str
    axis_b: str
    lam_target: float
    nqubits: int
    roles: tuple[str, ...]
    couplings: tuple[tuple[int, int, str, str, float], ...]
    fields: tuple[tuple[float, float, float], ...]
    constant: float
    mediator_directions: tuple[tuple[int, tuple[float, float, float]], ...]
    schedule: dict
    layers: int
    predicted: tuple[tuple[str, float], ...]
    predicted_relative_error: float
    gadgets: tuple[dict, ...] = ()
    nominal_target: float | None = None
    cluster_estimate: tuple[tuple[str, float], ...] = ()

    @property
    def endpoints(self) -> tuple[int, int]:
        return 0, self.nqubits - 1

    @property
    def heisenberg_edges(self) -> list[tuple[int, int, float]]:
        """Edges whose couplings form ``J sigma . sigma``."""
        table: dict[tuple[int, int], dict[str, float]] = {}
        for i, j, a, b, s in self.couplings:
            if a == b:
                table.setdefault((i, j), {})[a] = s
        out = []
        for (i, j), d in sorted(table.items()):
            if set(d) == set(AXES) and len(set(d.values())) == 1:
                out.append((i, j, d["X"]))
        return out

    def hamiltonian(self) -> SpinHamiltonian:
        terms = [PauliString((), self.constant)]
        for i, j, a, b, s in self.couplings:
            terms.append(PauliString(((i, a), (j, b)), s))
        for q, vec in enumerate(self.fields):
            for a, c in zip(AXES, vec):
                if c != 0.0:
                    terms.append(PauliString(((q, a),), c))
        return SpinHamiltonian(self.nqubits, tuple(terms))

    def to_dict(self) -> dict:
        return {
            "axis_a": self.axis_a,
            "axis_b": self.axis_b,
            "lam_target": self.lam_target,
            "nqubits": self.nqubits,
            "roles": list(self.roles),
            "couplings": [list(c) for c in self.couplings],
            "fields": [list(v) for v in self.fields],
            "constant": self.constant,
            "mediator_directions": [[q, list(v)] for q, v in self.mediator_directions],
            "schedule": self.schedule,
            "layers": self.layers,
            "predicted": dict(self.predicted),
            "predicted_relative_error": self.predicted_relative_error,
            "gadgets": list(self.gadgets),
            "nominal_target": self.nominal_target,
            "cluster_estimate": dict(self.cluster_estimate),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CompiledChain":
        d = json.loads(text)
        return cls(
            d["axis_a"],
            d["axis_b"],
            float(d["lam_target"]),
            int(d["nqubits"]),
            tuple(d["roles"]),
            tuple((int(i), int(j), a, b, float(s)) for i, j, a, b, s in d["couplings"]),
            tuple(tuple(float(x) for x in v) for v in d["fields"]),
            float(d["constant"]),
            tuple((int(q), tuple(float(x) for x in v)) for q, v in d["mediator_directions"]),
            d["schedule"],
            int(d["layers"]),
            tuple(sorted(d["predicted"].items())),
            float(d["predicted_relative_error"]),
            tuple(d.get("gadgets", ())),
            d.get("nominal_target"),
            tuple(sorted((k, float(v)) for k, v in d.get("cluster_estimate", {}).items())),
        )


# ---------------------------------------------------------------------------
# Linked-cluster reduction
# ---------------------------------------------------------------------------

Factors = tuple  # sorted ((qubit, axis), ...)
CLUSTER_DROP = 1e-12


def _support(factors: Factors) -> frozenset:
    return frozenset(q for q, _ in factors)


def _reduce_cluster(terms: dict, mediators: dict[int, tuple]) -> dict:
    """Exact effective operator of ``terms`` with ``mediators`` in their ground states."""
    qubits = sorted(set().union(*(_support(f) for f in terms)) | set(mediators))
    idx = {q: n for n, q in enumerate(qubits)}
    h = SpinHamiltonian(
        len(qubits), tuple(PauliString(tuple((idx[q], a) for q, a in f), c) for f, c in terms.items())
    )
    mat = to_matrix(h).toarray()
    low = product_low_basis(len(qubits), {idx[m]: mediator_ground_state(d) for m, d in mediators.items()})
    heff = projected_effective_operator(mat, low)
    free = [q for q in qubits if q not in mediators]
    out: dict = {}
    for label, value in pauli_decompose(heff, tol=0.0).items():
        if abs(value) > CLUSTER_DROP:
            key = tuple((free[i], a) for i, a in enumerate(label) if a != "I")
            out[key] = out.get(key, 0.0) + value
    return out


def _add_into(target: dict, source: dict, sign: float = 1.0) -> None:
    for f, c in source.items():
        target[f] = target.get(f, 0.0) + sign * c


def _connected_subsets(adjacency: dict[int, set], max_size: int) -> list[frozenset]:
    """All connected vertex sets of at most ``max_size`` vertices, smallest first."""
    found = {frozenset([v]) for v in adjacency}
    frontier = set(found)
    for _ in range(max_size - 1):
        grown = set()
        for s in frontier:
            for v in s:
                for w in adjacency[v] - s:
                    grown.add(s | {w})
        grown -= found
        found |= grown
        frontier = grown
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def eliminate_mediators(terms: dict, mediators: dict[int, tuple], max_cluster: int = 3) -> dict:
    """Integrate out one layer of mediators by a linked-cluster expansion.

    ``terms`` maps sorted Pauli factors to real coefficients.  Terms touching
    no mediator pass through unchanged.  Every connected set of at most
    ``max_cluster`` mediators (two mediators are adjacent when their terms
    share a qubit) contributes the connected part of the exact reduction of
    its cluster: the reduction minus the connected parts of all its connected
    proper subsets.  The cluster Hamiltonian holds the terms touching only
    mediators of the set plus the mediator-free terms inside their support.
    Clusters are a few qubits, so the cost is linear in the chain length.
    """
    def med_set(f):
        return frozenset(q for q, _ in f if q in mediators)

    background = {f: c for f, c in terms.items() if not med_set(f)}
    if any(len(med_set(f)) > max_cluster for f in terms):
        raise ValueError(f"terms couple more than {max_cluster} mediators of one layer")

    def cluster(keys: frozenset) -> tuple[dict, dict]:
        own = {f: c for f, c in terms.items() if med_set(f) and med_set(f) <= keys}
        qubits = set(keys).union(*(_support(f) for f in own))
        inside = {f: c for f, c in background.items() if _support(f) <= qubits}
        return {**own, **inside}, inside

    supports = {}
    for m in mediators:
        full, _ = cluster(frozenset([m]))
        supports[m] = frozenset().union(*(_support(f) for f in full))
    adjacency = {m: {n for n in mediators if n != m and supports[m] & supports[n]} for m in mediators}
    for f in terms:
        for m in med_set(f):
            adjacency[m] |= med_set(f) - {m}

    connected: dict[frozenset, dict] = {}
    for keys in _connected_subsets(adjacency, max_cluster):
        full, inside = cluster(keys)
        eff = _reduce_cluster(full, {m: mediators[m] for m in keys})
        _add_into(eff, inside, -1.0)
        for sub, part in connected.items():
            if sub < keys:
                _add_into(eff, part, -1.0)
        connected[keys] = eff
    out = dict(background)
    for eff in connected.values():
        _add_into(out, eff)
    return {f: c for f, c in out.items() if abs(c) > CLUSTER_DROP}


def cluster_endpoint_operator(chain: "CompiledChain") -> dict[str, float]:
    """Endpoint operator of ``chain`` from layer-by-layer cluster elimination.

    The innermost layer is integrated out first.  The result is expressed as
    two-qubit Pauli labels on the endpoints, as in ``verify_chain``.
    """
    terms: dict = {}
    for t in chain.hamiltonian().terms:
        terms[t.factors] = terms.get(t.factors, 0.0) + t.coefficient
    directions = dict(chain.mediator_directions)
    for layer in reversed(LAYER_NAMES[: chain.layers]):
        layer_meds = {q: directions[q] for q, role in enumerate(chain.roles) if role == layer}
        terms = eliminate_mediators(terms, layer_meds)
    first, last = chain.endpoints
    out: dict[str, float] = {}
    for f, c in terms.items():
        axes = dict(f)
        if set(axes) - {first, last}:
            raise ValueError("cluster elimination left a term off the endpoints")
        label = axes.get(first, "I") + axes.get(last, "I")
        out[label] = out.get(label, 0.0) + c
    return out


def _correct_endpoint_fields(chain: "CompiledChain", tol: float, max_rounds: int) -> "CompiledChain":
    """Cancel the endpoint one-body terms predicted by cluster elimination."""
    first, last = chain.endpoints
    for _ in range(max_rounds):
        estimate = cluster_endpoint_operator(chain)
        fields = [np.array(v) for v in chain.fields]
        worst = 0.0
        for label, value in estimate.items():
            if label[1] == "I" and label[0] != "I":
                fields[first][AXES.index(label[0])] -= value
            elif label[0] == "I" and label[1] != "I":
                fields[last][AXES.index(label[1])] -= value
            else:
                continue
            worst = max(worst, abs(value))
        chain = replace(chain, fields=tuple(tuple(float(x) for x in v) for v in fields))
        if worst < tol:
            break
    return chain


def _build_chain(
    a: str,
    b: str,
    lam_target: float,
    nominal: float,
    schedule: StrengthSchedule,
    layers: int,
    compensation: str,
    calibrate: bool,
) -> CompiledChain:
    """Gadget layers around the coupling ``nominal A (x) B`` (see ``compile_full_chain``)."""
    s = schedule.as_floats()
    level = _Level(order=[0, 1], couplings=[(0, 1, a, b, float(nominal))], fields={})
    records: list[dict] = []

    def tune(members, env):
        (_, _, ca, cb, lam) = members[0]
        return compile_pauli_tune(ca, cb, lam, s["lam_p"], s["b_p"], check_regime=False)

    def ising(members, env):
        (_, _, ca, cb, _) = members[0]
        return compile_pauli_to_ising(ca, cb, s["lam_i"], s["b_i"], check_regime=False)

    def xx(members, env):
        (_, _, ca, _, _) = members[0]
        return compile_ising_to_xx(s["lam_xx"], s["b_xx"], axis=ca, check_regime=False)

    def heis(members, env):
        plane = {m[2] for m in members}
        f = [ax for ax in AXES if ax not in plane][0]
        return compile_xx_to_heisenberg(s["lam_h"], s["b_h"], field_axis=f, check_regime=False)

    steps = (tune, ising, xx, heis)
    if calibrate:
        steps = tuple((lambda f: (lambda members, env: calibrate_gadget(f(members, env), env)))(f) for f in steps)
    for depth in range(layers):
        groups = _group_by_edge(level.couplings) if depth == 3 else [((c[0], c[1]), [c]) for c in level.couplings]
        _expand(level, groups, steps[depth], LAYER_NAMES[depth], compensation, records)

    relabel = {q: n for n, q in enumerate(level.order)}
    nq = len(level.order)
    couplings = tuple(
        sorted((min(relabel[i], relabel[j]), max(relabel[i], relabel[j]), a_, b_, float(v)) if relabel[i] < relabel[j]
               else (relabel[j], relabel[i], b_, a_, float(v))
               for i, j, a_, b_, v in level.couplings)
    )
    fields = [(0.0, 0.0, 0.0)] * nq
    for q, vec in level.fields.items():
        fields[relabel[q]] = tuple(float(x) for x in vec)
    roles = ["endpoint"] * nq
    for q, (_, layer) in level.mediators.items():
        roles[relabel[q]] = layer
    mediators = tuple(sorted((relabel[q], d) for q, (d, _) in level.mediators.items()))
    for rec in records:
        rec["mediator"] = relabel[rec["mediator"]]
        rec["outer"] = [relabel[x] for x in rec["outer"]]
    # relative coupling errors compound by squaring through each outer layer
    lams = (s["lam_p"], s["lam_i"], s["lam_xx"], s["lam_h"])
    bs = (s["b_p"], s["b_i"], s["b_xx"], s["b_h"])
    rel = sum(2**k * 10 * lams[k] / bs[k] for k in range(layers))
    chain = CompiledChain(
        a,
        b,
        float(lam_target),
        nq,
        tuple(roles),
        couplings,
        tuple(fields),
        float(level.constant),
        mediators,
        schedule.to_dict(),
        layers,
        ((a + b, float(lam_target)),),
        float(rel),
        tuple(records),
    )
    return chain


def compile_full_chain(
    axis_a: str,
    axis_b: str,
    lam_target: float,
    schedule: StrengthSchedule,
    layers: int = 4,
    compensation: str = "derived",
    calibrate: bool = True,
    max_rounds: int = 8,
) -> CompiledChain:
    """Nest the gadget layers around ``lam_target A (x) B``.

    ``layers < 4`` stops early, which yields the partial chains used to study
    error growth layer by layer on dense-diagonalizable sizes.

    With ``calibrate`` every gadget is tuned against its exact three-qubit
    reduction in the fields already present on its outer qubits.  For nested
    chains the endpoint operator is then estimated by linked-cluster
    elimination (``cluster_endpoint_operator``); the endpoint fields are
    corrected and the coupling requested from the tunable layer is rescaled
    until the estimate equals ``lam_target A (x) B``.  Only clusters of a few
    qubits are diagonalized, never the whole chain.
    """
    if not 1 <= layers <= 4:
        raise ValueError("layers must be between 1 and 4")
    a, b = check_axis(axis_a), check_axis(axis_b)
    nominal = float(lam_target)
    chain = _build_chain(a, b, lam_target, nominal, schedule, layers, compensation, calibrate)
    if not calibrate or layers == 1:
        return chain
    label = a + b
    field_tol = 1e-9 * max(1.0, abs(lam_target))
    estimate = {}
    previous = None
    for _ in range(max_rounds):
        chain = _correct_endpoint_fields(chain, field_tol, 10)
        estimate = cluster_endpoint_operator(chain)
        got = estimate.get(label, 0.0)
        if lam_target == 0 or abs(got - lam_target) <= 1e-7 * abs(lam_target):
            break
        if got == 0 or np.sign(got) != np.sign(lam_target):
            raise InfeasibleCouplingError(lam_target, got)
        # secant on the achieved coupling; the first step assumes proportionality
        step = nominal * (lam_target / got - 1.0)
        if previous is not None and got != previous[1]:
            step = (lam_target - got) * (nominal - previous[0]) / (got - previous[1])
        previous = (nominal, got)
        nominal += step
        chain = _build_chain(a, b, lam_target, nominal, schedule, layers, compensation, calibrate)
    else:
        chain = _correct_endpoint_fields(chain, field_tol, 10)
        estimate = cluster_endpoint_operator(chain)
    kept = tuple(sorted((k, float(v)) for k, v in estimate.items() if k != "II" and abs(v) > CLUSTER_DROP))
    return replace(chain, nominal_target=nominal, cluster_estimate=kept)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def local_field_preconditioner(h: SpinHamiltonian, floor: float | None = None, chunk: int = 5):
    """Davidson filter ``(H_loc + shift - theta)^-1`` from the one-body part of ``h``.

    ``H_loc`` is a sum of single-qubit terms (plus the constant), so it is
    diagonal in a product basis and its inverse costs one small rotation per
    chunk of ``chunk`` qubits.  The shift places the lowest level of
    ``H_loc`` at the lowest Ritz value.
    """
    n = h.nqubits
    blocks = [np.zeros((2, 2), dtype=complex) for _ in range(n)]
    offset = 0.0
    for term in h.terms:
        if not term.factors:
            offset += term.coefficient
        elif len(term.factors) == 1:
            (q, a), = term.factors
            blocks[q] += term.coefficient * PAULI_MATRICES[a]
    rotations = []
    diag = np.full(1, offset)
    for q in range(n):
        w, u = np.linalg.eigh(blocks[q])
        rotations.append(u)
        diag = (diag[:, None] + w[None, :]).reshape(-1)
    scale = max(1.0, float(np.abs(diag).max()))
    floor = floor if floor is not None else 1e-8 * scale
    # rotate a few qubits at a time with one Kronecker factor per chunk
    chunks = [list(range(i, min(n, i + chunk))) for i in range(0, n, chunk)]
    factors = [reduce(np.kron, [rotations[q] for q in group]) for group in chunks]
    adjoints = [f.conj().T for f in factors]

    def rotate(x: np.ndarray, adjoint: bool) -> np.ndarray:
        cols = x.shape[1]
        t = x
        for group, f, fh in zip(chunks, factors, adjoints):
            mat = fh if adjoint else f
            t = np.matmul(mat, t.reshape(2 ** group[0], mat.shape[0], -1))
        return t.reshape(-1, cols)

    def apply(residuals: np.ndarray, theta: np.ndarray) -> np.ndarray:
        y = rotate(residuals.astype(complex), adjoint=True)
        # align the lowest one-body level with the lowest Ritz value, which
        # absorbs the large second-order shift produced by the couplings
        shift = float(theta[0]) - float(diag.min())
        denom = diag[:, None] + shift - theta[None, : y.shape[1]]
        small = np.abs(denom) < floor
        denom[small] = np.where(denom[small] >= 0, floor, -floor)
        return rotate(y / denom, adjoint=False)

    return apply


@dataclass
class ChainReport:
    nqubits: int
    eigenvalues: list[float]
    residuals: list[float]
    measured: dict[str, float]
    predicted: dict[str, float]
    strength_ratio: float
    sign_ok: bool
    degeneracy_ok: bool
    strength_ok: bool
    largest_spurious: float
    iterations: int
    seconds: float
    method: str

    @property
    def passed(self) -> bool:
        return self.sign_ok and self.degeneracy_ok and self.strength_ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def verify_chain(
    chain: CompiledChain,
    tol: float | None = None,
    seed: int = 0,
    strength_tolerance: float = 0.25,
    method: str = "auto",
) -> ChainReport:
    """Exact low spectrum of the compiled chain against the target coupling.

    The four lowest eigenvectors are projected onto the space in which every
    mediator sits in its field ground state; the resulting two-qubit operator
    on the endpoints is expanded in Pauli strings.
    """
    start = time.perf_counter()
    h = chain.hamiltonian()
    mat = to_matrix(h)
    lam = abs(chain.lam_target)
    dim = mat.shape[0]
    mediators = {q: mediator_ground_state(d) for q, d in chain.mediator_directions}
    low = product_low_basis(chain.nqubits, mediators)
    if tol is None:
        # Ritz values err by at most r^2 / delta, where delta (the distance to
        # the rest of the spectrum) is at least of order the weakest mediator
        # field; this residual resolves the low levels to 1e-4 lam
        weakest = min((g["B"] for g in chain.gadgets), default=1.0)
        tol = float(np.sqrt(1e-4 * lam * weakest)) if lam else 1e-6
        tol = min(tol, 1e-3 * max(1.0, weakest))
    if method == "auto":
        method = "dense" if dim <= 4096 else "krylov"
    kwargs = {}
    if method == "krylov":
        kwargs = dict(
            preconditioner=local_field_preconditioner(h), block_size=6, max_basis=48, max_iter=3000, start=low
        )
    spec = lowest_eigs(mat, 4, tol=tol, method=method, seed=seed, **kwargs)
    heff = projected_effective_operator(mat, low, spec.eigenvalues, spec.vectors)
    measured_all = pauli_decompose(heff, tol=0.0)
    label = chain.axis_a + chain.axis_b
    measured = float(measured_all.get(label, 0.0))
    spurious = max((abs(c) for k, c in measured_all.items() if k != label and k != "II"), default=0.0)
    e = spec.eigenvalues
    if lam == 0:
        ratio = 1.0 if abs(measured) < 1e-6 else float("inf")
        sign_ok = True
        degeneracy_ok = float(e[3] - e[0]) < 1e-6
        strength_ok = abs(measured) < 1e-6
    else:
        ratio = measured / chain.lam_target
        sign_ok = ratio > 0
        splitting = float(e[2] - e[1])
        within = max(float(e[1] - e[0]), float(e[3] - e[2]))
        degeneracy_ok = within < 0.25 * splitting and abs(splitting - 2 * lam) < strength_tolerance * 2 * lam
        strength_ok = abs(ratio - 1.0) <= strength_tolerance
    return ChainReport(
        chain.nqubits,
        [float(x) for x in e],
        [float(x) for x in spec.residuals],
        {k: float(v) for k, v in sorted(measured_all.items())},
        dict(chain.predicted),
        float(ratio),
        bool(sign_ok),
        bool(degeneracy_ok),
        bool(strength_ok),
        float(spurious),
        int(spec.iterations),
        time.perf_counter() - start,
        spec.method,
    )
