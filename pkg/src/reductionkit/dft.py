"""Lattice density functional theory with the exact (convex) universal functional.

A spin density assigns each site a 2x2 Hermitian block
``lambda_i[s, s'] = <a+_{i s'} a_{i s}>``.  It is stored in Pauli coordinates
``r_{i a} = tr(sigma_a lambda_i)`` with ``sigma_0 = 1``; the matching
operator is ``A_{i a} = sum_{s s'} (sigma_a)_{s s'} a+_{i s} a_{i s'}`` so
that ``<A_{i a}> = r_{i a}``.  A site-local potential ``v_i`` is stored as
``x_{i a}`` with ``v_i = sum_a x_{i a} sigma_a`` and acts as
``V(x) = sum x_{i a} A_{i a}``, so that ``sum_i tr(v_i lambda_i) = x . r``.

The functional is the supremum over potentials of
``E_0(K + V(x)) - x . r``.  The primary solver maximizes the smoothed dual
``-T log tr exp(-(K + V(x)) / T) - x . r`` by Newton steps while lowering
``T``.  The smoothed dual is concave and its maximum differs from the
functional by at most ``T log dim``.  The exact dual value at the final
potential is reported; it is a certified lower bound on ``F``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as la

from .exceptions import ConvergenceError, UnboundedDualError
from .fermion import FermionHamiltonian, FermionTerm
from .lattice import ModeOrdering
from .matrices import to_matrix
from .pauli import AXES, PAULI_MATRICES

logger = logging.getLogger(__name__)

SIGMAS = (np.eye(2, dtype=complex),) + tuple(PAULI_MATRICES[a] for a in AXES)
BOUNDARY_SHRINK = 1e-6
UNBOUNDED_NORM = 1e6
RESPONSE_TEMPERATURE = 1e-4


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpinDensity:
    blocks: np.ndarray  # (nsites, 2, 2) complex
    nelectrons: int
    validate: bool = True

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=complex).reshape(-1, 2, 2)
        object.__setattr__(self, "blocks", blocks)
        if self.validate:
            problems = self.problems()
            if problems:
                raise ValueError("invalid spin density: " + "; ".join(problems))

    def problems(self, tol: float = 1e-9) -> list[str]:
        out = []
        if np.max(np.abs(self.blocks - self.blocks.conj().transpose(0, 2, 1))) > tol:
            out.append("blocks not Hermitian")
        eig = np.linalg.eigvalsh(self.blocks)
        if eig.min() < -tol or eig.max() > 1 + tol:
            out.append(f"block eigenvalues outside [0, 1] (range {eig.min():.3g}..{eig.max():.3g})")
        total = float(np.real(np.trace(self.blocks, axis1=1, axis2=2).sum()))
        if abs(total - self.nelectrons) > tol:
            out.append(f"traces sum to {total:.12g}, not {self.nelectrons}")
        return out

    @property
    def nsites(self) -> int:
        return self.blocks.shape[0]

    def coords(self) -> np.ndarray:
        """``(nsites, 4)`` real coordinates ``tr(sigma_a lambda_i)``."""
        return np.real(np.einsum("aij,nji->na", np.array(SIGMAS), self.blocks))

    @classmethod
    def from_coords(cls, coords, nelectrons: int, validate: bool = True) -> "SpinDensity":
        coords = np.asarray(coords, dtype=float).reshape(-1, 4)
        blocks = 0.5 * np.einsum("na,aij->nij", coords, np.array(SIGMAS))
        return cls(blocks, nelectrons, validate)

    @classmethod
    def uniform(cls, nsites: int, nelectrons: int) -> "SpinDensity":
        return cls(np.tile(np.eye(2) * nelectrons / (2 * nsites), (nsites, 1, 1)), nelectrons)

    def shrink(self, amount: float = BOUNDARY_SHRINK) -> "SpinDensity":
        """Move toward the uniform density so that no block eigenvalue sits on 0 or 1."""
        uniform = SpinDensity.uniform(self.nsites, self.nelectrons).blocks
        return SpinDensity((1 - amount) * self.blocks + amount * uniform, self.nelectrons, self.validate)

    def mix(self, other: "SpinDensity", weight: float = 0.5) -> "SpinDensity":
        return SpinDensity((1 - weight) * self.blocks + weight * other.blocks, self.nelectrons)

    def rotate(self, unitary) -> "SpinDensity":
        """Apply the same spin rotation ``u lambda u^H`` to every block."""
        u = np.asarray(unitary, dtype=complex)
        return SpinDensity(u @ self.blocks @ u.conj().T, self.nelectrons)

    def to_dict(self) -> dict:
        return {
            "nelectrons": self.nelectrons,
            "real": np.real(self.blocks).tolist(),
            "imag": np.imag(self.blocks).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpinDensity":
        data = json.loads(text)
        return cls(np.array(data["real"]) + 1j * np.array(data["imag"]), int(data["nelectrons"]))


def potential_coords(potentials) -> np.ndarray:
    """Pauli coordinates ``x`` of 2x2 Hermitian site potentials ``v_i = sum_a x_a sigma_a``."""
    v = np.asarray(potentials, dtype=complex).reshape(-1, 2, 2)
    return np.real(np.einsum("aij,nji->na", np.array(SIGMAS), v)) / 2


def potential_blocks(coords) -> np.ndarray:
    return np.einsum("na,aij->nij", np.asarray(coords, dtype=float).reshape(-1, 4), np.array(SIGMAS))


# ---------------------------------------------------------------------------
# Kernel in a fixed particle-number sector
# ---------------------------------------------------------------------------


class SectorKernel:
    """Dense sector matrices of the kernel and of the site density operators."""

    def __init__(self, kernel: FermionHamiltonian, nsites: int, nelectrons: int, ordering: ModeOrdering | None = None):
        ordering = ordering or kernel.ordering or ModeOrdering(nsites)
        if kernel.nmodes != 2 * nsites:
            raise ValueError("kernel must have two modes per site")
        for term in kernel.terms:
            ops = term.operators
            if len(ops) == 2 and ordering.label(ops[0][0])[0] == ordering.label(ops[1][0])[0]:
                raise ValueError("kernel holds a site-local one-body term; pass it as a potential instead")
        self.nsites = nsites
        self.nelectrons = nelectrons
        self.kernel = to_matrix(kernel, sector=nelectrons).toarray()
        self.dim = self.kernel.shape[0]
        ops = []
        for i in range(nsites):
            for sigma in SIGMAS:
                terms = [
                    FermionTerm(((ordering.index(i, s), True), (ordering.index(i, s2), False)), sigma[s, s2])
                    for s in (0, 1)
                    for s2 in (0, 1)
                    if sigma[s, s2] != 0
                ]
                ops.append(to_matrix(FermionHamiltonian(2 * nsites, tuple(terms)), sector=nelectrons).toarray())
        self.ops = np.array(ops)  # (4 nsites, dim, dim)
        self.scale = max(1.0, float(np.max(np.abs(la.eigvalsh(self.kernel)))) if self.dim else 1.0)

    def hamiltonian(self, x: np.ndarray) -> np.ndarray:
        return self.kernel + np.tensordot(x.ravel(), self.ops, axes=1)

    def density(self, state_or_rho: np.ndarray) -> np.ndarray:
        """Pauli coordinates of a state vector or a density matrix."""
        m = state_or_rho
        if m.ndim == 1:
            vals = np.einsum("i,kij,j->k", m.conj(), self.ops, m)
        else:
            vals = np.einsum("kij,ji->k", self.ops, m)
        return np.real(vals).reshape(self.nsites, 4)

    def ground(self, x: np.ndarray):
        e, u = la.eigh(self.hamiltonian(x))
        return e, u

    def response(self, x: np.ndarray, temperature: float) -> np.ndarray:
        """Static density response ``-d<A>/dx`` at temperature ``temperature`` (positive semidefinite)."""
        e, u = self.ground(x)
        p, _ = _thermal(e, temperature)
        return -_hessian(self, e, u, p, temperature)


@dataclass(frozen=True)
class FunctionalResult:
    value: float
    certificate: np.ndarray
    gap: float
    method: str
    iterations: int
    temperature: float = 0.0
    upper: float | None = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "certificate": np.asarray(self.certificate).real.tolist() if self.method != "primal-oracle" else None,
            "gap": self.gap,
            "method": self.method,
            "iterations": self.iterations,
            "temperature": self.temperature,
            "upper": self.upper,
        }


def _thermal(e: np.ndarray, temperature: float):
    shifted = -(e - e[0]) / temperature
    w = np.exp(shifted)
    z = w.sum()
    return w / z, e[0] - temperature * math.log(z)


def _hessian(sk: SectorKernel, e, u, p, temperature: float) -> np.ndarray:
    """Second derivative of ``-T log Z`` in the potential coordinates (negative semidefinite)."""
    a = np.einsum("ji,kjl,lm->kim", u.conj(), sk.ops, u)  # operators in the eigenbasis
    de = e[:, None] - e[None, :]
    dp = p[:, None] - p[None, :]
    close = np.abs(de) < 1e-12 * sk.scale
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(close, -(p[:, None] + p[None, :]) / (2 * temperature), dp / np.where(close, 1.0, de))
    mean = np.real(np.einsum("kii,i->k", a, p))
    hess = np.real(np.einsum("kij,ij,lji->kl", a, d, a)) + np.outer(mean, mean) / temperature
    return 0.5 * (hess + hess.T)


def _smoothed_dual(sk: SectorKernel, target: np.ndarray, x0: np.ndarray, temperatures, tol: float, max_newton: int):
    x = x0.copy()
    iterations = 0
    n = x.size
    for temp in temperatures:
        for _ in range(max_newton):
            iterations += 1
            e, u = sk.ground(x)
            p, phi = _thermal(e, temp)
            mean = np.real(np.einsum("ji,kjl,li,i->k", u.conj(), sk.ops, u, p))
            grad = mean - target.ravel()
            value = phi - x.ravel() @ target.ravel()
            if np.linalg.norm(grad) < tol:
                break
            hess = _hessian(sk, e, u, p, temp)
            reg = 1e-12 * max(1.0, np.max(np.abs(hess)))
            step = np.linalg.lstsq(-hess + reg * np.eye(n), grad, rcond=1e-13)[0]
            # a non-ascent step means the Hessian solve has lost accuracy; the
            # decrement itself scales with T and is no convergence measure
            if grad @ step <= 0:
                break
            t = 1.0
            gnorm = np.linalg.norm(grad)
            while t > 1e-12:
                trial = x + t * step.reshape(x.shape)
                et, ut = sk.ground(trial)
                pt, phi_t = _thermal(et, temp)
                if phi_t - trial.ravel() @ target.ravel() >= value + 1e-4 * t * (grad @ step):
                    break
                # near the maximum the value change drowns in rounding; the gradient does not
                trial_grad = np.real(np.einsum("ji,kjl,li,i->k", ut.conj(), sk.ops, ut, pt)) - target.ravel()
                if np.linalg.norm(trial_grad) < 0.5 * gnorm:
                    break
                t *= 0.5
            else:
                break
            x = trial
            if np.linalg.norm(x) > UNBOUNDED_NORM * sk.scale:
                raise UnboundedDualError("dual potential diverges; density is not representable", x / np.linalg.norm(x))
    return x, iterations


def _certified(sk: SectorKernel, target: np.ndarray, x: np.ndarray, temperature: float):
    """Exact dual value at ``x`` and a first-order gap estimate."""
    e, u = sk.ground(x)
    lower = float(e[0] - x.ravel() @ target.ravel())
    p, _ = _thermal(e, max(temperature, 1e-300))
    rho_t = np.real(np.einsum("ji,kjl,li,i->k", u.conj(), sk.ops, u, p))
    energy_t = float(p @ e)
    kinetic_t = energy_t - x.ravel() @ rho_t
    upper = kinetic_t + abs(x.ravel() @ (rho_t - target.ravel()))
    return lower, max(0.0, upper - lower)


def _supergradient(sk: SectorKernel, target: np.ndarray, x0: np.ndarray, step: float, max_iter: int, tol: float):
    x = x0.copy()
    best, best_x = -np.inf, x.copy()
    for k in range(1, max_iter + 1):
        e, u = sk.ground(x)
        # average over the degenerate ground space: a valid supergradient
        deg = np.abs(e - e[0]) < 1e-10 * sk.scale
        mean = np.mean([sk.density(u[:, j]).ravel() for j in np.nonzero(deg)[0]], axis=0)
        value = e[0] - x.ravel() @ target.ravel()
        if value > best:
            best, best_x = value, x.copy()
        g = mean - target.ravel()
        if np.linalg.norm(g) < tol:
            break
        x = x + step / math.sqrt(k) * g.reshape(x.shape)
        if np.linalg.norm(x) > UNBOUNDED_NORM * sk.scale:
            raise UnboundedDualError("dual potential diverges; density is not representable", x / np.linalg.norm(x))
    return best_x, k


def _check_trace(density: SpinDensity):
    total = float(np.real(np.trace(density.blocks, axis1=1, axis2=2).sum()))
    if abs(total - density.nelectrons) > 1e-9:
        direction = np.zeros((density.nsites, 4))
        direction[:, 0] = math.copysign(1.0, density.nelectrons - total)
        raise UnboundedDualError(
            f"density holds {total:.12g} electrons in the {density.nelectrons}-electron sector", direction.ravel()
        )


def _primal_oracle(sk: SectorKernel, target: np.ndarray, tol: float, max_outer: int = 60, max_inner: int = 400):
    """Augmented Lagrangian over density matrices with projected accelerated gradient steps."""
    d = sk.dim
    ops = sk.ops
    m = ops.shape[0]
    mu = 10.0 * sk.scale
    y = np.zeros(m)
    omega = np.eye(d, dtype=complex) / d
    op_norm = float(sum(np.linalg.norm(o, 2) ** 2 for o in ops))
    iterations = 0
    for _ in range(max_outer):
        lip = np.linalg.norm(sk.kernel, 2) + mu * op_norm
        z, prev, t = omega.copy(), omega.copy(), 1.0
        for _ in range(max_inner):
            iterations += 1
            c = np.real(np.einsum("kij,ji->k", ops, z)) - target.ravel()
            grad = sk.kernel - np.tensordot(y - mu * c, ops, axes=1)
            new = project_spectraplex(z - grad / lip)
            t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
            z = new + (t - 1) / t_next * (new - prev)
            if np.max(np.abs(new - prev)) < 1e-13:
                prev = new
                break
            prev, t = new, t_next
        omega = prev
        c = np.real(np.einsum("kij,ji->k", ops, omega)) - target.ravel()
        y = y - mu * c
        if np.max(np.abs(c)) < tol:
            break
    c = np.real(np.einsum("kij,ji->k", ops, omega)) - target.ravel()
    value = float(np.real(np.trace(sk.kernel @ omega)))
    return value, omega, float(np.max(np.abs(c))) * max(1.0, float(np.linalg.norm(y))), iterations


def project_simplex(values: np.ndarray, total: float = 1.0, cap: float | None = None) -> np.ndarray:
    """Euclidean projection onto ``{0 <= w_i <= cap, sum w = total}`` by bisection on the shift."""
    values = np.asarray(values, dtype=float)
    upper = np.inf if cap is None else cap
    if cap is not None and total > cap * values.size + 1e-12:
        raise ValueError("capped simplex is empty")

    def mass(shift):
        return np.clip(values - shift, 0.0, upper).sum() - total

    lo, hi = values.min() - total - (upper if np.isfinite(upper) else 0) - 1, values.max() + 1
    for _ in range(200):
        mid = (lo + hi) / 2
        if mass(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    return np.clip(values - (lo + hi) / 2, 0.0, upper)


def project_spectraplex(matrix: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite unit-trace matrix."""
    h = 0.5 * (matrix + matrix.conj().T)
    w, v = la.eigh(h)
    w = project_simplex(w, 1.0)
    return (v * w) @ v.conj().T


def universal_functional(
    density: SpinDensity,
    kernel: FermionHamiltonian | SectorKernel,
    method: str = "dual",
    tol: float = 1e-9,
    start: np.ndarray | None = None,
    shrink: float = BOUNDARY_SHRINK,
    step: float = 1.0,
    max_iter: int = 20000,
) -> FunctionalResult:
    """``F[rho]`` by the smoothed dual (``dual``), plain supergradient ascent or the primal oracle."""
    _check_trace(density)
    if density.problems():
        # outside the box the dual grows linearly along the violated eigenvector
        raise UnboundedDualError("density violates the block constraints: " + "; ".join(density.problems()), density.coords().ravel())
    sk = kernel if isinstance(kernel, SectorKernel) else SectorKernel(kernel, density.nsites, density.nelectrons)
    if sk.dim == 0:
        raise ValueError("empty particle-number sector")
    # mix toward the uniform density only when the target touches the box boundary
    rho = density.shrink(shrink) if shrink > 0 and _box_slack(density.coords()) < shrink else density
    target = rho.coords()
    x0 = np.zeros_like(target) if start is None else np.array(start, dtype=float).reshape(target.shape)
    if method == "dual":
        temps = sk.scale * 10.0 ** -np.arange(0, 13)
        x, iters = _smoothed_dual(sk, target, x0, temps, tol * 1e-2, 60)
        lower, gap = _certified(sk, target, x, temps[-1])
        return FunctionalResult(lower, x, gap, method, iters, float(temps[-1]))
    if method == "supergradient":
        x, iters = _supergradient(sk, target, x0, step, max_iter, tol)
        lower, gap = _certified(sk, target, x, 1e-12 * sk.scale)
        return FunctionalResult(lower, x, gap, method, iters)
    if method == "primal-oracle":
        value, omega, gap, iters = _primal_oracle(sk, target, 1e-8)
        return FunctionalResult(value, omega, gap, method, iters, upper=value)
    raise ValueError(f"unknown functional method {method!r}")


# ---------------------------------------------------------------------------
# Ground-energy minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DFTResult:
    energy: float
    density: SpinDensity
    iterations: int
    gradient_norm: float

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "density": self.density.to_dict(),
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
        }


def project_density(coords: np.ndarray, nelectrons: int, floor: float = BOUNDARY_SHRINK) -> np.ndarray:
    """Project Pauli coordinates onto blocks with eigenvalues in ``[floor, 1 - floor]`` and total trace ``N``.

    A block ``(n + m . sigma) / 2`` has eigenvalues ``(n +- |m|) / 2``; the
    projection acts on all block eigenvalues jointly (a capped simplex) and
    keeps each block's eigenvectors.
    """
    coords = coords.reshape(-1, 4)
    n, m = coords[:, 0], coords[:, 1:]
    norm = np.linalg.norm(m, axis=1)
    eig = np.concatenate([(n + norm) / 2, (n - norm) / 2])
    lo = floor
    shifted = project_simplex(eig - lo, nelectrons - lo * eig.size, cap=1 - 2 * lo) + lo
    hi_e, lo_e = shifted[: len(n)], shifted[len(n) :]
    unit = np.where(norm[:, None] > 0, m / np.where(norm > 0, norm, 1.0)[:, None], 0.0)
    out = np.empty_like(coords)
    out[:, 0] = hi_e + lo_e
    out[:, 1:] = unit * ((hi_e - lo_e)[:, None])
    return out


FRACTION_TO_BOUNDARY = 0.9
SMOOTHED_RESIDUAL = 1e-8
FINAL_TEMPERATURE = 1e-6


def _box_slack(coords: np.ndarray) -> float:
    """Smallest distance of a block eigenvalue from 0 or 1 (negative outside the box)."""
    n = coords[:, 0]
    m = np.linalg.norm(coords[:, 1:], axis=1)
    low, high = (n - m) / 2, (n + m) / 2
    return float(min(low.min(), (1 - high).min()))


def max_box_step(coords: np.ndarray, direction: np.ndarray, limit: float = 1e6) -> float:
    """Largest ``a <= limit`` keeping ``coords + a direction`` in the density box (bisection)."""
    if _box_slack(coords + limit * direction) >= 0:
        return limit
    lo, hi = 0.0, limit
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _box_slack(coords + mid * direction) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def _smoothed_functional(sk: SectorKernel, target: np.ndarray, x0: np.ndarray, temperature: float):
    """``F_T[rho] = max_x (-T log Z(x) - x . rho)`` and its maximizer."""
    x, _ = _smoothed_dual(sk, target, x0, [temperature], 1e-13 * sk.scale, 200)
    e, u = sk.ground(x)
    p, phi = _thermal(e, temperature)
    residual = np.real(np.einsum("ji,kjl,li,i->k", u.conj(), sk.ops, u, p)) - target.ravel()
    if np.linalg.norm(residual) > SMOOTHED_RESIDUAL:
        # an unconverged dual underestimates F_T; refuse it rather than let the descent exploit it
        raise ConvergenceError("smoothed dual did not reproduce the density", float(np.linalg.norm(residual)))
    return float(phi - x.ravel() @ target.ravel()), x


def _block_barrier(coords: np.ndarray, mu: float):
    """``-mu sum_i [log det(lambda_i) + log det(1 - lambda_i)]`` with gradient and Hessian.

    With ``lambda = (n + m . sigma) / 2`` the determinants are quadratic
    forms: ``4 det(lambda) = r^T J r`` and ``4 det(1 - lambda) = (e - r)^T J (e - r)``
    with ``J = diag(1, -1, -1, -1)`` and ``e = (2, 0, 0, 0)``.
    """
    coords = coords.reshape(-1, 4)
    jm = np.diag([1.0, -1.0, -1.0, -1.0])
    e = np.array([2.0, 0.0, 0.0, 0.0])
    value = 0.0
    grad = np.zeros_like(coords)
    hess = np.zeros((coords.size, coords.size))
    for i, r in enumerate(coords):
        block = slice(4 * i, 4 * i + 4)
        for w, sign in ((r, 1.0), (e - r, -1.0)):
            jw = jm @ w
            q = float(w @ jw)
            if q <= 0 or w[0] <= 0:
                return np.inf, grad, hess
            value -= mu * math.log(q)
            grad[i] -= mu * sign * 2 * jw / q
            hess[block, block] -= mu * (2 * jm / q - 4 * np.outer(jw, jw) / q**2)
    return value, grad, hess


def _descend(sk: SectorKernel, x_ext: np.ndarray, rho: np.ndarray, temps, final_t: float, stage_steps: int, barrier: bool):
    """Newton descent on ``x . r + F_T[r]`` (plus the block barrier if asked) through the temperatures."""
    cert = np.zeros_like(x_ext)
    iterations = 0
    gnorm = np.inf
    eye = np.eye(x_ext.size)
    nsites = x_ext.shape[0]

    for stage, temp in enumerate(temps):
        mu = temp / (4 * nsites) if barrier else 0.0
        # barrier stages only need to be solved to their own bias (about T)
        stage_tol = 1e-3 * final_t if not barrier or stage == len(temps) - 1 else 1e-2 * temp

        def objective(r, warm):
            if barrier:
                penalty, bgrad, bhess = _block_barrier(r, mu)
            else:
                penalty, bgrad, bhess = 0.0, np.zeros_like(r), np.zeros((r.size, r.size))
            if not np.isfinite(penalty):
                return np.inf, warm, bgrad, bhess
            try:
                value, x = _smoothed_functional(sk, r, warm, temp)
            except (UnboundedDualError, ConvergenceError):
                return np.inf, warm, bgrad, bhess
            return float(np.sum(x_ext * r)) + value + penalty, x, bgrad, bhess

        value, cert, bgrad, bhess = objective(rho, cert)
        if not np.isfinite(value):
            raise ConvergenceError(f"smoothed functional unavailable at the start of T = {temp:.3g}", np.inf)
        for _ in range(stage_steps):
            iterations += 1
            grad = x_ext - cert + bgrad
            grad[:, 0] -= grad[:, 0].mean()
            response = sk.response(cert, temp)
            direction = -np.linalg.solve(eye + response @ bhess, response @ grad.ravel()).reshape(grad.shape)
            # the particle number is fixed: keep sum_i n_i constant
            direction[:, 0] -= direction[:, 0].mean()
            slope = float(np.sum(grad * direction))
            if slope >= 0:
                direction, slope = -grad, -float(np.sum(grad * grad))
            gnorm = float(np.linalg.norm(grad))
            # Newton decrement: predicted decrease of a full step
            if -slope < stage_tol:
                break
            t = min(1.0, FRACTION_TO_BOUNDARY * max_box_step(rho, direction))
            for _ in range(60):
                trial = rho + t * direction
                new_value, new_cert, new_bgrad, new_bhess = objective(trial, cert)
                if new_value <= value + 1e-4 * t * slope:
                    break
                t *= 0.5
            else:
                # no measurable decrease left at this stage
                break
            logger.debug("dft T=%.1e step %d: value %.15g, decrement %.3e", temp, iterations, new_value, -slope)
            improvement = value - new_value
            rho, value, cert, bgrad, bhess = trial, new_value, new_cert, new_bgrad, new_bhess
            if improvement < (1e-2 if barrier else 1.0) * stage_tol:
                break
        else:
            # near the kinks of F the smoothed problem zigzags; the stage bias
            # is about T anyway, so hand over to the next temperature
            logger.debug("dft T=%.1e: stage cap of %d steps reached", temp, stage_steps)
        logger.debug("dft T=%.1e done: smoothed %.15g, slack %.3e, iterations %d", temp, value, _box_slack(rho), iterations)
    return rho, cert, iterations, gnorm


def dft_ground_energy(
    potentials,
    kernel: FermionHamiltonian,
    nelectrons: int,
    tol: float = 1e-8,
    stage_steps: int = 30,
    start: SpinDensity | None = None,
    boundary_slack: float = 1e-4,
) -> DFTResult:
    """Minimize ``tr(V rho) + F[rho]`` over densities.

    ``F`` itself has kinks wherever several potentials share a ground-state
    density, so the descent runs on the thermally smoothed functional
    ``F_T`` (differentiable, with gradient ``-x*_T``) and lowers ``T``
    geometrically until ``T log(dim)`` drops below ``tol``.  Each stage
    takes Newton steps: the Hessian of ``F_T`` is the inverse static
    response ``R``, so the step is ``-R (V - x*_T)``, stopped short of the
    box boundary and passed through an Armijo test.

    Minimizers often sit on the curved boundary of the density box
    (rank-deficient blocks), where straight steps stall.  When the plain
    descent ends within ``boundary_slack`` of that boundary it is rerun
    along a central path: a log-det barrier of weight ``mu = T / (4 nsites)``
    keeps every block strictly inside ``0 < lambda < 1`` and the step
    solves ``(1 + R H_b) d = -R g``.  Either way the returned energy is the
    exact ``tr(V rho) + F[rho]`` at the final density, a variational upper
    bound, and the lower of the two candidates is kept.
    """
    x_ext = potential_coords(potentials)
    nsites = x_ext.shape[0]
    sk = SectorKernel(kernel, nsites, nelectrons)
    rho0 = start.coords() if start is not None else SpinDensity.uniform(nsites, nelectrons).coords()
    rho0 = project_density(rho0, nelectrons, floor=1e-3)
    final_t = max(tol / max(1.0, math.log(sk.dim)), FINAL_TEMPERATURE * sk.scale)
    temps = [sk.scale * 10.0**-k for k in range(1, 40) if sk.scale * 10.0**-k >= final_t * 0.999]
    temps = temps + [final_t] if not temps or temps[-1] > final_t * 1.001 else temps

    def finish(rho, cert, iterations, gnorm):
        density = SpinDensity.from_coords(rho, nelectrons, validate=False)
        exact = universal_functional(density, sk, shrink=0.0, start=cert)
        return DFTResult(float(np.sum(x_ext * rho)) + exact.value, density, iterations, gnorm)

    plain = _descend(sk, x_ext, rho0, temps, final_t, stage_steps, barrier=False)
    best = finish(*plain)
    if _box_slack(plain[0]) < boundary_slack:
        logger.debug("dft: plain descent ended on the box boundary, following the central path")
        central = finish(*_descend(sk, x_ext, rho0, temps, final_t, stage_steps, barrier=True))
        iterations = best.iterations + central.iterations
        best = min(best, central, key=lambda r: r.energy)
        best = DFTResult(best.energy, best.density, iterations, best.gradient_norm)
    return best


def ground_state_density(hamiltonian: np.ndarray, sk: SectorKernel, nelectrons: int) -> SpinDensity:
    """Density of the ground state (averaged over a degenerate ground space)."""
    e, u = la.eigh(hamiltonian)
    deg = np.abs(e - e[0]) < 1e-10 * max(1.0, abs(e[0]))
    coords = np.mean([sk.density(u[:, j]) for j in np.nonzero(deg)[0]], axis=0)
    return SpinDensity.from_coords(coords, nelectrons)


@dataclass(frozen=True)
class ConvexityReport:
    f_first: float
    f_second: float
    f_mid: float
    slack: float
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.slack >= -self.tolerance

    def to_dict(self) -> dict:
        return {
            "f_first": self.f_first,
            "f_second": self.f_second,
            "f_mid": self.f_mid,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "holds": self.holds,
        }


def convexity_probe(first: SpinDensity, second: SpinDensity, kernel, tolerance: float = 1e-6) -> ConvexityReport:
    """Midpoint check ``F[(r1 + r2) / 2] <= (F[r1] + F[r2]) / 2 + tolerance``."""
    sk = kernel if isinstance(kernel, SectorKernel) else SectorKernel(kernel, first.nsites, first.nelectrons)
    f1 = universal_functional(first, sk).value
    f2 = universal_functional(second, sk).value
    fm = universal_functional(first.mix(second), sk).value
    return ConvexityReport(f1, f2, fm, (f1 + f2) / 2 - fm, tolerance)
