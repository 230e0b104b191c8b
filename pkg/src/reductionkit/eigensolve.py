"""Lowest eigenpairs of Hermitian operators.

Small problems go to dense LAPACK.  Larger ones use a thick-restart block
Krylov method with full reorthogonalization and Rayleigh-Ritz extraction.
Without a preconditioner each expansion block is the current residual block,
which spans the same space as one block-Lanczos step.  With a preconditioner
the residuals are filtered first (block Davidson), which is how the stiff
gadget chains are solved.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .exceptions import ConvergenceError

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    vectors: np.ndarray | None
    residuals: np.ndarray
    method: str = "dense"
    seed: int | None = None
    iterations: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "eigenvalue", "residual"])
        for n, (e, r) in enumerate(zip(self.eigenvalues, self.residuals)):
            writer.writerow([n, f"{e:.12g}", f"{r:.12g}"])
        return buf.getvalue()


def as_operator(op) -> sp.csr_matrix | np.ndarray:
    if sp.issparse(op):
        return op.tocsr()
    return np.asarray(op)


def _residuals(op, values, vectors) -> np.ndarray:
    r = op @ vectors - vectors * values
    return np.linalg.norm(r, axis=0)


def _dense(op, k: int, want_vectors: bool):
    mat = op.toarray() if sp.issparse(op) else np.asarray(op)
    values, vectors = la.eigh(mat, subset_by_index=[0, k - 1])
    return values, vectors


def lowest_eigs(
    op,
    k: int = 1,
    tol: float = 1e-9,
    method: str = "auto",
    seed: int = 0,
    block_size: int | None = None,
    max_basis: int | None = None,
    max_iter: int = 5000,
    preconditioner: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    start: np.ndarray | None = None,
    return_vectors: bool = True,
) -> Spectrum:
    """The ``k`` smallest eigenpairs with residual norms at most ``tol``.

    ``method`` is ``auto`` (dense up to dimension 4096), ``dense`` or
    ``krylov``.  ``preconditioner(R, theta)`` may return filtered residual
    columns for the Krylov path.
    """
    op = as_operator(op)
    dim = op.shape[0]
    if op.shape != (dim, dim):
        raise ValueError(f"operator must be square, got {op.shape}")
    if not (1 <= k <= dim):
        raise ValueError(f"k={k} outside 1..{dim}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "krylov"
    if method == "dense":
        values, vectors = _dense(op, k, return_vectors)
        residuals = _residuals(op, values, vectors)
        if residuals.max() > tol:
            raise ConvergenceError("dense eigensolver residual above tolerance", float(residuals.max()))
        return Spectrum(values, vectors if return_vectors else None, residuals, "dense", None, 0)
    if method != "krylov":
        raise ValueError(f"unknown method {method!r}")
    values, vectors, residuals, iterations = block_krylov(
        op, k, tol, seed, block_size, max_basis, max_iter, preconditioner, start
    )
    return Spectrum(values, vectors if return_vectors else None, residuals, "krylov", seed, iterations)


def _ah_b(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a^H b`` through BLAS, without materializing ``a^H``."""
    gemm = la.blas.get_blas_funcs("gemm", (a, b))
    return gemm(1.0, a, b, trans_a=2)


def _orthonormalize(block: np.ndarray, basis: np.ndarray | None, drop_tol: float = 1e-10) -> np.ndarray:
    """Orthonormalize ``block`` against ``basis`` (two passes) and itself."""
    w = np.asfortranarray(block)
    norms0 = np.linalg.norm(w, axis=0)
    norms0[norms0 == 0] = 1.0
    has_basis = basis is not None and basis.shape[1] > 0
    if has_basis:
        for _ in range(2):
            w = w - basis @ _ah_b(basis, w)
    q, r = np.linalg.qr(w)
    keep = np.abs(np.diag(r)) > drop_tol * norms0
    q = q[:, keep]
    if has_basis and q.shape[1]:
        q = q - basis @ _ah_b(basis, np.asfortranarray(q))
        q, _ = np.linalg.qr(q)
    return q


def _restart(v: np.ndarray, av: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotate the basis onto the leading Ritz vectors and re-orthonormalize.

    Rounding makes ``V S`` drift from orthonormality, so a Cholesky QR step
    ``V S = Q R`` is applied and ``A Q = (A V S) R^-1`` follows without
    another operator application.
    """
    y = v @ s
    try:
        r = la.cholesky(_ah_b(y, y))
        rinv = la.solve_triangular(r, np.eye(r.shape[0], dtype=r.dtype))
    except la.LinAlgError:
        _, r = np.linalg.qr(y)
        rinv = la.solve_triangular(r, np.eye(r.shape[0], dtype=r.dtype))
    t = s @ rinv
    return v @ t, av @ t, t


def block_krylov(
    op,
    k: int,
    tol: float,
    seed: int = 0,
    block_size: int | None = None,
    max_basis: int | None = None,
    max_iter: int = 5000,
    preconditioner=None,
    start: np.ndarray | None = None,
):
    dim = op.shape[0]
    b = block_size or min(dim, k + 2)
    m = max_basis or min(dim, max(6 * b, 40))
    keep = max(b + k, m // 2)
    rng = np.random.default_rng(seed)
    dtype = complex if np.iscomplexobj(op.data if sp.issparse(op) else op) else float
    x0 = rng.standard_normal((dim, b))
    if dtype is complex:
        x0 = x0 + 1j * rng.standard_normal((dim, b))
    if start is not None:
        start = np.asarray(start).reshape(dim, -1)
        if np.iscomplexobj(start):
            dtype = complex
        x0 = x0.astype(dtype)
        x0[:, : start.shape[1]] = start[:, :b]
    # preallocated Fortran-ordered storage keeps column slices contiguous
    V = np.zeros((dim, m + b), dtype=dtype, order="F")
    AV = np.zeros((dim, m + b), dtype=dtype, order="F")
    q = _orthonormalize(x0.astype(dtype), None)
    j = q.shape[1]
    V[:, :j] = q
    AV[:, :j] = op @ q
    # projected matrix V^H A V, extended column block by column block
    T = np.zeros((m + b, m + b), dtype=dtype)
    T[:j, :j] = _ah_b(V[:, :j], AV[:, :j])
    best = np.inf
    for iteration in range(1, max_iter + 1):
        v, av = V[:, :j], AV[:, :j]
        t = T[:j, :j]
        t = 0.5 * (t + t.conj().T)
        theta, s = np.linalg.eigh(t)
        nb = min(b, theta.size)
        u = v @ s[:, :nb]
        au = av @ s[:, :nb]
        r = au - u * theta[:nb]
        res = np.linalg.norm(r, axis=0)
        best = min(best, float(res[:k].max()))
        if res[:k].max() <= tol:
            vals = theta[:k]
            vecs = u[:, :k]
            true_res = _residuals(op, vals, vecs)
            if true_res.max() <= tol:
                return vals, vecs, true_res, iteration
        if preconditioner is None:
            w = r
        else:
            # Olsen correction: a good preconditioner maps r back onto u, so the
            # component along M^-1 u is removed to keep the expansion new
            pr = preconditioner(r, theta[:nb])
            pu = preconditioner(u, theta[:nb])
            num = np.einsum("ij,ij->j", u.conj(), pr)
            den = np.einsum("ij,ij->j", u.conj(), pu)
            safe = np.abs(den) > 1e-300
            eps = np.where(safe, num / np.where(safe, den, 1.0), 0.0)
            w = pr - pu * eps
        # converged columns contribute nothing useful to the expansion
        active = res > 0.1 * tol
        w = w[:, active] if active.any() else w
        if j + w.shape[1] > m:
            nk = min(keep, theta.size)
            new_v, new_av, x = _restart(v, av, s[:, :nk])
            T[:nk, :nk] = x.conj().T @ t @ x
            V[:, :nk] = new_v
            AV[:, :nk] = new_av
            j = nk
        wq = _orthonormalize(w, V[:, :j])
        if wq.shape[1] == 0:
            fresh = rng.standard_normal((dim, 1)).astype(dtype)
            wq = _orthonormalize(fresh, V[:, :j])
            if wq.shape[1] == 0:
                break
        c = wq.shape[1]
        V[:, j : j + c] = wq
        AV[:, j : j + c] = op @ wq
        block = _ah_b(V[:, : j + c], AV[:, j : j + c])
        T[: j + c, j : j + c] = block
        T[j : j + c, :j] = block[:j].conj().T
        j += c
    raise ConvergenceError(f"block Krylov solver did not converge in {max_iter} iterations", best)


def expectation(op, state: np.ndarray) -> float:
    op = as_operator(op)
    state = np.asarray(state).reshape(-1)
    if state.size != op.shape[0]:
        raise ValueError(f"state length {state.size} does not match dimension {op.shape[0]}")
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"state is not normalized (norm {norm!r})")
    value = np.vdot(state, op @ state)
    if abs(value.imag) > 1e-10 * max(1.0, abs(value)):
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def spectral_gap(op, tol: float = 1e-9, **kwargs) -> float:
    """``E1 - E0``, reported as 0 when below ``1e-10`` of the energy scale."""
    op = as_operator(op)
    if op.shape[0] < 2:
        raise ValueError("spectral gap needs dimension >= 2")
    spec = lowest_eigs(op, 2, tol, **kwargs)
    e0, e1 = spec.eigenvalues[:2]
    scale = max(1.0, abs(e0), abs(e1))
    gap = float(e1 - e0)
    return 0.0 if gap < 1e-10 * scale else gap
