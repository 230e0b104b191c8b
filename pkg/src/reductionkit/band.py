"""Kronig-Penney band model, Wannier orbitals, Coulomb constant and error budget.

The one-dimensional model is a ring of ``L`` attractive delta wells of
strength ``V`` at the integers.  Two kinetic conventions are supported:

``half``
    ``-1/2 d^2/dx^2 - V sum delta(x - n)``; the derivative jump at a well is
    ``-2 V psi(n)``, an isolated well binds with ``kappa = V`` and bound
    energies are ``-kappa^2 / 2``.
``unit``
    ``-d^2/dx^2 - V sum delta(x - n)``; the jump is ``-V psi(n)``, an isolated
    well binds with ``kappa = V / 2`` and bound energies are ``-kappa^2``.

In both cases the effective delta strength ``c`` (``V`` or ``V / 2``) is the
only parameter of the decay-constant equation.  Inside a cell the Bloch state
is ``exp(-kappa x) + Y exp(-kappa (1 - x))`` for ``0 <= x < 1`` and matching
across each well gives

    g(kappa) = 1 - c/kappa + exp(-2 kappa) (1 + c/kappa)
               - 2 cos(k) exp(-kappa) = 0,
    Y = (exp(i k + kappa) - 1) / (exp(kappa) - exp(i k)).

Three-dimensional quantities are products of one-dimensional factors.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize

from .exceptions import ConvergenceError, ReductionKitError
from .fitting import FitResult, semilog_fit

CONVENTIONS = ("half", "unit")
ROOT_XTOL = 1e-13
CU_REFERENCE = 28.7496


class NoBoundStateError(ReductionKitError):
    """The decay-constant equation has no root in the bound-state bracket."""


class RouteDisagreementError(ReductionKitError):
    """The two quadrature routes for the Coulomb constant disagree."""

    def __init__(self, reduced: float, spherical: float, tolerance: float):
        super().__init__(
            f"Coulomb routes disagree: reduced {reduced!r}, spherical {spherical!r}, tolerance {tolerance!r}"
        )
        self.reduced = reduced
        self.spherical = spherical


# ---------------------------------------------------------------------------
# Parameters and dispersion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandModelParams:
    well: float
    nwells: int = 64
    tau: float | None = None
    zeta: float | None = None
    gamma: float | None = None
    convention: str = "half"
    nsites: float | None = None
    check_schedule: bool = False

    def __post_init__(self):
        if not self.well > 0:
            raise ValueError("well strength must be positive")
        if self.nwells < 2:
            raise ValueError("need at least two wells")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown kinetic convention {self.convention!r}")
        if self.check_schedule:
            if self.tau is None or self.zeta is None:
                raise ValueError("schedule checks need tau and zeta")
            if not 0 < self.zeta < self.tau - 3:
                raise ValueError(f"schedule needs 0 < zeta < tau - 3, got tau={self.tau}, zeta={self.zeta}")

    @classmethod
    def from_schedule(
        cls, nsites: float, tau: float, zeta: float, nwells: int = 64, convention: str = "half", check_schedule: bool = True
    ) -> "BandModelParams":
        """``V = tau log N`` and ``gamma = N^-zeta / (2 V)``."""
        well = tau * math.log(nsites)
        return cls(well, nwells, tau, zeta, nsites**-zeta / (2 * well), convention, float(nsites), check_schedule)

    @property
    def strength(self) -> float:
        """Delta strength ``c`` entering the decay-constant equation."""
        return self.well if self.convention == "half" else self.well / 2

    def energy(self, kappa):
        k2 = np.asarray(kappa) ** 2
        return -k2 / 2 if self.convention == "half" else -k2

    def to_dict(self) -> dict:
        return asdict(self)


def _quantization(kappa: float, c: float, cos_k: float) -> float:
    e = math.exp(-kappa)
    return 1.0 - c / kappa + e * e * (1.0 + c / kappa) - 2.0 * cos_k * e


def decay_constant(c: float, k: float) -> float:
    """Bound-state ``kappa`` at quasi-momentum ``k`` for delta strength ``c``."""
    cos_k = math.cos(k)
    hi = 2.0 * c
    for lo in (c / 2, 1e-6 * c):
        if _quantization(lo, c, cos_k) < 0 < _quantization(hi, c, cos_k):
            return optimize.brentq(_quantization, lo, hi, args=(c, cos_k), xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    raise NoBoundStateError(f"no bound solution in ({1e-6 * c}, {hi}) for c={c}, k={k}")


def matching_coefficient(kappa, k):
    return (np.exp(1j * k + kappa) - 1.0) / (np.exp(kappa) - np.exp(1j * k))


def cell_norm_squared(kappa, y):
    """``int_0^1 |exp(-kappa x) + Y exp(-kappa (1 - x))|^2 dx``."""
    return (1 + np.abs(y) ** 2) * (1 - np.exp(-2 * kappa)) / (2 * kappa) + 2 * np.real(y) * np.exp(-kappa)


def symmetric_grid(kpoints: int) -> np.ndarray:
    """``kpoints`` momenta on ``[-pi, pi]`` whose entries pair up as exact negatives."""
    if kpoints < 2:
        raise ValueError("need at least two k points")
    j = np.arange(kpoints)
    return np.pi * (2 * j - (kpoints - 1)) / (kpoints - 1)


def ring_momenta(nwells: int) -> np.ndarray:
    return 2 * np.pi * np.arange(nwells) / nwells


@dataclass(frozen=True)
class BlochBand:
    params: BandModelParams
    k: np.ndarray
    kappa: np.ndarray
    energy: np.ndarray
    y: np.ndarray
    asymptotic_energy: np.ndarray
    printed_energy: np.ndarray

    @property
    def bandwidth(self) -> float:
        return float(self.energy.max() - self.energy.min())

    @property
    def gap(self) -> float:
        """Distance from the band top to the continuum edge ``E = 0``."""
        return float(-self.energy.max())

    def deviations(self) -> dict[str, float]:
        return {
            "asymptotic": float(np.max(np.abs(self.energy - self.asymptotic_energy))),
            "printed": float(np.max(np.abs(self.energy - self.printed_energy))),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "kappa", "energy"])
        for row in zip(self.k, self.kappa, self.energy):
            writer.writerow([f"{x:.12g}" for x in row])
        return buf.getvalue()


def solve_dispersion(params: BandModelParams, kpoints: int = 65, k: np.ndarray | None = None) -> BlochBand:
    """Lowest-band decay constants and energies on a symmetric k grid (or on ``k``)."""
    if params.well < 3:
        raise ValueError("the bound band needs well strength >= 3")
    ks = symmetric_grid(kpoints) if k is None else np.asarray(k, dtype=float)
    c = params.strength
    kappa = np.array([decay_constant(c, kk) for kk in ks])
    energy = params.energy(kappa)
    # leading order: kappa = c (1 + 2 exp(-c) cos k)
    asym = params.energy(c) - (2 * c * c if params.convention == "half" else 4 * c * c) * np.exp(-c) * np.cos(ks)
    v = params.well
    printed = -(v**2) - 4 * v * np.exp(-v) * np.cos(ks)
    return BlochBand(params, ks, kappa, energy, matching_coefficient(kappa, ks), asym, printed)


@dataclass(frozen=True)
class BandwidthScan:
    wells: tuple[float, ...]
    bandwidths: tuple[float, ...]
    raw: FitResult
    reduced: FitResult
    convention: str

    def to_dict(self) -> dict:
        return {
            "wells": list(self.wells),
            "bandwidths": list(self.bandwidths),
            "raw": self.raw.to_dict(),
            "reduced": self.reduced.to_dict(),
            "convention": self.convention,
        }


def bandwidth_scan(wells, convention: str = "half") -> BandwidthScan:
    """Bandwidth against well strength, fitted as ``log W`` vs ``V``.

    ``raw`` fits the bandwidth itself.  ``reduced`` divides out the
    ``c^2`` prefactor of the leading-order bandwidth, which isolates the
    exponential rate.
    """
    wells = tuple(float(v) for v in wells)
    widths = []
    for v in wells:
        params = BandModelParams(v, convention=convention)
        c = params.strength
        widths.append(float(params.energy(decay_constant(c, np.pi)) - params.energy(decay_constant(c, 0.0))))
    raw = semilog_fit(zip(wells, widths))
    scale = [BandModelParams(v, convention=convention).strength ** 2 for v in wells]
    reduced = semilog_fit((v, w / s) for v, w, s in zip(wells, widths, scale))
    return BandwidthScan(wells, tuple(widths), raw, reduced, convention)


# ---------------------------------------------------------------------------
# Wannier functions
# ---------------------------------------------------------------------------


class _RingWannier:
    """``w_l(x) = sum_k exp(-i k l) psi_k(x) / sqrt(L)`` on a ring of ``L`` wells."""

    def __init__(self, params: BandModelParams, nwells: int):
        self.params = params
        self.nwells = nwells
        ks = ring_momenta(nwells)
        ks = np.where(ks > np.pi, ks - 2 * np.pi, ks)
        c = params.strength
        self.k = ks
        self.kappa = np.array([decay_constant(c, kk) for kk in ks])
        self.y = matching_coefficient(self.kappa, ks)
        self.norm = np.sqrt(cell_norm_squared(self.kappa, self.y))

    def __call__(self, r, site: int = 0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        n = np.floor(r)
        x = r - n
        phase = np.exp(1j * np.outer(n - site, self.k))
        cell = np.exp(-np.outer(x, self.kappa)) + self.y * np.exp(-np.outer(1 - x, self.kappa))
        return np.real(np.sum(phase * cell / self.norm, axis=1)) / self.nwells

    @staticmethod
    def home_integral(func, order: int = 48) -> float:
        """``int func(r) dr`` over ``[-1/2, 1/2]``, split at the well where orbitals have a cusp."""
        x, w = np.polynomial.legendre.leggauss(order)
        x = (x + 1) / 4
        return float(np.sum(w / 4 * (func(x) + func(-x))))

    def cell_integral(self, func, cells, order: int = 48) -> float:
        """``int func(r) dr`` over the listed unit cells ``[n, n + 1)`` by Gauss-Legendre."""
        x, w = np.polynomial.legendre.leggauss(order)
        x = (x + 1) / 2
        total = 0.0
        for n in cells:
            total += float(np.sum(w / 2 * func(n + x)))
        return total


@dataclass(frozen=True)
class WannierData:
    well: float
    convention: str
    r: np.ndarray
    w0: np.ndarray
    normalization: float
    overlaps: dict = field(default_factory=dict)
    closed_form_deviation: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r", "w0"])
        for row in zip(self.r, self.w0):
            writer.writerow([f"{x:.12g}" for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "well": self.well,
            "convention": self.convention,
            "normalization": self.normalization,
            "overlaps": dict(self.overlaps),
            "closed_form_deviation": self.closed_form_deviation,
        }


def closed_form_orbital(params: BandModelParams, r) -> np.ndarray:
    """Leading-order one-dimensional orbital ``sqrt(c) exp(-c |r|)``."""
    c = params.strength
    return np.sqrt(c) * np.exp(-c * np.abs(np.asarray(r, dtype=float)))


def wannier_profile(band: BlochBand, r: np.ndarray | None = None, check_tol: float = 1e-8) -> WannierData:
    """Wannier orbital of the lowest band on the ring of ``band.params.nwells`` wells.

    Convergence in the ring size is checked by repeating the k-sum on a ring
    twice as long; the two profiles must agree to ``check_tol`` relative to
    the peak.  Overlaps with the neighbouring orbital ``w_1`` are reported
    three ways: the signed overlap (zero by orthogonality), the overlap of
    absolute values and the overlap restricted to the home cell
    ``[-1/2, 1/2]``.
    """
    params = band.params
    if r is None:
        r = np.linspace(-1.5, 1.5, 601)
    r = np.asarray(r, dtype=float)
    ring = _RingWannier(params, params.nwells)
    w0 = ring(r)
    check = _RingWannier(params, 2 * params.nwells)(r)
    diff = float(np.max(np.abs(check - w0)))
    if diff > check_tol * float(np.max(np.abs(w0))):
        raise ConvergenceError("Wannier k-sum not converged in the ring size", diff)
    half = params.nwells // 2
    cells = range(-half, params.nwells - half)
    norm = ring.cell_integral(lambda x: ring(x) ** 2, cells)
    signed = ring.cell_integral(lambda x: ring(x) * ring(x, 1), cells)
    absolute = ring.cell_integral(lambda x: np.abs(ring(x) * ring(x, 1)), cells)
    home = ring.home_integral(lambda x: ring(x) * ring(x, 1))
    inside = np.abs(r) <= 0.5
    cf = closed_form_orbital(params, r[inside])
    deviation = float(np.max(np.abs(w0[inside] - cf) / cf)) if inside.any() else float("nan")
    return WannierData(
        params.well,
        params.convention,
        r,
        w0,
        float(norm),
        {"signed": float(signed), "absolute": float(absolute), "home_cell": home},
        deviation,
    )


def overlap_scan(wells, convention: str = "half", nwells: int = 64) -> dict:
    """Neighbour overlaps across well strengths with exponential-rate fits."""
    rows = []
    for v in wells:
        params = BandModelParams(float(v), nwells=nwells, convention=convention)
        data = wannier_profile(solve_dispersion(params, 9), np.array([0.0]))
        rows.append((float(v), data.overlaps))
    fits = {
        key: semilog_fit((v, abs(o[key])) for v, o in rows).to_dict() for key in ("absolute", "home_cell")
    }
    return {"rows": rows, "fits": fits}


# ---------------------------------------------------------------------------
# Magnetic envelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MagneticReport:
    well: float
    field: tuple[float, float, float]
    envelope: float
    onsite_factor: float
    onsite: tuple[float, float, float]
    onsite_relative_error: float
    neighbor_factor: float
    neighbor: tuple[float, float, float]

    def to_dict(self) -> dict:
        return asdict(self)


def magnetic_overlaps(params: BandModelParams, field_vec, wannier: WannierData | None = None) -> MagneticReport:
    """Matrix elements of ``B . sigma chi(r)`` with ``chi = (1 - exp(-V))^3`` on the home cube.

    Per axis the envelope contributes ``1 - exp(-V)`` on ``[-1/2, 1/2]`` and
    zero outside, so every three-dimensional element is a product of one
    axis integrals.  The on-site element is ``B (chi_1 S)^3`` with
    ``S = int |w_0|^2`` over the home cell; the element between the home
    orbital and its neighbour along one axis (field on the home site only)
    is ``B chi_1^3 I S^2`` with ``I = int w_0 w_1`` over the home cell.
    """
    vec = tuple(float(x) for x in field_vec)
    ring = _RingWannier(params, params.nwells)
    home = ring.home_integral(lambda x: ring(x) ** 2)
    cross = ring.home_integral(lambda x: ring(x) * ring(x, 1))
    chi1 = 1.0 - math.exp(-params.well)
    onsite_factor = (chi1 * home) ** 3
    neighbor_factor = chi1**3 * cross * home**2
    mag = float(np.linalg.norm(vec))
    rel = abs(onsite_factor - 1.0) if mag > 0 else 0.0
    return MagneticReport(
        params.well,
        vec,
        chi1**3,
        onsite_factor,
        tuple(onsite_factor * b for b in vec),
        rel,
        neighbor_factor,
        tuple(neighbor_factor * b for b in vec),
    )


# ---------------------------------------------------------------------------
# Coulomb constant
# ---------------------------------------------------------------------------


def green_function(q) -> np.ndarray:
    """``G(q) = prod_i (1 + |q_i|) exp(-|q_i|)`` over the last axis of ``q``."""
    a = np.abs(np.asarray(q, dtype=float))
    return np.prod((1 + a) * np.exp(-a), axis=-1)


def reduced_integrand(phi, theta):
    """Radially integrated first-octant integrand ``sin(phi) n / d``.

    With ``u`` the unit direction, ``s = u_1 + u_2 + u_3`` and elementary
    symmetric functions ``e_2, e_3``, the radial integral of
    ``rho G(rho u)`` is ``(3 s^3 + 6 e_2 s + 24 e_3) / s^5``.
    """
    sp_, cp = np.sin(phi), np.cos(phi)
    u1, u2, u3 = sp_ * np.cos(theta), sp_ * np.sin(theta), cp
    s = u1 + u2 + u3
    e2 = u1 * u2 + u1 * u3 + u2 * u3
    e3 = u1 * u2 * u3
    return sp_ * (3 * s**3 + 6 * e2 * s + 24 * e3) / s**5


def adaptive_tensor_gauss(func, a: float, b: float, c: float, d: float, tol: float, order: int = 8, max_depth: int = 12):
    """Integrate ``func(x, y)`` over a rectangle with recursively split tensor Gauss-Legendre panels.

    A panel is accepted when its estimate and the sum over its four
    children differ by less than its share of ``tol / 2``.  Returns the
    value and the number of accepted panels.
    """
    xg, wg = np.polynomial.legendre.leggauss(order)

    def panel(x0, x1, y0, y1):
        hx, hy = (x1 - x0) / 2, (y1 - y0) / 2
        X = x0 + hx * (xg + 1)
        Y = y0 + hy * (xg + 1)
        return float(hx * hy * wg @ func(X[:, None], Y[None, :]) @ wg)

    area = (b - a) * (d - c)
    stack = [(a, b, c, d, panel(a, b, c, d), 0)]
    total, panels = 0.0, 0
    while stack:
        x0, x1, y0, y1, coarse, depth = stack.pop()
        xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
        kids = [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)]
        vals = [panel(*k) for k in kids]
        share = tol / 2 * (x1 - x0) * (y1 - y0) / area
        if abs(sum(vals) - coarse) < share or depth >= max_depth:
            if depth >= max_depth and abs(sum(vals) - coarse) >= share:
                raise ConvergenceError("adaptive quadrature reached maximum depth", abs(sum(vals) - coarse))
            total += sum(vals)
            panels += 4
        else:
            stack.extend((*k, v, depth + 1) for k, v in zip(kids, vals))
    return total, panels


def coulomb_reduced(tol: float) -> float:
    value, _ = adaptive_tensor_gauss(reduced_integrand, 0.0, np.pi / 2, 0.0, np.pi / 2, tol / 8)
    return 8.0 * value


def coulomb_spherical(tol: float) -> float:
    """``int G(q) / |q| d^3q`` over the whole sphere by nested adaptive quadrature in spherical coordinates.

    The volume element ``rho^2 sin(phi)`` cancels the ``1 / rho``
    singularity.  Breakpoints sit on the coordinate planes where ``G`` has
    kinks.
    """

    def radial(phi, theta):
        u = np.array([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)])
        val, _ = integrate.quad(lambda rho: rho * green_function(rho * u), 0, np.inf, epsabs=tol / 400, epsrel=1e-10)
        return val * np.sin(phi)

    opts = [{"epsabs": tol / 40, "epsrel": 1e-10, "points": [np.pi / 2]},
            {"epsabs": tol / 4, "epsrel": 1e-10, "points": [np.pi / 2, np.pi, 3 * np.pi / 2]}]
    val, _ = integrate.nquad(radial, [[0, np.pi], [0, 2 * np.pi]], opts=opts)
    return float(val)


@dataclass(frozen=True)
class CoulombReport:
    value: float
    reduced: float
    spherical: float
    tolerance: float
    refinement: tuple[float, ...]

    @property
    def route_difference(self) -> float:
        return abs(self.reduced - self.spherical)

    def cauchy(self) -> bool:
        """Successive refinements shrink their differences (or sit at rounding)."""
        d = np.abs(np.diff(self.refinement))
        return bool(all(d[i + 1] <= max(d[i], 1e-12) for i in range(len(d) - 1)))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["route_difference"] = self.route_difference
        return out


def coulomb_cu_report(tolerance: float = 1e-3, refinements: int = 3) -> CoulombReport:
    """Coulomb constant by both routes plus a refinement sequence of the reduced route."""
    if tolerance < 1e-6:
        raise ValueError("tolerance must be at least 1e-6")
    refinement = tuple(coulomb_reduced(tolerance * 10.0**-n) for n in range(refinements))
    reduced = refinement[-1]
    spherical = coulomb_spherical(tolerance / 4)
    if abs(reduced - spherical) > tolerance:
        raise RouteDisagreementError(reduced, spherical, tolerance)
    return CoulombReport(reduced, reduced, spherical, tolerance, refinement)


def coulomb_cu(tolerance: float = 1e-3) -> float:
    return coulomb_cu_report(tolerance).value


# ---------------------------------------------------------------------------
# Effective Hubbard parameters and error budget
# ---------------------------------------------------------------------------


def onsite_repulsion(params: BandModelParams, c_u: float) -> float:
    """``U = (V gamma / 32) c_U``."""
    if params.gamma is None:
        raise ValueError("onsite repulsion needs gamma")
    return params.well * params.gamma / 32 * c_u


def onsite_prefactors(c_u: float) -> dict[str, float]:
    """Prefactor of ``N^-zeta`` in ``U``: direct arithmetic against the printed value."""
    derived, printed = c_u / 64, c_u / 32
    return {"derived": derived, "printed": printed, "ratio": printed / derived}


@dataclass(frozen=True)
class HubbardParams:
    t: float
    t_band: float
    U: float
    gap: float
    error_terms: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.t > 0 and self.U > 0 and self.gap > 0):
            raise ValueError("Hubbard parameters need t, U, gap > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def hubbard_parameters(params: BandModelParams, c_u: float, kpoints: int = 129) -> HubbardParams:
    """``t = exp(-V)``, the band's nearest-neighbour hopping, ``U`` and the gap bound.

    ``t_band`` is minus the first Fourier coefficient of ``E(k)``; the error
    terms are evaluated with unit constants when the schedule is known.
    """
    ks = ring_momenta(kpoints)
    energies = params.energy(np.array([decay_constant(params.strength, k) for k in ks]))
    t_band = -float(np.mean(energies * np.cos(ks)))
    band = solve_dispersion(params, 9)
    errors = {}
    if params.nsites is not None and params.tau is not None and params.zeta is not None:
        n, tau, zeta, v = params.nsites, params.tau, params.zeta, params.well
        errors = {
            "onsite_correction": v**4 * n ** (-tau - zeta + 2),
            "magnetic_neighbor": v * n ** (-2 * tau + 1),
        }
    return HubbardParams(math.exp(-params.well), t_band, onsite_repulsion(params, c_u), band.gap, errors)


@dataclass(frozen=True)
class BudgetReport:
    nsites: float
    tau: float
    zeta: float
    well: float
    alpha: float
    beta: float
    beta_squared: float
    delta: float
    p_optimal: float
    delta_e: float
    delta_e_scale: float
    p_numeric: float
    delta_e_numeric: float
    precondition_ok: bool
    hierarchy_ok: bool
    flags: tuple[str, ...]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


HIERARCHY_MARGIN = 10.0


def _budget_bound(p, delta, alpha, beta):
    return p * (-delta + alpha) + 2 * np.sqrt((1 - p) * p) * beta


def error_budget(nsites: float, tau: float, zeta: float) -> BudgetReport:
    """Scale arithmetic of the band-mixing bound with unit constants.

    ``alpha = N^(2 - zeta)``, ``beta^2 = N^(2 - 2 zeta)``, ``Delta = V^2`` with
    ``V = tau log N``.  The bound ``p (alpha - Delta) + 2 sqrt(p (1 - p)) beta``
    is also maximized numerically over the mixing weight ``p`` in log space.
    A violated precondition or hierarchy is flagged, not raised.
    """
    well = tau * math.log(nsites)
    alpha = nsites ** (2 - zeta)
    beta_sq = nsites ** (2 - 2 * zeta)
    beta = math.sqrt(beta_sq)
    delta = well**2
    flags = []
    pre = 0 < zeta < tau - 3
    if not pre:
        flags.append("precondition 0 < zeta < tau - 3 violated")
    hier = delta >= HIERARCHY_MARGIN * max(alpha, beta)
    if not hier:
        flags.append("hierarchy Delta >> alpha, beta violated")
    p_opt = beta_sq / delta**2 if delta > 0 else float("nan")
    if delta > 0:
        guess = math.log(max(p_opt, 1e-300))
        res = optimize.minimize_scalar(
            lambda x: -_budget_bound(math.exp(x), delta, alpha, beta),
            bounds=(max(guess - 30, -700), 0.0),
            method="bounded",
            options={"xatol": 1e-10},
        )
        p_num = math.exp(res.x)
        de_num = float(_budget_bound(p_num, delta, alpha, beta))
    else:
        p_num, de_num = float("nan"), float("nan")
    return BudgetReport(
        float(nsites), float(tau), float(zeta), well, alpha, beta, beta_sq, delta, p_opt,
        beta_sq / delta if delta > 0 else float("inf"), nsites ** (-2 * zeta + 2), p_num, de_num, pre, hier, tuple(flags),
    )
