"""Log-log scaling fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from scipy import stats

FIT_FLOOR = 1e-13


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    npoints: int
    excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def loglog_fit(points: Iterable[tuple[float, float]], floor: float = FIT_FLOOR) -> FitResult:
    """Least squares of ``log y`` against ``log x``; points with ``y <= floor`` are dropped."""
    pts = [(float(x), float(y)) for x, y in points]
    if any(x <= 0 for x, _ in pts):
        raise ValueError("log-log fit needs positive x values")
    usable = [(x, y) for x, y in pts if y > floor]
    excluded = len(pts) - len(usable)
    if len(usable) < 3:
        raise ValueError(f"only {len(usable)} usable points above floor {floor}; need 3")
    lx = np.log([x for x, _ in usable])
    ly = np.log([y for _, y in usable])
    res = stats.linregress(lx, ly)
    r2 = float(res.rvalue**2) if np.ptp(ly) > 0 else 1.0
    values = (res.slope, res.intercept, res.stderr, r2)
    if not all(np.isfinite(values)):
        raise ValueError("fit produced non-finite values")
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), r2, len(usable), excluded)


def semilog_fit(points: Iterable[tuple[float, float]], floor: float = FIT_FLOOR) -> FitResult:
    """Least squares of ``log y`` against ``x``; the slope is an exponential rate."""
    pts = [(float(x), float(y)) for x, y in points]
    usable = [(x, y) for x, y in pts if y > floor]
    if len(usable) < 3:
        raise ValueError(f"only {len(usable)} usable points above floor {floor}; need 3")
    x = np.array([p[0] for p in usable])
    ly = np.log([p[1] for p in usable])
    res = stats.linregress(x, ly)
    r2 = float(res.rvalue**2) if np.ptp(ly) > 0 else 1.0
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), r2, len(usable), len(pts) - len(usable))
