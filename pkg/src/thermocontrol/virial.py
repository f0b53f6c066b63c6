"""First-order (in a and b) perturbation of the ideal-gas integrable system.

``H_vdW = H + a H_a + b H_b`` is the truncated real-gas Hamiltonian. A second
integral commuting with it up to first order is ``G_vdW = G + a G_a + b G_b``
with ``G_x = int dH_x/dOmega2 dOmega1`` computed in the angle chart of the
ideal system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .angles import (ComponentChart, InvariantLevels, _Geometry, branch_of, chart_for,
                     lambda_on_M)
from .control import ControlBudget, PhasePoint, reduced_hamiltonian_array, reduced_hamiltonian_gradient
from .dynamics import canonical_bracket, integral_G
from .errors import ChartError, DomainError, NearSingularError
from .gas import GasSpec
from .numdiff import complex_step_gradient, five_point_gradient

H_GUARD = 1e-10
FLOOR = 1e-13


def _ideal_h(n, R, d, q1, q2, l1, l2):
    P = (n * q1 ** 4 * l2 ** 2 + 2 * q1 ** 4 * l1 ** 2 + 4 * q1 ** 3 * q2 * l1 * l2
         + 2 * q1 ** 2 * q2 ** 2 * l2 ** 2 - 2 * R * n * q1 ** 2 * l2 + R * R * n)
    return np.sqrt(n * R * d * P) / (2 * q1 * q1)


def _corrections(spec: GasSpec, budget: ControlBudget, x):
    """(H_a, H_b) at ``x``; accepts complex input for complex-step derivatives."""
    q1, q2, l1, l2 = x
    n, R, d = spec.n, spec.R, budget.delta
    H = _ideal_h(n, R, d, q1, q2, l1, l2)
    if abs(np.real(H)) < H_GUARD:
        raise NearSingularError(f"reduced Hamiltonian {np.real(H)!r} is below the guard {H_GUARD}")
    w = np.exp(q2 / q1)
    ha = w * (q1 ** 2 * (R * d * n ** 3 * l2 ** 2 - 8 * H * H) - R * R * l2 * n ** 3 * d) / (4 * q1 * n * R * H)
    hb = w * R * d * n * n * l2 * (R - l2 * q1 ** 2) / (4 * H * q1 ** 2)
    return ha, hb


def _x(p):
    return p.as_array() if isinstance(p, PhasePoint) else np.asarray(p)


def correction_Ha(spec: GasSpec, budget: ControlBudget, p) -> float:
    if _x(p)[0] <= 0:
        raise DomainError("q1 must be positive")
    return float(np.real(_corrections(spec, budget, _x(p))[0]))


def correction_Hb(spec: GasSpec, budget: ControlBudget, p) -> float:
    if _x(p)[0] <= 0:
        raise DomainError("q1 must be positive")
    return float(np.real(_corrections(spec, budget, _x(p))[1]))


class _Correction:
    """One of H_a / H_b as a phase-space callable with an exact gradient."""

    def __init__(self, spec, budget, which):
        self.spec, self.budget, self.idx = spec, budget, {"a": 0, "b": 1}[which]

    def __call__(self, x):
        return float(np.real(_corrections(self.spec, self.budget, np.asarray(x))[self.idx]))

    def gradient(self, x):
        return complex_step_gradient(lambda z: _corrections(self.spec, self.budget, z)[self.idx], x)


@dataclass(frozen=True)
class PerturbedHamiltonian:
    spec: GasSpec
    budget: ControlBudget
    a: float = 0.0
    b: float = 0.0

    def base(self, x) -> float:
        return reduced_hamiltonian_array(self.spec, self.budget, x)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        h = self.base(x)
        if self.a == 0 and self.b == 0:
            return h
        ha, hb = _corrections(self.spec, self.budget, x)
        return float(h + self.a * np.real(ha) + self.b * np.real(hb))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = reduced_hamiltonian_gradient(self.spec, self.budget, x)
        if self.a == 0 and self.b == 0:
            return g
        gc = complex_step_gradient(
            lambda z: self.a * _corrections(self.spec, self.budget, z)[0]
            + self.b * _corrections(self.spec, self.budget, z)[1], x)
        return g + gc


def perturbed_hamiltonian(ph: PerturbedHamiltonian, p) -> float:
    return ph(_x(p))


# ------------------------------------------------------------ angle chart

@dataclass(frozen=True)
class AngleChart:
    """Angle coordinates (Omega1, Omega2) on one sheet of one D > 0 interval.

    Omega1 = branch * int_{ref}^{q1} 4 h1 x^2/sqrt(D), Omega2 = q2/q1 + branch *
    int_{ref}^{q1} n^2 R delta (R - h2 x)/(x sqrt(D)), ref = chart reference.
    """
    spec: GasSpec
    budget: ControlBudget
    levels: InvariantLevels
    chart: ComponentChart
    _geo: _Geometry = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_geo", _Geometry(self.spec, self.budget, self.levels))

    @classmethod
    def at(cls, spec: GasSpec, budget: ControlBudget, point) -> "AngleChart":
        x = _x(point)
        levels = InvariantLevels.of(spec, budget, x)
        return cls(spec, budget, levels, chart_for(spec, budget, levels, float(x[0]), branch_of(x)))

    @property
    def branch(self) -> int:
        return self.chart.branch

    def _p1(self, q1):
        return self._geo.primitive(self._geo.kernel1, self.chart, q1)

    def _p2(self, q1):
        return self._geo.primitive(self._geo.kernel2, self.chart, q1)

    def omega1(self, q1: float) -> float:
        return self.branch * self._p1(q1)

    def to_angles(self, q1: float, q2: float) -> tuple[float, float]:
        return self.branch * self._p1(q1), q2 / q1 + self.branch * self._p2(q1)

    def omega1_bounds(self) -> tuple[float, float]:
        """Omega1 at the lower and upper q1 endpoints of the chart."""
        hi = self.omega1(self.chart.hi) if self.chart.bounded else self.branch * math.inf
        return self.omega1(self.chart.lo), hi

    def q1_of(self, w1: float) -> float:
        """Invert Omega1 on the chart (bracketed bisection/secant)."""
        s = self.branch
        target = s * w1
        lo, hi = self.chart.lo, self.chart.hi
        p_lo = self._p1(lo)
        if target < p_lo:
            raise ChartError(f"Omega1={w1!r} is outside the chart")
        if self.chart.bounded:
            if target > self._p1(hi):
                raise ChartError(f"Omega1={w1!r} is outside the chart")
        else:
            hi = self.chart.reference
            while self._p1(hi) < target:
                lo, hi = hi, 2 * hi
        if target == p_lo:
            return lo
        return brentq(lambda q: self._p1(q) - target, lo, hi, xtol=1e-15,
                      rtol=4 * np.finfo(float).eps, maxiter=200)

    def from_angles(self, w1: float, w2: float) -> tuple[float, float]:
        q1 = self.q1_of(w1)
        return q1, q1 * (w2 - self.branch * self._p2(q1))

    def phase_point(self, w1: float, w2: float) -> PhasePoint:
        q1, q2 = self.from_angles(w1, w2)
        l1, l2 = lambda_on_M(self.spec, self.budget, self.levels, q1, q2, self.branch)
        return PhasePoint(q1, q2, l1, l2)


_GAUSS_ORDER = 8


def _d_omega2(chart: AngleChart, q1: float, p2: float, w2: float):
    """Central difference of (H_a, H_b) in Omega2 at fixed Omega1 (fixed q1)."""
    h = 1e-5 * max(1.0, abs(w2))
    vals = []
    for ww in (w2 + h, w2 - h):
        q2 = q1 * (ww - chart.branch * p2)
        l1, l2 = lambda_on_M(chart.spec, chart.budget, chart.levels, q1, q2, chart.branch)
        vals.append(np.real(_corrections(chart.spec, chart.budget, (q1, q2, l1, l2))))
    return (vals[0] - vals[1]) / (2 * h)


def _correction_pair(chart: AngleChart, w_left: float, w_right: float, w2: float, n_grid: int) -> np.ndarray:
    if n_grid < 16:
        raise DomainError("n_grid must be at least 16")
    if w_right == w_left:
        return np.zeros(2)
    panels = max(2, n_grid // _GAUSS_ORDER)
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    edges = np.linspace(w_left, w_right, panels + 1)
    total = np.zeros(2)
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for x, wt in zip(nodes, weights):
            w1 = mid + half * x
            q1 = chart.q1_of(w1)
            total += wt * half * _d_omega2(chart, q1, chart._p2(q1), w2)
    return total


def correction_G(chart: AngleChart, which: str, omega1_range: Sequence[float], omega2: float,
                 n_grid: int = 32) -> float:
    """G_a or G_b at (omega1_range[1], omega2), integrated from omega1_range[0].

    dH/dOmega2 comes from central differences in Omega2 (step 1e-5 scaled) and
    the Omega1 integral from composite 8-point Gauss-Legendre panels.
    """
    idx = {"a": 0, "b": 1}[which]
    w_left, w_right = omega1_range
    return float(_correction_pair(chart, w_left, w_right, omega2, n_grid)[idx])


class CorrectedIntegral:
    """Phase-space function x -> (G_a(x), G_b(x)) with the constant of
    integration fixed at the lower q1 endpoint of the point's chart."""

    def __init__(self, spec: GasSpec, budget: ControlBudget, n_grid: int = 32):
        self.spec, self.budget, self.n_grid = spec, budget, n_grid

    def components(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        chart = AngleChart.at(self.spec, self.budget, x)
        w1, w2 = chart.to_angles(x[0], x[1])
        w_left = chart.omega1_bounds()[0]
        return _correction_pair(chart, w_left, w1, w2, self.n_grid)

    def gradients(self, x, rel_step: float = 1e-3) -> np.ndarray:
        """(2, 4) array of d(G_a, G_b)/d(q1, q2, l1, l2), fourth-order differences."""
        x = np.asarray(x, dtype=float)
        h = rel_step * np.maximum(1.0, np.abs(x))
        out = np.empty((2, 4))
        for i in range(4):
            vals = []
            for k in (-2, -1, 1, 2):
                xk = x.copy()
                xk[i] += k * h[i]
                vals.append(self.components(xk))
            out[:, i] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h[i])
        return out


# ------------------------------------------------------- order check

@dataclass(frozen=True)
class OrderCheckReport:
    direction: tuple
    eps: tuple
    bracket_norms: tuple
    slope: float
    uncorrected_norms: tuple
    uncorrected_slope: float
    floor_limited: bool
    points: tuple = ()

    def to_json(self) -> dict:
        return {
            "direction": list(self.direction),
            "eps": list(self.eps),
            "bracket_norms": list(self.bracket_norms),
            "slope": self.slope,
            "uncorrected_bracket_norms": list(self.uncorrected_norms),
            "uncorrected_slope": self.uncorrected_slope,
            "floor_limited": self.floor_limited,
        }


def sample_points_on_M(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels,
                       count: int, seed: int = 0) -> list[PhasePoint]:
    """Points of M well inside a D > 0 interval (bounded one preferred)."""
    geo = _Geometry(spec, budget, levels)
    roots = geo.positive_roots()
    charts = []
    for lo, hi in zip(roots, roots[1:] + [math.inf]):
        mid = 0.5 * (lo + hi) if math.isfinite(hi) else 2 * lo
        if geo.D(mid) > 0:
            charts.append((lo, hi))
    if not charts:
        raise ChartError("levels have no region with D > 0")
    lo, hi = next((c for c in charts if math.isfinite(c[1])), charts[-1])
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(count):
        if math.isfinite(hi):
            q1 = lo + (hi - lo) * rng.uniform(0.25, 0.75)
        else:
            q1 = lo * rng.uniform(1.3, 2.0)
        q2 = rng.uniform(-1.0, 1.0)
        branch = 1 if rng.uniform() < 0.5 else -1
        l1, l2 = lambda_on_M(spec, budget, levels, q1, q2, branch)
        pts.append(PhasePoint(q1, q2, l1, l2))
    return pts


def _loglog_slope(eps, norms) -> float:
    return float(np.polyfit(np.log(eps), np.log(norms), 1)[0])


def commutation_order_check(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels,
                            eps_list: Sequence[float] = (1e-2, 3e-3, 1e-3, 3e-4),
                            direction: Sequence[float] = (1.0, 1.0),
                            points: Optional[Sequence[PhasePoint]] = None,
                            n_points: int = 3, seed: int = 0, n_grid: int = 32) -> OrderCheckReport:
    """Scaling of |[H_vdW, G_vdW]| with (a, b) = eps * direction.

    With the first-order corrections G_a, G_b the bracket is O(eps^2); with G
    alone it is O(eps). Norms are the maximum over the sample points.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) < 4 or any(e <= 0 for e in eps) or any(x <= y for x, y in zip(eps, eps[1:])):
        raise DomainError("eps_list needs at least 4 decreasing positive values")
    norm = math.hypot(float(direction[0]), float(direction[1]))
    if norm == 0:
        raise DomainError("direction must be nonzero")
    da, db = float(direction[0]) / norm, float(direction[1]) / norm
    if points is None:
        points = sample_points_on_M(spec, budget, levels, n_points, seed)
    ha, hb = _Correction(spec, budget, "a"), _Correction(spec, budget, "b")
    gint = CorrectedIntegral(spec, budget, n_grid)
    cached = []
    for p in points:
        x = p.as_array()
        gH = reduced_hamiltonian_gradient(spec, budget, x)
        gG = integral_G.gradient(x)
        gHx = da * ha.gradient(x) + db * hb.gradient(x)
        gGab = gint.gradients(x)
        gGx = da * gGab[0] + db * gGab[1]
        cached.append((x, gH, gG, gHx, gGx))

    norms, plain = [], []
    for e in eps:
        best = best_plain = 0.0
        for x, gH, gG, gHx, gGx in cached:
            gHv = gH + e * gHx
            gGv = gG + e * gGx
            hv = lambda y: 0.0  # values unused; brackets only need gradients
            br = canonical_bracket(hv, hv, x, grad_F=lambda _y: gHv, grad_G=lambda _y: gGv)
            br0 = canonical_bracket(hv, hv, x, grad_F=lambda _y: gHv, grad_G=lambda _y: gG)
            best = max(best, abs(br))
            best_plain = max(best_plain, abs(br0))
        norms.append(best)
        plain.append(best_plain)
    floor = all(v < FLOOR for v in norms)
    safe = [max(v, np.finfo(float).tiny) for v in norms]
    return OrderCheckReport(
        direction=(da, db), eps=tuple(eps), bracket_norms=tuple(norms),
        slope=_loglog_slope(eps, safe), uncorrected_norms=tuple(plain),
        uncorrected_slope=_loglog_slope(eps, [max(v, np.finfo(float).tiny) for v in plain]),
        floor_limited=floor, points=tuple(points),
    )
