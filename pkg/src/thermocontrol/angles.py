"""Invariant manifold M = {H = h1, G = h2}, its components and angle variables.

On M the costates are functions of ``(q1, q2)`` and a branch sign; the
branch is the sign of ``q1 l1 + q2 l2`` (equivalently of ``dq1/dt``).
Everything hinges on the discriminant

    D(q1) = 2 R delta n (4 h1^2 q1^4 - delta R n^2 (R - h2 q1)^2)
          = 2 R delta n * Q1(q1) * Q2(q1),
    Q1 = 2 h1 q^2 + c h2 q - c R,   Q2 = 2 h1 q^2 - c h2 q + c R,   c = n sqrt(delta R),

which factors by difference of squares. Angle integrals have inverse
square-root singularities at simple roots of D; they are removed with the
substitution ``q = r +- u^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .control import ControlBudget, PhasePoint, reduced_hamiltonian_array
from .errors import ChartError, DegenerateLevelError, DomainError, NumericalInconsistencyError
from .gas import GasSpec

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-13
ROOT_DEDUP = 1e-12


@dataclass(frozen=True)
class InvariantLevels:
    h1: float
    h2: float

    def __post_init__(self):
        if not self.h1 >= 0:
            raise DomainError("h1 must be nonnegative (the reduced Hamiltonian is a square root)")

    @classmethod
    def of(cls, spec: GasSpec, budget: ControlBudget, point) -> "InvariantLevels":
        x = point.as_array() if isinstance(point, PhasePoint) else np.asarray(point, dtype=float)
        return cls(reduced_hamiltonian_array(spec, budget, x), float(x[0] * x[3]))

    def to_json(self) -> dict:
        return {"h1": self.h1, "h2": self.h2}


@dataclass(frozen=True)
class ComponentChart:
    """Open q1-interval with D > 0 plus the sheet (branch) sign."""
    lo: float
    hi: float
    branch: int

    def __post_init__(self):
        if self.branch not in (1, -1):
            raise DomainError("branch must be +1 or -1")
        if not (0 < self.lo < self.hi):
            raise DomainError("chart interval must satisfy 0 < lo < hi")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.hi)

    @property
    def reference(self) -> float:
        """Default q1_ref: the midpoint, or ``2 lo`` (at least ``lo + 1``) when unbounded."""
        if self.bounded:
            return 0.5 * (self.lo + self.hi)
        return self.lo + max(self.lo, 1.0)

    def contains(self, q1: float, closed: bool = True) -> bool:
        if closed:
            return self.lo <= q1 <= self.hi
        return self.lo < q1 < self.hi

    def flipped(self) -> "ComponentChart":
        return ComponentChart(self.lo, self.hi, -self.branch)


def branch_of(point) -> int:
    x = point.as_array() if isinstance(point, PhasePoint) else np.asarray(point, dtype=float)
    return 1 if x[0] * x[2] + x[1] * x[3] >= 0 else -1


def _solve_quadratic(a: float, b: float, c: float) -> list[float]:
    """Real roots of a x^2 + b x + c (a > 0), cancellation-free."""
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    if sq == 0.0:
        return [-b / (2 * a)] * 2
    t = -0.5 * (b + math.copysign(sq, b))
    return sorted([t / a, c / t])


class _Geometry:
    """Discriminant of one level set with its factorisation cached."""

    def __init__(self, spec: GasSpec, budget: ControlBudget, levels: InvariantLevels):
        self.n, self.R, self.d = spec.n, spec.R, budget.delta
        self.h1, self.h2 = levels.h1, levels.h2
        self.c = self.n * math.sqrt(self.d * self.R)
        self.K = 2 * self.R * self.d * self.n
        if self.h1 > 0:
            self.roots1 = _solve_quadratic(2 * self.h1, self.c * self.h2, -self.c * self.R)
            self.roots2 = _solve_quadratic(2 * self.h1, -self.c * self.h2, self.c * self.R)
        else:
            self.roots1 = self.roots2 = []

    def D(self, q: float) -> float:
        n, R, d, h1, h2 = self.n, self.R, self.d, self.h1, self.h2
        a4 = 4 * h1 * h1
        k = d * R * n * n
        # Horner form of 4 h1^2 q^4 - k (h2^2 q^2 - 2 R h2 q + R^2)
        inner = (((a4 * q) * q - k * h2 * h2) * q + 2 * k * R * h2) * q - k * R * R
        return self.K * inner

    def Q1(self, q):
        return 2 * self.h1 * q * q + self.c * self.h2 * q - self.c * self.R

    def Q2(self, q):
        return 2 * self.h1 * q * q - self.c * self.h2 * q + self.c * self.R

    def positive_roots(self) -> list[float]:
        roots = sorted(r for r in self.roots1 + self.roots2 if r > 0)
        out: list[float] = []
        for r in roots:
            if out and abs(r - out[-1]) <= ROOT_DEDUP * max(1.0, abs(r)):
                continue
            out.append(r)
        return out

    def is_double(self, r: float) -> bool:
        hits = [x for x in self.roots1 + self.roots2 if abs(x - r) <= 1e-9 * max(1.0, abs(r))]
        return len(hits) > 1

    def deflated(self, q: float, r: float) -> float:
        """|D(q) / (q - r)| evaluated without cancellation near the root r."""
        if any(x == r for x in self.roots1):
            other = self.roots1[0] if self.roots1[1] == r else self.roots1[1]
            val = self.K * 2 * self.h1 * (q - other) * self.Q2(q)
        elif any(x == r for x in self.roots2):
            other = self.roots2[0] if self.roots2[1] == r else self.roots2[1]
            val = self.K * self.Q1(q) * 2 * self.h1 * (q - other)
        else:
            raise ChartError(f"{r!r} is not a root of D")
        return abs(val)

    def chart(self, q1: float, branch: int) -> ComponentChart:
        if not q1 > 0:
            raise DomainError("q1 must be positive")
        roots = self.positive_roots()
        if self.h1 <= 0 or not roots:
            raise ChartError("levels have no region with D > 0")
        edges = [0.0] + roots + [math.inf]
        for lo, hi in zip(edges[:-1], edges[1:]):
            if lo == 0.0:
                continue
            mid = 0.5 * (lo + hi) if math.isfinite(hi) else lo + max(lo, 1.0)
            if self.D(mid) <= 0:
                continue
            tol = 1e-10 * max(1.0, lo)
            if lo - tol <= q1 <= hi + tol * (1 if math.isfinite(hi) else 0):
                for r in (lo, hi):
                    if math.isfinite(r) and self.is_double(r):
                        raise DegenerateLevelError(f"double root of D at q1={r!r}")
                return ComponentChart(lo, hi, branch)
        raise ChartError(f"q1={q1!r} is not in a region where D > 0")

    # ---- quadrature -------------------------------------------------

    def kernel1(self, q):
        return 4 * self.h1 * q * q

    def kernel2(self, q):
        return self.n * self.n * self.R * self.d * (self.R - self.h2 * q) / q

    def primitive(self, kernel, chart: ComponentChart, q: float) -> float:
        """int_{m}^{q} kernel / sqrt(D), m = chart.reference, q in [lo, hi]."""
        lo, hi, m = chart.lo, chart.hi, chart.reference
        if q < lo - 1e-12 * max(1.0, lo) or q > hi:
            raise ChartError(f"q1={q!r} outside chart ({lo!r}, {hi!r})")
        q = max(q, lo)
        if q == m:
            return 0.0
        if abs(q - m) <= 1e-8 * (m - lo):
            # m is interior, so the integrand is smooth here; midpoint rule is exact to O(|q - m|^3)
            x = 0.5 * (q + m)
            return kernel(x) / math.sqrt(self.D(x)) * (q - m)
        if q < m:
            f = lambda u: 2 * kernel(lo + u * u) / math.sqrt(self.deflated(lo + u * u, lo))
            val, _ = quad(f, math.sqrt(q - lo), math.sqrt(m - lo), epsabs=QUAD_EPSABS,
                          epsrel=QUAD_EPSREL, limit=200)
            return -val
        if chart.bounded:
            q = min(q, hi)
            f = lambda u: 2 * kernel(hi - u * u) / math.sqrt(self.deflated(hi - u * u, hi))
            val, _ = quad(f, math.sqrt(hi - q), math.sqrt(hi - m), epsabs=QUAD_EPSABS,
                          epsrel=QUAD_EPSREL, limit=200)
            return val
        f = lambda x: kernel(x) / math.sqrt(self.D(x))
        val, _ = quad(f, m, q, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        return val


# ----------------------------------------------------------- public ops

def discriminant_D(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels, q1: float) -> float:
    if not q1 > 0:
        raise DomainError("q1 must be positive")
    return _Geometry(spec, budget, levels).D(q1)


def singular_set(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels) -> list[float]:
    """Positive roots of D, ascending and deduplicated; each is verified by its residual."""
    geo = _Geometry(spec, budget, levels)
    if geo.h1 == 0:
        if geo.h2 > 0:
            return [geo.R / geo.h2]
        return []
    roots = geo.positive_roots()
    for r in roots:
        scale = geo.K * (4 * geo.h1 ** 2 * r ** 4 + geo.d * geo.R * geo.n ** 2 * (geo.R + abs(geo.h2) * r) ** 2)
        if abs(geo.D(r)) > 1e-9 * scale:
            raise NumericalInconsistencyError(f"root {r!r} has residual {geo.D(r)!r}")
    return roots


def sign_test_component_count(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels) -> int:
    return 3 if levels.h2 ** 4 * budget.delta * spec.n ** 2 - 64 * spec.R * levels.h1 ** 2 >= 0 else 2


def root_interval_count(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels) -> int:
    """Number of maximal intervals of the q1-line where D > 0.

    The quartic is solved with a companion-matrix eigenvalue routine, not
    with the factorisation used elsewhere, so the count is an independent
    check. All real q1 are scanned since D is a polynomial.
    """
    n, R, d, h1, h2 = spec.n, spec.R, budget.delta, levels.h1, levels.h2
    k = d * R * n * n
    coeffs = [4 * h1 * h1, 0.0, -k * h2 * h2, 2 * k * R * h2, -k * R * R]
    if coeffs[0] == 0:
        coeffs = coeffs[2:]
    raw = np.roots(coeffs)
    scale = max(1.0, np.max(np.abs(raw))) if raw.size else 1.0
    real = np.sort(raw[np.abs(raw.imag) <= 1e-9 * scale].real)
    geo = _Geometry(spec, budget, levels)
    probes = []
    if real.size == 0:
        probes = [0.0]
    else:
        span = max(1.0, real[-1] - real[0])
        probes.append(real[0] - span)
        probes.extend(0.5 * (real[:-1] + real[1:]))
        probes.append(real[-1] + span)
    signs = [geo.D(x) > 0 for x in probes]
    count = 0
    prev = False
    for s in signs:
        if s and not prev:
            count += 1
        prev = s
    return count


def is_degenerate_levels(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels, rel: float = 1e-9) -> bool:
    """Levels on (or numerically at) the bifurcation set, or with h1 = 0."""
    if levels.h1 == 0:
        return True
    a = levels.h2 ** 4 * budget.delta * spec.n ** 2
    b = 64 * spec.R * levels.h1 ** 2
    return abs(a - b) <= rel * max(a, b)


def component_count(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels) -> int:
    """Connected components of M: 3 iff h2^4 delta n^2 - 64 R h1^2 >= 0, else 2.

    Away from the bifurcation set the answer is cross-checked against direct
    interval counting of D > 0.
    """
    if levels.h1 == 0 and levels.h2 == 0:
        raise DomainError("levels (0, 0) are excluded")
    formula = sign_test_component_count(spec, budget, levels)
    if not is_degenerate_levels(spec, budget, levels):
        counted = root_interval_count(spec, budget, levels)
        if counted != formula:
            raise NumericalInconsistencyError(
                f"component formula gives {formula} but D has {counted} positive intervals "
                f"for levels {levels}")
    return formula


def component_report(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels) -> dict:
    return {
        "levels": levels.to_json(),
        "roots": singular_set(spec, budget, levels),
        "components": component_count(spec, budget, levels),
    }


def chart_for(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels, q1: float,
              branch: int = 1) -> ComponentChart:
    return _Geometry(spec, budget, levels).chart(q1, branch)


def lambda_on_M(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels,
                q1: float, q2: float, branch: int) -> tuple[float, float]:
    """Costates of the point of M above (q1, q2) on the given sheet."""
    if not q1 > 0:
        raise DomainError("q1 must be positive")
    geo = _Geometry(spec, budget, levels)
    D = geo.D(q1)
    scale = geo.K * (4 * geo.h1 ** 2 * q1 ** 4 + geo.d * geo.R * geo.n ** 2 * (geo.R + abs(geo.h2) * q1) ** 2)
    if D < -1e-12 * max(1.0, scale):
        raise ChartError(f"D({q1!r}) = {D!r} < 0: point is off the invariant manifold")
    D = max(D, 0.0)
    K = geo.R * geo.n * geo.d
    l1 = (-2 * levels.h2 * K * q2 + branch * math.sqrt(D)) / (2 * K * q1 * q1)
    return l1, levels.h2 / q1


def omega1(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels, q1_ref: Optional[float],
           q1: float, branch: int) -> float:
    """branch * int_{q1_ref}^{q1} 4 h1 x^2 / sqrt(D(x)) dx; ``q1_ref=None`` is the chart reference."""
    geo = _Geometry(spec, budget, levels)
    chart = geo.chart(q1, branch)
    if q1_ref is None:
        q1_ref = chart.reference
    elif not chart.contains(q1_ref):
        raise ChartError(f"q1_ref={q1_ref!r} and q1={q1!r} lie in different D > 0 intervals")
    return branch * (geo.primitive(geo.kernel1, chart, q1) - geo.primitive(geo.kernel1, chart, q1_ref))


def omega2(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels, q1_ref: Optional[float],
           q1: float, q2: float, branch: int) -> float:
    """q2/q1 + branch * int_{q1_ref}^{q1} n^2 R delta (R - h2 x) / (x sqrt(D(x))) dx."""
    geo = _Geometry(spec, budget, levels)
    chart = geo.chart(q1, branch)
    if q1_ref is None:
        q1_ref = chart.reference
    elif not chart.contains(q1_ref):
        raise ChartError(f"q1_ref={q1_ref!r} and q1={q1!r} lie in different D > 0 intervals")
    return q2 / q1 + branch * (geo.primitive(geo.kernel2, chart, q1) - geo.primitive(geo.kernel2, chart, q1_ref))


class AnglePropagation(NamedTuple):
    point: PhasePoint
    branch: int
    flips: int


def propagate_angles(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels,
                     start: PhasePoint, t: float, branch: Optional[int] = None) -> AnglePropagation:
    """Advance ``start`` by time ``t`` using Omega1 = t + alpha1, Omega2 = alpha2.

    Each sheet is traversed by inverting the monotone Omega1(q1) with a
    bracketed root finder; when a turning point (root of D) is reached before
    ``t`` is used up the branch is flipped and the remaining time is spent on
    the other sheet.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    geo = _Geometry(spec, budget, levels)
    s = branch_of(start) if branch is None else branch
    q1c, q2c = start.q1, start.q2
    chart = geo.chart(q1c, s)
    remaining = float(t)
    flips = 0
    k1, k2 = geo.kernel1, geo.kernel2
    while True:
        p0 = geo.primitive(k1, chart, q1c)
        end = chart.hi if s > 0 else chart.lo
        t_end = abs(geo.primitive(k1, chart, end) - p0) if math.isfinite(end) else math.inf
        if remaining <= t_end:
            if remaining == 0.0:
                q1 = q1c
            else:
                g = lambda q: s * (geo.primitive(k1, chart, q) - p0) - remaining
                if s > 0:
                    if math.isfinite(end):
                        a, b = q1c, end
                    else:
                        a, b = q1c, q1c + max(q1c, 1.0)
                        while g(b) < 0:
                            a, b = b, 2 * b
                else:
                    a, b = end, q1c
                q1 = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            q2 = q1 * (q2c / q1c - s * (geo.primitive(k2, chart, q1) - geo.primitive(k2, chart, q1c)))
            break
        q2c = end * (q2c / q1c - s * (geo.primitive(k2, chart, end) - geo.primitive(k2, chart, q1c)))
        q1c = end
        remaining -= t_end
        s = -s
        flips += 1
    l1, l2 = lambda_on_M(spec, budget, levels, q1, q2, s)
    return AnglePropagation(PhasePoint(q1, q2, l1, l2), s, flips)


def solve_by_angles(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels,
                    start: PhasePoint, t: float) -> PhasePoint:
    """Closed-form extremal flow through the angle variables, continued
    automatically across turning points."""
    return propagate_angles(spec, budget, levels, start, t).point


def angles_along(spec: GasSpec, budget: ControlBudget, states, levels: Optional[InvariantLevels] = None):
    """Continuous (Omega1, Omega2) along sampled phase states.

    Branch flips between consecutive samples are unwrapped at the turning
    point in between, so both angles stay continuous across sheets.
    """
    states = np.asarray(states, dtype=float)
    if levels is None:
        levels = InvariantLevels.of(spec, budget, states[0])
    geo = _Geometry(spec, budget, levels)
    s0 = branch_of(states[0])
    chart = geo.chart(states[0, 0], s0)
    off1 = off2 = 0.0
    prev = s0
    w1 = np.empty(len(states))
    w2 = np.empty(len(states))
    for i, x in enumerate(states):
        s = branch_of(x)
        if s != prev:
            r = chart.hi if prev > 0 else chart.lo
            off1 += 2 * prev * geo.primitive(geo.kernel1, chart, r)
            off2 += 2 * prev * geo.primitive(geo.kernel2, chart, r)
            prev = s
        q1 = min(max(x[0], chart.lo), chart.hi)
        w1[i] = s * geo.primitive(geo.kernel1, chart, q1) + off1
        w2[i] = x[1] / x[0] + s * geo.primitive(geo.kernel2, chart, q1) + off2
    return w1, w2


def turning_distance(spec: GasSpec, budget: ControlBudget, levels: InvariantLevels, q1: float) -> float:
    """Distance from q1 to the nearest positive root of D."""
    roots = _Geometry(spec, budget, levels).positive_roots()
    return min((abs(q1 - r) for r in roots), default=math.inf)
