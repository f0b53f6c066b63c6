"""Pontryagin Hamiltonian of the work-maximisation problem for ideal gases.

Phase coordinates are ``q1 = nR/(2e)``, ``q2 = -q1 ln v`` and their costates
``l1, l2``. In these coordinates ``Y1 = d/dq2`` and ``Y2 = d/dq1 + (q2/q1) d/dq2``
and the admissible controls form the fixed ellipse
``4 u1^2/(n^2 R) + 2 u2^2/(nR) <= delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, NumericalInconsistencyError
from .gas import GasSpec


@dataclass(frozen=True)
class ControlBudget:
    delta: float = 1.0

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError("delta must be a positive finite number")


@dataclass(frozen=True)
class ControlVector:
    u1: float
    u2: float


@dataclass(frozen=True)
class PhasePoint:
    q1: float
    q2: float
    l1: float
    l2: float

    def __post_init__(self):
        if not self.q1 > 0:
            raise DomainError(f"q1 must be positive, got {self.q1!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2, self.l1, self.l2])

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


def to_q(spec: GasSpec, e: float, v: float) -> tuple[float, float]:
    if not (e > 0 and v > 0):
        raise DomainError("e and v must be positive")
    q1 = spec.n * spec.R / (2.0 * e)
    return q1, -q1 * math.log(v)


def from_q(spec: GasSpec, q1: float, q2: float) -> tuple[float, float]:
    if not q1 > 0:
        raise DomainError("q1 must be positive")
    return spec.n * spec.R / (2.0 * q1), math.exp(-q2 / q1)


def constraint_value(spec: GasSpec, u: ControlVector) -> float:
    """Relative-variance functional 4u1^2/(n^2 R) + 2u2^2/(nR)."""
    n, R = spec.n, spec.R
    return 4 * u.u1 ** 2 / (n * n * R) + 2 * u.u2 ** 2 / (n * R)


def control_on_boundary(spec: GasSpec, budget: ControlBudget, tau: float) -> ControlVector:
    n, R, d = spec.n, spec.R, budget.delta
    return ControlVector(0.5 * n * math.sqrt(R * d) * math.cos(tau),
                         math.sqrt(0.5 * n * R * d) * math.sin(tau))


def pontryagin_hamiltonian(spec: GasSpec, budget: ControlBudget, p: PhasePoint, u: ControlVector) -> float:
    """H = -R u1/q1^2 + l1 u2 + l2 (q2 u2/q1 + u1)."""
    R = spec.R
    return -R * u.u1 / p.q1 ** 2 + p.l1 * u.u2 + p.l2 * (p.q2 * u.u2 / p.q1 + u.u1)


def _boundary_coefficients(spec: GasSpec, budget: ControlBudget, p: PhasePoint):
    # H(tau) = (A sin tau + B cos tau) / (2 q1^2)
    n, R, d = spec.n, spec.R, budget.delta
    A = math.sqrt(2 * n * R * d) * p.q1 * (p.q1 * p.l1 + p.q2 * p.l2)
    B = math.sqrt(R * d) * n * (p.q1 ** 2 * p.l2 - R)
    return A, B


def boundary_hamiltonian(spec: GasSpec, budget: ControlBudget, p: PhasePoint, tau) -> np.ndarray | float:
    """Hamiltonian restricted to the ellipse boundary, as a function of tau."""
    A, B = _boundary_coefficients(spec, budget, p)
    return (A * np.sin(tau) + B * np.cos(tau)) / (2 * p.q1 ** 2)


class TauStar(NamedTuple):
    tau: float
    degenerate: bool


def tau_star(spec: GasSpec, budget: ControlBudget, p: PhasePoint) -> TauStar:
    """Maximising boundary parameter.

    The critical points are ``pi(2k+1) - arctan(...)``; of the two distinct
    ones modulo 2 pi the one with the larger Hamiltonian is returned, in
    ``(-pi, pi]``. ``degenerate`` is set when the Hamiltonian does not depend
    on tau (both coefficients vanish); tau is then 0.
    """
    A, B = _boundary_coefficients(spec, budget, p)
    scale = max(1.0, abs(A), abs(B))
    if abs(A) <= 1e-15 * scale and abs(B) <= 1e-15 * scale:
        return TauStar(0.0, True)
    # arctan argument: sqrt(2) q1 (q1 l1 + q2 l2) / (sqrt(n)(R - q1^2 l2)) = -A/B
    if B == 0.0:
        candidates = (math.pi / 2, -math.pi / 2)
    else:
        base = math.pi - math.atan(-A / B)
        candidates = (base, base - math.pi)
    values = [boundary_hamiltonian(spec, budget, p, c) for c in candidates]
    tau = candidates[int(np.argmax(values))]
    tau = math.remainder(tau, 2 * math.pi)
    if tau == -math.pi:
        tau = math.pi
    return TauStar(tau, False)


def optimal_control(spec: GasSpec, budget: ControlBudget, p: PhasePoint) -> ControlVector:
    return control_on_boundary(spec, budget, tau_star(spec, budget, p).tau)


def _radicand(n, R, q1, q2, l1, l2):
    return (n * q1 ** 4 * l2 ** 2 + 2 * q1 ** 4 * l1 ** 2 + 4 * q1 ** 3 * q2 * l1 * l2
            + 2 * q1 ** 2 * q2 ** 2 * l2 ** 2 - 2 * R * n * q1 ** 2 * l2 + R * R * n)


def reduced_hamiltonian(spec: GasSpec, budget: ControlBudget, p: PhasePoint) -> float:
    """Maximum of the Pontryagin Hamiltonian over the admissible ellipse."""
    return reduced_hamiltonian_array(spec, budget, p.as_array())


def reduced_hamiltonian_array(spec: GasSpec, budget: ControlBudget, x) -> float:
    q1, q2, l1, l2 = x
    n, R, d = spec.n, spec.R, budget.delta
    P = _radicand(n, R, q1, q2, l1, l2)
    scale = R * R * n + n * q1 ** 4 * l2 ** 2 + 2 * q1 ** 4 * l1 ** 2 + 2 * q1 ** 2 * q2 ** 2 * l2 ** 2
    if P < 0:
        if P < -1e-12 * scale:
            raise NumericalInconsistencyError(f"negative radicand {P!r} in reduced Hamiltonian")
        P = 0.0
    return math.sqrt(n * R * d * P) / (2 * q1 * q1)


def reduced_hamiltonian_gradient(spec: GasSpec, budget: ControlBudget, x) -> np.ndarray:
    """Analytic gradient with respect to (q1, q2, l1, l2)."""
    q1, q2, l1, l2 = x
    n, R, d = spec.n, spec.R, budget.delta
    P = _radicand(n, R, q1, q2, l1, l2)
    S = math.sqrt(n * R * d * P)
    H = S / (2 * q1 * q1)
    dP = np.array([
        4 * n * q1 ** 3 * l2 ** 2 + 8 * q1 ** 3 * l1 ** 2 + 12 * q1 ** 2 * q2 * l1 * l2
        + 4 * q1 * q2 ** 2 * l2 ** 2 - 4 * R * n * q1 * l2,
        4 * q1 ** 3 * l1 * l2 + 4 * q1 ** 2 * q2 * l2 ** 2,
        4 * q1 ** 4 * l1 + 4 * q1 ** 3 * q2 * l2,
        2 * n * q1 ** 4 * l2 + 4 * q1 ** 3 * q2 * l1 + 4 * q1 ** 2 * q2 ** 2 * l2 - 2 * R * n * q1 ** 2,
    ])
    g = n * R * d * dP / (2 * S) / (2 * q1 * q1)
    g[0] -= 2 * H / q1
    return g


class ReducedHamiltonian:
    """Callable ``H(x)`` on phase arrays ``x = (q1, q2, l1, l2)`` with an
    analytic ``gradient``; the form consumed by the flow integrator."""

    def __init__(self, spec: GasSpec, budget: ControlBudget):
        self.spec = spec
        self.budget = budget

    def __call__(self, x) -> float:
        return reduced_hamiltonian_array(self.spec, self.budget, x)

    def gradient(self, x) -> np.ndarray:
        return reduced_hamiltonian_gradient(self.spec, self.budget, x)


# ----------------------------------------------- chart (e, v) counterpart

def work_form_ev(spec: GasSpec, e: float, u: ControlVector) -> float:
    """alpha(Y) = p dv(Y) on the ideal manifold: -(4 e^2/(n^2 R)) u1."""
    return -4 * e * e / (spec.n ** 2 * spec.R) * u.u1


def costates_to_ev(spec: GasSpec, p: PhasePoint) -> tuple[float, float]:
    """Pull costates back to chart (e, v) contragradiently: l_x = (dq/dx)^T l_q."""
    e, v = from_q(spec, p.q1, p.q2)
    dq1_de = -spec.n * spec.R / (2 * e * e)
    dq2_de = -math.log(v) * dq1_de
    dq2_dv = -p.q1 / v
    return p.l1 * dq1_de + p.l2 * dq2_de, p.l2 * dq2_dv


def hamiltonian_ev(spec: GasSpec, e: float, v: float, le: float, lv: float, u: ControlVector) -> float:
    """alpha(Y) + le Y^e + lv Y^v with the ideal-gas fields in chart (e, v)."""
    n, R = spec.n, spec.R
    y_e = -2 * e * e / (n * R) * u.u2
    y_v = -2 * e * v / (n * R) * u.u1
    return work_form_ev(spec, e, u) + le * y_e + lv * y_v
