"""Thermodynamic states of gases in specific variables.

Coordinates follow the contact space ``(s, e, v, p, T)`` with structure form
``-ds + de/T + p dv/T``. The quadratic form ``kappa = d(1/T).de + d(p/T).dv``
is negative definite exactly on the applicable (stable) part of a state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError
from .numdiff import central_gradient


class GasKind(str, Enum):
    IDEAL = "ideal"
    VDW = "vdw"
    VIRIAL = "virial1"


@dataclass(frozen=True)
class GasSpec:
    kind: GasKind = GasKind.IDEAL
    n: float = 3.0
    R: float = 1.0
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GasKind(self.kind))
        for name in ("n", "R", "a", "b"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if self.n <= 0 or self.R <= 0:
            raise DomainError("n and R must be positive")
        if self.a < 0 or self.b < 0:
            raise DomainError("a and b must be nonnegative")
        if self.kind is GasKind.IDEAL and (self.a != 0 or self.b != 0):
            raise DomainError("an ideal gas has a = b = 0")

    def virial_a1(self, T: float) -> float:
        """First virial coefficient A1(T) = b - a/(RT)."""
        return self.b - self.a / (self.R * T)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "n": self.n, "R": self.R, "a": self.a, "b": self.b}

    @classmethod
    def from_json(cls, obj: dict) -> "GasSpec":
        unknown = set(obj) - {"kind", "n", "R", "a", "b"}
        if unknown:
            raise DomainError(f"unknown gas keys: {sorted(unknown)}")
        return cls(**obj)


IDEAL = GasSpec()


@dataclass(frozen=True)
class StatePoint:
    e: float
    v: float
    p: float
    T: float
    s: float
    gamma: float


@dataclass(frozen=True)
class QuadraticForm2:
    matrix: tuple
    chart: str  # "ev" or "Tv"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise DomainError("quadratic form must be 2x2")
        if abs(m[0, 1] - m[1, 0]) > 1e-14 * max(1.0, np.abs(m).max()):
            raise DomainError("quadratic form must be symmetric")
        if self.chart not in ("ev", "Tv"):
            raise DomainError(f"unknown chart {self.chart!r}")
        object.__setattr__(self, "matrix", tuple(map(tuple, m.tolist())))

    def array(self) -> np.ndarray:
        return np.array(self.matrix)

    def is_negative_definite(self) -> bool:
        m = self.array()
        return bool(m[0, 0] < 0 and np.linalg.det(m) > 0)

    def __call__(self, x, y) -> float:
        return float(np.asarray(x) @ self.array() @ np.asarray(y))


@dataclass(frozen=True)
class TangentField:
    coeff_e: float
    coeff_v: float

    def __post_init__(self):
        if not (math.isfinite(self.coeff_e) and math.isfinite(self.coeff_v)):
            raise DomainError("tangent field components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.coeff_e, self.coeff_v])


def _require(spec: GasSpec, *kinds: GasKind):
    if spec.kind not in kinds:
        raise DomainError(f"operation requires kind in {[k.value for k in kinds]}, got {spec.kind.value}")


def _positive(**vals):
    for name, val in vals.items():
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val!r}")


def state_ideal(spec: GasSpec, e: float, v: float) -> StatePoint:
    _require(spec, GasKind.IDEAL)
    _positive(e=e, v=v)
    n, R = spec.n, spec.R
    T = 2.0 * e / (n * R)
    p = R * T / v
    s = R * (0.5 * n * math.log(e) + math.log(v))
    return StatePoint(e, v, p, T, s, e - T * s + p * v)


def state_vdw(spec: GasSpec, T: float, v: float) -> StatePoint:
    _require(spec, GasKind.VDW, GasKind.IDEAL)
    _positive(T=T, v=v)
    n, R, a, b = spec.n, spec.R, spec.a, spec.b
    if v <= b:
        raise DomainError(f"specific volume {v} must exceed the covolume {b}")
    p = R * T / (v - b) - a / v ** 2
    e = 0.5 * n * R * T - a / v
    s = R * (0.5 * n * math.log(T) + math.log(v - b))
    return StatePoint(e, v, p, T, s, e - T * s + p * v)


def state_virial(spec: GasSpec, T: float, v: float) -> StatePoint:
    """First-order virial state from phi = ln v + (n/2) ln T - A1(T)/v.

    Entropy uses the same additive convention as the van der Waals model,
    ``s = R ln(T^{n/2} v) - R b / v``.
    """
    _require(spec, GasKind.VIRIAL, GasKind.IDEAL)
    _positive(T=T, v=v)
    n, R, a, b = spec.n, spec.R, spec.a, spec.b
    p = R * T / v + (R * T * b - a) / v ** 2
    e = 0.5 * n * R * T - a / v
    s = R * (0.5 * n * math.log(T) + math.log(v) - b / v)
    return StatePoint(e, v, p, T, s, e - T * s + p * v)


def temperature(spec: GasSpec, e: float, v: float) -> float:
    """Temperature from (e, v); all three models share e = nRT/2 - a/v."""
    _positive(e=e, v=v)
    return 2.0 * (e + spec.a / v) / (spec.n * spec.R)


def pressure(spec: GasSpec, e: float, v: float) -> float:
    T = temperature(spec, e, v)
    R, a, b = spec.R, spec.a, spec.b
    if spec.kind is GasKind.VDW:
        if v <= b:
            raise DomainError("v must exceed b")
        return R * T / (v - b) - a / v ** 2
    return R * T / v + (R * T * b - a) / v ** 2


def state_from_ev(spec: GasSpec, e: float, v: float) -> StatePoint:
    if spec.kind is GasKind.IDEAL:
        return state_ideal(spec, e, v)
    T = temperature(spec, e, v)
    if spec.kind is GasKind.VDW:
        return state_vdw(spec, T, v)
    return state_virial(spec, T, v)


# ---------------------------------------------------------------- kappa

def kappa_ideal(spec: GasSpec, e: float, v: float) -> QuadraticForm2:
    _require(spec, GasKind.IDEAL)
    _positive(e=e, v=v)
    n, R = spec.n, spec.R
    return QuadraticForm2(((-n * R / (2 * e * e), 0.0), (0.0, -R / (v * v))), "ev")


def kappa_vdw(spec: GasSpec, T: float, v: float) -> QuadraticForm2:
    _require(spec, GasKind.VDW, GasKind.IDEAL)
    _positive(T=T, v=v)
    n, R, a, b = spec.n, spec.R, spec.a, spec.b
    if v <= b:
        raise DomainError(f"specific volume {v} must exceed the covolume {b}")
    tt = -R * n / (2 * T * T)
    vv = -(v ** 3 * R * T - 2 * a * (v - b) ** 2) / (v ** 3 * T * (v - b) ** 2)
    return QuadraticForm2(((tt, 0.0), (0.0, vv)), "Tv")


def vdw_spinodal_temperature(spec: GasSpec, v: float) -> float:
    """Boundary of the applicable domain, T = 2a(v-b)^2/(R v^3)."""
    return 2 * spec.a * (v - spec.b) ** 2 / (spec.R * v ** 3)


# ------------------------------------------------------- Massieu-Planck

@dataclass(frozen=True)
class Potential:
    """Massieu-Planck potential phi(v, T) with optional analytic derivatives.

    Missing derivatives fall back to central differences.
    """
    phi: Callable[[float, float], float]
    dv: Optional[Callable[[float, float], float]] = None
    dT: Optional[Callable[[float, float], float]] = None
    dvv: Optional[Callable[[float, float], float]] = None
    dTT: Optional[Callable[[float, float], float]] = None

    def _d1(self, v, T, which):
        fn = self.dv if which == 0 else self.dT
        if fn is not None:
            return fn(v, T)
        g = central_gradient(lambda x: self.phi(x[0], x[1]), [v, T])
        return g[which]

    def _d2(self, v, T, which):
        fn = self.dvv if which == 0 else self.dTT
        if fn is not None:
            return fn(v, T)
        x = np.array([v, T], dtype=float)
        h = 1e-4 * max(1.0, abs(x[which]))
        xp, xm = x.copy(), x.copy()
        xp[which] += h
        xm[which] -= h
        return (self._d1(*xp, which) - self._d1(*xm, which)) / (2 * h)

    def phi_v(self, v, T):
        return self._d1(v, T, 0)

    def phi_T(self, v, T):
        return self._d1(v, T, 1)

    def phi_vv(self, v, T):
        return self._d2(v, T, 0)

    def phi_TT(self, v, T):
        return self._d2(v, T, 1)


def potential_for(spec: GasSpec) -> Potential:
    """Analytic Massieu-Planck potential of each model."""
    n, R, a, b = spec.n, spec.R, spec.a, spec.b
    if spec.kind is GasKind.VDW:
        return Potential(
            phi=lambda v, T: math.log(v - b) + 0.5 * n * math.log(T) + a / (R * T * v),
            dv=lambda v, T: 1 / (v - b) - a / (R * T * v * v),
            dT=lambda v, T: 0.5 * n / T - a / (R * T * T * v),
            dvv=lambda v, T: -1 / (v - b) ** 2 + 2 * a / (R * T * v ** 3),
            dTT=lambda v, T: -0.5 * n / T ** 2 + 2 * a / (R * T ** 3 * v),
        )
    # ideal is the a = b = 0 case of the truncated virial potential
    return Potential(
        phi=lambda v, T: math.log(v) + 0.5 * n * math.log(T) - (b - a / (R * T)) / v,
        dv=lambda v, T: 1 / v + (b - a / (R * T)) / v ** 2,
        dT=lambda v, T: 0.5 * n / T - a / (R * T * T * v),
        dvv=lambda v, T: -1 / v ** 2 - 2 * (b - a / (R * T)) / v ** 3,
        dTT=lambda v, T: -0.5 * n / T ** 2 + 2 * a / (R * T ** 3 * v),
    )


@dataclass(frozen=True)
class MassieuPlanckResult:
    p: float
    e: float
    energy_condition: float  # phi_TT + 2 phi_T / T, must be > 0
    volume_condition: float  # phi_vv, must be < 0

    @property
    def applicable(self) -> bool:
        return self.energy_condition > 0 and self.volume_condition < 0


def massieu_planck_eval(phi: Potential, spec: GasSpec, v: float, T: float) -> MassieuPlanckResult:
    """p = RT phi_v, e = RT^2 phi_T, plus both applicability inequalities."""
    _positive(T=T, v=v)
    R = spec.R
    return MassieuPlanckResult(
        p=R * T * phi.phi_v(v, T),
        e=R * T * T * phi.phi_T(v, T),
        energy_condition=phi.phi_TT(v, T) + 2 * phi.phi_T(v, T) / T,
        volume_condition=phi.phi_vv(v, T),
    )


def kappa_massieu(phi: Potential, spec: GasSpec, v: float, T: float) -> QuadraticForm2:
    """kappa in chart (T, v): R(-(phi_TT + 2 phi_T/T) dT^2 + phi_vv dv^2)."""
    r = massieu_planck_eval(phi, spec, v, T)
    return QuadraticForm2(((-spec.R * r.energy_condition, 0.0), (0.0, spec.R * r.volume_condition)), "Tv")


def applicability(spec: GasSpec, point: StatePoint) -> bool:
    """Strict negative definiteness of kappa at ``point``."""
    if spec.kind is GasKind.IDEAL:
        form = kappa_ideal(spec, point.e, point.v)
    elif spec.kind is GasKind.VDW:
        if point.v <= spec.b or point.T <= 0:
            return False
        form = kappa_vdw(spec, point.T, point.v)
    else:
        form = kappa_massieu(potential_for(spec), spec, point.v, point.T)
    return form.is_negative_definite()


# --------------------------------------------------- brackets and fields

def _grad(f, x, grad):
    if grad is None:
        grad = getattr(f, "gradient", None)
    if grad is not None:
        return np.asarray(grad(*x), dtype=float)
    return central_gradient(lambda y: f(*y), x)


def poisson_bracket_thermo(f, g, point4: Sequence[float], grad_f=None, grad_g=None) -> float:
    """Bracket of two functions of (e, v, p, T) for omega = d(1/T)^de + d(p/T)^dv.

    Gradients are ``grad(e, v, p, T) -> (f_e, f_v, f_p, f_T)``; when absent,
    central differences with step ``1e-6 * max(1, |x|)`` are used.
    """
    x = np.asarray(point4, dtype=float)
    _, _, p, T = x
    fe, fv, fp, fT = _grad(f, x, grad_f)
    ge, gv, gp, gT = _grad(g, x, grad_g)
    return 0.5 * (p * T * (fp * ge - fe * gp) + T * T * (fT * ge - fe * gT) + T * (fv * gp - fp * gv))


def contact_field(f, point5: Sequence[float], grad=None) -> np.ndarray:
    """Contact vector field X_f at ``point5 = (s, e, v, p, T)``.

    Returned components are in the same (s, e, v, p, T) order. ``grad``
    takes the five coordinates and returns the five partials.
    """
    x = np.asarray(point5, dtype=float)
    s, e, v, p, T = x
    fs, fe, fv, fp, fT = _grad(f, x, grad)
    fval = f(*x)
    return np.array([
        fval + T * fT,               # d/ds
        T * (p * fp + T * fT),       # d/de
        -T * fp,                     # d/dv
        T * (fv - p * fe),           # d/dp
        -T * (fs + T * fe),          # d/dT
    ])


def process_fields(spec: GasSpec, e: float, v: float):
    """Basis fields (Y1, Y2) of admissible processes in chart (e, v).

    Real gases (``vdw`` and ``virial1``) use the first-order virial fields,
    which depend on the interaction constant ``a`` only.
    """
    _positive(e=e, v=v)
    n, R, a = spec.n, spec.R, spec.a
    if spec.kind is GasKind.IDEAL:
        return (TangentField(0.0, -2 * e * v / (n * R)),
                TangentField(-2 * e * e / (n * R), 0.0))
    w = e * v + a
    return (TangentField(-2 * a * w / (R * v * v * n), -2 * w / (R * n)),
            TangentField(-2 * w * w / (n * R * v * v), 0.0))
