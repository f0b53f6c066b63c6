"""Canonical flow of the reduced Hamiltonian, work accounting and shooting."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45

from .control import (ControlBudget, PhasePoint, ReducedHamiltonian, from_q,
                      optimal_control, to_q)
from .errors import ConvergenceError, DomainError, UnreachableError
from .gas import GasSpec, applicability, pressure, state_from_ev
from .numdiff import gradient_of

log = logging.getLogger(__name__)

MAX_RHS_EVALS = 200_000     # work cap per integration
ESCAPE_NORM = 1e12          # states beyond this are treated as blow-up
Q1_COLLAPSE = 1e-8          # relative floor for q1 (e -> infinity)

DEFAULT_FLOW_TOL = 1e-10
DEFAULT_SHOOT_TOL = 1e-8
DEFAULT_SAMPLES = 1001
CSV_HEADER = ("t", "q1", "q2", "l1", "l2", "e", "v", "H", "G", "J_cum")


def integral_G(point) -> float:
    """Second integral G = q1 * l2."""
    if isinstance(point, PhasePoint):
        return point.q1 * point.l2
    return float(point[0] * point[3])


integral_G.gradient = lambda x: np.array([x[3], 0.0, 0.0, x[0]])


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (N, 4): q1, q2, l1, l2
    hamiltonian: np.ndarray     # H along the samples
    h_drift: float
    g_drift: float
    truncated: bool = False
    work: Optional[np.ndarray] = None       # cumulative J per sample
    controls: Optional[np.ndarray] = None   # (N, 2): u1, u2

    def __post_init__(self):
        t = np.asarray(self.times)
        if t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise DomainError("trajectory times must start at 0 and increase strictly")
        if not (math.isfinite(self.h_drift) and math.isfinite(self.g_drift)):
            raise DomainError("drift diagnostics must be finite")

    def __len__(self) -> int:
        return len(self.times)

    def point(self, i: int) -> PhasePoint:
        return PhasePoint.from_array(self.states[i])

    @property
    def G(self) -> np.ndarray:
        return self.states[:, 0] * self.states[:, 3]

    @property
    def end(self) -> PhasePoint:
        return self.point(-1)

    def to_csv(self, path, spec: GasSpec) -> None:
        """One row per sample, header ``t,q1,q2,l1,l2,e,v,H,G,J_cum``."""
        work = self.work if self.work is not None else cumulative_work(spec, self)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for t, x, H, J in zip(self.times, self.states, self.hamiltonian, work):
                e, v = from_q(spec, x[0], x[1])
                row = (t, *x, e, v, H, x[0] * x[3], J)
                w.writerow([_fmt(float(c)) for c in row])


def _fmt(x: float) -> str:
    # repr is the shortest round-trip form, never more than 17 significant digits
    return repr(x)


def _relative_drift(values: np.ndarray, floor: float) -> float:
    ref = values[0]
    return float(np.max(np.abs(values - ref)) / max(abs(ref), floor))


def _vector_field(hamiltonian, gradient, sign: float):
    def rhs(_t, x):
        g = gradient_of(hamiltonian, x, gradient)
        return sign * np.array([g[2], g[3], -g[0], -g[1]])
    return rhs


def _integrate(rhs, x0: np.ndarray, t_end: float, tol: float, t_eval: np.ndarray):
    """Dormand-Prince 5(4) with dense output at ``t_eval``.

    Stops early (returning the samples reached) when the step size
    underflows, the evaluation budget is spent, q1 collapses towards zero or
    the state blows up. Returns ``(times, states, message)``; ``message`` is
    None on a complete run.
    """
    solver = RK45(rhs, 0.0, x0, t_end, rtol=tol, atol=tol)
    q1_floor = Q1_COLLAPSE * x0[0]
    out_t, out_x = [], []
    k = 0
    while k < len(t_eval) and t_eval[k] <= 0.0:
        out_t.append(t_eval[k])
        out_x.append(x0.copy())
        k += 1
    message = None
    while k < len(t_eval):
        if solver.status != "running":
            message = solver.status
            break
        if solver.nfev > MAX_RHS_EVALS:
            message = f"evaluation budget of {MAX_RHS_EVALS} exhausted"
            break
        msg = solver.step()
        if solver.status == "failed":
            message = msg or "step size underflow"
            break
        y = solver.y
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > ESCAPE_NORM or y[0] <= q1_floor:
            message = "trajectory left the regular region (q1 -> 0 or blow-up)"
            break
        dense = solver.dense_output()
        while k < len(t_eval) and t_eval[k] <= solver.t:
            out_t.append(t_eval[k])
            out_x.append(dense(t_eval[k]))
            k += 1
    return np.array(out_t), np.array(out_x).reshape(-1, x0.size), message


def flow(hamiltonian: Callable, start, t0: float, tol: float = DEFAULT_FLOW_TOL,
         gradient: Optional[Callable] = None, t_eval: Optional[Sequence[float]] = None,
         n_samples: int = DEFAULT_SAMPLES, backward: bool = False) -> Trajectory:
    """Integrate ``q' = dH/dl, l' = -dH/dq`` from ``start`` over ``[0, t0]``.

    Dormand-Prince 5(4) with ``rtol = atol = tol`` and dense output at the
    sample times (``n_samples`` uniform points unless ``t_eval`` is given).
    ``backward=True`` integrates the reversed field. Gradients come from
    ``gradient``, ``hamiltonian.gradient`` or central differences. If the
    step size collapses the samples reached so far are returned with
    ``truncated=True``.
    """
    if not t0 > 0:
        raise DomainError("t0 must be positive")
    if not tol > 0:
        raise DomainError("tol must be positive")
    x0 = start.as_array() if isinstance(start, PhasePoint) else np.asarray(start, dtype=float)
    if t_eval is None:
        t_eval = np.linspace(0.0, t0, max(int(n_samples), 2))
    t_eval = np.asarray(t_eval, dtype=float)
    rhs = _vector_field(hamiltonian, gradient, -1.0 if backward else 1.0)
    try:
        times, states, message = _integrate(rhs, x0, t0, tol, t_eval)
    except (ArithmeticError, DomainError) as exc:
        times, states, message = np.array([0.0]), x0[None, :], str(exc)
    truncated = message is not None
    if truncated:
        log.warning("flow truncated at t=%.6g: %s", times[-1] if times.size else 0.0, message)
    if times.size == 0:
        times, states = np.array([0.0]), x0[None, :]
    # a constant Hamiltonian leaves the start point frozen bit-for-bit
    H = np.array([hamiltonian(x) for x in states])
    G = states[:, 0] * states[:, 3]
    return Trajectory(
        times=times, states=states, hamiltonian=H,
        h_drift=_relative_drift(H, 1e-300), g_drift=_relative_drift(G, 1.0),
        truncated=truncated,
    )


def canonical_bracket(F, G, point, grad_F=None, grad_G=None) -> float:
    """[F, G] = sum_i dF/dq_i dG/dl_i - dF/dl_i dG/dq_i."""
    x = point.as_array() if isinstance(point, PhasePoint) else np.asarray(point, dtype=float)
    gf = gradient_of(F, x, grad_F)
    gg = gradient_of(G, x, grad_G)
    return float(gf[0] * gg[2] + gf[1] * gg[3] - gf[2] * gg[0] - gf[3] * gg[1])


# ---------------------------------------------------------------- work

def _stieltjes_interval(t, P, V, nodes, lo, hi):
    """Integral of P dV over [t[lo], t[hi]] with both P and V replaced by the
    quadratic through ``nodes``; two-point Gauss is exact for the product."""
    ta, tb, tc = t[nodes]
    mid = 0.5 * (t[lo] + t[hi])
    half = 0.5 * (t[hi] - t[lo])
    total = 0.0
    for g in (mid - half / math.sqrt(3.0), mid + half / math.sqrt(3.0)):
        la = (g - tb) * (g - tc) / ((ta - tb) * (ta - tc))
        lb = (g - ta) * (g - tc) / ((tb - ta) * (tb - tc))
        lc = (g - ta) * (g - tb) / ((tc - ta) * (tc - tb))
        da = (2 * g - tb - tc) / ((ta - tb) * (ta - tc))
        db = (2 * g - ta - tc) / ((tb - ta) * (tb - tc))
        dc = (2 * g - ta - tb) / ((tc - ta) * (tc - tb))
        Pa, Pb, Pc = P[nodes]
        Va, Vb, Vc = V[nodes]
        total += (la * Pa + lb * Pb + lc * Pc) * (da * Va + db * Vb + dc * Vc)
    return total * half


def cumulative_work(spec: GasSpec, traj: Trajectory) -> np.ndarray:
    """Running J = int p dv over the (e, v) image of the samples.

    Composite Simpson-type rule for a Stieltjes integral: on each panel of
    three consecutive samples p and v are interpolated by quadratics in t.
    """
    N = len(traj)
    if N < 3:
        raise DomainError("work quadrature needs at least 3 samples")
    t = np.asarray(traj.times, dtype=float)
    ev = np.array([from_q(spec, x[0], x[1]) for x in traj.states])
    P = np.array([pressure(spec, e, v) for e, v in ev])
    V = ev[:, 1]
    J = np.zeros(N)
    i = 0
    while i + 2 < N:
        nodes = np.array([i, i + 1, i + 2])
        J[i + 1] = J[i] + _stieltjes_interval(t, P, V, nodes, i, i + 1)
        J[i + 2] = J[i + 1] + _stieltjes_interval(t, P, V, nodes, i + 1, i + 2)
        i += 2
    if i + 1 < N:
        nodes = np.array([N - 3, N - 2, N - 1])
        J[N - 1] = J[N - 2] + _stieltjes_interval(t, P, V, nodes, N - 2, N - 1)
    return J


def work_functional(spec: GasSpec, traj: Trajectory) -> float:
    """Total work J = int p dv of the gas along the trajectory."""
    return float(cumulative_work(spec, traj)[-1])


def control_history(spec: GasSpec, budget: ControlBudget, traj: Trajectory) -> np.ndarray:
    """Maximum-principle control (u1, u2) at every sample."""
    out = np.empty((len(traj), 2))
    for i, x in enumerate(traj.states):
        u = optimal_control(spec, budget, PhasePoint.from_array(x))
        out[i] = (u.u1, u.u2)
    return out


def extremal(spec: GasSpec, budget: ControlBudget, start: PhasePoint, t0: float,
             tol: float = DEFAULT_FLOW_TOL, n_samples: int = DEFAULT_SAMPLES) -> Trajectory:
    """Flow of the reduced Hamiltonian with work and controls attached."""
    traj = flow(ReducedHamiltonian(spec, budget), start, t0, tol=tol, n_samples=n_samples)
    return replace(traj, work=cumulative_work(spec, traj), controls=control_history(spec, budget, traj))


# ------------------------------------------------------------ shooting

@dataclass(frozen=True)
class ShootingProblem:
    x_start: tuple
    x_end: tuple
    t0: float
    spec: GasSpec
    budget: ControlBudget = field(default_factory=ControlBudget)

    def __post_init__(self):
        if not self.t0 > 0:
            raise DomainError("t0 must be positive")
        for name in ("x_start", "x_end"):
            e, v = getattr(self, name)
            if not applicability(self.spec, state_from_ev(self.spec, e, v)):
                raise DomainError(f"{name}={getattr(self, name)} is outside the applicable domain")


@dataclass(frozen=True)
class ShootingResult:
    lambda0: tuple
    trajectory: Trajectory
    residual: float
    work: float
    solutions: tuple = ()     # every converged (lambda0, J) found
    multiple: bool = False
    start_index: int = -1     # -1: Newton from the origin; otherwise grid index

    def __iter__(self):
        # unpacks as (lambda0, trajectory)
        return iter((self.lambda0, self.trajectory))


def _endpoint(problem: ShootingProblem, lam, tol):
    q1, q2 = to_q(problem.spec, *problem.x_start)
    H = ReducedHamiltonian(problem.spec, problem.budget)
    rhs = _vector_field(H, None, 1.0)
    x0 = np.array([q1, q2, lam[0], lam[1]], dtype=float)
    with np.errstate(all="ignore"):
        try:
            times, states, message = _integrate(rhs, x0, problem.t0, tol, np.array([problem.t0]))
        except (ArithmeticError, ValueError, DomainError):
            return None
    if message is not None or times.size == 0:
        return None
    return states[-1]


def _residual(problem: ShootingProblem, lam, tol):
    x = _endpoint(problem, lam, tol)
    if x is None:
        return None
    try:
        e, v = from_q(problem.spec, x[0], x[1])
    except (DomainError, OverflowError):
        return None
    e2, v2 = problem.x_end
    return np.array([(e - e2) / e2, (v - v2) / v2])


def _newton(problem: ShootingProblem, lam0, tol, flow_tol, max_iter=40):
    lam = np.asarray(lam0, dtype=float)
    r = _residual(problem, lam, flow_tol)
    if r is None:
        return None
    for _ in range(max_iter):
        norm = np.max(np.abs(r))
        if norm <= tol:
            return lam, norm
        J = np.empty((2, 2))
        for j in range(2):
            h = 1e-6 * (1 + abs(lam[j]))
            lp = lam.copy()
            lp[j] += h
            rp = _residual(problem, lp, flow_tol)
            if rp is None:
                return None
            J[:, j] = (rp - r) / h
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-4:
            cand = _residual(problem, lam + t * step, flow_tol)
            if cand is not None and np.max(np.abs(cand)) < norm:
                lam, r = lam + t * step, cand
                break
            t *= 0.5
        else:
            return None
    norm = np.max(np.abs(r))
    return (lam, norm) if norm <= tol else None


def shoot(problem: ShootingProblem, tol: float = DEFAULT_SHOOT_TOL, flow_tol: float = DEFAULT_FLOW_TOL,
          exhaustive: bool = False, grid_size: int = 11, grid_radius: float = 5.0,
          n_samples: int = DEFAULT_SAMPLES) -> ShootingResult:
    """Find initial costates whose extremal reaches ``x_end`` at ``t0``.

    Damped Newton on the endpoint map (relative residual in e and v) with a
    forward-difference Jacobian, started at the origin. If that fails, the
    ``grid_size x grid_size`` grid over ``[-grid_radius, grid_radius]^2`` is
    tried in row-major order and the first converged start wins. With
    ``exhaustive=True`` every grid start is run and the converged solution of
    maximal work is returned, with ``multiple`` flagging distinct solutions.

    Raises
    ------
    UnreachableError
        When no start converges.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    found = []
    res = _newton(problem, (0.0, 0.0), tol, flow_tol)
    if res is not None:
        found.append((-1, res))
    if exhaustive or not found:
        axis = np.linspace(-grid_radius, grid_radius, grid_size)
        for idx, (l1, l2) in enumerate((a, b) for a in axis for b in axis):
            res = _newton(problem, (l1, l2), tol, flow_tol)
            if res is not None:
                found.append((idx, res))
                if not exhaustive:
                    break
    if not found:
        raise UnreachableError(
            "unreachable: no costate connects the endpoints in the given time "
            "(they may lie on different connected components of the invariant manifold)")

    q1, q2 = to_q(problem.spec, *problem.x_start)
    candidates = []
    for idx, (lam, norm) in found:
        traj = extremal(problem.spec, problem.budget, PhasePoint(q1, q2, lam[0], lam[1]),
                        problem.t0, tol=flow_tol, n_samples=n_samples)
        candidates.append((idx, lam, norm, traj, float(traj.work[-1])))

    distinct = []
    for c in candidates:
        if not any(np.allclose(c[1], d[1], rtol=1e-6, atol=1e-8) for d in distinct):
            distinct.append(c)
    best = max(distinct, key=lambda c: c[4]) if exhaustive else distinct[0]
    idx, lam, norm, traj, J = best
    return ShootingResult(
        lambda0=(float(lam[0]), float(lam[1])), trajectory=traj, residual=float(norm), work=J,
        solutions=tuple(((float(c[1][0]), float(c[1][1])), c[4]) for c in distinct),
        multiple=len(distinct) > 1, start_index=idx,
    )
