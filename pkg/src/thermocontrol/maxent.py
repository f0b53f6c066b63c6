"""Minimal-information-gain (maximum entropy) measurement on discrete spaces.

A measurement is a base probability vector ``q`` over ``k`` outcomes, the
values ``X`` of a random vector at those outcomes and a target expectation
``x``. The extremal measure has density ``rho = exp(<lam, X>) / Z(lam)``
with respect to ``q``; ``lam`` solves the moment equations ``x = -dH/dlam``
for ``H(lam) = -ln Z(lam)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ConvergenceError, DomainError, InfeasibleError, RangeError

DEFAULT_TOL = 1e-10
MAX_NEWTON_ITER = 100
HULL_MARGIN = 1e-10
_MAX_EXP = math.log(np.finfo(float).max)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiscreteMeasurement:
    base_probs: np.ndarray
    random_vector: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        q = _frozen(self.base_probs)
        X = np.array(self.random_vector, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        X.setflags(write=False)
        x = _frozen(np.atleast_1d(self.target))
        if q.ndim != 1 or q.size == 0:
            raise DomainError("base_probs must be a non-empty vector")
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise DomainError("base_probs must be strictly positive")
        if abs(q.sum() - 1.0) > 1e-12:
            raise DomainError(f"base_probs sum to {q.sum()!r}, expected 1")
        if X.shape[0] != q.size:
            raise DomainError("random_vector needs one row per outcome")
        if x.shape != (X.shape[1],):
            raise DomainError("target dimension does not match random_vector")
        object.__setattr__(self, "base_probs", q)
        object.__setattr__(self, "random_vector", X)
        object.__setattr__(self, "target", x)

    @property
    def k(self) -> int:
        return self.base_probs.size

    @property
    def d(self) -> int:
        return self.random_vector.shape[1]


@dataclass(frozen=True)
class MaxEntSolution:
    lam: np.ndarray
    density: np.ndarray
    hamiltonian: float
    info_gain: float
    residual: float = 0.0
    iterations: int = 0

    def to_json(self) -> dict:
        return {
            "lambda": [float(v) for v in self.lam],
            "density": [float(v) for v in self.density],
            "info_gain": float(self.info_gain),
        }


def _exponents(m: DiscreteMeasurement, lam) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if not np.all(np.isfinite(lam)):
        raise DomainError("lambda must be finite")
    return m.random_vector @ lam


def log_partition(m: DiscreteMeasurement, lam) -> float:
    """``ln Z(lam)`` with a max-shift so no exponential overflows."""
    z = _exponents(m, lam)
    shift = z.max()
    return float(shift + math.log(np.dot(m.base_probs, np.exp(z - shift))))


def partition_function(m: DiscreteMeasurement, lam) -> float:
    """Z(lam) = sum_i q_i exp(<lam, X_i>)."""
    lz = log_partition(m, lam)
    if lz > _MAX_EXP:
        raise RangeError(f"partition function overflows (ln Z = {lz:.6g})")
    return math.exp(lz)


def hamiltonian(m: DiscreteMeasurement, lam) -> float:
    return -log_partition(m, lam)


def density(m: DiscreteMeasurement, lam) -> np.ndarray:
    """rho_i = exp(<lam, X_i>) / Z; normalised so that sum rho_i q_i = 1."""
    z = _exponents(m, lam)
    w = np.exp(z - z.max())
    return w / np.dot(m.base_probs, w)


def _moments(m: DiscreteMeasurement, lam):
    p = density(m, lam) * m.base_probs
    mean = p @ m.random_vector
    centred = m.random_vector - mean
    cov = (centred * p[:, None]).T @ centred
    return p, mean, cov


def hamiltonian_gradient(m: DiscreteMeasurement, lam) -> np.ndarray:
    """dH/dlam = -E_p[X]."""
    return -_moments(m, lam)[1]


def hessian_fd(m: DiscreteMeasurement, lam, step: float = 1e-5) -> np.ndarray:
    """Hess(H) by central differences of the analytic gradient."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    d = lam.size
    hess = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        hess[:, j] = (hamiltonian_gradient(m, lam + e) - hamiltonian_gradient(m, lam - e)) / (2 * step)
    return 0.5 * (hess + hess.T)


def in_hull_interior(values: np.ndarray, target: np.ndarray, margin: float = HULL_MARGIN) -> bool:
    """True when ``target`` is a convex combination of ``values`` with every
    weight above ``margin`` (relative interior of the hull).

    Solved as the LP ``max t`` s.t. ``w >= t``, ``sum w = 1``, ``w @ values = target``.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    k, d = values.shape
    # variables: w_1..w_k, t
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_eq = np.zeros((d + 1, k + 1))
    a_eq[:d, :k] = values.T
    a_eq[d, :k] = 1.0
    b_eq = np.concatenate([np.asarray(target, dtype=float), [1.0]])
    a_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
    b_ub = np.zeros(k)
    bounds = [(0, None)] * k + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    return bool(res.status == 0 and -res.fun > margin)


def solve_lambda(m: DiscreteMeasurement, tol: float = DEFAULT_TOL,
                 max_iter: int = MAX_NEWTON_ITER) -> MaxEntSolution:
    """Newton iteration on the moment equations ``-dH/dlam = x``.

    Minimises the convex dual ``ln Z(lam) - <lam, x>`` whose Hessian is the
    variance matrix; steps are damped by Armijo backtracking.

    Raises
    ------
    InfeasibleError
        If the target is on or outside the convex hull of the values.
    ConvergenceError
        If ``max_iter`` Newton steps do not reach ``tol``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if not in_hull_interior(m.random_vector, m.target):
        raise InfeasibleError("target is not strictly inside the convex hull of X; "
                              "no finite lambda exists")
    x = m.target
    lam = np.zeros(m.d)

    def dual(l):
        return log_partition(m, l) - float(l @ x)

    it = 0
    _, mean, cov = _moments(m, lam)
    grad = mean - x
    while True:
        res = float(np.linalg.norm(grad))
        if res <= tol:
            # one polishing step: cheap and usually brings the residual to rounding level
            step = np.linalg.lstsq(cov, -grad, rcond=None)[0]
            _, mean2, cov2 = _moments(m, lam + step)
            if np.linalg.norm(mean2 - x) < res:
                lam, mean, cov = lam + step, mean2, cov2
                res = float(np.linalg.norm(mean - x))
            break
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                                   f"(residual {res:.3e})")
        try:
            step = np.linalg.solve(cov, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(cov, -grad, rcond=None)[0]
        f0 = dual(lam)
        slope = float(grad @ step)
        t = 1.0
        # once the predicted decrease drops below rounding of the dual the
        # Armijo test is meaningless; the full Newton step is taken instead
        if abs(slope) > 1e-13 * max(1.0, abs(f0)):
            while t > 1e-12 and dual(lam + t * step) > f0 + 1e-4 * t * slope:
                t *= 0.5
        lam = lam + t * step
        _, mean, cov = _moments(m, lam)
        grad = mean - x
        it += 1

    rho = density(m, lam)
    lam = _frozen(lam)
    return MaxEntSolution(
        lam=lam,
        density=_frozen(rho),
        hamiltonian=hamiltonian(m, lam),
        info_gain=float(np.sum(m.base_probs * rho * np.log(rho))),
        residual=res,
        iterations=it,
    )


def information_gain(m: DiscreteMeasurement, s: MaxEntSolution) -> float:
    """I = sum_i rho_i ln(rho_i) q_i, the relative entropy of p against q."""
    rho = np.asarray(s.density)
    return float(np.sum(m.base_probs * rho * np.log(rho)))


def variance_matrix(m: DiscreteMeasurement, s: MaxEntSolution) -> np.ndarray:
    """Central second moment of X under the extremal measure."""
    p = np.asarray(s.density) * m.base_probs
    mean = p @ m.random_vector
    centred = m.random_vector - mean
    return (centred * p[:, None]).T @ centred
