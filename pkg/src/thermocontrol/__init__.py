"""Work-maximising thermodynamic processes for ideal and real gases.

Submodules
----------
maxent    maximum-entropy measurement on discrete probability spaces
gas       gas-state manifolds, applicability, brackets and process fields
control   Pontryagin Hamiltonian, optimal control and its reduced form
dynamics  Hamiltonian flows, work functional and shooting
angles    invariant manifold, component topology and angle variables
virial    first-order virial perturbation of the integrable system
cli       scenario runner
"""
from .angles import InvariantLevels, component_count, omega1, omega2, solve_by_angles
from .control import (ControlBudget, ControlVector, PhasePoint, ReducedHamiltonian, optimal_control,
                      reduced_hamiltonian, tau_star)
from .dynamics import ShootingProblem, Trajectory, flow, shoot, work_functional
from .errors import (ChartError, ConvergenceError, DomainError, InfeasibleError, NearSingularError,
                     ThermoControlError, UnreachableError, ValidationError)
from .gas import GasKind, GasSpec, StatePoint
from .maxent import DiscreteMeasurement, MaxEntSolution, solve_lambda
from .virial import PerturbedHamiltonian, commutation_order_check

__version__ = "0.1.0"

__all__ = [
    "ChartError", "ControlBudget", "ControlVector", "ConvergenceError", "DiscreteMeasurement",
    "DomainError", "GasKind", "GasSpec", "InfeasibleError", "InvariantLevels", "MaxEntSolution",
    "NearSingularError", "PerturbedHamiltonian", "PhasePoint", "ReducedHamiltonian",
    "ShootingProblem", "StatePoint", "ThermoControlError", "Trajectory", "UnreachableError",
    "ValidationError", "commutation_order_check", "component_count", "flow", "omega1", "omega2",
    "optimal_control", "reduced_hamiltonian", "shoot", "solve_by_angles", "solve_lambda",
    "tau_star", "work_functional",
]
