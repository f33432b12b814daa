from dataclasses import dataclass
from typing import Optional, Tuple
import enum

import numpy as np

from paperpuf.errors import BudgetExhausted, DegenerateSimplex, InvalidParam, InvalidStrength
from paperpuf.models.normmap import NormMap
from paperpuf.models.records import VerifyOutcome
from paperpuf.models.surface import SurfacePatch

DEFAULT_STRENGTHS = (0.05, 0.10, 0.25, 0.50, 0.75)


class AttackKind(str, enum.Enum):
    SCRATCH = "scratch"
    PATCH = "patch"
    SCRIBBLE = "scribble"
    CRUMPLE_RANDOM = "crumple_random"
    CRUMPLE_FOLD = "crumple_fold"

    @property
    def is_area(self) -> bool:
        return self in (AttackKind.SCRATCH, AttackKind.PATCH, AttackKind.SCRIBBLE)


class AttackMethod(str, enum.Enum):
    BASELINE = "baseline"
    LATENT_GREEDY = "latent_greedy"
    NELDER_MEAD = "nelder_mead"
    POWELL = "powell"
    CONJUGATE_GRADIENT = "conjugate_gradient"

    @property
    def is_blackbox(self) -> bool:
        return self in (AttackMethod.NELDER_MEAD, AttackMethod.POWELL, AttackMethod.CONJUGATE_GRADIENT)


class Termination(str, enum.Enum):
    THRESHOLD = "threshold"
    BUDGET = "budget"
    ITERATIONS = "iterations"
    CONVERGED = "converged"
    DEGENERATE_SIMPLEX = "degenerate_simplex"


@dataclass(frozen=True)
class AttackSpec:
    """A physical attack; strength is the fraction of surface area (ignored by crumpling)."""

    kind: AttackKind
    strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        kind = AttackKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind.is_area and not 0.0 < self.strength < 1.0:
            raise InvalidStrength(f"{kind.value} strength must lie in (0, 1), got {self.strength}")


@dataclass(frozen=True, eq=False)
class AttackedPatch:
    patch: SurfacePatch
    spec: AttackSpec
    coverage: float
    mask: np.ndarray


@dataclass(frozen=True)
class GreedyParams:
    delta: float
    subset_fraction: float = 0.02
    max_iterations: int = 50_000

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidParam("delta must be positive")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise InvalidParam("subset_fraction must lie in (0, 1]")
        if self.max_iterations < 1:
            raise InvalidParam("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class AttackTrace:
    """
    Outcome of one forgery run.

    rho_trajectory[i] is the best score seen after oracle evaluation i + 1, so
    its length always equals function_evals.
    """

    target_id: str
    method: AttackMethod
    component: str
    threshold: float
    budget: int
    iterations: int
    function_evals: int
    rho_trajectory: Tuple[float, ...]
    success: bool
    termination: Termination
    forged: Optional[NormMap]
    latent: Optional[Tuple[float, ...]] = None
    seed: Optional[int] = None

    @property
    def best_rho(self) -> float:
        return self.rho_trajectory[-1] if self.rho_trajectory else float("-inf")

    @property
    def initial_rho(self) -> float:
        return self.rho_trajectory[0] if self.rho_trajectory else float("nan")

    def raise_for_status(self) -> "AttackTrace":
        """Raise the domain error matching an unsuccessful run; return self otherwise."""
        if self.success:
            return self
        if self.termination is Termination.DEGENERATE_SIMPLEX:
            raise DegenerateSimplex(
                f"{self.method.value} simplex collapsed at rho={self.best_rho:.4f}", trace=self
            )
        raise BudgetExhausted(
            f"{self.method.value} stopped ({self.termination.value}) after "
            f"{self.function_evals} evaluations at rho={self.best_rho:.4f}",
            trace=self,
        )


@dataclass(frozen=True, eq=False)
class ForgeryResult:
    trace_x: AttackTrace
    trace_y: AttackTrace
    forged: NormMap
    outcome: VerifyOutcome

    @property
    def function_evals(self) -> int:
        return self.trace_x.function_evals + self.trace_y.function_evals
