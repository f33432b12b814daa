"""
Query-budgeted maximizers of a black-box score rho(z).

Every call of the score is one oracle query. BudgetedObjective counts the calls,
keeps the best point, and stops a run by raising when the threshold is reached
or the budget is spent. The optimizers minimize -rho.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple
import math

import numpy as np
from scipy.optimize import minimize

from paperpuf.errors import BudgetExhausted
from paperpuf.middleware.logging import logger
from paperpuf.models.attacks import Termination

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
_INV_GOLDEN = 1.0 / GOLDEN


class ThresholdReached(Exception):
    """Internal stop signal: the score reached the threshold."""


class _Collapsed(Exception):
    pass


@dataclass
class BudgetedObjective:
    """
    Counts queries of ``score`` and tracks the best point seen.

    With ``decode`` set, each point is first turned into a query object and the
    score is taken on that object; the query behind the best score is kept so it
    can be replayed exactly.
    """

    score: Callable[[Any], float]
    threshold: float
    budget: int
    decode: Optional[Callable[[np.ndarray], Any]] = None
    evals: int = 0
    iterations: int = 0
    best_rho: float = -math.inf
    best_z: Optional[np.ndarray] = None
    best_query: Any = None
    trajectory: List[float] = field(default_factory=list)

    def rho(self, z: np.ndarray) -> float:
        if self.evals >= self.budget:
            raise BudgetExhausted(f"query budget of {self.budget} spent")
        z = np.array(z, dtype=np.float64, copy=True)
        query = self.decode(z) if self.decode is not None else z
        value = float(self.score(query))
        self.evals += 1
        if value > self.best_rho:
            self.best_rho, self.best_z, self.best_query = value, z, query
        self.trajectory.append(self.best_rho)
        if value >= self.threshold:
            raise ThresholdReached
        return value

    def loss(self, z: np.ndarray) -> float:
        return -self.rho(z)

    @property
    def remaining(self) -> int:
        return self.budget - self.evals


Optimizer = Callable[[BudgetedObjective], Termination]


def run(objective: BudgetedObjective, optimizer: Optimizer) -> Termination:
    """Run an optimizer to its natural end or until the objective stops it."""
    try:
        return optimizer(objective)
    except ThresholdReached:
        return Termination.THRESHOLD
    except BudgetExhausted:
        return Termination.BUDGET
    except _Collapsed:
        return Termination.DEGENERATE_SIMPLEX


# --- greedy hill climbing ------------------------------------------------

def greedy(
    x0: np.ndarray,
    delta: np.ndarray,
    subset_size: int,
    max_iterations: int,
    seed: int,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Optimizer:
    """
    Random-subset hill climbing: perturb ``subset_size`` coordinates by U[-delta, delta],
    keep the move when the score does not drop.

    ``project`` maps a candidate onto the feasible set before it is queried; the
    projected point is what gets kept.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), x0.shape)

    def optimize(objective: BudgetedObjective) -> Termination:
        rng = np.random.default_rng(seed)
        x = project(x0) if project is not None else x0.copy()
        current = objective.rho(x)
        for _ in range(max_iterations):
            objective.iterations += 1
            chosen = rng.choice(x.size, size=subset_size, replace=False)
            candidate = x.copy()
            candidate[chosen] += rng.uniform(-delta[chosen], delta[chosen])
            if project is not None:
                candidate = project(candidate)
            value = objective.rho(candidate)
            # ties are accepted
            if value >= current:
                x, current = candidate, value
        return Termination.ITERATIONS

    return optimize


# --- Nelder-Mead ---------------------------------------------------------

def nelder_mead(
    z0: np.ndarray,
    steps: np.ndarray,
    seed: int = 0,
    xatol: float = 1e-10,
    fatol: float = 1e-12,
) -> Optimizer:
    """
    Standard simplex search: reflection 1, expansion 2, contraction 1/2, shrink 1/2.

    The initial simplex is z0 plus one vertex per axis at z0 + steps[i] e_i. If
    the simplex collapses before the threshold, the search restarts once from the
    best vertex with a jittered simplex; a second collapse ends the run as
    degenerate.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)

    def count_iteration(objective: BudgetedObjective):
        def callback(_xk):
            objective.iterations += 1
        return callback

    def optimize(objective: BudgetedObjective) -> Termination:
        rng = np.random.default_rng(seed)
        start, scale = z0, steps
        for attempt in range(2):
            simplex = np.vstack([start, start + np.diag(scale)])
            result = minimize(
                objective.loss,
                start,
                method="Nelder-Mead",
                callback=count_iteration(objective),
                options={
                    "initial_simplex": simplex,
                    "maxfev": objective.remaining + simplex.shape[0],
                    "maxiter": 10 * objective.budget + 1000,
                    "xatol": xatol,
                    "fatol": fatol,
                    "adaptive": False,
                },
            )
            logger.debug(f"Nelder-Mead attempt {attempt} ended at rho={objective.best_rho:.4f}: {result.message}")
            start = objective.best_z
            scale = steps * rng.uniform(0.5, 1.5, size=steps.size) * rng.choice([-1.0, 1.0], size=steps.size)
        raise _Collapsed

    return optimize


# --- Powell --------------------------------------------------------------

def _bracket(
    f: Callable[[float], float], f0: float, step: float, max_expansions: int = 40
) -> Tuple[float, float, float, float, float, float]:
    """
    Bracket a minimum of f along t starting from the known f(0) = f0.

    Returns (a, b, c, fa, fb, fc) with b strictly between a and c and
    fb <= min(fa, fc), or a degenerate bracket at 0 when f is flat.
    """
    a, fa = 0.0, f0
    b, fb = step, f(step)
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    c = b + GOLDEN * (b - a)
    fc = f(c)
    expansions = 0
    while fc < fb and expansions < max_expansions:
        a, fa = b, fb
        b, fb = c, fc
        c = b + GOLDEN * (b - a)
        fc = f(c)
        expansions += 1
    return a, b, c, fa, fb, fc


def _golden_section(
    f: Callable[[float], float], a: float, b: float, c: float, fb: float, tol: float
) -> Tuple[float, float]:
    """Golden-section refinement of a bracket (a, b, c), reusing the known f(b)."""
    lo, hi = min(a, c), max(a, c)
    x, fx = b, fb
    while hi - lo > tol * (abs(x) + 1.0):
        if hi - x > x - lo:
            u = x + (1.0 - _INV_GOLDEN) * (hi - x)
        else:
            u = x - (1.0 - _INV_GOLDEN) * (x - lo)
        fu = f(u)
        if fu < fx:
            if u > x:
                lo = x
            else:
                hi = x
            x, fx = u, fu
        else:
            if u > x:
                hi = u
            else:
                lo = u
    return x, fx


def _line_minimize(
    objective: BudgetedObjective, point: np.ndarray, value: float, direction: np.ndarray, tol: float
) -> Tuple[np.ndarray, float]:
    def along(t: float) -> float:
        return objective.loss(point + t * direction)

    a, b, c, fa, fb, fc = _bracket(along, value, 1.0)
    if fa == fb == fc:
        return point, value
    # an overshooting first step leaves the start point in the middle of the bracket
    t, ft = _golden_section(along, a, b, c, fb, tol)
    if ft >= value:
        return point, value
    return point + t * direction, ft


def powell(
    z0: np.ndarray,
    steps: np.ndarray,
    line_tol: float = 1e-3,
    ftol: float = 1e-10,
    max_sweeps: int = 1000,
) -> Optimizer:
    """
    Direction-set search with golden-section line minimization.

    Directions start as the scaled axes steps[i] e_i. After each sweep the
    extrapolated point 2p - p0 is tested, and the direction of largest decrease
    is replaced by the net sweep direction when Powell's criterion holds.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    initial_directions = [row for row in np.diag(np.asarray(steps, dtype=np.float64))]

    def optimize(objective: BudgetedObjective) -> Termination:
        directions = list(initial_directions)
        point = z0.copy()
        value = objective.loss(point)
        for _ in range(max_sweeps):
            objective.iterations += 1
            start, start_value = point.copy(), value
            biggest_drop, biggest_index = 0.0, 0
            for i, direction in enumerate(directions):
                before = value
                point, value = _line_minimize(objective, point, value, direction, line_tol)
                if before - value > biggest_drop:
                    biggest_drop, biggest_index = before - value, i

            if 2.0 * (start_value - value) <= ftol * (abs(start_value) + abs(value)) + 1e-30:
                return Termination.CONVERGED

            net = point - start
            extrapolated_value = objective.loss(point + net)
            if extrapolated_value < start_value:
                t = 2.0 * (start_value - 2.0 * value + extrapolated_value) * (start_value - value - biggest_drop) ** 2
                t -= biggest_drop * (start_value - extrapolated_value) ** 2
                if t < 0.0:
                    point, value = _line_minimize(objective, point, value, net, line_tol)
                    directions[biggest_index] = directions[-1]
                    directions[-1] = net
        return Termination.ITERATIONS

    return optimize


# --- conjugate gradient --------------------------------------------------

def conjugate_gradient(
    z0: np.ndarray,
    scales: np.ndarray,
    fd_step: float = 1e-3,
    initial_step: float = 2.0,
    armijo: float = 1e-4,
    gtol: float = 1e-9,
    max_backtracks: int = 30,
    max_iterations: int = 10_000,
) -> Optimizer:
    """
    Polak-Ribiere (PR+) conjugate gradient on a central-difference gradient.

    The gradient step along axis i is fd_step * scales[i], so each gradient costs
    2m queries. Step lengths are measured in the axis-scaled metric |d / scales|.
    The first backtracking search tries initial_step; each later one starts from
    twice the previously accepted length.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    h = fd_step * scales

    def gradient(objective: BudgetedObjective, point: np.ndarray) -> np.ndarray:
        g = np.empty_like(point)
        for i in range(point.size):
            e = np.zeros_like(point)
            e[i] = h[i]
            g[i] = (objective.loss(point + e) - objective.loss(point - e)) / (2.0 * h[i])
        return g

    def optimize(objective: BudgetedObjective) -> Termination:
        point = z0.copy()
        value = objective.loss(point)
        g = gradient(objective, point)
        d = -g
        length = initial_step / 2.0
        for _ in range(max_iterations):
            objective.iterations += 1
            if np.linalg.norm(g * scales) <= gtol:
                return Termination.CONVERGED
            slope = float(g @ d)
            if slope >= 0:
                # not a descent direction; restart along steepest descent
                d, slope = -g, -float(g @ g)
            metric = max(float(np.linalg.norm(d / scales)), 1e-300)
            alpha = 2.0 * length / metric
            for _ in range(max_backtracks):
                trial = objective.loss(point + alpha * d)
                if trial <= value + armijo * alpha * slope:
                    break
                # backtrack to the minimizer of the parabola through value, slope and trial
                curvature = trial - value - slope * alpha
                if not curvature > 0.0:
                    alpha *= 0.5
                    continue
                alpha = min(max(-slope * alpha * alpha / (2.0 * curvature), 0.1 * alpha), 0.5 * alpha)
            else:
                return Termination.CONVERGED
            length = alpha * metric
            point, value = point + alpha * d, trial
            g_new = gradient(objective, point)
            beta = max(0.0, float(g_new @ (g_new - g)) / max(float(g @ g), 1e-300))
            d = -g_new + beta * d
            g = g_new
        return Termination.ITERATIONS

    return optimize
