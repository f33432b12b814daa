"""
Hill-climbing forgery against the score-leaking verifier.

Every attack talks to the verifier only through a ScoreOracle, so one oracle
call is exactly one verify() call and one query-log entry.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Sequence
import math

import numpy as np

from paperpuf.config import Settings, get_settings
from paperpuf.errors import InvalidParam
from paperpuf.middleware.logging import logger
from paperpuf.models.attacks import AttackMethod, AttackTrace, ForgeryResult, GreedyParams, Termination
from paperpuf.models.analysis import SuccessRateRow
from paperpuf.models.latent import CodecComponent, LatentCodec
from paperpuf.models.normmap import Component, NormMap
from paperpuf.models.records import VerifyOutcome
from paperpuf.observability import add_stage_metadata, trace_stage
from paperpuf.services import latent_service
from paperpuf.services.optimizer_service import (
    BudgetedObjective,
    Optimizer,
    conjugate_gradient,
    greedy,
    nelder_mead,
    powell,
    run,
)

_METHOD_CODES = {method: index for index, method in enumerate(AttackMethod)}
# start-point jitter for repeated trials, in units of the per-axis std
TRIAL_JITTER = 0.25


class Verifier(Protocol):
    def verify(self, query: NormMap, template_id: Optional[str] = None) -> VerifyOutcome: ...


class SessionVerifier(Verifier, Protocol):
    def session(self) -> "SessionVerifier": ...


@dataclass
class ScoreOracle:
    """
    The attacker's view of the verifier: submit a map, read back one score.

    component 'x' or 'y' reads that correlation; 'min' reads the score the
    decision rule uses.
    """

    verifier: Verifier
    target_id: str
    component: Component = Component.X

    def __post_init__(self):
        self.component = Component(self.component)

    def __call__(self, query: NormMap) -> float:
        return self.verifier.verify(query, self.target_id).score.component(self.component)


def verifier_threshold(verifier: Verifier, settings: Optional[Settings] = None) -> float:
    """The decision threshold of the attacked verifier, or the configured one when it does not expose it."""
    threshold = getattr(verifier, "threshold", None)
    if threshold is None:
        threshold = (settings or get_settings()).threshold
    return float(threshold)


def trial_seed(seed: int, method: AttackMethod | str, target_index: int, trial: int) -> int:
    method = AttackMethod(method)
    sequence = np.random.SeedSequence([seed, _METHOD_CODES[method], target_index, trial])
    return int(sequence.generate_state(1)[0])


def holdout_std(codec: LatentCodec) -> float:
    """Per-dimension holdout standard deviation sqrt(total variance / d)."""
    total = codec.total_variance if codec.total_variance > 0 else float(codec.explained_variance.sum())
    return math.sqrt(total / codec.d)


def random_initial_map(shape, std: float, seed: int) -> NormMap:
    """An i.i.d. Gaussian map with the given per-pixel std in both components."""
    rng = np.random.default_rng(seed)
    return NormMap.from_components(rng.normal(0.0, std, size=shape), rng.normal(0.0, std, size=shape))


def _trace(
    oracle: ScoreOracle,
    method: AttackMethod,
    objective: BudgetedObjective,
    termination: Termination,
    forged: Optional[NormMap],
    latent: Optional[np.ndarray],
    seed: int,
) -> AttackTrace:
    trace = AttackTrace(
        target_id=oracle.target_id,
        method=method,
        component=oracle.component.value,
        threshold=objective.threshold,
        budget=objective.budget,
        iterations=objective.iterations,
        function_evals=objective.evals,
        rho_trajectory=tuple(objective.trajectory),
        success=termination is Termination.THRESHOLD,
        termination=termination,
        forged=forged,
        latent=tuple(float(v) for v in latent) if latent is not None else None,
        seed=seed,
    )
    logger.info(
        f"{method.value} on {oracle.target_id} ({oracle.component.value}): {termination.value} "
        f"after {trace.function_evals} evals, best rho {trace.best_rho:.4f}"
    )
    return trace


def baseline_greedy(
    oracle: ScoreOracle,
    m0: NormMap,
    params: GreedyParams,
    threshold: float = 0.3,
    seed: int = 0,
    budget: Optional[int] = None,
) -> AttackTrace:
    """
    Greedy hill climbing directly in feature space.

    Each iteration perturbs round(subset_fraction * d) randomly chosen pixels of
    the attacked component by U[-delta, delta], queries the oracle, and keeps the
    change when the score does not drop. With component 'min' both fields are
    perturbed as one vector. The run stops at rho >= threshold, after
    max_iterations iterations, or when the budget is spent.

    Args:
        oracle: Score oracle bound to the target
        m0: Initial map
        params: Perturbation parameters
        threshold: Score at which the run stops successfully
        seed: Seed for subset selection and noise
        budget: Maximum oracle calls; defaults to max_iterations + 1

    Returns:
        AttackTrace whose forged map is the best query submitted
    """
    budget = params.max_iterations + 1 if budget is None else budget
    component = oracle.component
    shape = m0.shape
    half = m0.size

    if component is Component.MIN:
        x0 = np.concatenate([m0.nx.ravel(), m0.ny.ravel()])

        def to_map(x: np.ndarray) -> NormMap:
            return NormMap.from_components(x[:half].reshape(shape), x[half:].reshape(shape))

        def to_vector(query: NormMap) -> np.ndarray:
            return np.concatenate([query.nx.ravel(), query.ny.ravel()])
    else:
        x0 = m0.component(component).ravel()

        def to_map(x: np.ndarray) -> NormMap:
            return m0.with_component(component, x)

        def to_vector(query: NormMap) -> np.ndarray:
            return query.component(component).ravel()

    subset_size = max(1, int(round(params.subset_fraction * x0.size)))
    objective = BudgetedObjective(score=oracle, threshold=threshold, budget=budget, decode=to_map)
    with trace_stage("digattack", "baseline_greedy", target=oracle.target_id, budget=budget) as span:
        termination = run(
            objective,
            greedy(
                x0,
                params.delta,
                subset_size,
                params.max_iterations,
                seed,
                project=lambda x: to_vector(to_map(x)),
            ),
        )
        add_stage_metadata(span, {"evals": objective.evals, "termination": termination.value})
    return _trace(oracle, AttackMethod.BASELINE, objective, termination, objective.best_query, None, seed)


def _latent_decoder(codec: LatentCodec, oracle: ScoreOracle, companion: Optional[NormMap]) -> Callable[[np.ndarray], NormMap]:
    if oracle.component is Component.MIN and codec.component is not CodecComponent.JOINT:
        raise InvalidParam("a 'min' oracle needs a joint codec")
    if codec.component is not CodecComponent.JOINT and codec.component.value != oracle.component.value:
        raise InvalidParam(f"codec models {codec.component.value} but the oracle reads {oracle.component.value}")

    def decode(z: np.ndarray) -> NormMap:
        return latent_service.decode(codec, z, companion)

    return decode


def default_latent_delta(codec: LatentCodec) -> float:
    """Twice the mean per-axis standard deviation."""
    return 2.0 * math.sqrt(float(np.mean(codec.explained_variance)))


def latent_greedy(
    oracle: ScoreOracle,
    codec: LatentCodec,
    z0: Optional[np.ndarray] = None,
    params: Optional[GreedyParams] = None,
    threshold: float = 0.3,
    seed: int = 0,
    budget: Optional[int] = None,
    companion: Optional[NormMap] = None,
) -> AttackTrace:
    """
    Greedy hill climbing in the codec's latent space.

    Axis i is perturbed by U[-delta_i, delta_i] with delta_i = delta * sqrt(lambda_i / mean(lambda)),
    and every candidate is decoded to a map before it is queried. For a
    per-component codec the other field of each query comes from ``companion``.
    """
    z0 = np.zeros(codec.m) if z0 is None else np.asarray(z0, dtype=np.float64)
    params = params or GreedyParams(delta=default_latent_delta(codec))
    budget = params.max_iterations + 1 if budget is None else budget
    lam = codec.explained_variance
    deltas = params.delta * np.sqrt(lam / max(float(np.mean(lam)), 1e-300))
    subset_size = max(1, int(round(params.subset_fraction * codec.m)))

    objective = BudgetedObjective(
        score=oracle, threshold=threshold, budget=budget, decode=_latent_decoder(codec, oracle, companion)
    )
    with trace_stage("digattack", "latent_greedy", target=oracle.target_id, budget=budget, m=codec.m) as span:
        termination = run(objective, greedy(z0, deltas, subset_size, params.max_iterations, seed))
        add_stage_metadata(span, {"evals": objective.evals, "termination": termination.value})
    return _trace(oracle, AttackMethod.LATENT_GREEDY, objective, termination, objective.best_query, objective.best_z, seed)


def blackbox_attack(
    oracle: ScoreOracle,
    codec: LatentCodec,
    z0: Optional[np.ndarray] = None,
    method: AttackMethod | str = AttackMethod.POWELL,
    threshold: float = 0.3,
    budget: int = 10_000,
    seed: int = 0,
    companion: Optional[NormMap] = None,
    settings: Optional[Settings] = None,
) -> AttackTrace:
    """
    Minimize -rho(decode(z)) with a derivative-free optimizer, stopping early at the threshold.

    Args:
        oracle: Score oracle bound to the target
        codec: Latent codec fitted on the adversary's holdout
        z0: Start point; the codec mean when omitted
        method: nelder_mead, powell or conjugate_gradient
        threshold: Score at which the run stops successfully
        budget: Maximum oracle calls, shared by line searches and gradients
        seed: Seed for the simplex restart jitter
        companion: Other field of each query for a per-component codec
        settings: Source of the Powell line tolerance and CG step knobs

    Returns:
        AttackTrace; an unsuccessful run reports its termination instead of raising
    """
    method = AttackMethod(method)
    if not method.is_blackbox:
        raise InvalidParam(f"{method.value} is not a black-box optimizer")
    settings = settings or get_settings()
    z0 = np.zeros(codec.m) if z0 is None else np.asarray(z0, dtype=np.float64)
    scales = codec.axis_scale
    scales = np.where(scales > 0, scales, 1.0)

    optimizers: Dict[AttackMethod, Callable[[], Optimizer]] = {
        AttackMethod.NELDER_MEAD: lambda: nelder_mead(z0, scales, seed=seed),
        AttackMethod.POWELL: lambda: powell(z0, scales, line_tol=settings.powell_line_tol),
        AttackMethod.CONJUGATE_GRADIENT: lambda: conjugate_gradient(
            z0, scales, fd_step=settings.cg_fd_step, initial_step=settings.cg_step
        ),
    }
    objective = BudgetedObjective(
        score=oracle, threshold=threshold, budget=budget, decode=_latent_decoder(codec, oracle, companion)
    )
    with trace_stage("digattack", method.value, target=oracle.target_id, budget=budget, m=codec.m) as span:
        termination = run(objective, optimizers[method]())
        add_stage_metadata(span, {"evals": objective.evals, "termination": termination.value})
    return _trace(oracle, method, objective, termination, objective.best_query, objective.best_z, seed)


def run_attack(
    method: AttackMethod | str,
    oracle: ScoreOracle,
    codec: LatentCodec,
    budget: int,
    seed: int,
    trial: int = 0,
    companion: Optional[NormMap] = None,
    initial_map: Optional[NormMap] = None,
    settings: Optional[Settings] = None,
) -> AttackTrace:
    """
    One attack run with the standard start point for ``method``.

    Latent methods start at the codec mean, jittered by 0.25 per-axis std from
    the second trial on. The baseline starts from ``initial_map`` or an i.i.d.
    draw matching the holdout's per-pixel std. Runs stop at the attacked
    verifier's own threshold.
    """
    method = AttackMethod(method)
    settings = settings or get_settings()
    threshold = verifier_threshold(oracle.verifier, settings)
    rng = np.random.default_rng(seed)

    if method is AttackMethod.BASELINE:
        std = holdout_std(codec)
        m0 = initial_map if initial_map is not None else random_initial_map(codec.field_shape, std, int(rng.integers(2**31)))
        params = GreedyParams(delta=2.0 * std, subset_fraction=settings.subset_fraction, max_iterations=max(budget, 1))
        return baseline_greedy(oracle, m0, params, threshold, int(rng.integers(2**31)), budget)

    z0 = np.zeros(codec.m)
    if trial > 0:
        z0 = TRIAL_JITTER * codec.axis_scale * rng.standard_normal(codec.m)
    run_seed = int(rng.integers(2**31))
    if method is AttackMethod.LATENT_GREEDY:
        params = GreedyParams(delta=default_latent_delta(codec), subset_fraction=settings.subset_fraction, max_iterations=max(budget, 1))
        return latent_greedy(oracle, codec, z0, params, threshold, run_seed, budget, companion)
    return blackbox_attack(oracle, codec, z0, method, threshold, budget, run_seed, companion, settings)


def forge(
    verifier: Verifier,
    target_id: str,
    codec_x: LatentCodec,
    codec_y: LatentCodec,
    method: AttackMethod | str = AttackMethod.POWELL,
    budget: int = 10_000,
    seed: int = 0,
    settings: Optional[Settings] = None,
) -> ForgeryResult:
    """
    Forge a full map: attack corr_x, then corr_y with the forged x field held fixed.

    The two halves are combined and replayed once through verify(); that replay
    is logged by the verifier but belongs to neither trace.
    """
    method = AttackMethod(method)
    settings = settings or get_settings()
    seed_x, seed_y = (int(s) for s in np.random.SeedSequence([seed, _METHOD_CODES[method]]).generate_state(2))

    oracle_x = ScoreOracle(verifier, target_id, Component.X)
    y_mean = latent_service.mean_map(codec_y)
    trace_x = run_attack(method, oracle_x, codec_x, budget, seed_x, companion=y_mean, settings=settings)
    half_x = trace_x.forged if trace_x.forged is not None else latent_service.mean_map(codec_x)

    oracle_y = ScoreOracle(verifier, target_id, Component.Y)
    trace_y = run_attack(
        method, oracle_y, codec_y, budget, seed_y, companion=half_x, initial_map=half_x if method is AttackMethod.BASELINE else None, settings=settings
    )
    half_y = trace_y.forged if trace_y.forged is not None else half_x

    # decoding keeps the companion field exactly, so half_y already carries half_x.nx
    forged = half_x.with_component(Component.Y, half_y.ny)
    outcome = verifier.verify(forged, target_id)
    logger.info(
        f"Forgery of {target_id} with {method.value}: accepted={outcome.accepted}, "
        f"score ({outcome.score.corr_x:.4f}, {outcome.score.corr_y:.4f}), "
        f"{trace_x.function_evals + trace_y.function_evals} evals"
    )
    return ForgeryResult(trace_x=trace_x, trace_y=trace_y, forged=forged, outcome=outcome)


def _summarize(label: str, traces: Sequence[AttackTrace]) -> SuccessRateRow:
    successes = [t for t in traces if t.success]
    evals = [t.function_evals for t in successes]
    return SuccessRateRow(
        method=label,
        runs=len(traces),
        successes=len(successes),
        success_rate=len(successes) / len(traces) if traces else 0.0,
        median_evals=float(np.median(evals)) if evals else None,
        min_evals=int(min(evals)) if evals else None,
    )


def success_rate_table(
    store: SessionVerifier,
    target_ids: Sequence[str],
    codec_x: LatentCodec,
    codec_y: LatentCodec,
    methods: Sequence[AttackMethod | str] = tuple(AttackMethod),
    budget: int = 10_000,
    trials: int = 1,
    seed: int = 0,
    settings: Optional[Settings] = None,
) -> List[SuccessRateRow]:
    """
    Run every method against every target for ``trials`` trials on corr_x.

    Each run gets its own store session, so its query log holds exactly its own
    oracle calls. A run succeeds when it reaches the threshold within the budget;
    the denominator of each rate is targets x trials.

    Returns:
        One SuccessRateRow per method, in the order given
    """
    settings = settings or get_settings()
    companion = latent_service.mean_map(codec_y)
    rows = []
    with trace_stage("digattack", "success_rate_table", methods=len(methods), targets=len(target_ids), trials=trials) as span:
        for method in methods:
            method = AttackMethod(method)
            traces = []
            for target_index, target_id in enumerate(target_ids):
                for trial in range(trials):
                    session = store.session()
                    oracle = ScoreOracle(session, target_id, Component.X)
                    traces.append(
                        run_attack(
                            method,
                            oracle,
                            codec_x,
                            budget,
                            trial_seed(seed, method, target_index, trial),
                            trial=trial,
                            companion=companion,
                            settings=settings,
                        )
                    )
            row = _summarize(method.value, traces)
            logger.info(
                f"{method.value}: {row.successes}/{row.runs} successful, median evals {row.median_evals}"
            )
            rows.append(row)
        add_stage_metadata(span, {"rows": len(rows)})
    return rows


def subset_sweep(
    store: SessionVerifier,
    target_ids: Sequence[str],
    codec_x: LatentCodec,
    fractions: Sequence[float] = (0.005, 0.01, 0.02, 0.05, 0.1),
    budget: int = 50_000,
    trials: int = 1,
    seed: int = 0,
    settings: Optional[Settings] = None,
) -> List[SuccessRateRow]:
    """Baseline success and median evals as a function of the perturbed-subset fraction."""
    settings = settings or get_settings()
    rows = []
    for fraction in fractions:
        swept = settings.model_copy(update={"subset_fraction": fraction})
        traces = []
        for target_index, target_id in enumerate(target_ids):
            for trial in range(trials):
                oracle = ScoreOracle(store.session(), target_id, Component.X)
                traces.append(
                    run_attack(
                        AttackMethod.BASELINE,
                        oracle,
                        codec_x,
                        budget,
                        trial_seed(seed, AttackMethod.BASELINE, target_index, trial),
                        trial=trial,
                        settings=swept,
                    )
                )
        rows.append(_summarize(f"baseline@{fraction:g}", traces))
    return rows
