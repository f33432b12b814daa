"""
Reporting: collision probability, score histograms, trend statistics and CSV tables.
"""

from decimal import ROUND_FLOOR, Decimal, localcontext
from pathlib import Path
from typing import IO, Iterable, List, Sequence, Tuple, Union
import csv
import io
import math

import numpy as np
from scipy.stats import spearmanr

from paperpuf.errors import InfeasibleEstimate, InsufficientData, InvalidQuery, LengthMismatch
from paperpuf.middleware.logging import logger
from paperpuf.models.analysis import CollisionQuery, HistogramReport, MonteCarloEstimate, SuccessRateRow, SweepRow
from paperpuf.models.attacks import AttackTrace

MAX_MONTE_CARLO_DIMENSION = 12
MIN_EXPECTED_HITS = 10
_CHUNK = 100_000


def collision_log10_probability(query: CollisionQuery) -> float:
    """log10 of (epsilon / R)^d, evaluated in log space."""
    return query.d * (math.log10(query.epsilon) - math.log10(query.radius))


def collision_probability(query: CollisionQuery, digits: int = 3) -> Tuple[float, int]:
    """
    p as (mantissa, exponent) with p = mantissa * 10**exponent and 1 <= mantissa < 10.

    The power is taken in 50-digit decimal arithmetic, so the mantissa stays
    accurate when p is far below the float range.
    """
    with localcontext() as context:
        context.prec = 50
        log10_p = Decimal(query.d) * (Decimal(repr(query.epsilon)).log10() - Decimal(repr(query.radius)).log10())
        exponent = int(log10_p.to_integral_value(rounding=ROUND_FLOOR))
        mantissa = Decimal(10) ** (log10_p - exponent)
    return round(float(mantissa), digits), exponent


def collision_monte_carlo(
    query: CollisionQuery,
    samples: int = 1_000_000,
    seed: int = 0,
) -> MonteCarloEstimate:
    """
    Estimate (epsilon / R)^d by sampling the R-ball uniformly and counting hits
    within epsilon of a fixed interior reference.

    Samples are drawn in shards of 100,000, each with its own child seed.

    Raises:
        InvalidQuery: If d exceeds 12
        InfeasibleEstimate: If fewer than 10 hits are expected
    """
    if query.d > MAX_MONTE_CARLO_DIMENSION:
        raise InvalidQuery(f"Monte Carlo is limited to d <= {MAX_MONTE_CARLO_DIMENSION}, got {query.d}")
    analytic = (query.epsilon / query.radius) ** query.d
    if analytic * samples < MIN_EXPECTED_HITS:
        raise InfeasibleEstimate(
            f"expected {analytic * samples:.3g} hits from {samples} samples; need at least {MIN_EXPECTED_HITS}"
        )

    shards = [min(_CHUNK, samples - start) for start in range(0, samples, _CHUNK)]
    children = np.random.SeedSequence(seed).spawn(len(shards))
    # any reference whose epsilon-ball lies inside the R-ball gives the same probability
    reference = np.zeros(query.d)
    reference[0] = (query.radius - query.epsilon) / 2.0
    hits = 0
    for size, child in zip(shards, children):
        rng = np.random.default_rng(child)
        points = rng.standard_normal((size, query.d))
        points /= np.linalg.norm(points, axis=1, keepdims=True)
        points *= (query.radius * rng.random(size) ** (1.0 / query.d))[:, None]
        hits += int(np.count_nonzero(np.linalg.norm(points - reference, axis=1) <= query.epsilon))

    estimate = MonteCarloEstimate(probability=hits / samples, hits=hits, samples=samples, analytic=analytic)
    logger.debug(f"Monte Carlo d={query.d}: {hits}/{samples} hits, analytic {analytic:.6g}")
    return estimate


def histogram_report(
    matched: Sequence[float],
    unmatched: Sequence[float],
    bins: int = 20,
    value_range: Tuple[float, float] = (-1.0, 1.0),
) -> HistogramReport:
    """
    Bin matched and unmatched scores on common edges.

    gap is min(matched) - max(unmatched). When the samples overlap (gap < 0),
    overlap counts the scores of either class inside [min(matched), max(unmatched)].
    """
    matched = np.asarray(matched, dtype=np.float64)
    unmatched = np.asarray(unmatched, dtype=np.float64)
    if matched.size == 0 or unmatched.size == 0:
        raise InsufficientData("both score samples must be non-empty")
    if bins < 1:
        raise InvalidQuery("bins must be positive")
    lo = min(value_range[0], float(matched.min()), float(unmatched.min()))
    hi = max(value_range[1], float(matched.max()), float(unmatched.max()))
    edges = np.linspace(lo, hi, bins + 1)
    matched_counts, _ = np.histogram(matched, bins=edges)
    unmatched_counts, _ = np.histogram(unmatched, bins=edges)

    low, high = float(matched.min()), float(unmatched.max())
    gap = low - high
    overlap = 0
    if gap < 0:
        overlap = int(np.count_nonzero((matched >= low) & (matched <= high)))
        overlap += int(np.count_nonzero((unmatched >= low) & (unmatched <= high)))
    return HistogramReport(edges, matched_counts, unmatched_counts, gap, overlap)


def spearman_trend(strengths: Sequence[float], means: Sequence[float]) -> float:
    """Spearman rank correlation between attack strength and mean score."""
    if len(strengths) != len(means):
        raise LengthMismatch("strengths and means must have the same length")
    if len(strengths) < 2:
        raise InsufficientData("a trend needs at least two points")
    return float(spearmanr(strengths, means).correlation)


# --- CSV -----------------------------------------------------------------

Destination = Union[str, Path, IO[str], None]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def to_csv(header: Sequence[str], rows: Iterable[Sequence], destination: Destination = None) -> str:
    """
    Render a table as CSV with a header row; floats are written with repr.

    The text is also written to ``destination`` when it is a path or stream.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(value) for value in row])
    text = buffer.getvalue()
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    elif destination is not None:
        destination.write(text)
    return text


def trace_csv(trace: AttackTrace, destination: Destination = None) -> str:
    return to_csv(
        ("eval_index", "rho_best"),
        ((index + 1, rho) for index, rho in enumerate(trace.rho_trajectory)),
        destination,
    )


def sweep_csv(rows: Sequence[SweepRow], destination: Destination = None) -> str:
    header = (
        "kind", "strength", "trials", "failures", "coverage",
        "mean_corr_x", "std_corr_x", "mean_corr_y", "std_corr_y",
    )
    return to_csv(header, ([getattr(row, name) for name in header] for row in rows), destination)


def success_rate_csv(rows: Sequence[SuccessRateRow], destination: Destination = None) -> str:
    header = ("method", "runs", "successes", "success_rate", "median_evals", "min_evals")
    return to_csv(header, ([getattr(row, name) for name in header] for row in rows), destination)


def histogram_csv(report: HistogramReport, destination: Destination = None) -> str:
    return to_csv(("bin_low", "bin_high", "matched", "unmatched"), report.rows, destination)


def summary_rows(report: HistogramReport) -> List[Tuple[str, float]]:
    return [("gap", report.gap), ("overlap", report.overlap)]
