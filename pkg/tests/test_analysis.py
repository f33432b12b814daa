import io

import numpy as np
import pytest

from paperpuf.config import Settings
from paperpuf.errors import InfeasibleEstimate, InsufficientData, InvalidQuery, LengthMismatch
from paperpuf.models.analysis import CollisionQuery, SuccessRateRow, SweepRow
from paperpuf.models.attacks import AttackKind, AttackMethod, AttackSpec, AttackTrace, Termination
from paperpuf.services import analysis_service
from paperpuf.services.scenario_service import matched_unmatched_scores


def test_collision_probability_far_below_float_range():
    query = CollisionQuery(d=40_000, epsilon=0.3, radius=1.0)
    assert analysis_service.collision_log10_probability(query) == pytest.approx(-20915.1498, abs=0.01)
    mantissa, exponent = analysis_service.collision_probability(query)
    assert exponent == -20916
    assert mantissa == pytest.approx(7.08, abs=0.01)
    assert 1.0 <= mantissa < 10.0


def test_collision_probability_in_float_range():
    mantissa, exponent = analysis_service.collision_probability(CollisionQuery(d=3, epsilon=0.5, radius=1.0))
    assert (mantissa, exponent) == (1.25, -1)


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5, 6])
def test_monte_carlo_agrees_with_the_closed_form(d):
    estimate = analysis_service.collision_monte_carlo(CollisionQuery(d=d, epsilon=0.5, radius=1.0), samples=200_000, seed=d)
    assert estimate.analytic == pytest.approx(0.5**d)
    assert estimate.samples == 200_000
    assert estimate.within(4.0)


def test_monte_carlo_is_seeded():
    query = CollisionQuery(d=2, epsilon=0.4, radius=1.0)
    first = analysis_service.collision_monte_carlo(query, samples=150_000, seed=9)
    second = analysis_service.collision_monte_carlo(query, samples=150_000, seed=9)
    assert first.hits == second.hits


def test_monte_carlo_limits():
    with pytest.raises(InvalidQuery):
        analysis_service.collision_monte_carlo(CollisionQuery(d=13, epsilon=0.9, radius=1.0))
    with pytest.raises(InfeasibleEstimate):
        analysis_service.collision_monte_carlo(CollisionQuery(d=12, epsilon=0.3, radius=1.0), samples=1000)


@pytest.mark.parametrize(
    "d, epsilon, radius",
    [(0, 0.1, 1.0), (2.5, 0.1, 1.0), (3, 0.0, 1.0), (3, 2.0, 1.0)],
)
def test_invalid_collision_queries(d, epsilon, radius):
    with pytest.raises(InvalidQuery):
        CollisionQuery(d=d, epsilon=epsilon, radius=radius)


def test_histogram_gap_for_separated_samples():
    report = analysis_service.histogram_report([0.8, 0.9, 0.95], [-0.1, 0.0, 0.2], bins=10)
    assert report.gap == pytest.approx(0.6)
    assert report.overlap == 0
    assert report.matched_counts.sum() == 3 and report.unmatched_counts.sum() == 3
    assert report.edges[0] == -1.0 and report.edges[-1] == 1.0


def test_histogram_overlap_counts_both_classes():
    report = analysis_service.histogram_report([0.1, 0.5, 0.9], [0.0, 0.3, 0.6])
    assert report.gap == pytest.approx(-0.5)
    # [0.1, 0.6] holds 0.1 and 0.5 from matched, 0.3 and 0.6 from unmatched
    assert report.overlap == 4


def test_histogram_needs_both_samples():
    with pytest.raises(InsufficientData):
        analysis_service.histogram_report([], [0.1])


def test_spearman_trend():
    assert analysis_service.spearman_trend([0.0, 0.1, 0.5], [0.9, 0.6, 0.1]) == pytest.approx(-1.0)
    with pytest.raises(LengthMismatch):
        analysis_service.spearman_trend([0.0, 0.1], [0.9])
    with pytest.raises(InsufficientData):
        analysis_service.spearman_trend([0.0], [0.9])


def test_csv_writes_repr_floats_and_enum_values():
    text = analysis_service.to_csv(("method", "rate", "evals"), [(AttackMethod.POWELL, 0.1, None)])
    assert text == "method,rate,evals\npowell,0.1,\n"


def test_tables_to_streams_and_files(tmp_path):
    rows = [SuccessRateRow("powell", 4, 3, 0.75, 812.5, 400)]
    stream = io.StringIO()
    analysis_service.success_rate_csv(rows, stream)
    assert stream.getvalue().splitlines() == [
        "method,runs,successes,success_rate,median_evals,min_evals",
        "powell,4,3,0.75,812.5,400",
    ]
    path = tmp_path / "sweep.csv"
    analysis_service.sweep_csv([SweepRow("patch", 0.25, 10, 0, 0.25, 0.5, 0.1, 0.45, 0.12)], path)
    assert path.read_text().splitlines()[1] == "patch,0.25,10,0,0.25,0.5,0.1,0.45,0.12"


def test_trace_csv_has_one_row_per_evaluation():
    trace = AttackTrace(
        target_id="t", method=AttackMethod.BASELINE, component="x", threshold=0.3, budget=3,
        iterations=2, function_evals=3, rho_trajectory=(0.1, 0.1, 0.25), success=False,
        termination=Termination.BUDGET, forged=None,
    )
    lines = analysis_service.trace_csv(trace).splitlines()
    assert lines == ["eval_index,rho_best", "1,0.1", "2,0.1", "3,0.25"]


def test_histogram_csv_rows():
    report = analysis_service.histogram_report([0.9], [0.0], bins=2)
    lines = analysis_service.histogram_csv(report).splitlines()
    assert lines == ["bin_low,bin_high,matched,unmatched", "-1.0,0.0,0,0", "0.0,1.0,1,1"]


def test_matched_and_unmatched_scores_separate(settings):
    matched, unmatched = matched_unmatched_scores(settings, seed=5, pairs=8)
    assert len(matched) == len(unmatched) == 8
    report = analysis_service.histogram_report([s.minimum for s in matched], [s.minimum for s in unmatched])
    assert report.gap > 0
    assert np.mean([s.minimum for s in matched]) > 0.8


@pytest.mark.parametrize("d, epsilon, expected", [(1, 1.0, 0.0), (2, 0.5, -0.60206)])
def test_collision_log10_closed_form(d, epsilon, expected):
    assert analysis_service.collision_log10_probability(CollisionQuery(d, epsilon, 1.0)) == pytest.approx(expected, abs=1e-5)


@pytest.fixture(scope="module")
def full_settings() -> Settings:
    return Settings(seed=7, tracing_enabled=False)


def test_scribbling_narrows_the_full_size_gap(full_settings):
    clean_matched, clean_unmatched = matched_unmatched_scores(full_settings, seed=6, pairs=20)
    clean = analysis_service.histogram_report([s.minimum for s in clean_matched], [s.minimum for s in clean_unmatched])
    attack = AttackSpec(AttackKind.SCRIBBLE, 0.25)
    matched, unmatched = matched_unmatched_scores(full_settings, seed=6, pairs=20, attack=attack)
    attacked = analysis_service.histogram_report([s.minimum for s in matched], [s.minimum for s in unmatched])
    assert clean.gap > 0.5
    assert attacked.gap < clean.gap
    # attacking a sheet creates no similarity to the other sheets
    magnitudes = np.abs([[s.corr_x, s.corr_y] for s in unmatched])
    assert magnitudes.mean() < 0.05
    assert np.mean(magnitudes.max(axis=1) < 0.05) >= 0.9
