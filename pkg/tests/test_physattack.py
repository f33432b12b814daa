import numpy as np
import pytest

from paperpuf.config import Settings
from paperpuf.db.store import TemplateStore
from paperpuf.errors import InvalidStrength
from paperpuf.models.attacks import DEFAULT_STRENGTHS, AttackKind, AttackSpec
from paperpuf.services.analysis_service import spearman_trend
from paperpuf.services.physattack_service import apply_attack, degradation_sweep, sweep_trial_seeds
from paperpuf.services.scenario_service import simulate_sheet

AREA_KINDS = [AttackKind.SCRATCH, AttackKind.PATCH, AttackKind.SCRIBBLE]


@pytest.fixture
def sheet(settings):
    return simulate_sheet(settings.model_copy(update={"patch_size": 48}), seed=21)


@pytest.mark.parametrize("kind", AREA_KINDS)
@pytest.mark.parametrize("strength", [0.05, 0.25, 0.75])
def test_area_attacks_cover_exact_pixel_count(sheet, settings, kind, strength):
    result = apply_attack(sheet, AttackSpec(kind, strength, seed=3), settings)
    expected = round(strength * sheet.height * sheet.width)
    assert int(result.mask.sum()) == expected
    assert result.coverage == pytest.approx(expected / (sheet.height * sheet.width))


@pytest.mark.parametrize("kind", AREA_KINDS)
def test_area_attacks_leave_untouched_pixels_bit_identical(sheet, settings, kind):
    result = apply_attack(sheet, AttackSpec(kind, 0.25, seed=4), settings)
    untouched = ~result.mask
    assert np.array_equal(result.patch.normals[untouched], sheet.normals[untouched])
    assert np.array_equal(result.patch.albedo[untouched], sheet.albedo[untouched])


def test_attacks_are_deterministic_per_seed(sheet, settings):
    spec = AttackSpec(AttackKind.SCRATCH, 0.1, seed=5)
    assert apply_attack(sheet, spec, settings).patch.equals(apply_attack(sheet, spec, settings).patch)


def test_attack_does_not_modify_the_original(sheet, settings):
    before = sheet.normals.copy()
    apply_attack(sheet, AttackSpec(AttackKind.PATCH, 0.5, seed=1), settings)
    assert np.array_equal(sheet.normals, before)


def test_sticker_and_ink_darken_the_surface(sheet, settings):
    sticker = apply_attack(sheet, AttackSpec(AttackKind.PATCH, 0.25, seed=2), settings)
    assert np.all(sticker.patch.albedo[sticker.mask] == settings.sticker_albedo)
    ink = apply_attack(sheet, AttackSpec(AttackKind.SCRIBBLE, 0.25, seed=2), settings)
    assert np.allclose(ink.patch.albedo[ink.mask], sheet.albedo[ink.mask] * settings.ink_albedo_factor)


@pytest.mark.parametrize("kind", [AttackKind.CRUMPLE_RANDOM, AttackKind.CRUMPLE_FOLD])
def test_crumpling_touches_the_whole_sheet(sheet, settings, kind):
    result = apply_attack(sheet, AttackSpec(kind, seed=6), settings)
    assert result.coverage == 1.0
    assert np.allclose(np.linalg.norm(result.patch.normals, axis=-1), 1.0)


@pytest.mark.parametrize("strength", [0.0, 1.0, -0.1])
def test_area_strength_must_be_a_proper_fraction(strength):
    with pytest.raises(InvalidStrength):
        AttackSpec(AttackKind.SCRATCH, strength)


def test_sticker_sweep_degrades_monotonically(sheet, settings):
    rows = degradation_sweep(sheet, AttackKind.PATCH, (0.05, 0.25, 0.75), trials=4, seed=1, settings=settings)
    assert [row.strength for row in rows] == [0.0, 0.05, 0.25, 0.75]
    means = [row.mean_corr_x for row in rows]
    assert means[0] > 0.85
    assert spearman_trend([row.strength for row in rows], means) == pytest.approx(-1.0)


def test_heavy_scribbling_destroys_the_match(sheet, settings):
    rows = degradation_sweep(sheet, AttackKind.SCRIBBLE, (0.75,), trials=3, seed=2, settings=settings)
    assert rows[-1].mean_corr_x < 0.15


def test_crumpling_destroys_the_match():
    full = Settings(seed=7, tracing_enabled=False)
    sheet = simulate_sheet(full, seed=21)
    rows = degradation_sweep(sheet, AttackKind.CRUMPLE_RANDOM, trials=10, seed=3, settings=full, include_baseline=False)
    assert len(rows) == 1 and rows[0].strength == 1.0
    row = rows[0]
    assert row.failures >= 0.8 * row.trials or row.mean_corr_x < 0.1


def test_sweep_reuses_an_enrolled_template(sheet, settings):
    store = TemplateStore.in_memory()
    degradation_sweep(sheet, AttackKind.PATCH, (0.5,), trials=2, seed=0, settings=settings, store=store, template_id="sheet")
    assert store.ids() == ["sheet"]
    assert store.query_count == 4


def test_sweep_results_do_not_depend_on_level_order(sheet, settings):
    forward = degradation_sweep(sheet, AttackKind.SCRATCH, (0.1, 0.5), trials=2, seed=4, settings=settings, include_baseline=False)
    backward = degradation_sweep(sheet, AttackKind.SCRATCH, (0.5, 0.1), trials=2, seed=4, settings=settings, include_baseline=False)
    assert forward[0] == backward[1]
    assert forward[1] == backward[0]


def test_sweep_trial_seeds_follow_kind_and_strength():
    assert sweep_trial_seeds(0, AttackKind.SCRATCH, 0.25, 1) == sweep_trial_seeds(0, AttackKind.SCRATCH, 0.25, 1)
    assert sweep_trial_seeds(0, AttackKind.SCRATCH, 0.25, 1) != sweep_trial_seeds(0, AttackKind.SCRIBBLE, 0.25, 1)
    assert sweep_trial_seeds(0, AttackKind.SCRATCH, 0.25, 1) != sweep_trial_seeds(0, AttackKind.SCRATCH, 0.5, 1)


@pytest.fixture(scope="module")
def full_settings() -> Settings:
    return Settings(seed=7, tracing_enabled=False)


@pytest.fixture(scope="module")
def full_sheet(full_settings):
    return simulate_sheet(full_settings, seed=21)


@pytest.fixture(scope="module")
def full_sweeps(full_sheet, full_settings):
    store = TemplateStore.in_memory(full_settings.threshold)
    return {
        kind: degradation_sweep(full_sheet, kind, DEFAULT_STRENGTHS, trials=10, seed=5, settings=full_settings, store=store)
        for kind in AREA_KINDS
    }


@pytest.mark.parametrize("kind", AREA_KINDS)
def test_full_size_sweeps_degrade_strictly(full_sweeps, kind):
    rows = full_sweeps[kind]
    assert [row.strength for row in rows] == [0.0, *DEFAULT_STRENGTHS]
    attacked = rows[1:]
    means = [row.mean_corr_x for row in attacked]
    assert all(later < earlier for earlier, later in zip(means, means[1:]))
    assert spearman_trend([row.strength for row in attacked], means) == pytest.approx(-1.0)
    assert attacked[-1].mean_corr_x < 0.1


def test_scribbling_is_the_most_severe_at_a_quarter(full_sweeps):
    def at_quarter(kind):
        return next(row for row in full_sweeps[kind] if row.strength == 0.25)

    scribble = at_quarter(AttackKind.SCRIBBLE)
    for other in (AttackKind.SCRATCH, AttackKind.PATCH):
        row = at_quarter(other)
        assert scribble.mean_corr_x <= row.mean_corr_x + max(row.std_corr_x, scribble.std_corr_x)
