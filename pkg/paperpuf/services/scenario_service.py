"""
Evaluation setups shared by experiments, tests and the CLI.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from paperpuf.config import Settings
from paperpuf.db.store import TemplateStore
from paperpuf.errors import AlignmentFailed, ConstantInput, InvalidParam
from paperpuf.middleware.logging import logger
from paperpuf.models.attacks import AttackSpec
from paperpuf.models.latent import LatentCodec
from paperpuf.models.normmap import NormMap, SimilarityScore
from paperpuf.models.surface import PaperStock, SurfacePatch
from paperpuf.observability import trace_stage
from paperpuf.services import latent_service
from paperpuf.services.estimator_service import capture_and_extract
from paperpuf.services.physattack_service import apply_attack
from paperpuf.services.similarity_service import score
from paperpuf.services.surface_service import generate_patch

# SeedSequence tags keeping sheet, scan and attack streams apart
_SHEET, _SCAN, _ATTACK = 0, 1, 2
_HOLDOUT, _REFERENCE = 0, 1


def _derive(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def default_stock(settings: Settings) -> PaperStock:
    return PaperStock(seed=settings.seed, rank=settings.stock_rank, weight=settings.stock_weight)


def simulate_sheet(settings: Settings, seed: int, stock: Optional[PaperStock] = None) -> SurfacePatch:
    """One physical sheet with the configured surface statistics."""
    return generate_patch(
        seed,
        size=settings.patch_size,
        correlation_length=settings.correlation_length,
        roughness=settings.roughness,
        albedo_base=settings.albedo_base,
        albedo_variation=settings.albedo_variation,
        stock=stock,
    )


@dataclass
class AttackScenario:
    """
    The digital-attack setting: the adversary's holdout maps and codecs, and a
    store with the reference sheets enrolled.
    """

    holdout: List[NormMap]
    store: TemplateStore
    target_ids: List[str]
    codec_x: LatentCodec
    codec_y: LatentCodec
    stock: Optional[PaperStock]


def build_attack_scenario(
    settings: Settings,
    seed: int,
    holdout_sheets: int = 14,
    reference_sheets: int = 4,
    scans: int = 3,
    stock: Optional[PaperStock] = None,
) -> AttackScenario:
    """
    Cut holdout and reference sheets from one stock, scan each ``scans`` times,
    fit the adversary's codecs on the holdout scans and enroll every reference scan.

    Reference scans are enrolled as ``ref-SS-scan-C``; the targets are scan 0 of
    each reference sheet.

    Args:
        settings: Surface, capture and codec settings
        seed: Scenario seed
        holdout_sheets: Sheets the adversary owns
        reference_sheets: Sheets enrolled in the store
        scans: Captures per sheet
        stock: Paper stock; the configured default stock when omitted

    Returns:
        AttackScenario
    """
    if holdout_sheets < 1 or reference_sheets < 1 or scans < 1:
        raise InvalidParam("sheet and scan counts must be positive")
    stock = stock or default_stock(settings)
    with trace_stage("scenario", "build_attack_scenario", holdout=holdout_sheets, references=reference_sheets, scans=scans):
        holdout = []
        for sheet in range(holdout_sheets):
            patch = simulate_sheet(settings, _derive(seed, _HOLDOUT, _SHEET, sheet), stock)
            for scan in range(scans):
                holdout.append(capture_and_extract(patch, settings, _derive(seed, _HOLDOUT, _SCAN, sheet, scan)))

        store = TemplateStore.in_memory(settings.threshold)
        target_ids = []
        for sheet in range(reference_sheets):
            patch = simulate_sheet(settings, _derive(seed, _REFERENCE, _SHEET, sheet), stock)
            for scan in range(scans):
                template_id = f"ref-{sheet:02d}-scan-{scan}"
                store.enroll(
                    template_id, capture_and_extract(patch, settings, _derive(seed, _REFERENCE, _SCAN, sheet, scan))
                )
                if scan == 0:
                    target_ids.append(template_id)

        codec_x, codec_y = latent_service.fit_pair(holdout, settings.variance_target)
    logger.info(
        f"Attack scenario: {len(holdout)} holdout maps, {len(store)} templates, "
        f"m_x={codec_x.m}, m_y={codec_y.m}"
    )
    return AttackScenario(holdout, store, target_ids, codec_x, codec_y, stock)


def matched_unmatched_scores(
    settings: Settings,
    seed: int,
    pairs: int = 20,
    attack: Optional[AttackSpec] = None,
) -> Tuple[List[SimilarityScore], List[SimilarityScore]]:
    """
    Score samples for matched and unmatched comparisons.

    Sheet i is enrolled from a clean capture and re-captured (after ``attack``
    when given). The matched sample compares that re-capture to its own
    template; the unmatched sample compares it to the template of sheet i + 1.
    Re-captures that fail to align are left out of both samples.

    Returns:
        (matched scores, unmatched scores)
    """
    if pairs < 2:
        raise InvalidParam("at least two sheets are needed for unmatched comparisons")
    templates, queries = [], []
    for sheet in range(pairs):
        patch = simulate_sheet(settings, _derive(seed, _SHEET, sheet))
        templates.append(capture_and_extract(patch, settings, _derive(seed, _SCAN, sheet, 0)))
        if attack is not None:
            spec = AttackSpec(attack.kind, attack.strength, _derive(seed, _ATTACK, sheet, attack.seed))
            patch = apply_attack(patch, spec, settings).patch
        try:
            queries.append(capture_and_extract(patch, settings, _derive(seed, _SCAN, sheet, 1)))
        except (AlignmentFailed, ConstantInput) as e:
            logger.debug(f"Sheet {sheet} re-capture dropped: {e}")
            queries.append(None)

    matched, unmatched = [], []
    for sheet, query in enumerate(queries):
        if query is None:
            continue
        matched.append(score(query, templates[sheet]))
        unmatched.append(score(query, templates[(sheet + 1) % pairs]))
    return matched, unmatched
