"""
Physical denial-of-service attacks, applied to the ground-truth surface before an
honest re-capture.

Area attacks (scratch, patch, scribble) touch exactly round(strength * H * W)
pixels and leave every other pixel bit-identical. Crumpling warps the whole sheet.
"""

from functools import lru_cache
import math
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from paperpuf.config import Settings, get_settings
from paperpuf.db.store import TemplateStore
from paperpuf.errors import AlignmentFailed, ConstantInput, InvalidStrength
from paperpuf.middleware.logging import logger
from paperpuf.models.analysis import SweepRow
from paperpuf.models.attacks import DEFAULT_STRENGTHS, AttackedPatch, AttackKind, AttackSpec
from paperpuf.models.surface import SurfacePatch
from paperpuf.observability import add_stage_metadata, trace_stage
from paperpuf.services.estimator_service import capture_and_extract
from paperpuf.services.surface_service import correlated_field, normals_from_slopes, slopes_from_normals

STROKE_STEP = 1.0


@lru_cache(maxsize=8)
def _disc_offsets(width: int) -> Tuple[np.ndarray, np.ndarray]:
    radius = width / 2.0
    reach = int(math.ceil(radius))
    dy, dx = np.mgrid[-reach:reach + 1, -reach:reach + 1]
    inside = dy * dy + dx * dx <= radius * radius
    return dy[inside], dx[inside]


class _Coverage:
    """Tracks covered pixels and stops exactly at the target count."""

    def __init__(self, shape: Tuple[int, int], strength: float):
        self.mask = np.zeros(shape, dtype=bool)
        self.target = int(round(strength * shape[0] * shape[1]))
        self.count = 0

    @property
    def done(self) -> bool:
        return self.count >= self.target

    def add(self, ys: np.ndarray, xs: np.ndarray, priority: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Mark new pixels, lowest priority value first; returns the pixels actually added."""
        fresh = ~self.mask[ys, xs]
        ys, xs, priority = ys[fresh], xs[fresh], priority[fresh]
        room = self.target - self.count
        if ys.size > room:
            keep = np.argsort(priority, kind="stable")[:room]
            ys, xs = ys[keep], xs[keep]
        self.mask[ys, xs] = True
        self.count += ys.size
        return ys, xs


def _strokes(
    rng: np.random.Generator,
    shape: Tuple[int, int],
    coverage: _Coverage,
    width_range: Tuple[int, int],
    length_range: Tuple[int, int],
    turn_deg: float,
) -> Iterator[Tuple[np.ndarray, np.ndarray, float, float, float]]:
    """
    Random-walk polylines with a fixed step and bounded turning angle.

    Yields the pixels each disc stamp added, with the stamp centre and heading.
    """
    height, width = shape
    turn = math.radians(turn_deg)
    while not coverage.done:
        y, x = rng.uniform(0, height), rng.uniform(0, width)
        heading = rng.uniform(0, 2 * math.pi)
        pen = int(rng.integers(width_range[0], width_range[1] + 1))
        offsets_y, offsets_x = _disc_offsets(pen)
        for _ in range(int(rng.integers(length_range[0], length_range[1] + 1))):
            cy, cx = int(round(y)), int(round(x))
            ys, xs = cy + offsets_y, cx + offsets_x
            inside = (ys >= 0) & (ys < height) & (xs >= 0) & (xs < width)
            ys, xs = ys[inside], xs[inside]
            distance = (ys - y) ** 2 + (xs - x) ** 2
            added_y, added_x = coverage.add(ys, xs, distance)
            if added_y.size:
                yield added_y, added_x, y, x, heading
            if coverage.done:
                return
            heading += rng.uniform(-turn, turn)
            y += STROKE_STEP * math.sin(heading)
            x += STROKE_STEP * math.cos(heading)
            if not (0 <= y < height and 0 <= x < width):
                break


def _scratch(patch: SurfacePatch, spec: AttackSpec, settings: Settings, rng: np.random.Generator):
    coverage = _Coverage(patch.shape, spec.strength)
    p, q = slopes_from_normals(patch.normals)
    p, q = p.copy(), q.copy()
    gouge = 2.0 * max(patch.roughness, settings.roughness)
    for ys, xs, y, x, heading in _strokes(
        rng, patch.shape, coverage,
        (settings.scratch_width_min, settings.scratch_width_max), (20, 80), settings.stroke_turn_deg,
    ):
        # groove walls slope away from the stroke centre line
        perp_x, perp_y = -math.sin(heading), math.cos(heading)
        side = np.sign((xs - x) * perp_x + (ys - y) * perp_y)
        wall = settings.scratch_groove_slope * side
        p[ys, xs] = wall * perp_x + gouge * rng.standard_normal(ys.size)
        q[ys, xs] = wall * perp_y + gouge * rng.standard_normal(ys.size)
    mask = coverage.mask
    normals = np.array(patch.normals)
    normals[mask] = normals_from_slopes(p[mask], q[mask])
    albedo = np.array(patch.albedo)
    albedo[mask] = albedo[mask] * settings.scratch_albedo_factor
    return normals, albedo, mask


def _sticker(patch: SurfacePatch, spec: AttackSpec, settings: Settings, rng: np.random.Generator):
    height, width = patch.shape
    coverage = _Coverage(patch.shape, spec.strength)
    while not coverage.done:
        rect_h = int(rng.integers(max(2, height // 10), max(3, height // 2) + 1))
        rect_w = int(rng.integers(max(2, width // 10), max(3, width // 2) + 1))
        top = int(rng.integers(0, height - rect_h + 1))
        left = int(rng.integers(0, width - rect_w + 1))
        ys, xs = np.mgrid[top:top + rect_h, left:left + rect_w]
        ys, xs = ys.ravel(), xs.ravel()
        # trimming keeps the raster-order head of the last rectangle
        coverage.add(ys, xs, np.arange(ys.size, dtype=np.float64))
    mask = coverage.mask
    count = int(mask.sum())
    normals = np.array(patch.normals)
    jitter = settings.sticker_jitter * rng.standard_normal((2, count))
    normals[mask] = normals_from_slopes(jitter[0], jitter[1])
    albedo = np.array(patch.albedo)
    albedo[mask] = settings.sticker_albedo
    return normals, albedo, mask


def _scribble(patch: SurfacePatch, spec: AttackSpec, settings: Settings, rng: np.random.Generator):
    coverage = _Coverage(patch.shape, spec.strength)
    for _ in _strokes(
        rng, patch.shape, coverage,
        (settings.scratch_width_min, settings.scratch_width_max), (40, 160), 2 * settings.stroke_turn_deg,
    ):
        pass
    mask = coverage.mask
    p, q = slopes_from_normals(patch.normals)
    smooth_p = gaussian_filter(p, settings.ink_smoothing, mode="reflect")
    smooth_q = gaussian_filter(q, settings.ink_smoothing, mode="reflect")
    normals = np.array(patch.normals)
    normals[mask] = normals_from_slopes(smooth_p[mask], smooth_q[mask])
    albedo = np.array(patch.albedo)
    albedo[mask] = albedo[mask] * settings.ink_albedo_factor
    return normals, albedo, mask


def _warp(fields: Sequence[np.ndarray], dy: np.ndarray, dx: np.ndarray) -> List[np.ndarray]:
    height, width = fields[0].shape
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    coordinates = np.stack([yy + dy, xx + dx])
    return [map_coordinates(f, coordinates, order=1, mode="reflect") for f in fields]


def _residual_warp(rng: np.random.Generator, shape, settings: Settings, scale: float = 1.0):
    amplitude = scale * settings.crumple_amplitude * (1.0 - settings.ironing)
    dy = amplitude * correlated_field(rng, shape, settings.crumple_correlation_length)
    dx = amplitude * correlated_field(rng, shape, settings.crumple_correlation_length)
    return dy, dx


def _crumple_random(patch: SurfacePatch, spec: AttackSpec, settings: Settings, rng: np.random.Generator):
    p, q = slopes_from_normals(patch.normals)
    dy, dx = _residual_warp(rng, patch.shape, settings)
    p, q, albedo = _warp([p, q, np.asarray(patch.albedo)], dy, dx)
    p = p + settings.crumple_tilt * correlated_field(rng, patch.shape, settings.crumple_correlation_length)
    q = q + settings.crumple_tilt * correlated_field(rng, patch.shape, settings.crumple_correlation_length)
    # ironing flattens the sheet but leaves a dense network of fine creases
    p = p + settings.crumple_crease_slope * correlated_field(rng, patch.shape, settings.crumple_crease_length)
    q = q + settings.crumple_crease_slope * correlated_field(rng, patch.shape, settings.crumple_crease_length)
    return normals_from_slopes(p, q), np.clip(albedo, 1e-3, 1.0), np.ones(patch.shape, dtype=bool)


def _crumple_fold(patch: SurfacePatch, spec: AttackSpec, settings: Settings, rng: np.random.Generator):
    height, width = patch.shape
    cy = rng.uniform(height / 4, 3 * height / 4)
    cx = rng.uniform(width / 4, 3 * width / 4)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    # each quadrant between the two creases settles with its own offset
    quadrant = (yy >= cy).astype(int) * 2 + (xx >= cx).astype(int)
    angles = rng.uniform(0, 2 * math.pi, size=4)
    dy, dx = _residual_warp(rng, patch.shape, settings, scale=0.5)
    dy = dy + settings.fold_offset * np.sin(angles)[quadrant]
    dx = dx + settings.fold_offset * np.cos(angles)[quadrant]

    p, q = slopes_from_normals(patch.normals)
    p, q, albedo = _warp([p, q, np.asarray(patch.albedo)], dy, dx)

    half = settings.crease_width / 2.0
    ridge = 3.0 * max(patch.roughness, settings.roughness)
    along_y = np.abs(yy - cy) < half
    along_x = np.abs(xx - cx) < half
    p = np.where(along_x, ridge * np.sign(xx - cx) + ridge * rng.standard_normal(p.shape), p)
    q = np.where(along_y, ridge * np.sign(yy - cy) + ridge * rng.standard_normal(q.shape), q)
    return normals_from_slopes(p, q), np.clip(albedo, 1e-3, 1.0), np.ones(patch.shape, dtype=bool)


_ATTACKS = {
    AttackKind.SCRATCH: _scratch,
    AttackKind.PATCH: _sticker,
    AttackKind.SCRIBBLE: _scribble,
    AttackKind.CRUMPLE_RANDOM: _crumple_random,
    AttackKind.CRUMPLE_FOLD: _crumple_fold,
}
_KIND_CODES = {kind: index for index, kind in enumerate(AttackKind)}


def apply_attack(patch: SurfacePatch, spec: AttackSpec, settings: Optional[Settings] = None) -> AttackedPatch:
    """
    Damage a copy of the patch the way the physical attack would.

    Args:
        patch: Ground-truth surface
        spec: Attack kind, strength and seed
        settings: Attack knobs (stroke widths, ink density, crease width, ...)

    Returns:
        AttackedPatch with the damaged surface, touched-pixel mask and achieved coverage

    Raises:
        InvalidStrength: If an area attack's strength is outside (0, 1)
    """
    settings = settings or get_settings()
    if spec.kind.is_area and not 0.0 < spec.strength < 1.0:
        raise InvalidStrength(f"strength must lie in (0, 1), got {spec.strength}")
    rng = np.random.default_rng(spec.seed)
    normals, albedo, mask = _ATTACKS[spec.kind](patch, spec, settings, rng)
    attacked = SurfacePatch(normals, albedo, patch.correlation_length, patch.roughness)
    coverage = float(mask.mean())
    logger.debug(f"Applied {spec.kind.value} at strength {spec.strength}: coverage {coverage:.4f}")
    return AttackedPatch(patch=attacked, spec=spec, coverage=coverage, mask=mask)


def sweep_trial_seeds(seed: int, kind: AttackKind, strength: float, trial: int) -> Tuple[int, int]:
    """Attack and render seeds of one sweep trial, fixed by the strength rather than its position in the sweep."""
    level = int(round(float(strength) * 1_000_000))
    sequence = np.random.SeedSequence([seed, _KIND_CODES[AttackKind(kind)], level, trial])
    attack_seed, render_seed = (int(s) for s in sequence.generate_state(2))
    return attack_seed, render_seed


def degradation_sweep(
    patch: SurfacePatch,
    kind: AttackKind,
    strengths: Sequence[float] = DEFAULT_STRENGTHS,
    trials: int = 10,
    seed: int = 0,
    settings: Optional[Settings] = None,
    store: Optional[TemplateStore] = None,
    template_id: str = "target",
    include_baseline: bool = True,
) -> List[SweepRow]:
    """
    Attack fresh copies of an enrolled patch, re-capture them and score against the template.

    The patch is enrolled first (a clean capture) unless ``store`` already holds
    ``template_id``. Strength 0 is the no-attack row. Crumpling ignores strength and
    contributes a single row labelled 1.0. Trials that fail in the pipeline
    (alignment or degenerate features) are counted in ``failures`` and left out
    of the means.

    Returns:
        One SweepRow per strength level
    """
    settings = settings or get_settings()
    kind = AttackKind(kind)
    if store is None:
        store = TemplateStore.in_memory(settings.threshold)
    if template_id not in store:
        enroll_seed = int(np.random.SeedSequence([seed, 2**31 - 1]).generate_state(1)[0])
        store.enroll(template_id, capture_and_extract(patch, settings, enroll_seed))

    levels: List[float] = [0.0] if include_baseline else []
    levels += list(strengths) if kind.is_area else [1.0]

    rows = []
    with trace_stage("physattack", "degradation_sweep", kind=kind.value, trials=trials) as span:
        for strength in levels:
            corr_x, corr_y, coverages = [], [], []
            failures = 0
            for trial in range(trials):
                attack_seed, render_seed = sweep_trial_seeds(seed, kind, strength, trial)
                if strength == 0.0:
                    attacked, coverage = patch, 0.0
                else:
                    result = apply_attack(patch, AttackSpec(kind, strength if kind.is_area else 0.0, attack_seed), settings)
                    attacked, coverage = result.patch, result.coverage
                coverages.append(coverage)
                try:
                    query = capture_and_extract(attacked, settings, render_seed)
                    outcome = store.verify(query, template_id)
                except (AlignmentFailed, ConstantInput) as e:
                    failures += 1
                    logger.debug(f"{kind.value} strength {strength} trial {trial} failed: {e}")
                    continue
                corr_x.append(outcome.score.corr_x)
                corr_y.append(outcome.score.corr_y)

            row = SweepRow(
                kind=kind.value,
                strength=float(strength),
                trials=trials,
                failures=failures,
                coverage=float(np.mean(coverages)) if coverages else 0.0,
                mean_corr_x=_mean(corr_x),
                std_corr_x=_std(corr_x),
                mean_corr_y=_mean(corr_y),
                std_corr_y=_std(corr_y),
            )
            logger.info(
                f"Sweep {kind.value} strength {strength:.2f}: corr_x {row.mean_corr_x:.3f} "
                f"({row.std_corr_x:.3f}), corr_y {row.mean_corr_y:.3f} ({row.std_corr_y:.3f}), "
                f"failures {failures}/{trials}"
            )
            rows.append(row)
        add_stage_metadata(span, {"rows": len(rows)})
    return rows


def _mean(values: List[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def _std(values: List[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
