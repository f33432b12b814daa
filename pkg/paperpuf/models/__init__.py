from paperpuf.models.normmap import Component, NormMap, SimilarityScore
from paperpuf.models.surface import PaperStock, SurfacePatch
from paperpuf.models.capture import CaptureMode, CaptureSet, LightConfig
from paperpuf.models.records import QueryLogEntry, SourceTag, TemplateRecord, VerifyOutcome
from paperpuf.models.attacks import (
    DEFAULT_STRENGTHS,
    AttackedPatch,
    AttackKind,
    AttackMethod,
    AttackSpec,
    AttackTrace,
    ForgeryResult,
    GreedyParams,
    Termination,
)
from paperpuf.models.latent import CodecComponent, LatentCodec
from paperpuf.models.analysis import (
    CollisionQuery,
    HistogramReport,
    MonteCarloEstimate,
    SuccessRateRow,
    SweepRow,
)

__all__ = [
    "DEFAULT_STRENGTHS",
    "AttackKind",
    "AttackMethod",
    "AttackSpec",
    "AttackTrace",
    "AttackedPatch",
    "CaptureMode",
    "CaptureSet",
    "CodecComponent",
    "CollisionQuery",
    "Component",
    "ForgeryResult",
    "GreedyParams",
    "HistogramReport",
    "LatentCodec",
    "LightConfig",
    "MonteCarloEstimate",
    "NormMap",
    "PaperStock",
    "QueryLogEntry",
    "SimilarityScore",
    "SourceTag",
    "SuccessRateRow",
    "SurfacePatch",
    "SweepRow",
    "TemplateRecord",
    "Termination",
    "VerifyOutcome",
]
