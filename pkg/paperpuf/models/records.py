from dataclasses import dataclass
from datetime import datetime
from typing import Optional
import enum

from paperpuf.models.normmap import NormMap, SimilarityScore


class SourceTag(str, enum.Enum):
    SCANNER = "scanner"
    MOBILE = "mobile"


@dataclass(frozen=True, eq=False)
class TemplateRecord:
    id: str
    template: NormMap
    enrolled_at: datetime
    source: SourceTag = SourceTag.SCANNER


@dataclass(frozen=True)
class VerifyOutcome:
    """Binary decision plus the full score the server leaks back to the client."""

    accepted: bool
    score: SimilarityScore
    matched_id: Optional[str]


@dataclass(frozen=True)
class QueryLogEntry:
    timestamp: datetime
    template_id: Optional[str]
    score: SimilarityScore
    accepted: bool
