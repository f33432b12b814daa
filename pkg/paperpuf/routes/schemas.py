from datetime import datetime
from typing import List, Optional
import base64
import binascii

from pydantic import BaseModel, Field

from paperpuf.db.formats import decode_norm_map, encode_norm_map
from paperpuf.errors import FormatError
from paperpuf.models.normmap import NormMap
from paperpuf.models.records import QueryLogEntry, SourceTag, TemplateRecord, VerifyOutcome


def norm_map_to_base64(norm_map: NormMap) -> str:
    return base64.b64encode(encode_norm_map(norm_map)).decode("ascii")


def norm_map_from_base64(payload: str) -> NormMap:
    try:
        raw = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as e:
        raise FormatError(f"norm_map is not valid base64: {e}") from e
    return decode_norm_map(raw)


class EnrollRequest(BaseModel):
    id: str = Field(..., min_length=1, description="Unique template id")
    source: SourceTag = Field(SourceTag.SCANNER, description="Capture device class")
    norm_map: str = Field(..., description="Base64 of the template's .nmap bytes")
    enrolled_at: Optional[datetime] = Field(None, description="Enrollment time; server time when omitted")


class TemplateSummary(BaseModel):
    id: str
    source: SourceTag
    enrolled_at: datetime
    width: int
    height: int

    @classmethod
    def of(cls, record: TemplateRecord) -> "TemplateSummary":
        return cls(
            id=record.id,
            source=record.source,
            enrolled_at=record.enrolled_at,
            width=record.template.width,
            height=record.template.height,
        )


class VerifyRequest(BaseModel):
    norm_map: str = Field(..., description="Base64 of the query's .nmap bytes")
    template_id: Optional[str] = Field(None, description="Template to compare against; whole-store search when omitted")


class VerifyResponse(BaseModel):
    accepted: bool
    corr_x: float
    corr_y: float
    matched_id: Optional[str]

    @classmethod
    def of(cls, outcome: VerifyOutcome) -> "VerifyResponse":
        return cls(
            accepted=outcome.accepted,
            corr_x=outcome.score.corr_x,
            corr_y=outcome.score.corr_y,
            matched_id=outcome.matched_id,
        )


class QueryLogItem(BaseModel):
    timestamp: datetime
    template_id: Optional[str]
    corr_x: float
    corr_y: float
    accepted: bool

    @classmethod
    def of(cls, entry: QueryLogEntry) -> "QueryLogItem":
        return cls(
            timestamp=entry.timestamp,
            template_id=entry.template_id,
            corr_x=entry.score.corr_x,
            corr_y=entry.score.corr_y,
            accepted=entry.accepted,
        )


class HealthResponse(BaseModel):
    status: str
    templates: int
    threshold: float


TemplateList = List[TemplateSummary]
