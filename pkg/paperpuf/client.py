"""
HTTP client for a remote verification server.

VerificationClient exposes the same verify() as TemplateStore, so the digital
attacks run unchanged against a live server.
"""

from datetime import datetime
from typing import List, Optional, Union

import httpx

from paperpuf.errors import DuplicateId, EmptyStore, PufError, UnknownId
from paperpuf.middleware.logging import logger
from paperpuf.models.normmap import NormMap, SimilarityScore
from paperpuf.models.records import QueryLogEntry, SourceTag, VerifyOutcome
from paperpuf.routes.schemas import (
    HealthResponse,
    QueryLogItem,
    TemplateSummary,
    VerifyResponse,
    norm_map_to_base64,
)


class VerificationClient:
    def __init__(self, base_url_or_client: Union[str, httpx.Client], timeout: float = 30.0):
        self._threshold: Optional[float] = None
        if isinstance(base_url_or_client, httpx.Client):
            self._client = base_url_or_client
            self._owned = False
        else:
            self._client = httpx.Client(base_url=base_url_or_client, timeout=timeout)
            self._owned = True

    def close(self):
        if self._owned:
            self._client.close()

    def __enter__(self) -> "VerificationClient":
        return self

    def __exit__(self, *exc):
        self.close()

    def _check(self, response: httpx.Response) -> httpx.Response:
        """Raise the domain error behind a non-2xx answer."""
        if response.is_success:
            return response
        try:
            detail = str(response.json().get("detail", response.text))
        except ValueError:
            detail = response.text
        logger.warning(f"Server answered {response.status_code}: {detail}")
        if response.status_code == 404:
            raise UnknownId(detail)
        if response.status_code == 409:
            raise EmptyStore(detail) if detail.startswith("EmptyStore") else DuplicateId(detail)
        if response.status_code == 422:
            raise PufError(detail)
        response.raise_for_status()
        return response

    def health(self) -> HealthResponse:
        return HealthResponse.model_validate(self._check(self._client.get("/health")).json())

    @property
    def threshold(self) -> float:
        """The server's decision threshold, read once from /health."""
        if self._threshold is None:
            self._threshold = self.health().threshold
        return self._threshold

    def enroll(
        self,
        template_id: str,
        template: NormMap,
        source: SourceTag = SourceTag.SCANNER,
        enrolled_at: Optional[datetime] = None,
    ) -> TemplateSummary:
        payload = {
            "id": template_id,
            "source": SourceTag(source).value,
            "norm_map": norm_map_to_base64(template),
            "enrolled_at": enrolled_at.isoformat() if enrolled_at else None,
        }
        return TemplateSummary.model_validate(self._check(self._client.post("/templates", json=payload)).json())

    def templates(self) -> List[TemplateSummary]:
        return [TemplateSummary.model_validate(item) for item in self._check(self._client.get("/templates")).json()]

    def verify(self, query: NormMap, template_id: Optional[str] = None) -> VerifyOutcome:
        payload = {"norm_map": norm_map_to_base64(query), "template_id": template_id}
        result = VerifyResponse.model_validate(self._check(self._client.post("/verify", json=payload)).json())
        return VerifyOutcome(
            accepted=result.accepted,
            score=SimilarityScore(result.corr_x, result.corr_y),
            matched_id=result.matched_id,
        )

    def query_log(self) -> List[QueryLogEntry]:
        items = [QueryLogItem.model_validate(item) for item in self._check(self._client.get("/query-log")).json()]
        return [
            QueryLogEntry(
                timestamp=item.timestamp,
                template_id=item.template_id,
                score=SimilarityScore(item.corr_x, item.corr_y),
                accepted=item.accepted,
            )
            for item in items
        ]
