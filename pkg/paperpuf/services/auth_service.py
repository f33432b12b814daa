from datetime import datetime
from typing import List, Optional

from paperpuf.db.store import TemplateStore
from paperpuf.middleware.logging import logger
from paperpuf.models.normmap import NormMap
from paperpuf.models.records import QueryLogEntry, SourceTag, TemplateRecord, VerifyOutcome
from paperpuf.observability import add_stage_metadata, trace_stage


def enroll_template(
    store: TemplateStore,
    template_id: str,
    template: NormMap,
    source: SourceTag = SourceTag.SCANNER,
    enrolled_at: Optional[datetime] = None,
) -> TemplateRecord:
    """
    Register a template in the reference database.

    Args:
        store: Template store
        template_id: New, unique id
        template: Extracted norm map
        source: Capture device class
        enrolled_at: Enrollment time; now when omitted

    Returns:
        The stored record

    Raises:
        DuplicateId: If the id is already enrolled
        StorageFailure: If the store cannot be written
    """
    with trace_stage("authstore", "enroll", template_id=template_id, source=SourceTag(source).value):
        return store.enroll(template_id, template, source, enrolled_at)


def verify_query(store: TemplateStore, query: NormMap, template_id: Optional[str] = None) -> VerifyOutcome:
    """
    Decide a query by id lookup or by search over the whole store.

    Raises:
        EmptyStore: If nothing is enrolled
        UnknownId: If ``template_id`` is not enrolled
    """
    mode = "lookup" if template_id is not None else "search"
    with trace_stage("authstore", "verify", mode=mode) as span:
        outcome = store.verify(query, template_id)
        add_stage_metadata(
            span,
            {
                "accepted": outcome.accepted,
                "corr_x": outcome.score.corr_x,
                "corr_y": outcome.score.corr_y,
                "matched_id": outcome.matched_id or "",
            },
        )
    logger.debug(
        f"Verify ({mode}) -> {outcome.matched_id}: accepted={outcome.accepted}, "
        f"score ({outcome.score.corr_x:.4f}, {outcome.score.corr_y:.4f})"
    )
    return outcome


def query_log(store: TemplateStore) -> List[QueryLogEntry]:
    return store.query_log()
