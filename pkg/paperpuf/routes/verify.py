"""
Verification routes

POST /verify returns the full similarity score, not only the decision.
"""
from typing import List

from fastapi import APIRouter, Depends

from paperpuf.db.database import get_store
from paperpuf.db.store import TemplateStore
from paperpuf.errors import PufError
from paperpuf.routes.errors import to_http
from paperpuf.routes.schemas import QueryLogItem, VerifyRequest, VerifyResponse, norm_map_from_base64
from paperpuf.services.auth_service import query_log, verify_query

router = APIRouter(tags=["verify"])


@router.post("/verify", response_model=VerifyResponse)
async def verify(req: VerifyRequest, store: TemplateStore = Depends(get_store)):
    """
    Verify a query norm map.

    - **template_id**: compare against this template (404 if unknown)
    - without template_id the whole store is searched (409 if empty)
    """
    try:
        outcome = verify_query(store, norm_map_from_base64(req.norm_map), req.template_id)
    except PufError as e:
        raise to_http(e) from e
    return VerifyResponse.of(outcome)


@router.get("/query-log", response_model=List[QueryLogItem])
async def get_query_log(store: TemplateStore = Depends(get_store)):
    """Every verify call served so far, in call order."""
    return [QueryLogItem.of(entry) for entry in query_log(store)]
