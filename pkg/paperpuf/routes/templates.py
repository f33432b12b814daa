"""
Enrollment routes
"""
from typing import List

from fastapi import APIRouter, Depends

from paperpuf.db.database import get_store
from paperpuf.db.store import TemplateStore
from paperpuf.errors import PufError
from paperpuf.routes.errors import to_http
from paperpuf.routes.schemas import EnrollRequest, TemplateSummary, norm_map_from_base64
from paperpuf.services.auth_service import enroll_template

router = APIRouter(prefix="/templates", tags=["templates"])


@router.post("", response_model=TemplateSummary, status_code=201)
async def enroll(req: EnrollRequest, store: TemplateStore = Depends(get_store)):
    """
    Enroll a template under a new id.

    - **id**: must not be enrolled yet (409 otherwise)
    - **norm_map**: base64-encoded .nmap file
    """
    try:
        record = enroll_template(store, req.id, norm_map_from_base64(req.norm_map), req.source, req.enrolled_at)
    except PufError as e:
        raise to_http(e) from e
    return TemplateSummary.of(record)


@router.get("", response_model=List[TemplateSummary])
async def list_templates(store: TemplateStore = Depends(get_store)):
    """List enrolled templates in enrollment order."""
    return [TemplateSummary.of(record) for record in store.records()]
