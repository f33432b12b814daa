"""
Directory-backed reference database of enrolled norm-map templates.

Layout::

    <root>/store.json     {"version": 1, "threshold": 0.3}
    <root>/index.jsonl    one IndexEntry per line, in enrollment order
    <root>/000001.nmap    one template per record
    <root>/.lock          advisory lock taken while enrolling

Templates are kept unprotected on purpose: the store models a deployment
without template protection.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union
import hashlib
import threading

from pydantic import BaseModel, Field

from paperpuf.db.formats import load_norm_map, save_norm_map, write_atomic
from paperpuf.errors import DuplicateId, EmptyStore, FormatError, InvalidParam, StorageFailure, UnknownId
from paperpuf.middleware.logging import logger
from paperpuf.models.normmap import NormMap
from paperpuf.models.records import QueryLogEntry, SourceTag, TemplateRecord, VerifyOutcome
from paperpuf.services.similarity_service import PreparedReference

try:
    import fcntl
except ImportError:  # non-POSIX
    fcntl = None

STORE_VERSION = 1
DEFAULT_THRESHOLD = 0.3


class StoreConfig(BaseModel):
    version: int = STORE_VERSION
    threshold: float = Field(DEFAULT_THRESHOLD, gt=0.0, lt=1.0)


class IndexEntry(BaseModel):
    id: str = Field(..., min_length=1)
    filename: str
    source: SourceTag
    enrolled_at: datetime


@dataclass
class _SharedState:
    root: Optional[Path]
    threshold: float
    records: Dict[str, TemplateRecord] = field(default_factory=dict)
    prepared: Dict[str, PreparedReference] = field(default_factory=dict)
    filenames: Dict[str, str] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)


class TemplateStore:
    """
    Enrollment, lookup and score-leaking verification over a set of templates.

    Several TemplateStore objects can share one set of records through session();
    each keeps its own append-only query log.
    """

    def __init__(self, state: _SharedState):
        self._state = state
        self._log: List[QueryLogEntry] = []
        self._log_lock = threading.Lock()

    @classmethod
    def in_memory(cls, threshold: float = DEFAULT_THRESHOLD) -> "TemplateStore":
        StoreConfig(threshold=threshold)
        return cls(_SharedState(root=None, threshold=threshold))

    @classmethod
    def open(cls, path: Union[str, Path], threshold: Optional[float] = None) -> "TemplateStore":
        """
        Open the store at ``path``, creating it when absent.

        Args:
            path: Store directory
            threshold: Decision threshold for a new store; an existing store keeps its own

        Returns:
            TemplateStore with every indexed template loaded

        Raises:
            StorageFailure: If the directory or its files cannot be read or written
        """
        root = Path(path)
        config_path = root / "store.json"
        try:
            if config_path.exists():
                config = StoreConfig.model_validate_json(config_path.read_bytes())
                if threshold is not None and threshold != config.threshold:
                    logger.warning(
                        f"Store {root} keeps its threshold {config.threshold}; ignoring {threshold}"
                    )
            else:
                config = StoreConfig(threshold=DEFAULT_THRESHOLD if threshold is None else threshold)
                root.mkdir(parents=True, exist_ok=True)
                write_atomic(config_path, config.model_dump_json().encode("utf-8"))
        except ValueError as e:
            raise StorageFailure(f"invalid store config in {root}: {e}") from e
        except OSError as e:
            logger.error(f"Cannot open store {root}: {e}")
            raise StorageFailure(f"cannot open store {root}: {e}") from e

        store = cls(_SharedState(root=root, threshold=config.threshold))
        with store._state.lock:
            store._reload_index()
        logger.info(f"Opened store {root} with {len(store)} templates, threshold {config.threshold}")
        return store

    def session(self) -> "TemplateStore":
        """A view over the same records with a fresh, empty query log."""
        return TemplateStore(self._state)

    @property
    def threshold(self) -> float:
        return self._state.threshold

    @property
    def path(self) -> Optional[Path]:
        return self._state.root

    def __len__(self) -> int:
        return len(self._state.records)

    def __contains__(self, template_id: str) -> bool:
        return template_id in self._state.records

    def ids(self) -> List[str]:
        return list(self._state.records)

    def records(self) -> List[TemplateRecord]:
        return list(self._state.records.values())

    def record(self, template_id: str) -> TemplateRecord:
        try:
            return self._state.records[template_id]
        except KeyError:
            raise UnknownId(f"no template enrolled under id {template_id!r}") from None

    def get(self, template_id: str) -> NormMap:
        return self.record(template_id).template

    def enroll(
        self,
        template_id: str,
        template: NormMap,
        source: SourceTag = SourceTag.SCANNER,
        enrolled_at: Optional[datetime] = None,
    ) -> TemplateRecord:
        """
        Add a template under a new id.

        The template is stored at file precision (float32 components), so get()
        returns it bit-exact after a close and reopen.

        Raises:
            DuplicateId: If the id is already enrolled
            StorageFailure: If the template or index cannot be written
        """
        if not template_id:
            raise InvalidParam("template id must be a non-empty string")
        record = TemplateRecord(
            id=template_id,
            template=template.at_file_precision(),
            enrolled_at=enrolled_at or datetime.now(timezone.utc),
            source=SourceTag(source),
        )
        state = self._state
        with state.lock, self._exclusive():
            if state.root is not None:
                self._reload_index()
            if template_id in state.records:
                raise DuplicateId(f"id {template_id!r} is already enrolled")
            prepared = PreparedReference.of(record.template)
            if state.root is not None:
                filename = f"{len(state.records) + 1:06d}.nmap"
                self._persist(record, filename)
                state.filenames = {**state.filenames, template_id: filename}
            state.records = {**state.records, template_id: record}
            state.prepared = {**state.prepared, template_id: prepared}

        logger.info(f"Enrolled template {template_id} ({record.source.value}, {template.height}x{template.width})")
        return record

    def verify(self, query: NormMap, template_id: Optional[str] = None) -> VerifyOutcome:
        """
        Score a query and decide acceptance.

        With an id, the query is compared to that template only. Without one, it is
        compared to every template and the match is the record with the highest
        min(corr_x, corr_y); ties go to the earliest enrolled. The full score is
        returned to the caller either way, and the call is appended to the query log.

        Raises:
            EmptyStore: If nothing is enrolled
            UnknownId: If the requested id is not enrolled
            DimensionMismatch: If the query size differs from the template
        """
        prepared = self._state.prepared
        if not prepared:
            raise EmptyStore("verification requested against an empty store")

        if template_id is not None:
            if template_id not in prepared:
                raise UnknownId(f"no template enrolled under id {template_id!r}")
            matched_id = template_id
            score = prepared[template_id].score(query)
        else:
            matched_id, score = None, None
            for candidate_id, reference in prepared.items():
                candidate = reference.score(query)
                if score is None or candidate.minimum > score.minimum:
                    matched_id, score = candidate_id, candidate

        outcome = VerifyOutcome(accepted=score.accepts(self.threshold), score=score, matched_id=matched_id)
        with self._log_lock:
            self._log.append(
                QueryLogEntry(
                    timestamp=datetime.now(timezone.utc),
                    template_id=template_id,
                    score=score,
                    accepted=outcome.accepted,
                )
            )
        return outcome

    def query_log(self) -> List[QueryLogEntry]:
        with self._log_lock:
            return list(self._log)

    @property
    def query_count(self) -> int:
        return len(self._log)

    def fingerprint(self) -> str:
        """SHA-256 over the threshold and every (id, template) pair in enrollment order."""
        digest = hashlib.sha256(repr(self.threshold).encode("ascii"))
        for template_id, record in self._state.records.items():
            digest.update(template_id.encode("utf-8"))
            digest.update(record.template.nx.tobytes())
            digest.update(record.template.ny.tobytes())
        return digest.hexdigest()

    @contextmanager
    def _exclusive(self) -> Iterator[None]:
        root = self._state.root
        if root is None or fcntl is None:
            yield
            return
        try:
            handle = open(root / ".lock", "a+")
        except OSError as e:
            raise StorageFailure(f"cannot lock store {root}: {e}") from e
        with handle:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(handle.fileno(), fcntl.LOCK_UN)

    def _index_entries(self) -> List[IndexEntry]:
        index_path = self._state.root / "index.jsonl"
        if not index_path.exists():
            return []
        try:
            lines = index_path.read_text(encoding="utf-8").splitlines()
            return [IndexEntry.model_validate_json(line) for line in lines if line.strip()]
        except ValueError as e:
            raise StorageFailure(f"corrupt index {index_path}: {e}") from e
        except OSError as e:
            raise StorageFailure(f"cannot read index {index_path}: {e}") from e

    def _reload_index(self) -> None:
        """Pick up records another process appended since the last read."""
        state = self._state
        entries = self._index_entries()
        if len(entries) == len(state.records):
            return
        records, prepared, filenames = dict(state.records), dict(state.prepared), dict(state.filenames)
        for entry in entries:
            if entry.id in records:
                continue
            try:
                template = load_norm_map(state.root / entry.filename)
            except FormatError as e:
                raise StorageFailure(f"template file {entry.filename} is unreadable: {e}") from e
            records[entry.id] = TemplateRecord(entry.id, template, entry.enrolled_at, entry.source)
            prepared[entry.id] = PreparedReference.of(template)
            filenames[entry.id] = entry.filename
        state.records, state.prepared, state.filenames = records, prepared, filenames

    def _persist(self, record: TemplateRecord, filename: str) -> None:
        root = self._state.root
        save_norm_map(root / filename, record.template)
        entries = self._index_entries()
        entries.append(
            IndexEntry(id=record.id, filename=filename, source=record.source, enrolled_at=record.enrolled_at)
        )
        payload = "".join(entry.model_dump_json() + "\n" for entry in entries)
        write_atomic(root / "index.jsonl", payload.encode("utf-8"))
