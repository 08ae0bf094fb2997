"""HTTP annotation service wrapping the episode pipeline.

One process owns one knowledge base.  A session walks the chain
proposing -> awaiting-annotation -> refitting -> done; every transition
is persisted atomically (write-then-rename) under the output directory,
so a restarted process picks each session up at its recorded status and
re-launches any refit that was interrupted.

A completed refit commits the annotation-augmented KB and the freshly
trained model back into the service state.  Only human-grounded facts
are committed (annotated positives and sibling auto-accepts); derived
triples are re-derivable from the taxonomy and stay out of the store.
Sessions are single-writer: one lock per session serializes annotation
and refit, and the refit itself runs on a background thread while
clients poll the status.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from fastapi import Body, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .active import (
    ActiveError,
    CandidateFact,
    ColdEntityError,
    DiversityIndex,
    EpisodeConfig,
    ProposalMode,
    QuerySession,
    SelectionMode,
    greedy_select,
    propose_queries,
    top_k_select,
)
from .embed import TrainConfig, rank_candidates, score_triple, train
from .guidance import entity_candidates, expand_then_train, filter_predictions
from .kb import Background, KnowledgeBase, QuantLabel, Triple, load_kb

QUESTION_OPTIONS = ["all", "some", "none"]
_VALID_LABELS = frozenset(lab.value for lab in QuantLabel)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def render_question(triple: Triple) -> str:
    return (
        f"is it true that all {triple.source} {triple.relation} "
        f"some {triple.target}?"
    )


class ServiceError(Exception):
    """Maps directly onto an HTTP error response."""

    def __init__(self, status_code: int, detail: str, **extra: Any):
        super().__init__(detail)
        self.status_code = status_code
        self.payload = {"detail": detail, **extra}


@dataclass
class SessionRecord:
    """One session's full state: the query snapshot plus lifecycle."""

    id: str
    session: QuerySession
    status: str = "proposing"
    created: str = field(default_factory=_now)
    updated: str = field(default_factory=_now)
    error: str | None = None
    result: dict | None = None

    def touch(self) -> None:
        self.updated = _now()

    def question_items(self) -> list[dict]:
        by_id = {c.fact_id: c for c in self.session.candidates}
        items = []
        for fid in self.session.selected:
            cand = by_id[fid]
            triple = cand.to_triple(self.session.entity)
            items.append(
                {
                    "fact_id": fid,
                    "question": render_question(triple),
                    "options": list(QUESTION_OPTIONS),
                    "source": triple.source,
                    "relation": triple.relation,
                    "target": triple.target,
                    "p": cand.p,
                    "answer": self.session.annotations.get(fid),
                }
            )
        return items

    def accepted_items(self) -> list[dict]:
        items = []
        for cand in self.session.auto_accepted:
            triple = cand.to_triple(self.session.entity)
            items.append(
                {
                    "fact_id": cand.fact_id,
                    "source": triple.source,
                    "relation": triple.relation,
                    "target": triple.target,
                    "p": cand.p,
                }
            )
        return items

    def pending(self) -> int:
        return sum(
            1 for fid in self.session.selected if fid not in self.session.annotations
        )

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "created": self.created,
            "updated": self.updated,
            "error": self.error,
            "result": self.result,
            "session": self.session.to_json_dict(),
        }

    def public_dict(self) -> dict:
        d = self.to_json_dict()
        d["questions"] = self.question_items()
        d["auto_accepted"] = self.accepted_items()
        d["pending"] = self.pending()
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SessionRecord":
        return cls(
            id=d["id"],
            session=QuerySession.from_json_dict(d["session"]),
            status=d["status"],
            created=d["created"],
            updated=d["updated"],
            error=d.get("error"),
            result=d.get("result"),
        )


@dataclass
class ServiceState:
    """Everything the service needs to run episodes."""

    kb: KnowledgeBase
    background: Background
    train_config: TrainConfig
    episode: EpisodeConfig
    out_dir: Path


class SessionService:
    """Owns the KB, the model, and every session record."""

    def __init__(self, state: ServiceState):
        self.state = state
        self.out_dir = Path(state.out_dir)
        self.sessions_dir = self.out_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._records: dict[str, SessionRecord] = {}
        self._threads: dict[str, threading.Thread] = {}

        snapshot = self.out_dir / "kb.tsv"
        if snapshot.is_file():
            self.state.kb = load_kb(snapshot)
        else:
            self._save_kb_snapshot()
        self._commits = 0
        self._model = train(self.state.kb, self.state.background, state.train_config)
        self._load_sessions()
        self._resume()

    # -- persistence ---------------------------------------------------

    def _save_kb_snapshot(self) -> None:
        lines = self.state.kb.canonical_lines()
        _atomic_write(self.out_dir / "kb.tsv", "".join(l + "\n" for l in lines))

    def _persist(self, record: SessionRecord) -> None:
        record.touch()
        path = self.sessions_dir / f"{record.id}.json"
        _atomic_write(path, json.dumps(record.to_json_dict(), indent=2) + "\n")

    def _load_sessions(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.json")):
            with open(path, encoding="utf-8") as fh:
                record = SessionRecord.from_json_dict(json.load(fh))
            self._records[record.id] = record
            self._session_locks[record.id] = threading.Lock()
            if record.status == "done":
                self._commits += 1

    def _resume(self) -> None:
        for record in list(self._records.values()):
            if record.status == "proposing":
                self._complete_proposal(record)
            elif record.status == "refitting":
                self._spawn_refit(record.id)

    # -- lookups -------------------------------------------------------

    def _get(self, session_id: str) -> SessionRecord:
        with self._lock:
            record = self._records.get(session_id)
        if record is None:
            raise ServiceError(404, f"no such session: {session_id}")
        return record

    def _slock(self, session_id: str) -> threading.Lock:
        with self._lock:
            return self._session_locks[session_id]

    def list_sessions(self) -> list[dict]:
        with self._lock:
            records = sorted(self._records.values(), key=lambda r: r.created)
        return [
            {
                "id": r.id,
                "entity": r.session.entity,
                "status": r.status,
                "updated": r.updated,
                "pending": r.pending(),
            }
            for r in records
        ]

    # -- session lifecycle ---------------------------------------------

    def create_session(
        self,
        entity: str,
        mode: str | None = None,
        budget: int | None = None,
        selection: str | None = None,
    ) -> SessionRecord:
        if not entity or not isinstance(entity, str):
            raise ServiceError(400, "entity must be a non-empty string")
        try:
            proposal = (
                ProposalMode(mode) if mode else self.state.episode.proposal_mode
            )
        except ValueError:
            raise ServiceError(400, f"unknown mode: {mode}") from None
        try:
            chooser = (
                SelectionMode(selection)
                if selection
                else self.state.episode.selection_mode
            )
        except ValueError:
            raise ServiceError(400, f"unknown selection: {selection}") from None
        if budget is None:
            budget = self.state.episode.budget
        if not isinstance(budget, int) or budget < 1:
            raise ServiceError(400, "budget must be a positive integer")

        record = SessionRecord(
            id=uuid.uuid4().hex[:12],
            session=QuerySession(
                entity=entity,
                mode=proposal.value,
                selection=chooser.value,
                thresholds=self.state.episode.thresholds,
                budget=budget,
                candidates=[],
                auto_accepted=[],
                selected=[],
                annotations={},
                model_ref=self._model_tag(),
            ),
        )
        with self._lock:
            self._records[record.id] = record
            self._session_locks[record.id] = threading.Lock()
        self._persist(record)
        self._complete_proposal(record)
        return record

    def _model_tag(self) -> str:
        return f"fit-{self._commits}"

    def _complete_proposal(self, record: SessionRecord) -> None:
        with self._slock(record.id):
            sess = record.session
            mode = ProposalMode(sess.mode)
            try:
                try:
                    low, high = propose_queries(
                        sess.entity,
                        self.state.kb,
                        self.state.background,
                        thresholds=sess.thresholds,
                        mode=mode,
                        seed=self.state.episode.seed,
                        random_pool=self.state.episode.random_pool,
                    )
                except ColdEntityError:
                    # no labeled siblings: fall back to the schema-driven
                    # pool and record the mode actually used
                    mode = ProposalMode.SCHEMA_CONSISTENT
                    low, high = propose_queries(
                        sess.entity,
                        self.state.kb,
                        self.state.background,
                        thresholds=sess.thresholds,
                        mode=mode,
                        seed=self.state.episode.seed,
                        random_pool=self.state.episode.random_pool,
                    )
            except ActiveError as exc:
                raise ServiceError(400, str(exc)) from exc

            if not low:
                selected: list[CandidateFact] = []
            elif SelectionMode(sess.selection) is SelectionMode.SUBMODULAR:
                diversity = DiversityIndex.from_kb(self.state.kb)
                selected = greedy_select(
                    low,
                    sess.budget,
                    self.state.kb,
                    diversity,
                    self._model,
                    self.state.episode.weights,
                )
            else:
                selected = top_k_select(low, sess.budget)

            record.session = QuerySession(
                entity=sess.entity,
                mode=mode.value,
                selection=sess.selection,
                thresholds=sess.thresholds,
                budget=sess.budget,
                candidates=low,
                auto_accepted=high,
                selected=[c.fact_id for c in selected],
                annotations=dict(sess.annotations),
                model_ref=sess.model_ref,
            )
            record.status = "awaiting-annotation"
            self._persist(record)

    def annotate(self, session_id: str, answers: Mapping[str, Any]) -> SessionRecord:
        record = self._get(session_id)
        with self._slock(session_id):
            if record.status != "awaiting-annotation":
                raise ServiceError(
                    409,
                    f"session is {record.status}, not awaiting-annotation",
                    status=record.status,
                )
            if not isinstance(answers, Mapping) or not answers:
                raise ServiceError(400, "expected a non-empty fact-id to label map")
            selected = set(record.session.selected)
            for fid, label in answers.items():
                if fid not in selected:
                    raise ServiceError(400, f"unknown fact id: {fid}")
                if not isinstance(label, str) or label not in _VALID_LABELS:
                    raise ServiceError(
                        400,
                        f"invalid label {label!r}: expected one of all, some, none",
                    )
            # idempotent per fact: re-posting a value is a no-op, and a
            # changed answer simply replaces the previous one
            for fid, label in answers.items():
                record.session.annotations[fid] = label
            self._persist(record)
        return record

    def start_refit(self, session_id: str) -> SessionRecord:
        record = self._get(session_id)
        with self._slock(session_id):
            if record.status == "refitting":
                raise ServiceError(
                    409, "refit already running", pending=0, status=record.status
                )
            if record.status == "done":
                raise ServiceError(
                    409, "session already refitted", pending=0, status=record.status
                )
            pending = record.pending()
            if pending > 0:
                raise ServiceError(
                    409,
                    f"{pending} selected queries still await annotation",
                    pending=pending,
                    status=record.status,
                )
            record.status = "refitting"
            record.error = None
            self._persist(record)
        self._spawn_refit(session_id)
        return record

    def _spawn_refit(self, session_id: str) -> None:
        thread = threading.Thread(
            target=self._run_refit, args=(session_id,), daemon=True
        )
        with self._lock:
            self._threads[session_id] = thread
        thread.start()

    def _run_refit(self, session_id: str) -> None:
        record = self._get(session_id)
        try:
            result = self._refit(record)
        except Exception as exc:  # surfaced to the client, session stays put
            with self._slock(session_id):
                record.error = f"{type(exc).__name__}: {exc}"
                self._persist(record)
            return
        with self._slock(session_id):
            record.result = result
            record.status = "done"
            record.error = None
            self._persist(record)

    def _refit(self, record: SessionRecord) -> dict:
        sess = record.session
        entity = sess.entity
        with self._lock:
            kb = self.state.kb
        background = self.state.background
        by_id = {c.fact_id: c for c in sess.candidates}

        additions: list[tuple[Triple, QuantLabel]] = []
        annotated: list[tuple[Triple, QuantLabel]] = []
        for fid in sess.selected:
            label = QuantLabel(sess.annotations[fid])
            if label.is_positive():
                triple = by_id[fid].to_triple(entity)
                annotated.append((triple, label))
                additions.append((triple, label))
        accepted: list[Triple] = []
        for cand in sess.auto_accepted:
            triple = cand.to_triple(entity)
            accepted.append(triple)
            if triple not in kb:
                additions.append((triple, QuantLabel.SOME))

        # canonical order so the retrain depends only on the answer set
        additions.sort(key=lambda pair: pair[0])
        augmented = kb.merge(additions)
        fit = expand_then_train(
            augmented,
            background,
            self.state.train_config,
            derived_weight=self.state.episode.derived_weight,
            keep_threshold=self.state.episode.keep_threshold,
        )

        inferred: list[dict] = []
        for triple, label in sorted(annotated):
            st = score_triple(fit.model, triple)
            inferred.append(
                {
                    "source": triple.source,
                    "relation": triple.relation,
                    "target": triple.target,
                    "label": label.value,
                    "probability": st.probability,
                    "provenance": "annotation",
                }
            )
        for triple in sorted(accepted):
            st = score_triple(fit.model, triple)
            inferred.append(
                {
                    "source": triple.source,
                    "relation": triple.relation,
                    "target": triple.target,
                    "label": QuantLabel.SOME.value,
                    "probability": st.probability,
                    "provenance": "sibling-agreement",
                }
            )
        n_factorization = 0
        if fit.model.has_entity(entity):
            pool = entity_candidates(entity, augmented, background)
            ranked = rank_candidates(fit.model, pool)
            # emission boundary: re-check the schema before anything
            # leaves the service
            ranked, _ = filter_predictions(
                ranked, background.schema, background.typemap
            )
            for st in ranked:
                if st.probability < self.state.episode.report_threshold:
                    break
                n_factorization += 1
                inferred.append(
                    {
                        "source": st.triple.source,
                        "relation": st.triple.relation,
                        "target": st.triple.target,
                        "label": None,
                        "probability": st.probability,
                        "provenance": "factorization",
                    }
                )

        with self._lock:
            self.state.kb = augmented
            self._model = fit.model
            self._commits += 1
            tag = self._model_tag()
            self._save_kb_snapshot()

        return {
            "model_ref": tag,
            "counts": {
                "annotation": len(annotated),
                "sibling": len(accepted),
                "factorization": n_factorization,
                "total": len(annotated) + len(accepted) + n_factorization,
            },
            "kept_derived": len(fit.kept),
            "inferred": inferred,
        }

    def inferred(self, session_id: str) -> dict:
        record = self._get(session_id)
        with self._slock(session_id):
            if record.status != "done":
                raise ServiceError(
                    409,
                    f"session is {record.status}; inferred facts appear once done",
                    status=record.status,
                )
            assert record.result is not None
            return {
                "id": record.id,
                "entity": record.session.entity,
                "model_ref": record.result["model_ref"],
                "counts": record.result["counts"],
                "facts": record.result["inferred"],
            }

    def wait(self, session_id: str, timeout: float = 60.0) -> None:
        """Blocks until the session's refit thread finishes (for tests)."""
        with self._lock:
            thread = self._threads.get(session_id)
        if thread is not None:
            thread.join(timeout)


def create_app(state: ServiceState) -> FastAPI:
    service = SessionService(state)
    app = FastAPI(title="genkbc annotation service")
    app.state.service = service
    # the browser console is served from its own origin; the API carries
    # no credentials, so a blanket allowance is fine
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(status_code=exc.status_code, content=exc.payload)

    @app.get("/sessions")
    def list_sessions() -> list[dict]:
        return service.list_sessions()

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)) -> dict:
        record = service.create_session(
            entity=body.get("entity", ""),
            mode=body.get("mode"),
            budget=body.get("budget"),
            selection=body.get("selection"),
        )
        return record.public_dict()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return service._get(session_id).public_dict()

    @app.post("/sessions/{session_id}/annotations")
    def post_annotations(session_id: str, body: dict = Body(...)) -> dict:
        return service.annotate(session_id, body).public_dict()

    @app.post("/sessions/{session_id}/refit", status_code=202)
    def post_refit(session_id: str) -> dict:
        record = service.start_refit(session_id)
        return {"id": record.id, "status": record.status}

    @app.get("/sessions/{session_id}/inferred")
    def get_inferred(session_id: str) -> dict:
        return service.inferred(session_id)

    return app
