"""HTTP JSON service driving the elicit/sanitize/analyze/review loop.

The FastAPI app wraps the core package; the CLI and the browser review UI
are both thin clients of these endpoints.  All mutations go through a
single-writer lock and are persisted atomically when the app is bound to a
project file.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import analysis as analysis_mod
from .extract import ProviderError, extract as run_extract, followup_oracle, provider_from_env
from .inference import check_consistency, relation_sort_key
from .model import Cmp, Const, MeasureRef, Relation
from .project import (
    ProjectState,
    RelationCandidate,
    VERDICTS,
    diagnosis_to_dict,
    relation_from_dict,
    relation_id,
    relation_to_dict,
)
from .solver import Bound, default_bound
from .surface import DocumentParseError, normalize, parse, render_document, render_relation, render_rule

STAGE_NAMES = {1: "vacuous conflicts", 2: "situational conflicts",
               3: "insufficiency and over-restrictiveness", 4: "redundancies"}


class DocumentIn(BaseModel):
    text: str


class VerdictIn(BaseModel):
    verdict: str
    note: str = ""


class RelationIn(BaseModel):
    kind: str
    source: str
    target: str
    sign: str = "positive"


class AnalyzeIn(BaseModel):
    stage: int | None = Field(default=None, ge=1, le=4)
    force: bool = False
    bound: tuple[int, int] | None = None


class _AppState:
    def __init__(self, state: ProjectState, path: str | None):
        self.state = state
        self.path = path
        self.lock = threading.Lock()
        self.doc = None
        self.rules = ()
        self.facts = ()
        if state.document_text:
            self._reparse(state.document_text)

    def _reparse(self, text: str):
        doc = parse(text)
        rules, facts = normalize(doc)
        self.doc, self.rules, self.facts = doc, tuple(rules), tuple(facts)

    def persist(self):
        if self.path:
            self.state.save(self.path)

    def signature(self):
        if self.doc is None:
            raise HTTPException(status_code=409, detail="no document uploaded yet")
        return self.doc.signature

    # -- relation bookkeeping -------------------------------------------------

    def find_candidate(self, rid: str) -> RelationCandidate | None:
        for cand in self.state.candidates + self.state.added:
            if cand.id == rid:
                return cand
        return None

    def analysis_relations(self):
        """Document relations, accepted candidates, stakeholder additions."""
        sig = self.signature()
        relations = list(self.doc.relations)
        labels = [f"doc:{i}" for i in range(len(relations))]
        for cand in self.state.candidates:
            if cand.verdict == "accept" and not cand.flipped:
                relations.append(relation_from_dict(cand.relation_data, sig))
                labels.append(cand.id)
        for cand in self.state.added:
            if cand.verdict != "reject":
                relations.append(relation_from_dict(cand.relation_data, sig))
                labels.append(cand.id)
        return relations, labels

    def span_map(self):
        spans = dict(self.doc.spans) if self.doc else {}
        for rule in self.rules:
            if rule.source_span:
                spans.setdefault(rule.id, rule.source_span)
        for fact in self.facts:
            if fact.source_span:
                spans.setdefault(fact.id, fact.source_span)
        return spans

    def stage_status(self, stage: int) -> str:
        """clean | issues | unchecked, judged at the current document version."""
        for entry in reversed(self.state.history):
            if entry["version"] != self.state.document_version:
                continue
            if stage not in entry["stages"]:
                continue
            bad = any(
                d["stage"] == stage and d["verdict"] == "issueFound" for d in entry["diagnoses"]
            )
            return "issues" if bad else "clean"
        return "unchecked"


def create_app(state: ProjectState | None = None, project_path: str | None = None) -> FastAPI:
    if state is None:
        if project_path and Path(project_path).exists():
            state = ProjectState.load(project_path)
        else:
            state = ProjectState()
    app = FastAPI(title="sleeckit service")
    ctx = _AppState(state, project_path)
    app.state.ctx = ctx

    @app.get("/project")
    def get_project():
        return ctx.state.to_dict()

    @app.post("/document")
    def post_document(body: DocumentIn):
        with ctx.lock:
            try:
                ctx._reparse(body.text)
            except DocumentParseError as err:
                raise HTTPException(
                    status_code=422,
                    detail=[
                        {"message": str(e), "line": e.line, "column": e.col, "span": list(e.span)}
                        for e in err.errors
                    ],
                )
            ctx.state.document_text = body.text
            ctx.state.document_version += 1
            ctx.persist()
            measures = dict(ctx.doc.signature.measures)
            return {
                "version": ctx.state.document_version,
                "events": sorted(ctx.doc.signature.events),
                "measures": measures,
                "rules": [
                    {"id": r.id, "text": render_rule(r, measures), "span": list(r.source_span or (0, 0))}
                    for r in ctx.rules
                ],
                "facts": [
                    {"id": f.id, "role": f.role, "span": list(f.source_span or (0, 0))}
                    for f in ctx.facts
                ],
                "relations": [relation_to_dict(r) for r in ctx.doc.relations],
                "normalized": render_document(
                    ctx.doc.signature, list(ctx.rules), list(ctx.facts), list(ctx.doc.relations)
                ),
            }

    @app.get("/document")
    def get_document():
        spans = ctx.span_map() if ctx.doc else {}
        return {
            "text": ctx.state.document_text,
            "version": ctx.state.document_version,
            "spans": {k: list(v) for k, v in sorted(spans.items())},
        }

    @app.post("/extract")
    def post_extract():
        provider = provider_from_env()
        if provider is None:
            raise HTTPException(
                status_code=400,
                detail=(
                    "no language-model provider configured: set "
                    "SLEECKIT_REPLAY_ARCHIVE for offline replay or "
                    "SLEECKIT_LLM_BASE_URL (plus _API_KEY/_MODEL) for live runs"
                ),
            )
        with ctx.lock:
            sig = ctx.signature()
            try:
                result = run_extract(sig, provider)
                outcome = check_consistency(
                    list(result.relations), followup_oracle(provider, sig)
                )
            except ProviderError as err:
                raise HTTPException(status_code=502, detail=str(err))
            accepted_keys = {relation_sort_key(r) for r in outcome.accepted}
            existing = {c.id: c for c in ctx.state.candidates}
            candidates = []
            for rel in result.relations:
                cid = relation_id(rel)
                prior = existing.get(cid)
                key = (rel.kind,) + tuple(repr(a) for a in rel.args)
                cand = RelationCandidate(
                    id=cid,
                    relation_data=relation_to_dict(rel),
                    justification=result.justifications.get(key, ""),
                    verdict=prior.verdict if prior else "undecided",
                    note=prior.note if prior else "",
                    flipped=relation_sort_key(rel) not in accepted_keys,
                )
                candidates.append(cand)
            ctx.state.candidates = candidates
            ctx.state.filter_summary = {
                "accepted": [relation_id(r) for r in outcome.accepted],
                "flipped": [
                    {
                        "relation": relation_to_dict(f.relation),
                        "rule": f.rule,
                        "premises": [relation_to_dict(p) for p in f.premises],
                    }
                    for f in outcome.flipped
                ],
                "followups_asked": [relation_to_dict(q) for q in outcome.followups_asked],
                "iterations": outcome.iterations,
                "unanswered": [relation_to_dict(q) for q in outcome.unanswered],
                "warnings": list(result.warnings),
            }
            ctx.persist()
        return {"candidates": [c.to_dict() for c in ctx.state.candidates], "filter": ctx.state.filter_summary}

    @app.get("/relations")
    def get_relations():
        sig = ctx.signature() if ctx.doc else None
        reviewable = []
        for cand in ctx.state.candidates:
            entry = cand.to_dict()
            if sig is not None:
                entry["text"] = render_relation(
                    relation_from_dict(cand.relation_data, sig), dict(sig.measures)
                )
            reviewable.append(entry)
        added = [c.to_dict() for c in ctx.state.added]
        document = [relation_to_dict(r) for r in (ctx.doc.relations if ctx.doc else ())]
        return {"candidates": reviewable, "added": added, "document": document}

    @app.post("/relations/{rid}/verdict")
    def post_verdict(rid: str, body: VerdictIn):
        if body.verdict not in VERDICTS:
            raise HTTPException(status_code=422, detail=f"verdict must be one of {VERDICTS}")
        with ctx.lock:
            cand = ctx.find_candidate(rid)
            if cand is None:
                raise HTTPException(status_code=404, detail=f"unknown relation {rid!r}")
            if cand.flipped and body.verdict == "accept":
                raise HTTPException(
                    status_code=409,
                    detail="relation was removed by the consistency filter and cannot be accepted",
                )
            cand.verdict = body.verdict
            cand.note = body.note
            ctx.persist()
            return cand.to_dict()

    @app.post("/relations")
    def post_relation(body: RelationIn):
        with ctx.lock:
            sig = ctx.signature()

            def operand(name: str):
                if name in sig.events:
                    return name
                if name in sig.measures:
                    return Cmp("eq", MeasureRef(name), Const(1))
                raise HTTPException(status_code=422, detail=f"undeclared symbol {name!r}")

            try:
                rel = Relation(
                    body.kind, (operand(body.source), operand(body.target)), body.sign, "stakeholder"
                )
            except ValueError as err:
                raise HTTPException(status_code=422, detail=str(err))
            cand = RelationCandidate(
                id=relation_id(rel, "sr"), relation_data=relation_to_dict(rel), verdict="accept"
            )
            if ctx.find_candidate(cand.id) is not None:
                raise HTTPException(status_code=409, detail="relation already present")
            ctx.state.added.append(cand)
            ctx.persist()
            return cand.to_dict()

    @app.post("/analyze")
    def post_analyze(body: AnalyzeIn):
        with ctx.lock:
            sig = ctx.signature()
            if body.stage is not None and not body.force:
                for earlier in range(1, body.stage):
                    status = ctx.stage_status(earlier)
                    if status != "clean":
                        raise HTTPException(
                            status_code=409,
                            detail=(
                                f"stage {body.stage} ({STAGE_NAMES[body.stage]}) is gated: "
                                f"stage {earlier} ({STAGE_NAMES[earlier]}) is {status}; "
                                "earlier stages must be resolved first"
                            ),
                        )
            relations, labels = ctx.analysis_relations()
            bound = (
                Bound(*body.bound)
                if body.bound
                else ctx.state.explicit_bound()
                or default_bound(ctx.rules, tuple(relations), ctx.facts, ctx.state.bound_states)
            )
            stages = (body.stage,) if body.stage is not None else (1, 2, 3, 4)
            diagnoses = analysis_mod.run_plan(
                ctx.rules,
                ctx.facts,
                tuple(relations),
                bound,
                force=body.force,
                signature=sig,
                stages=stages,
            )
            spans = ctx.span_map()
            payload = []
            for diag in diagnoses:
                data = diagnosis_to_dict(diag)
                diag_spans = {}
                subject_span = spans.get(diag.subject)
                if subject_span:
                    diag_spans[diag.subject] = list(subject_span)
                names = {}
                for cid in diag.core:
                    kind, _, name = cid.partition(":")
                    if kind == "rule" and name in spans:
                        diag_spans[cid] = list(spans[name])
                    elif kind == "relation":
                        idx = int(name)
                        names[cid] = render_relation(relations[idx], dict(sig.measures))
                        label = labels[idx]
                        if label.startswith("doc:"):
                            doc_span = spans.get(f"relation:{label.split(':')[1]}")
                            if doc_span:
                                diag_spans[cid] = list(doc_span)
                data["spans"] = diag_spans
                data["core_names"] = names
                payload.append(data)
            ran: list[int] = []
            gate_blocked = False
            for s in (1, 2, 3, 4):
                if s not in stages:
                    continue
                if gate_blocked and not body.force:
                    break
                ran.append(s)
                if any(d.stage == s and d.is_issue for d in diagnoses):
                    gate_blocked = True
            entry = {
                "version": ctx.state.document_version,
                "stages": ran,
                "forced": body.force,
                "bound": [bound.states, bound.horizon],
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "diagnoses": payload,
            }
            ctx.state.history.append(entry)
            ctx.persist()
            return entry

    @app.get("/diagnoses")
    def get_diagnoses():
        for entry in reversed(ctx.state.history):
            if entry["version"] == ctx.state.document_version:
                return entry
        return {"version": ctx.state.document_version, "stages": [], "diagnoses": []}

    dist = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if dist.is_dir():
        app.mount("/ui", StaticFiles(directory=str(dist), html=True), name="ui")

    return app
