"""Project state for the review workflow and its on-disk format.

A project is one human-diffable JSON file: the current document text, the
candidate relations with stakeholder verdicts, stakeholder-added relations,
the latest filter outcome, and an append-only analysis history.  Writes are
atomic (write-then-rename) and the canonical serialization is stable, so a
load/save round trip is byte-identical and diffs stay reviewable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .analysis import Diagnosis
from .model import Prop, Relation, Term, Trace
from .solver import Bound
from .surface import parse_prop, parse_term, render_prop, render_term

__all__ = [
    "ProjectError",
    "ProjectState",
    "RelationCandidate",
    "relation_to_dict",
    "relation_from_dict",
    "relation_id",
    "diagnosis_to_dict",
    "trace_to_table",
]

VERDICTS = ("undecided", "accept", "reject")


class ProjectError(Exception):
    pass


def relation_to_dict(rel: Relation) -> dict:
    args = []
    for arg in rel.args:
        if isinstance(arg, str):
            args.append({"event": arg})
        elif isinstance(arg, Prop):
            args.append({"prop": render_prop(arg)})
        elif isinstance(arg, Term):
            args.append({"term": render_term(arg)})
        else:
            raise ProjectError(f"unencodable relation operand: {arg!r}")
    return {"kind": rel.kind, "args": args, "sign": rel.sign, "provenance": rel.provenance}


def relation_from_dict(data: dict, signature) -> Relation:
    args = []
    for arg in data["args"]:
        if "event" in arg:
            args.append(arg["event"])
        elif "prop" in arg:
            args.append(parse_prop(arg["prop"], signature))
        elif "term" in arg:
            args.append(parse_term(arg["term"], signature))
        else:
            raise ProjectError(f"unreadable relation operand: {arg!r}")
    return Relation(data["kind"], tuple(args), data.get("sign", "positive"), data.get("provenance", "llm"))


def relation_id(rel: Relation, prefix: str = "cr") -> str:
    digest = hashlib.sha256(json.dumps(relation_to_dict(rel), sort_keys=True).encode()).hexdigest()
    return f"{prefix}-{digest[:10]}"


def trace_to_table(trace: Trace) -> list[dict]:
    return [
        {
            "timestamp": st.timestamp,
            "events": sorted(st.occurring),
            "measures": {k: st.valuation[k] for k in sorted(st.valuation)},
        }
        for st in trace.states
    ]


def diagnosis_to_dict(diag: Diagnosis) -> dict:
    return {
        "kind": diag.kind,
        "subject": diag.subject,
        "verdict": diag.verdict,
        "stage": diag.stage,
        "bound": [diag.bound.states, diag.bound.horizon],
        "witness": trace_to_table(diag.witness) if diag.witness is not None else None,
        "core": list(diag.core),
        "narrative": diag.narrative,
        "spans": {k: list(v) for k, v in sorted(diag.spans.items())},
    }


@dataclass
class RelationCandidate:
    id: str
    relation_data: dict
    justification: str = ""
    verdict: str = "undecided"
    note: str = ""
    flipped: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "relation": self.relation_data,
            "justification": self.justification,
            "verdict": self.verdict,
            "note": self.note,
            "flipped": self.flipped,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RelationCandidate":
        return cls(
            id=data["id"],
            relation_data=data["relation"],
            justification=data.get("justification", ""),
            verdict=data.get("verdict", "undecided"),
            note=data.get("note", ""),
            flipped=data.get("flipped", False),
        )


@dataclass
class ProjectState:
    document_text: str = ""
    document_version: int = 0
    bound_states: int = 6
    bound_horizon: int | None = None  # None: derived from the document
    candidates: list[RelationCandidate] = field(default_factory=list)
    added: list[RelationCandidate] = field(default_factory=list)
    filter_summary: dict | None = None
    history: list[dict] = field(default_factory=list)  # append-only

    def to_dict(self) -> dict:
        return {
            "document": {"text": self.document_text, "version": self.document_version},
            "bound": {"states": self.bound_states, "horizon": self.bound_horizon},
            "candidates": [c.to_dict() for c in self.candidates],
            "added": [c.to_dict() for c in self.added],
            "filter": self.filter_summary,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectState":
        return cls(
            document_text=data.get("document", {}).get("text", ""),
            document_version=data.get("document", {}).get("version", 0),
            bound_states=data.get("bound", {}).get("states", 6),
            bound_horizon=data.get("bound", {}).get("horizon"),
            candidates=[RelationCandidate.from_dict(c) for c in data.get("candidates", [])],
            added=[RelationCandidate.from_dict(c) for c in data.get("added", [])],
            filter_summary=data.get("filter"),
            history=list(data.get("history", [])),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "ProjectState":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ProjectError(f"cannot load project {path!r}: {err}") from err
        return cls.from_dict(data)

    def explicit_bound(self) -> Bound | None:
        if self.bound_horizon is None:
            return None
        return Bound(self.bound_states, self.bound_horizon)
