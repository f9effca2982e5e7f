"""Candidate-relation extraction through a language-model provider.

Builds one prompt per relation kind (grammar excerpt, symbol listing, the
kind's definition with a worked illustration, and the expected record
format), parses structured verdicts out of the responses, and answers the
consistency filter's follow-up confirmations.  Providers are pluggable
behind a single ``complete(prompt) -> text`` operation so live, recording,
and replay backends are interchangeable; replay archives make runs fully
deterministic and offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import httpx

from .inference import OracleError
from .model import Cmp, Const, MeasureRef, Relation, Signature

__all__ = [
    "ProviderError",
    "Provider",
    "CallableProvider",
    "ReplayProvider",
    "RecordingProvider",
    "HttpChatProvider",
    "provider_from_env",
    "PromptBundle",
    "VerdictRecord",
    "ExtractionResult",
    "request_hash",
    "build_prompts",
    "parse_verdicts",
    "extract",
    "answer_followups",
    "followup_oracle",
]

EVENT_KINDS = ("hypernym", "isContradictoryWith", "happensBefore", "eventEqual")
MEASURE_KINDS = ("imply", "mutuallyExclusive", "opposite", "measureEqual")
ASYMMETRIC_KINDS = {"hypernym", "happensBefore", "imply"}

GRAMMAR_EXCERPT = """\
Rules are written over events (capitalized) and measures (lowercase):
  rule        := ID "when" Event ["and" prop] "then" chain
  chain       := item {"otherwise" item}
  item        := [prop "=>"] ["not"] Event ["within" term unit]
  prop        := "true" | "false" | term ("="|">=") term | "not" prop
               | prop "and" prop | prop "or" prop
  term        := number | measure | "-" term | term "+" term | number "*" term
"""

OUTPUT_SCHEMA = """\
Answer with one JSON object per pair, each on its own line, with exactly
these fields, writing the justification before the verdict:
  {"kind": "<relation kind>", "source": "<first symbol>",
   "target": "<second symbol>", "justification": "<why>",
   "verdict": "positive" | "negative"}
"""

_DEFINITIONS = {
    "hypernym": (
        "SOURCE hypernym TARGET: whenever SOURCE occurs, TARGET necessarily "
        "occurs at the same moment, because SOURCE is a special case of TARGET. "
        "Illustration: DrinkWater hypernym DrinkLiquid, since drinking water "
        "is one way of drinking a liquid."
    ),
    "isContradictoryWith": (
        "SOURCE isContradictoryWith TARGET: the two events can never occur "
        "in the same moment; if both happened together at least one of them "
        "could not have its intended effect. Illustration: OpeningDoor "
        "isContradictoryWith ClosingDoor."
    ),
    "happensBefore": (
        "SOURCE happensBefore TARGET: is it the case that there is always an "
        "occurrence of SOURCE that happens before every occurrence of TARGET? "
        "Answer positive only when SOURCE is a prerequisite of TARGET. "
        "Illustration: CreateForm happensBefore ShowForm is positive, because "
        "a form must have been created before it can ever be shown."
    ),
    "eventEqual": (
        "SOURCE equal TARGET: the two events always occur together, in both "
        "directions; they are interchangeable names for the same occurrence. "
        "Illustration: CallPatient equal CallClients when patients are the "
        "only clients."
    ),
    "imply": (
        "SOURCE imply TARGET: whenever the first measure holds, the second "
        "necessarily holds at the same moment. Illustration: doorOpened "
        "imply not doorLocked rephrased over plain measures would be "
        "doorOpened imply doorUnlocked."
    ),
    "mutuallyExclusive": (
        "SOURCE mutuallyExclusive TARGET: the two measures never hold at the "
        "same moment, though both may be false together. Illustration: "
        "doorOpened mutuallyExclusive doorLocked."
    ),
    "opposite": (
        "SOURCE oppositeTo TARGET: at every moment exactly one of the two "
        "measures holds; each is the negation of the other. Illustration: "
        "doorOpened oppositeTo doorClosed."
    ),
    "measureEqual": (
        "SOURCE equal TARGET: the two measures hold at exactly the same "
        "moments; they are interchangeable. Illustration: patientConsented "
        "equal userConsented when patients are the only users."
    ),
}


class ProviderError(Exception):
    """Transport or archive failure; carries whatever went unanswered."""

    def __init__(self, message: str, unanswered: Iterable = ()):
        self.unanswered = tuple(unanswered)
        super().__init__(message)


class Provider(Protocol):
    def complete(self, prompt: str) -> str: ...


def request_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CallableProvider:
    """Wraps a plain function; the stub provider used in tests."""

    def __init__(self, fn):
        self._fn = fn

    def complete(self, prompt: str) -> str:
        return self._fn(prompt)


class ReplayProvider:
    """Serves responses from a recorded archive, keyed by request hash."""

    def __init__(self, path: str):
        self.path = path
        self._responses: dict[str, str] = {}
        try:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    self._responses[entry["request_hash"]] = entry["response"]
        except OSError as err:
            raise ProviderError(f"cannot read replay archive {path!r}: {err}") from err

    def complete(self, prompt: str) -> str:
        key = request_hash(prompt)
        if key not in self._responses:
            raise ProviderError(f"replay archive has no response for request {key[:12]}")
        return self._responses[key]


class RecordingProvider:
    """Delegates to an inner provider and appends every exchange to a
    session archive (one JSON line per request)."""

    def __init__(self, inner: Provider, path: str):
        self.inner = inner
        self.path = path

    def complete(self, prompt: str) -> str:
        response = self.inner.complete(prompt)
        entry = {
            "request_hash": request_hash(prompt),
            "prompt": prompt,
            "response": response,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return response


class HttpChatProvider:
    """Minimal chat-completions client for OpenAI-compatible endpoints."""

    def __init__(self, base_url: str, api_key: str = "", model: str = "gpt-4"):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json={"model": self.model, "messages": [{"role": "user", "content": prompt}]},
                headers=headers,
                timeout=120.0,
            )
            response.raise_for_status()
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, ValueError) as err:
            raise ProviderError(f"provider request failed: {err}") from err


def provider_from_env(environ=None) -> Provider | None:
    """Provider wiring from the environment, never from flags.

    SLEECKIT_REPLAY_ARCHIVE replays a recorded session; otherwise
    SLEECKIT_LLM_BASE_URL (+_API_KEY, _MODEL) reaches a live endpoint,
    optionally recorded via SLEECKIT_RECORD_ARCHIVE.
    """
    env = os.environ if environ is None else environ
    replay = env.get("SLEECKIT_REPLAY_ARCHIVE")
    if replay:
        return ReplayProvider(replay)
    base_url = env.get("SLEECKIT_LLM_BASE_URL")
    if not base_url:
        return None
    provider: Provider = HttpChatProvider(
        base_url, env.get("SLEECKIT_LLM_API_KEY", ""), env.get("SLEECKIT_LLM_MODEL", "gpt-4")
    )
    record = env.get("SLEECKIT_RECORD_ARCHIVE")
    if record:
        provider = RecordingProvider(provider, record)
    return provider


# ---------------------------------------------------------------------------
# Prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptBundle:
    kind: str
    grammar_excerpt: str
    symbol_listing: str
    definition: str
    output_schema: str
    pairs: tuple[tuple[str, str], ...]

    def render(self) -> str:
        pair_lines = "\n".join(f"  - {a} , {b}" for a, b in self.pairs) or "  (none)"
        return (
            "You are reviewing the vocabulary of a normative-requirements "
            "document for implicit semantic relations.\n\n"
            f"Rule grammar the symbols are used in:\n{self.grammar_excerpt}\n"
            f"Declared symbols:\n{self.symbol_listing}\n"
            f"Relation to assess ({self.kind}):\n{self.definition}\n\n"
            f"Assess every pair below:\n{pair_lines}\n\n"
            f"{self.output_schema}"
        )


def _symbol_listing(sig: Signature) -> str:
    events = "\n".join(f"  event {e}" for e in sorted(sig.events))
    measures = "\n".join(f"  measure {m} : {sig.measures[m]}" for m in sorted(sig.measures))
    return (events + "\n" + measures).strip("\n") + "\n"


def _pairs(symbols: list[str], kind: str) -> tuple[tuple[str, str], ...]:
    ordered = sorted(symbols)
    out = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            out.append((a, b))
            if kind in ASYMMETRIC_KINDS:
                out.append((b, a))
    return tuple(sorted(out))


def build_prompts(sig: Signature) -> list[PromptBundle]:
    """One deterministic bundle per auto-extracted relation kind.

    Only boolean measures are enumerated for measure relations; numeric
    measures need a proposition, which stakeholders state explicitly.
    """
    if not sig.events and not sig.measures:
        raise ValueError("cannot build prompts for an empty signature")
    listing = _symbol_listing(sig)
    events = sorted(sig.events)
    booleans = sorted(m for m, sort in sig.measures.items() if sort == "boolean")
    bundles = []
    for kind in EVENT_KINDS + MEASURE_KINDS:
        symbols = events if kind in EVENT_KINDS else booleans
        bundles.append(
            PromptBundle(
                kind=kind,
                grammar_excerpt=GRAMMAR_EXCERPT,
                symbol_listing=listing,
                definition=_DEFINITIONS[kind],
                output_schema=OUTPUT_SCHEMA,
                pairs=_pairs(symbols, kind),
            )
        )
    return bundles


# ---------------------------------------------------------------------------
# Verdict parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerdictRecord:
    kind: str
    source: str
    target: str
    verdict: str  # "positive" | "negative"
    justification: str


@dataclass(frozen=True)
class ExtractionResult:
    relations: tuple[Relation, ...]
    warnings: tuple[str, ...] = ()
    justifications: dict = field(default_factory=dict, compare=False)  # key -> text


_POSITIVE = {"positive", "yes", "true", "confirmed", "holds"}
_NEGATIVE = {"negative", "no", "false", "rejected", "does not hold"}


def _json_objects(text: str):
    """Balanced {...} blocks anywhere in the text; tolerant of prose."""
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0 and start is not None:
                    yield text[start : i + 1]
                    start = None


def parse_verdicts(text: str, sig: Signature) -> tuple[list[VerdictRecord], list[str]]:
    """Structured records from a raw response; malformed records are dropped
    with a warning, never silently."""
    records: list[VerdictRecord] = []
    warnings: list[str] = []
    known = set(sig.events) | set(sig.measures)
    kinds = set(EVENT_KINDS + MEASURE_KINDS)
    for blob in _json_objects(text):
        try:
            data = json.loads(blob)
        except json.JSONDecodeError:
            warnings.append(f"unparseable record skipped: {blob[:60]!r}")
            continue
        if not isinstance(data, dict):
            continue
        kind = data.get("kind")
        if kind == "equal":
            src = str(data.get("source", ""))
            kind = "eventEqual" if src[:1].isupper() else "measureEqual"
        if kind == "oppositeTo":
            kind = "opposite"
        if kind not in kinds:
            warnings.append(f"record with unknown kind skipped: {data.get('kind')!r}")
            continue
        verdict_raw = str(data.get("verdict", "")).strip().lower()
        if not verdict_raw:
            warnings.append(f"record missing verdict skipped: {blob[:60]!r}")
            continue
        if verdict_raw in _POSITIVE:
            verdict = "positive"
        elif verdict_raw in _NEGATIVE:
            verdict = "negative"
        else:
            warnings.append(f"record with unreadable verdict skipped: {verdict_raw!r}")
            continue
        source = str(data.get("source", ""))
        target = str(data.get("target", ""))
        if source not in known or target not in known:
            warnings.append(f"record over undeclared symbols skipped: {source!r}, {target!r}")
            continue
        justification = str(data.get("justification", "")).strip()
        if verdict == "positive" and not justification:
            warnings.append(f"positive record without justification skipped: {source} {kind} {target}")
            continue
        records.append(VerdictRecord(kind, source, target, verdict, justification))
    return records, warnings


def _record_to_relation(record: VerdictRecord) -> Relation:
    if record.kind in EVENT_KINDS:
        args: tuple = (record.source, record.target)
    else:
        args = (
            Cmp("eq", MeasureRef(record.source), Const(1)),
            Cmp("eq", MeasureRef(record.target), Const(1)),
        )
    return Relation(record.kind, args, record.verdict, "llm")


def extract(sig: Signature, provider: Provider) -> ExtractionResult:
    """Candidate relations for a signature; one provider call per kind."""
    relations: dict[tuple, Relation] = {}
    justifications: dict[tuple, str] = {}
    warnings: list[str] = []
    for bundle in build_prompts(sig):
        try:
            response = provider.complete(bundle.render())
        except ProviderError:
            raise
        records, warns = parse_verdicts(response, sig)
        warnings.extend(warns)
        for record in records:
            rel = _record_to_relation(record)
            key = (rel.kind,) + tuple(repr(a) for a in rel.args)
            if key in relations and relations[key].sign != rel.sign:
                warnings.append(
                    f"conflicting duplicate verdicts for {record.source} {record.kind} "
                    f"{record.target}; keeping the first"
                )
                continue
            if key not in relations:
                relations[key] = rel
                justifications[key] = record.justification
    ordered = tuple(relations[k] for k in sorted(relations))
    return ExtractionResult(ordered, tuple(warnings), justifications)


# ---------------------------------------------------------------------------
# Follow-up confirmations
# ---------------------------------------------------------------------------


def _relation_symbols(rel: Relation) -> tuple[str, str]:
    def name(arg):
        if isinstance(arg, str):
            return arg
        if isinstance(arg, Cmp) and isinstance(arg.left, MeasureRef):
            return arg.left.name
        return repr(arg)

    return name(rel.args[0]), name(rel.args[1])


def followup_prompt(rel: Relation) -> str:
    source, target = _relation_symbols(rel)
    return (
        "A relation between two symbols of a normative-requirements document "
        "was derived indirectly and needs confirmation.\n\n"
        f"Relation to confirm ({rel.kind}):\n{_DEFINITIONS[rel.kind]}\n\n"
        f"Does the following hold?\n  {source} {rel.kind} {target}\n\n"
        f"{OUTPUT_SCHEMA}"
    )


def answer_followups(queries: list[Relation], provider: Provider, sig: Signature) -> list[Relation]:
    """One confirmation question per derived relation; answers are returned
    in sorted-key order.  A transport failure raises with the queries that
    remain unanswered."""
    ordered = sorted(queries, key=lambda r: (r.kind,) + tuple(repr(a) for a in r.args))
    answers: list[Relation] = []
    for idx, rel in enumerate(ordered):
        try:
            response = provider.complete(followup_prompt(rel))
        except ProviderError as err:
            raise ProviderError(str(err), unanswered=ordered[idx:]) from err
        records, _ = parse_verdicts(response, sig)
        source, target = _relation_symbols(rel)
        match = next(
            (r for r in records if (r.source, r.target) == (source, target) and r.kind == rel.kind),
            None,
        )
        if match is None and records:
            match = records[0]
        if match is None:
            continue  # no readable answer; the caller reports it unanswered
        answered = rel if match.verdict == "positive" else rel.negated()
        answers.append(answered.with_provenance("llm"))
    return answers


def followup_oracle(provider: Provider, sig: Signature):
    """Adapter in the shape the consistency filter expects."""

    def oracle(queries: list[Relation]) -> list[Relation]:
        try:
            return answer_followups(queries, provider, sig)
        except ProviderError as err:
            raise OracleError(str(err), err.unanswered) from err

    return oracle
