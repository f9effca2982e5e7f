"""Normalized rule model and trace semantics.

This module is the semantic ground truth for the rest of the package: the
normalized requirement syntax (terms, propositions, obligations, chains,
rules, facts), timed traces, capability relations, and the reference
evaluator that decides whether a trace fulfills a rule or a relation.

All types are immutable after construction and all operations are pure, so
evaluation is safe to run in parallel across traces and rules.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

__all__ = [
    "EvalError",
    "TraceError",
    "Signature",
    "Term",
    "Const",
    "MeasureRef",
    "Neg",
    "Add",
    "Scale",
    "Prop",
    "TRUE",
    "FALSE",
    "BoolLit",
    "Cmp",
    "Not",
    "And",
    "Or",
    "Obligation",
    "CondObligation",
    "ObligationChain",
    "NormRule",
    "Fact",
    "State",
    "Trace",
    "Relation",
    "Verdict",
    "FULFILLED",
    "PENDING",
    "violated_at",
    "make_trace",
    "eval_term",
    "eval_prop",
    "prop_measures",
    "term_measures",
    "canonical_prop",
    "negate_prop",
    "check_obligation",
    "check_chain",
    "check_rule",
    "check_relation",
    "fact_holds",
    "rule_triggers",
    "relation_key",
    "NegativeDeadlineWarning",
]

EVENT_RELATION_KINDS = ("hypernym", "isContradictoryWith", "happensBefore", "eventEqual")
MEASURE_RELATION_KINDS = ("imply", "mutuallyExclusive", "opposite", "measureEqual")
MIXED_RELATION_KINDS = ("forbids", "induces", "whenThenUntil", "whenThenFor")


class EvalError(Exception):
    """Raised when evaluation hits an unbound measure symbol."""


class TraceError(ValueError):
    """Raised when a trace violates a structural invariant."""


class NegativeDeadlineWarning(UserWarning):
    """A symbolic deadline evaluated below zero and was clamped to 0."""


# ---------------------------------------------------------------------------
# Signature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    """Event and measure vocabulary a document is written over.

    Events are capitalized identifiers, measures start lowercase.  Boolean
    measures are numeric over {0, 1}.  Named constants are substituted into
    terms at parse time but retained here for rendering.
    """

    events: frozenset[str] = frozenset()
    measures: Mapping[str, str] = field(default_factory=dict)  # name -> "boolean" | "numeric"
    constants: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(self.events) & set(self.measures)
        if overlap:
            raise ValueError(f"event/measure namespaces overlap: {sorted(overlap)}")
        for name in self.events:
            if not name[:1].isupper():
                raise ValueError(f"event identifier must start uppercase: {name!r}")
        for name in self.measures:
            if name[:1].isupper():
                raise ValueError(f"measure identifier must start lowercase: {name!r}")
        for sort in self.measures.values():
            if sort not in ("boolean", "numeric"):
                raise ValueError(f"unknown measure sort: {sort!r}")


# ---------------------------------------------------------------------------
# Terms and propositions
# ---------------------------------------------------------------------------


class Term:
    pass


@dataclass(frozen=True)
class Const(Term):
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("term constants are naturals")


@dataclass(frozen=True)
class MeasureRef(Term):
    name: str


@dataclass(frozen=True)
class Neg(Term):
    term: Term


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Scale(Term):
    """A constant multiplier applied to a term; term-times-term is not allowed."""

    factor: int
    term: Term


class Prop:
    pass


@dataclass(frozen=True)
class BoolLit(Prop):
    value: bool


TRUE = BoolLit(True)
FALSE = BoolLit(False)


@dataclass(frozen=True)
class Cmp(Prop):
    op: str  # "eq" | "ge"
    left: Term
    right: Term

    def __post_init__(self):
        if self.op not in ("eq", "ge"):
            raise ValueError(f"unknown comparison op: {self.op!r}")


@dataclass(frozen=True)
class Not(Prop):
    prop: Prop


@dataclass(frozen=True)
class And(Prop):
    left: Prop
    right: Prop


@dataclass(frozen=True)
class Or(Prop):
    left: Prop
    right: Prop


def eval_term(term: Term, valuation: Mapping[str, int]) -> int:
    """Evaluate a term under a measure valuation.

    Intermediate results are signed integers; no clamping happens here.
    """
    if isinstance(term, Const):
        return term.value
    if isinstance(term, MeasureRef):
        try:
            return valuation[term.name]
        except KeyError:
            raise EvalError(f"unbound measure: {term.name!r}") from None
    if isinstance(term, Neg):
        return -eval_term(term.term, valuation)
    if isinstance(term, Add):
        return eval_term(term.left, valuation) + eval_term(term.right, valuation)
    if isinstance(term, Scale):
        return term.factor * eval_term(term.term, valuation)
    raise TypeError(f"not a term: {term!r}")


def eval_prop(prop: Prop, valuation: Mapping[str, int]) -> bool:
    if isinstance(prop, BoolLit):
        return prop.value
    if isinstance(prop, Cmp):
        lhs = eval_term(prop.left, valuation)
        rhs = eval_term(prop.right, valuation)
        return lhs == rhs if prop.op == "eq" else lhs >= rhs
    if isinstance(prop, Not):
        return not eval_prop(prop.prop, valuation)
    if isinstance(prop, And):
        return eval_prop(prop.left, valuation) and eval_prop(prop.right, valuation)
    if isinstance(prop, Or):
        return eval_prop(prop.left, valuation) or eval_prop(prop.right, valuation)
    raise TypeError(f"not a proposition: {prop!r}")


def term_measures(term: Term) -> set[str]:
    if isinstance(term, Const):
        return set()
    if isinstance(term, MeasureRef):
        return {term.name}
    if isinstance(term, Neg):
        return term_measures(term.term)
    if isinstance(term, Add):
        return term_measures(term.left) | term_measures(term.right)
    if isinstance(term, Scale):
        return term_measures(term.term)
    raise TypeError(f"not a term: {term!r}")


def prop_measures(prop: Prop) -> set[str]:
    if isinstance(prop, BoolLit):
        return set()
    if isinstance(prop, Cmp):
        return term_measures(prop.left) | term_measures(prop.right)
    if isinstance(prop, Not):
        return prop_measures(prop.prop)
    if isinstance(prop, (And, Or)):
        return prop_measures(prop.left) | prop_measures(prop.right)
    raise TypeError(f"not a proposition: {prop!r}")


def negate_prop(prop: Prop) -> Prop:
    """Negation followed by canonicalization, so double negation cancels."""
    return canonical_prop(Not(prop))


def canonical_prop(prop: Prop) -> Prop:
    """Canonical form: negation normal form with flattened, sorted, deduped
    conjuncts/disjuncts.  Used for syntactic identity of relation operands."""
    return _canon(prop, negated=False)


def _canon(prop: Prop, negated: bool) -> Prop:
    if isinstance(prop, BoolLit):
        return BoolLit(prop.value ^ negated)
    if isinstance(prop, Not):
        return _canon(prop.prop, not negated)
    if isinstance(prop, Cmp):
        return Not(prop) if negated else prop
    if isinstance(prop, (And, Or)):
        flip = isinstance(prop, And) == negated  # de Morgan
        parts: list[Prop] = []
        for side in (prop.left, prop.right):
            c = _canon(side, negated)
            parts.extend(_flatten(c, is_or=flip))
        uniq = sorted(set(parts), key=repr)
        if len(uniq) == 1:
            return uniq[0]
        ctor = Or if flip else And
        out = uniq[0]
        for p in uniq[1:]:
            out = ctor(out, p)
        return out
    raise TypeError(f"not a proposition: {prop!r}")


def _flatten(prop: Prop, is_or: bool) -> list[Prop]:
    ctor = Or if is_or else And
    if isinstance(prop, ctor):
        return _flatten(prop.left, is_or) + _flatten(prop.right, is_or)
    return [prop]


# ---------------------------------------------------------------------------
# Obligations, rules, facts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Obligation:
    polarity: str  # "positive" | "negative"
    event: str
    deadline: Term = Const(0)  # canonical seconds; omitted deadline means 0

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"bad polarity: {self.polarity!r}")


@dataclass(frozen=True)
class CondObligation:
    guard: Prop
    obligation: Obligation


@dataclass(frozen=True)
class ObligationChain:
    """Ordered fallbacks; every item except possibly the last is positive."""

    items: tuple[CondObligation, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("obligation chain must be non-empty")
        for item in self.items[:-1]:
            if item.obligation.polarity != "positive":
                raise ValueError("only the last chain item may be negative")


@dataclass(frozen=True)
class NormRule:
    id: str
    trigger_event: str
    trigger_cond: Prop
    chain: ObligationChain
    source_span: tuple[int, int] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Fact:
    """Existential test scenario: a trigger occurrence whose chain is
    satisfied (mode=asserted) or violated (mode=negated)."""

    id: str
    trigger_event: str
    trigger_cond: Prop
    chain: ObligationChain
    mode: str = "asserted"  # "asserted" | "negated"
    role: str = "concern"  # "concern" | "purpose" | "rule-negation"
    source_span: tuple[int, int] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in ("asserted", "negated"):
            raise ValueError(f"bad fact mode: {self.mode!r}")
        if self.role not in ("concern", "purpose", "rule-negation"):
            raise ValueError(f"bad fact role: {self.role!r}")


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    occurring: frozenset[str]
    valuation: Mapping[str, int]
    timestamp: int


@dataclass(frozen=True)
class Trace:
    states: tuple[State, ...]

    def __post_init__(self):
        prev = None
        for st in self.states:
            if st.timestamp < 0:
                raise TraceError("timestamps are naturals")
            if prev is not None and st.timestamp <= prev:
                raise TraceError(
                    f"timestamps must strictly increase ({prev} then {st.timestamp})"
                )
            prev = st.timestamp

    def __len__(self) -> int:
        return len(self.states)

    def validate_against(self, sig: Signature) -> None:
        """Check valuation totality and boolean ranges for a signature."""
        for idx, st in enumerate(self.states):
            for ev in st.occurring:
                if ev not in sig.events:
                    raise TraceError(f"state {idx}: undeclared event {ev!r}")
            for name, sort in sig.measures.items():
                if name not in st.valuation:
                    raise TraceError(f"state {idx}: valuation misses measure {name!r}")
                v = st.valuation[name]
                if v < 0:
                    raise TraceError(f"state {idx}: measure {name!r} must be natural")
                if sort == "boolean" and v not in (0, 1):
                    raise TraceError(f"state {idx}: boolean measure {name!r} outside {{0,1}}")


def make_trace(states: Iterable[tuple[Iterable[str], Mapping[str, int], int]]) -> Trace:
    """Convenience constructor from (events, valuation, timestamp) triples."""
    return Trace(
        tuple(
            State(frozenset(evs), dict(val), ts) for evs, val, ts in states
        )
    )


# ---------------------------------------------------------------------------
# Relations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Relation:
    """Signed binary semantic relation between events and/or measures.

    ``args`` holds event names (str) for event operands, canonical ``Prop``
    values for measure operands, and a ``Term`` for the whenThenFor duration.
    """

    kind: str
    args: tuple
    sign: str = "positive"  # "positive" | "negative"
    provenance: str = "llm"  # "llm" | "stakeholder" | "inferred"

    def __post_init__(self):
        if self.kind not in EVENT_RELATION_KINDS + MEASURE_RELATION_KINDS + MIXED_RELATION_KINDS:
            raise ValueError(f"unknown relation kind: {self.kind!r}")
        if self.sign not in ("positive", "negative"):
            raise ValueError(f"bad sign: {self.sign!r}")
        if self.provenance not in ("llm", "stakeholder", "inferred"):
            raise ValueError(f"bad provenance: {self.provenance!r}")

    def negated(self) -> "Relation":
        sign = "negative" if self.sign == "positive" else "positive"
        return Relation(self.kind, self.args, sign, self.provenance)

    def with_provenance(self, provenance: str) -> "Relation":
        return Relation(self.kind, self.args, self.sign, provenance)


def relation_key(rel: Relation) -> tuple:
    """Identity of a relation irrespective of sign and provenance."""
    return (rel.kind,) + tuple(repr(a) for a in rel.args)


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    status: str  # "fulfilled" | "violated" | "pending"
    at: int | None = None  # violation state index, 0-based


FULFILLED = Verdict("fulfilled")
PENDING = Verdict("pending")


def violated_at(index: int) -> Verdict:
    return Verdict("violated", index)


def _deadline_window_end(trace: Trace, i: int, deadline: Term) -> int:
    value = eval_term(deadline, trace.states[i].valuation)
    if value < 0:
        warnings.warn(
            f"deadline evaluated to {value} at state {i}; clamped to 0",
            NegativeDeadlineWarning,
            stacklevel=3,
        )
        value = 0
    return trace.states[i].timestamp + value


def check_obligation(trace: Trace, i: int, cob: CondObligation) -> Verdict:
    """Verdict for one conditional obligation activated at state ``i``.

    A positive obligation is Pending while its window is still open at trace
    end.  A negative obligation is fulfilled as soon as no occurrence exists
    in the observed window, even if the window is cut off (the violation is
    what needs the occurrence, not the fulfillment).
    """
    if not (0 <= i < len(trace.states)):
        raise IndexError(f"state index out of range: {i}")
    if not eval_prop(cob.guard, trace.states[i].valuation):
        return FULFILLED
    ob = cob.obligation
    window_end = _deadline_window_end(trace, i, ob.deadline)
    states = trace.states
    if ob.polarity == "positive":
        for j in range(i, len(states)):
            st = states[j]
            if st.timestamp > window_end:
                break
            if ob.event in st.occurring:
                return FULFILLED
        for j in range(i, len(states)):
            if states[j].timestamp >= window_end:
                return violated_at(j)
        return PENDING
    for j in range(i, len(states)):
        st = states[j]
        if st.timestamp > window_end:
            break
        if ob.event in st.occurring:
            return violated_at(j)
    return FULFILLED


def check_chain(trace: Trace, i: int, chain: ObligationChain) -> Verdict:
    """Chain verdict: a violated item hands over to its successor at the
    violation point; the last item's violation is the chain's."""
    verdict = check_obligation(trace, i, chain.items[0])
    if verdict.status == "violated" and len(chain.items) > 1:
        return check_chain(trace, verdict.at, ObligationChain(chain.items[1:]))
    return verdict


def rule_triggers(trace: Trace, rule: NormRule) -> list[int]:
    return [
        i
        for i, st in enumerate(trace.states)
        if rule.trigger_event in st.occurring and eval_prop(rule.trigger_cond, st.valuation)
    ]


def check_rule(trace: Trace, rule: NormRule) -> Verdict:
    """Fulfilled iff the chain is fulfilled at every triggering point."""
    pending = False
    for i in rule_triggers(trace, rule):
        verdict = check_chain(trace, i, rule.chain)
        if verdict.status == "violated":
            return verdict
        if verdict.status == "pending":
            pending = True
    return PENDING if pending else FULFILLED


def fact_holds(trace: Trace, fact: Fact) -> bool:
    """A fact holds if some trigger occurrence has the required chain verdict."""
    want = "fulfilled" if fact.mode == "asserted" else "violated"
    for i, st in enumerate(trace.states):
        if fact.trigger_event in st.occurring and eval_prop(fact.trigger_cond, st.valuation):
            if check_chain(trace, i, fact.chain).status == want:
                return True
    return False


# ---------------------------------------------------------------------------
# Relation semantics over a trace
# ---------------------------------------------------------------------------


def check_relation(trace: Trace, rel: Relation) -> bool:
    """True iff the trace satisfies the relation; a negative-signed relation
    is the complement of its positive form."""
    result = _positive_relation_holds(trace, rel)
    return result if rel.sign == "positive" else not result


def _positive_relation_holds(trace: Trace, rel: Relation) -> bool:
    states = trace.states
    kind = rel.kind
    if kind == "hypernym":
        a, b = rel.args
        return all(b in st.occurring for st in states if a in st.occurring)
    if kind == "isContradictoryWith":
        a, b = rel.args
        return not any(a in st.occurring and b in st.occurring for st in states)
    if kind == "happensBefore":
        # every occurrence of the second event has a strictly earlier
        # occurrence of the first
        a, b = rel.args
        seen_a = False
        for st in states:
            if b in st.occurring and not seen_a:
                return False
            if a in st.occurring:
                seen_a = True
        return True
    if kind == "eventEqual":
        a, b = rel.args
        return _positive_relation_holds(trace, Relation("hypernym", (a, b))) and (
            _positive_relation_holds(trace, Relation("hypernym", (b, a)))
        )
    if kind == "imply":
        pa, pb = rel.args
        return all(
            eval_prop(pb, st.valuation) for st in states if eval_prop(pa, st.valuation)
        )
    if kind == "mutuallyExclusive":
        pa, pb = rel.args
        return not any(
            eval_prop(pa, st.valuation) and eval_prop(pb, st.valuation) for st in states
        )
    if kind == "opposite":
        pa, pb = rel.args
        return all(
            eval_prop(pa, st.valuation) != eval_prop(pb, st.valuation) for st in states
        )
    if kind == "measureEqual":
        pa, pb = rel.args
        return all(
            eval_prop(pa, st.valuation) == eval_prop(pb, st.valuation) for st in states
        )
    if kind == "forbids":
        prop, event = rel.args
        return not any(
            event in st.occurring and eval_prop(prop, st.valuation) for st in states
        )
    if kind == "induces":
        event, prop = rel.args
        return all(
            eval_prop(prop, st.valuation) for st in states if event in st.occurring
        )
    if kind == "whenThenUntil":
        ea, prop, ec = rel.args
        for i, st in enumerate(states):
            if ea not in st.occurring:
                continue
            j = next(
                (k for k in range(i, len(states)) if ec in states[k].occurring), None
            )
            span = range(i, j) if j is not None else range(i, len(states))
            if not all(eval_prop(prop, states[k].valuation) for k in span):
                return False
        return True
    if kind == "whenThenFor":
        event, prop, duration = rel.args
        for i, st in enumerate(states):
            if event not in st.occurring:
                continue
            length = eval_term(duration, st.valuation)
            for later in states[i:]:
                if later.timestamp >= st.timestamp + length:
                    break
                if not eval_prop(prop, later.valuation):
                    return False
        return True
    raise ValueError(f"unknown relation kind: {kind!r}")
