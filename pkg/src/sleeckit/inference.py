"""Horn-rule inference over capability relations and the consistency filter.

The filter incrementally closes a candidate relation set under the rule
catalog, repairing contradictions as they surface: a derived negative
conclusion overrides a present positive member, and a derived positive
conclusion that contradicts a present negative retracts one of its premises.
Positive conclusions that are new to the set are confirmed through a
follow-up oracle before being admitted.

Derived negative conclusions are used only as repair triggers and are not
stored as standalone members; see the decisions ledger for why this deviates
from a literal reading of the published pseudocode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .model import Prop, Relation, canonical_prop, negate_prop, relation_key

__all__ = [
    "InferenceRule",
    "RULE_CATALOG",
    "FlipRecord",
    "FilterOutcome",
    "OracleError",
    "apply_rule",
    "check_consistency",
    "explain_flip",
    "canonicalize_relation",
    "relation_sort_key",
]


class OracleError(Exception):
    """The follow-up oracle could not answer; carries the open queries."""

    def __init__(self, message: str, unanswered: Iterable[Relation] = ()):
        self.unanswered = tuple(unanswered)
        super().__init__(message)


# Patterns: (kind, arg, ...) where an arg is a variable name or
# ("not", variable) for a negated measure proposition.
Pattern = tuple


@dataclass(frozen=True)
class InferenceRule:
    name: str
    premises: tuple[Pattern, ...]
    conclusion: Pattern
    polarity: str  # "negative" | "positive", by the conclusion it derives

    def __post_init__(self):
        if self.polarity not in ("negative", "positive"):
            raise ValueError(f"bad polarity: {self.polarity!r}")


_HYP = "hypernym"
_CON = "isContradictoryWith"
_HB = "happensBefore"
_EQE = "eventEqual"
_IMP = "imply"
_ME = "mutuallyExclusive"
_OPS = "opposite"
_EQM = "measureEqual"

RULE_CATALOG: tuple[InferenceRule, ...] = (
    # event relations
    InferenceRule("IP1-", ((_CON, "A", "B"),), (_HYP, "A", "B"), "negative"),
    InferenceRule("IP2-", ((_HB, "A", "B"),), (_HYP, "A", "B"), "negative"),
    InferenceRule("IPtrans+", ((_HYP, "A", "B"), (_HYP, "B", "C")), (_HYP, "A", "C"), "positive"),
    InferenceRule("IPEQ+", ((_EQE, "A", "B"),), (_HYP, "A", "B"), "positive"),
    InferenceRule("ME1-", ((_HYP, "A", "B"),), (_CON, "A", "B"), "negative"),
    InferenceRule("MEcomm+", ((_CON, "B", "A"),), (_CON, "A", "B"), "positive"),
    InferenceRule("MEtrans+", ((_HYP, "A", "B"), (_CON, "B", "C")), (_CON, "A", "C"), "positive"),
    InferenceRule("EQIP+", ((_HYP, "A", "B"), (_HYP, "B", "A")), (_EQE, "A", "B"), "positive"),
    InferenceRule("EQcom+", ((_EQE, "A", "B"),), (_EQE, "B", "A"), "positive"),
    InferenceRule("HBtrans1+", ((_HB, "A", "B"), (_HB, "B", "C")), (_HB, "A", "C"), "positive"),
    InferenceRule("HBtrans2+", ((_HB, "A", "B"), (_HYP, "C", "B")), (_HB, "A", "C"), "positive"),
    InferenceRule("HBtrans3+", ((_HYP, "B", "A"), (_HB, "B", "C")), (_HB, "A", "C"), "positive"),
    # measure relations; named with a trailing + or - for the polarity of the
    # conclusion, so MME1+ is classified negative-deriving despite its name
    InferenceRule("MIP1-", ((_ME, "P", "Q"),), (_IMP, "P", "Q"), "negative"),
    InferenceRule("MIPtrans+", ((_IMP, "P", "Q"), (_IMP, "Q", "R")), (_IMP, "P", "R"), "positive"),
    InferenceRule("IPEQ1+", ((_EQM, "P", "Q"),), (_IMP, "P", "Q"), "positive"),
    InferenceRule("IPEQ2+", ((_EQM, "P", "Q"),), (_IMP, ("not", "P"), ("not", "Q")), "positive"),
    InferenceRule("MME1+", ((_IMP, "P", "Q"),), (_ME, "P", "Q"), "negative"),
    InferenceRule("MMEcomm+", ((_ME, "Q", "P"),), (_ME, "P", "Q"), "positive"),
    InferenceRule("MMEtrans+", ((_IMP, "P", "Q"), (_ME, "Q", "R")), (_ME, "P", "R"), "positive"),
    InferenceRule("MEQIP+", ((_IMP, "P", "Q"), (_IMP, "Q", "P")), (_EQM, "P", "Q"), "positive"),
    InferenceRule("MEQOP+", ((_OPS, "P", ("not", "Q")), (_IMP, "Q", "P")), (_EQM, "P", "Q"), "positive"),
    InferenceRule("MEQcom+", ((_EQM, "P", "Q"),), (_EQM, "Q", "P"), "positive"),
    InferenceRule("MOPEQ+", ((_EQM, "P", ("not", "Q")),), (_OPS, "P", "Q"), "positive"),
    InferenceRule("MOPcoms+", ((_OPS, "Q", "P"),), (_OPS, "P", "Q"), "positive"),
    InferenceRule("MOPME+", ((_ME, "P", "Q"), (_ME, ("not", "P"), ("not", "Q"))), (_OPS, "P", "Q"), "positive"),
)

_PROVENANCE_RANK = {"inferred": 0, "llm": 1, "stakeholder": 2}


def canonicalize_relation(rel: Relation) -> Relation:
    """Canonicalize measure-proposition operands so syntactic identity works."""
    args = tuple(canonical_prop(a) if isinstance(a, Prop) else a for a in rel.args)
    return Relation(rel.kind, args, rel.sign, rel.provenance)


def relation_sort_key(rel: Relation) -> tuple:
    return relation_key(rel) + (rel.sign,)


def _match(pattern: Pattern, rel: Relation, binding: dict) -> dict | None:
    kind = pattern[0]
    if rel.kind != kind or rel.sign != "positive":
        return None
    if len(pattern) - 1 != len(rel.args):
        return None
    new = dict(binding)
    for pat_arg, arg in zip(pattern[1:], rel.args):
        if isinstance(pat_arg, tuple):  # ("not", var): bind var to the negation
            var = pat_arg[1]
            value = negate_prop(arg) if isinstance(arg, Prop) else None
            if value is None:
                return None
        else:
            var = pat_arg
            value = canonical_prop(arg) if isinstance(arg, Prop) else arg
        if var in new:
            if new[var] != value:
                return None
        else:
            new[var] = value
    return new


def _instantiate(pattern: Pattern, binding: Mapping) -> tuple:
    args = []
    for pat_arg in pattern[1:]:
        if isinstance(pat_arg, tuple):
            args.append(negate_prop(binding[pat_arg[1]]))
        else:
            args.append(binding[pat_arg])
    return (pattern[0], tuple(args))


def _by_kind(positives: Iterable[Relation]) -> dict[str, list[Relation]]:
    index: dict[str, list[Relation]] = {}
    for rel in positives:
        index.setdefault(rel.kind, []).append(rel)
    return index


def _derivations(rule: InferenceRule, index: Mapping[str, list[Relation]]):
    """All (conclusion, premises) instantiations over positive members."""
    results = []

    def walk(idx: int, binding: dict, used: list[Relation]):
        if idx == len(rule.premises):
            kind, args = _instantiate(rule.conclusion, binding)
            sign = "positive" if rule.polarity == "positive" else "negative"
            results.append((Relation(kind, args, sign, "inferred"), tuple(used)))
            return
        for rel in index.get(rule.premises[idx][0], ()):
            new = _match(rule.premises[idx], rel, binding)
            if new is not None:
                walk(idx + 1, new, used + [rel])

    walk(0, {}, [])
    return results


def apply_rule(rule: InferenceRule, relations: Iterable[Relation]) -> set[Relation]:
    """All conclusions whose premises are positive members of the input set."""
    positives = [canonicalize_relation(r) for r in relations if r.sign == "positive"]
    return {concl for concl, _ in _derivations(rule, _by_kind(positives))}


@dataclass(frozen=True)
class FlipRecord:
    relation: Relation  # the member as it was before the flip
    rule: str
    premises: tuple[Relation, ...]


@dataclass(frozen=True)
class FilterOutcome:
    accepted: tuple[Relation, ...]
    flipped: tuple[FlipRecord, ...]
    followups_asked: tuple[Relation, ...]
    iterations: int
    unanswered: tuple[Relation, ...] = ()
    derivations: Mapping = field(default_factory=dict, compare=False)


Oracle = Callable[[list[Relation]], list[Relation]]


def check_consistency(
    relations: Iterable[Relation],
    oracle: Oracle,
    max_iterations: int = 1000,
) -> FilterOutcome:
    """Filter a candidate relation set into a consistent subset.

    Returns the input relations that survive the repair loop, the flips that
    removed the rest, and every follow-up confirmation that was requested.
    Termination: a member can only flip from positive to negative, never
    back, and each candidate conclusion is queried at most once.
    """
    original = [canonicalize_relation(r) for r in relations]
    members: dict[tuple, Relation] = {}
    flips: list[FlipRecord] = []
    for rel in sorted(original, key=relation_sort_key):
        key = relation_key(rel)
        if key in members and members[key].sign != rel.sign:
            # locally inconsistent input: the negative form wins immediately
            members[key] = rel if rel.sign == "negative" else members[key]
        else:
            members[key] = rel
    derivation_of: dict[tuple, tuple[str, tuple[Relation, ...]]] = {}
    followups: list[Relation] = []
    asked: set[tuple] = set()
    unanswered: list[Relation] = []
    answers: list[Relation] = []
    iterations = 0

    def positives() -> list[Relation]:
        return sorted((r for r in members.values() if r.sign == "positive"), key=relation_sort_key)

    def flip(member: Relation, rule_name: str, premises: tuple[Relation, ...]) -> None:
        members[relation_key(member)] = member.negated().with_provenance("inferred")
        flips.append(FlipRecord(member, rule_name, premises))

    while True:
        iterations += 1
        if iterations > max_iterations:
            raise RuntimeError("consistency filter failed to reach a fixpoint")
        for ans in sorted(answers, key=relation_sort_key):
            key = relation_key(ans)
            current = members.get(key)
            if current is None:
                members[key] = ans
            elif current.sign == "positive" and ans.sign == "negative":
                members[key] = ans  # negatives are favored
        answers = []
        snapshot = dict(members)

        # negative-deriving rules run to fixpoint first
        changed = True
        while changed:
            changed = False
            index = _by_kind(positives())
            pending = []
            for rule in RULE_CATALOG:
                if rule.polarity != "negative":
                    continue
                pending.extend((rule, concl, prem) for concl, prem in _derivations(rule, index))
            pending.sort(key=lambda item: (item[0].name, relation_sort_key(item[1])))
            for rule, concl, premises in pending:
                if any(members.get(relation_key(p)) != p for p in premises):
                    continue  # a premise was flipped earlier in this sweep
                current = members.get(relation_key(concl))
                if current is not None and current.sign == "positive":
                    flip(current, rule.name, premises)
                    changed = True

        # positive-deriving rules: repairs are applied, new conclusions are
        # queued for oracle confirmation
        new_queries: dict[tuple, Relation] = {}
        changed = True
        while changed:
            changed = False
            index = _by_kind(positives())
            pending = []
            for rule in RULE_CATALOG:
                if rule.polarity != "positive":
                    continue
                pending.extend((rule, concl, prem) for concl, prem in _derivations(rule, index))
            pending.sort(key=lambda item: (item[0].name, relation_sort_key(item[1])))
            for rule, concl, premises in pending:
                if any(members.get(relation_key(p)) != p for p in premises):
                    continue
                key = relation_key(concl)
                current = members.get(key)
                if current is None:
                    if key not in asked:
                        asked.add(key)
                        derivation_of.setdefault(key, (rule.name, premises))
                        new_queries[key] = concl
                elif current.sign == "negative":
                    # contradiction with a present negative: retract a premise
                    victim = min(
                        premises,
                        key=lambda p: (_PROVENANCE_RANK[p.provenance], relation_sort_key(p)),
                    )
                    flip(victim, rule.name, tuple(p for p in premises if p is not victim) + (current,))
                    changed = True

        queries = sorted(new_queries.values(), key=relation_sort_key)
        if members == snapshot and not queries:
            break
        if queries:
            followups.extend(queries)
            try:
                raw = oracle(list(queries))
            except OracleError as err:
                unanswered.extend(err.unanswered or queries)
                break
            answered = {}
            for ans in raw:
                ans = canonicalize_relation(ans)
                answered[relation_key(ans)] = ans
            for q in queries:
                got = answered.get(relation_key(q))
                if got is None:
                    unanswered.append(q)
                else:
                    answers.append(got.with_provenance("llm"))

    accepted = tuple(
        rel
        for rel in sorted(original, key=relation_sort_key)
        if members.get(relation_key(rel)) is not None
        and members[relation_key(rel)].sign == rel.sign
    )
    return FilterOutcome(
        accepted=accepted,
        flipped=tuple(flips),
        followups_asked=tuple(followups),
        iterations=iterations,
        unanswered=tuple(unanswered),
        derivations=dict(derivation_of),
    )


def explain_flip(outcome: FilterOutcome, relation: Relation) -> list[tuple[str, tuple[Relation, ...]]]:
    """Derivation chain ending at the flip of the given relation.

    Premises that were themselves derived (and confirmed via follow-up) are
    expanded recursively, deepest first.
    """
    target = canonicalize_relation(relation)
    record = next((f for f in outcome.flipped if f.relation == target), None)
    if record is None:
        raise ValueError(f"relation was not flipped: {relation}")

    chain: list[tuple[str, tuple[Relation, ...]]] = []
    seen: set[tuple] = set()

    def expand(premises: tuple[Relation, ...]) -> None:
        for prem in premises:
            key = relation_key(prem)
            if key in seen:
                continue
            seen.add(key)
            derived = outcome.derivations.get(key)
            if derived is not None:
                rule_name, sub = derived
                expand(sub)
                chain.append((rule_name, sub))

    expand(record.premises)
    chain.append((record.rule, record.premises))
    return chain
