"""Well-formedness analysis over normalized documents.

Each check is a bounded satisfiability query: vacuous conflict asks whether
the rule can be triggered at all while everything is fulfilled; situational
conflict searches for a history that makes future conflict inevitable;
redundancy asks whether the other rules already imply the subject;
insufficiency and over-restrictiveness test whether a concern or purpose is
realizable under the rules.  Checks run in a fixed stage order, with later
stages gated on earlier ones being clean.

Verdicts derived from an UNSAT search are definitive only up to the bound,
which every diagnosis records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Fact, NormRule, Obligation, ObligationChain, CondObligation, Const, TRUE, Trace
from .solver import (
    Bound,
    Budget,
    default_bound,
    encode,
    solve,
    solve_situational,
)
from .surface import render_relation

__all__ = [
    "Diagnosis",
    "AnalysisPlan",
    "STAGES",
    "negate_rule",
    "trigger_fact",
    "check_vacuous_conflict",
    "check_situational_conflict",
    "check_redundancy",
    "check_insufficiency",
    "check_over_restrictiveness",
    "run_plan",
]

STAGES = (
    (1, "vacuous conflicts"),
    (2, "situational conflicts"),
    (3, "insufficiency and over-restrictiveness"),
    (4, "redundancies"),
)


@dataclass(frozen=True)
class Diagnosis:
    kind: str
    subject: str
    verdict: str  # "issueFound" | "clean" | "cleanUpToBound" | "unknown" | "skipped"
    stage: int
    bound: Bound
    witness: Trace | None = None
    core: tuple[str, ...] = ()
    narrative: str = ""
    spans: dict = field(default_factory=dict, compare=False)

    @property
    def is_issue(self) -> bool:
        return self.verdict == "issueFound"


@dataclass(frozen=True)
class AnalysisPlan:
    """Fixed stage order; a stage runs only when every earlier stage came
    back clean, unless the caller forces continuation."""

    stages: tuple = STAGES


def trigger_fact(rule: NormRule) -> Fact:
    chain = ObligationChain(
        (CondObligation(TRUE, Obligation("positive", rule.trigger_event, Const(0))),)
    )
    return Fact(f"__trigger_{rule.id}", rule.trigger_event, rule.trigger_cond, chain,
                "asserted", "concern", rule.source_span)


def negate_rule(rule: NormRule) -> Fact:
    """A fact asserting a trigger occurrence whose chain is violated."""
    return Fact(
        f"__negation_{rule.id}",
        rule.trigger_event,
        rule.trigger_cond,
        rule.chain,
        "negated",
        "rule-negation",
        rule.source_span,
    )


def _core_without_query(core: tuple[str, ...] | None, query_fact_id: str) -> tuple[str, ...]:
    if not core:
        return ()
    return tuple(c for c in core if c != f"fact:{query_fact_id}")


def _relation_names(relations) -> dict[str, str]:
    return {f"relation:{i}": render_relation(rel) for i, rel in enumerate(relations)}


def _describe_core(core, relations) -> str:
    names = _relation_names(relations)
    parts = []
    for cid in core:
        if cid.startswith("rule:"):
            parts.append(cid.split(":", 1)[1])
        else:
            parts.append(names.get(cid, cid))
    return ", ".join(parts)


def _bound_phrase(bound: Bound) -> str:
    return f"within {bound.states} states and {bound.horizon}s"


def check_vacuous_conflict(
    rule: NormRule, rules, relations, bound: Bound, budget: Budget | None = None,
    signature=None,
) -> Diagnosis:
    """Issue iff no in-bound trace triggers the rule while everything else is
    fulfilled."""
    query = trigger_fact(rule)
    problem = encode(tuple(rules), tuple(relations), (query,), bound, signature or _sig_of(rules, relations))
    result = solve(problem, budget)
    if result.status == "unknown":
        return Diagnosis("vacuousConflict", rule.id, "unknown", 1, bound,
                         narrative=f"search budget exhausted after {result.stats.nodes} nodes")
    if result.status == "unsat":
        core = _core_without_query(result.core, query.id)
        narrative = (
            f"triggering {rule.id} always leads to a conflict {_bound_phrase(bound)}; "
            f"caused by: {_describe_core(core, relations)}"
        )
        return Diagnosis("vacuousConflict", rule.id, "issueFound", 1, bound, core=core, narrative=narrative)
    return Diagnosis(
        "vacuousConflict", rule.id, "cleanUpToBound", 1, bound, witness=result.witness,
        narrative=f"{rule.id} can be triggered without conflict {_bound_phrase(bound)}",
    )


def check_situational_conflict(
    rule: NormRule, rules, relations, bound: Bound, budget: Budget | None = None,
    signature=None,
) -> Diagnosis:
    problem = encode(tuple(rules), tuple(relations), (), bound, signature or _sig_of(rules, relations))
    result = solve_situational(problem, rule, budget)
    if result.status == "unknown":
        return Diagnosis("situationalConflict", rule.id, "unknown", 2, bound,
                         narrative=f"search budget exhausted after {result.stats.nodes} nodes")
    if result.status == "sat":
        narrative = (
            f"a history ending at a trigger of {rule.id} cannot be completed without "
            f"violating the rule set {_bound_phrase(bound)}"
        )
        return Diagnosis("situationalConflict", rule.id, "issueFound", 2, bound,
                         witness=result.witness, narrative=narrative)
    return Diagnosis(
        "situationalConflict", rule.id, "cleanUpToBound", 2, bound,
        narrative=f"every triggering history of {rule.id} stays completable {_bound_phrase(bound)}",
    )


def check_redundancy(
    rule: NormRule, rules, relations, bound: Bound, budget: Budget | None = None,
    signature=None,
) -> Diagnosis:
    query = negate_rule(rule)
    others = tuple(r for r in rules if r.id != rule.id)
    problem = encode(others, tuple(relations), (query,), bound, signature or _sig_of(rules, relations))
    result = solve(problem, budget)
    if result.status == "unknown":
        return Diagnosis("redundancy", rule.id, "unknown", 4, bound,
                         narrative=f"search budget exhausted after {result.stats.nodes} nodes")
    if result.status == "unsat":
        core = _core_without_query(result.core, query.id)
        narrative = (
            f"{rule.id} is logically implied {_bound_phrase(bound)} by: "
            f"{_describe_core(core, relations)}"
        )
        return Diagnosis("redundancy", rule.id, "issueFound", 4, bound, core=core, narrative=narrative)
    return Diagnosis(
        "redundancy", rule.id, "cleanUpToBound", 4, bound, witness=result.witness,
        narrative=f"{rule.id} adds behavior not implied by the other rules {_bound_phrase(bound)}",
    )


def check_insufficiency(
    concern: Fact, rules, relations, bound: Bound, budget: Budget | None = None,
    signature=None,
) -> Diagnosis:
    if concern.role != "concern":
        raise ValueError("insufficiency takes a concern fact")
    problem = encode(tuple(rules), tuple(relations), (concern,), bound,
                     signature or _sig_of(rules, relations, (concern,)))
    result = solve(problem, budget)
    if result.status == "unknown":
        return Diagnosis("insufficiency", concern.id, "unknown", 3, bound,
                         narrative=f"search budget exhausted after {result.stats.nodes} nodes")
    if result.status == "sat":
        narrative = f"the concern {concern.id} is realizable while respecting every rule"
        return Diagnosis("insufficiency", concern.id, "issueFound", 3, bound,
                         witness=result.witness, narrative=narrative)
    return Diagnosis(
        "insufficiency", concern.id, "cleanUpToBound", 3, bound,
        narrative=f"the rules block concern {concern.id} {_bound_phrase(bound)}",
    )


def check_over_restrictiveness(
    purpose: Fact, rules, relations, bound: Bound, budget: Budget | None = None,
    signature=None,
) -> Diagnosis:
    if purpose.role != "purpose":
        raise ValueError("over-restrictiveness takes a purpose fact")
    problem = encode(tuple(rules), tuple(relations), (purpose,), bound,
                     signature or _sig_of(rules, relations, (purpose,)))
    result = solve(problem, budget)
    if result.status == "unknown":
        return Diagnosis("overRestrictiveness", purpose.id, "unknown", 3, bound,
                         narrative=f"search budget exhausted after {result.stats.nodes} nodes")
    if result.status == "unsat":
        core = _core_without_query(result.core, purpose.id)
        narrative = (
            f"no behavior realizes purpose {purpose.id} {_bound_phrase(bound)}; "
            f"blocked by: {_describe_core(core, relations)}"
        )
        return Diagnosis("overRestrictiveness", purpose.id, "issueFound", 3, bound,
                         core=core, narrative=narrative)
    return Diagnosis(
        "overRestrictiveness", purpose.id, "clean", 3, bound, witness=result.witness,
        narrative=f"purpose {purpose.id} is realizable; witness attached",
    )


def _sig_of(rules, relations, facts=()):
    # the signature travels with the caller in practice; reconstruct a
    # minimal one when called with bare rule lists (tests, library use)
    from .model import Signature, prop_measures, term_measures, Prop, Term

    events: set[str] = set()
    measures: set[str] = set()
    for rule in list(rules) + list(facts):
        events.add(rule.trigger_event)
        measures |= prop_measures(rule.trigger_cond)
        for item in rule.chain.items:
            events.add(item.obligation.event)
            measures |= prop_measures(item.guard)
            measures |= term_measures(item.obligation.deadline)
    for rel in relations:
        for arg in rel.args:
            if isinstance(arg, str):
                events.add(arg)
            elif isinstance(arg, Prop):
                measures |= prop_measures(arg)
            elif isinstance(arg, Term):
                measures |= term_measures(arg)
    return Signature(frozenset(events), {m: "boolean" for m in sorted(measures)})


def run_plan(
    rules,
    facts,
    relations,
    bound: Bound | None = None,
    budget: Budget | None = None,
    force: bool = False,
    signature=None,
    stages: tuple[int, ...] = (1, 2, 3, 4),
) -> list[Diagnosis]:
    """Run the staged analysis; stage k+1 runs only when stage k reported no
    issues, unless forced.  Rules flagged as vacuously conflicting are
    excluded from the situational stage."""
    rules = tuple(rules)
    relations = tuple(relations)
    concerns = [f for f in facts if f.role == "concern"]
    purposes = [f for f in facts if f.role == "purpose"]
    bound = bound or default_bound(rules, relations, tuple(facts))
    diagnoses: list[Diagnosis] = []
    blocked = False
    vacuous_ids: set[str] = set()

    def gate() -> bool:
        return blocked and not force

    if 1 in stages:
        for rule in rules:
            diag = check_vacuous_conflict(rule, rules, relations, bound, budget, signature)
            diagnoses.append(diag)
            if diag.is_issue:
                vacuous_ids.add(rule.id)
        blocked = blocked or bool(vacuous_ids)
    if 2 in stages and not gate():
        for rule in rules:
            if rule.id in vacuous_ids:
                diagnoses.append(
                    Diagnosis("situationalConflict", rule.id, "skipped", 2, bound,
                              narrative="skipped: rule is vacuously conflicting")
                )
                continue
            diag = check_situational_conflict(rule, rules, relations, bound, budget, signature)
            diagnoses.append(diag)
        blocked = blocked or any(d.stage == 2 and d.is_issue for d in diagnoses)
    if 3 in stages and not gate():
        for concern in concerns:
            diagnoses.append(check_insufficiency(concern, rules, relations, bound, budget, signature))
        for purpose in purposes:
            diagnoses.append(check_over_restrictiveness(purpose, rules, relations, bound, budget, signature))
        blocked = blocked or any(d.stage == 3 and d.is_issue for d in diagnoses)
    if 4 in stages and not gate():
        for rule in rules:
            diagnoses.append(check_redundancy(rule, rules, relations, bound, budget, signature))
    return diagnoses
