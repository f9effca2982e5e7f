"""Bounded-trace satisfiability over normalized rules, relations and facts.

A problem asks for a trace with at most K states, integer timestamps up to a
horizon T, and finite measure domains, on which every rule evaluates to
Fulfilled, every relation holds, and every fact is exhibited.  The built-in
search enumerates states shortest-trace-first: event sets and measure
valuations come from the finite domains, and timestamps are drawn from the
open-window boundaries of the partial trace (plus the minimal step), which
covers every integer cell of the constraint arrangement, so the search is
exhaustive up to the bound.  Residual search states are memoized, which is
what makes hour-scale deadlines tractable.

Every SAT witness is replayed through the reference evaluator before being
returned; the search is never trusted alone.  UNSAT answers carry a
deletion-minimized core of constraint ids.
"""

from __future__ import annotations

import itertools
import shutil
import subprocess
import time
from dataclasses import dataclass, field

from .model import (
    Add,
    BoolLit,
    Cmp,
    Const,
    Fact,
    FULFILLED,
    MeasureRef,
    Neg,
    NormRule,
    Not,
    And,
    Or,
    ObligationChain,
    Prop,
    Relation,
    Scale,
    Signature,
    State,
    Term,
    Trace,
    check_relation,
    check_rule,
    eval_prop,
    eval_term,
    fact_holds,
    prop_measures,
    term_measures,
)

__all__ = [
    "Bound",
    "Budget",
    "EncodeError",
    "EncodingProblem",
    "SolveResult",
    "SolveStats",
    "default_bound",
    "encode",
    "solve",
    "solve_situational",
    "export_smt",
    "external_solver_command",
    "external_verdict",
]


class EncodeError(Exception):
    pass


@dataclass(frozen=True)
class Bound:
    states: int
    horizon: int

    def __post_init__(self):
        if self.states < 0 or self.horizon < 0:
            raise ValueError("bound components must be non-negative")


@dataclass(frozen=True)
class Budget:
    max_nodes: int = 4_000_000
    max_seconds: float = 120.0


@dataclass
class SolveStats:
    nodes: int = 0
    elapsed: float = 0.0


@dataclass(frozen=True)
class SolveResult:
    status: str  # "sat" | "unsat" | "unknown"
    witness: Trace | None = None
    core: tuple[str, ...] | None = None
    stats: SolveStats = field(default_factory=SolveStats, compare=False)


@dataclass(frozen=True)
class EncodingProblem:
    signature: Signature
    rules: tuple[NormRule, ...]
    relations: tuple[Relation, ...]
    facts: tuple[Fact, ...]
    bound: Bound
    domains: dict  # measure -> tuple of admissible values

    def constraint_ids(self) -> list[str]:
        return (
            [f"rule:{r.id}" for r in self.rules]
            + [f"relation:{i}" for i in range(len(self.relations))]
            + [f"fact:{f.id}" for f in self.facts]
        )

    def without(self, drop: set[str]) -> "EncodingProblem":
        return EncodingProblem(
            self.signature,
            tuple(r for r in self.rules if f"rule:{r.id}" not in drop),
            tuple(r for i, r in enumerate(self.relations) if f"relation:{i}" not in drop),
            tuple(f for f in self.facts if f"fact:{f.id}" not in drop),
            self.bound,
            self.domains,
        )


class _BudgetExceeded(Exception):
    pass


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _collect_constants(problem_terms: list[Term], props: list[Prop]) -> set[int]:
    values: set[int] = set()

    def from_term(term: Term):
        if isinstance(term, Const):
            values.add(term.value)
        elif isinstance(term, Neg):
            from_term(term.term)
        elif isinstance(term, Add):
            from_term(term.left)
            from_term(term.right)
        elif isinstance(term, Scale):
            values.add(term.factor)
            from_term(term.term)

    def from_prop(prop: Prop):
        if isinstance(prop, Cmp):
            from_term(prop.left)
            from_term(prop.right)
        elif isinstance(prop, Not):
            from_prop(prop.prop)
        elif isinstance(prop, (And, Or)):
            from_prop(prop.left)
            from_prop(prop.right)

    for t in problem_terms:
        from_term(t)
    for p in props:
        from_prop(p)
    return values


def _all_terms_and_props(rules, relations, facts) -> tuple[list[Term], list[Prop]]:
    terms: list[Term] = []
    props: list[Prop] = []
    for rule in list(rules) + list(facts):
        props.append(rule.trigger_cond)
        for item in rule.chain.items:
            props.append(item.guard)
            terms.append(item.obligation.deadline)
    for rel in relations:
        for arg in rel.args:
            if isinstance(arg, Prop):
                props.append(arg)
            elif isinstance(arg, Term):
                terms.append(arg)
    return terms, props


def encode(
    rules,
    relations,
    facts,
    bound: Bound,
    signature: Signature,
) -> EncodingProblem:
    """Compile constraints and finite measure domains into a problem.

    Numeric measures are restricted to the constants appearing in the
    document plus zero; booleans are {0, 1}.
    """
    if facts and bound.states < 1:
        raise EncodeError("bound too small to place any fact trigger")
    terms, props = _all_terms_and_props(rules, relations, facts)
    constants = _collect_constants(terms, props)
    domains: dict[str, tuple[int, ...]] = {}
    for name, sort in signature.measures.items():
        if sort == "boolean":
            domains[name] = (0, 1)
        else:
            domains[name] = tuple(sorted({0} | {c for c in constants if c >= 0}))
    return EncodingProblem(signature, tuple(rules), tuple(relations), tuple(facts), bound, domains)


def default_bound(rules, relations, facts, states: int = 6) -> Bound:
    """K = 6 states; T = twice the sum of the distinct deadline values plus
    one, evaluated over the finite domains for symbolic deadlines."""
    terms, props = _all_terms_and_props(rules, relations, facts)
    constants = _collect_constants([], props)
    deadline_values: set[int] = set()
    domain = tuple(sorted({0, 1} | {c for c in constants if c >= 0}))
    for term in terms:
        measures = sorted(term_measures(term))
        if not measures:
            deadline_values.add(max(0, eval_term(term, {})))
        else:
            for combo in itertools.product(domain, repeat=len(measures)):
                deadline_values.add(max(0, eval_term(term, dict(zip(measures, combo)))))
    horizon = 2 * (sum(sorted(deadline_values)) + 1)
    return Bound(states, horizon)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def _chain_status(states: tuple[State, ...], i: int, chain: ObligationChain):
    """Walk a chain from trigger state i over a partial trace.

    Returns ("fulfilled"|"violated", None) when the verdict can no longer
    change, or ("open", (pos, polarity, window_end, deadline)) at the first
    item whose window is still open at the end of the partial trace.
    """
    pos, act = 0, i
    last = len(chain.items) - 1
    last_ts = states[-1].timestamp
    while True:
        item = chain.items[pos]
        st = states[act]
        if not eval_prop(item.guard, st.valuation):
            return ("fulfilled", None)
        deadline = max(0, eval_term(item.obligation.deadline, st.valuation))
        end = st.timestamp + deadline
        event = item.obligation.event
        if item.obligation.polarity == "positive":
            fulfilled = any(
                event in states[j].occurring and states[j].timestamp <= end
                for j in range(act, len(states))
                if states[j].timestamp <= end
            )
            if fulfilled:
                return ("fulfilled", None)
            if last_ts < end:
                return ("open", (pos, "+", end, deadline))
            if pos == last:
                return ("violated", None)
            act = next(j for j in range(act, len(states)) if states[j].timestamp >= end)
            pos += 1
        else:
            hit = next(
                (
                    j
                    for j in range(act, len(states))
                    if states[j].timestamp <= end and event in states[j].occurring
                ),
                None,
            )
            if hit is not None:
                return ("violated", None)  # negative items are always last
            if last_ts >= end:
                return ("fulfilled", None)
            return ("open", (pos, "-", end, deadline))


class _Search:
    def __init__(self, problem: EncodingProblem, budget: Budget):
        self.problem = problem
        self.budget = budget
        self.stats = SolveStats()
        self.started = time.monotonic()
        self.seen: set = set()
        sig = problem.signature
        mentioned_events: set[str] = set()
        mentioned_measures: set[str] = set()
        for rule in list(problem.rules) + list(problem.facts):
            mentioned_events.add(rule.trigger_event)
            mentioned_measures |= prop_measures(rule.trigger_cond)
            for item in rule.chain.items:
                mentioned_events.add(item.obligation.event)
                mentioned_measures |= prop_measures(item.guard)
                mentioned_measures |= term_measures(item.obligation.deadline)
        for rel in problem.relations:
            for arg in rel.args:
                if isinstance(arg, str):
                    mentioned_events.add(arg)
                elif isinstance(arg, Prop):
                    mentioned_measures |= prop_measures(arg)
                elif isinstance(arg, Term):
                    mentioned_measures |= term_measures(arg)
        self.events = tuple(sorted(mentioned_events & sig.events))
        self.measures = tuple(sorted(mentioned_measures & set(sig.measures)))
        self.background = {
            m: problem.domains.get(m, (0,))[0] for m in sorted(sig.measures) if m not in self.measures
        }
        self.event_sets = tuple(
            frozenset(combo)
            for size in range(len(self.events) + 1)
            for combo in itertools.combinations(self.events, size)
        )
        self.valuations = tuple(
            dict(zip(self.measures, combo), **self.background)
            for combo in itertools.product(*(problem.domains.get(m, (0,)) for m in self.measures))
        )
        self.pos_relations = tuple(r for r in problem.relations if r.sign == "positive")
        self.neg_relations = tuple(r for r in problem.relations if r.sign == "negative")

    # -- bookkeeping --------------------------------------------------------

    def _tick(self):
        self.stats.nodes += 1
        if self.stats.nodes % 2048 == 0:
            self.stats.elapsed = time.monotonic() - self.started
            if self.stats.elapsed > self.budget.max_seconds:
                raise _BudgetExceeded()
        if self.stats.nodes > self.budget.max_nodes:
            raise _BudgetExceeded()

    # -- node analysis --------------------------------------------------------

    def _analyze(self, states: tuple[State, ...]):
        """(prune, frontier_key, window_ends, outstanding_deadlines)."""
        if not states:
            return (False, ("empty",), (), ())
        trace = Trace(states)
        now = states[-1].timestamp
        rule_windows: set[tuple] = set()
        ends: set[int] = set()
        outstanding: list[int] = []
        for r_idx, rule in enumerate(self.problem.rules):
            for i, st in enumerate(states):
                if rule.trigger_event not in st.occurring:
                    continue
                if not eval_prop(rule.trigger_cond, st.valuation):
                    continue
                status, info = _chain_status(states, i, rule.chain)
                if status == "violated":
                    return (True, None, (), ())
                if status == "open":
                    pos, pol, end, deadline = info
                    rule_windows.add((r_idx, pos, pol, end - now))
                    ends.add(end)
                    if pol == "+":
                        outstanding.append(deadline)
        fact_bits = []
        fact_windows: set[tuple] = set()
        for f_idx, fact in enumerate(self.problem.facts):
            want = "fulfilled" if fact.mode == "asserted" else "violated"
            satisfied = False
            open_triggers = []
            for i, st in enumerate(states):
                if fact.trigger_event not in st.occurring:
                    continue
                if not eval_prop(fact.trigger_cond, st.valuation):
                    continue
                status, info = _chain_status(states, i, fact.chain)
                if status == want:
                    satisfied = True
                    break
                if status == "open":
                    pos, pol, end, _ = info
                    open_triggers.append((f_idx, pos, pol, end - now))
                    ends.add(end)
            fact_bits.append(satisfied)
            if not satisfied:
                fact_windows.update(open_triggers)
        for rel in self.pos_relations:
            if not check_relation(trace, rel):
                return (True, None, (), ())
        rel_state = []
        for rel in self.pos_relations:
            if rel.kind == "happensBefore":
                rel_state.append(any(rel.args[0] in st.occurring for st in states))
            elif rel.kind == "whenThenUntil":
                ea, _, ec = rel.args
                active = False
                for st in states:
                    if ec in st.occurring:
                        active = False
                    elif ea in st.occurring:
                        active = True
                rel_state.append(active)
            elif rel.kind == "whenThenFor":
                event, _, duration = rel.args
                max_end = None
                for st in states:
                    if event in st.occurring:
                        end = st.timestamp + eval_term(duration, st.valuation)
                        if end > now and (max_end is None or end > max_end):
                            max_end = end
                if max_end is not None:
                    ends.add(max_end)
                rel_state.append(None if max_end is None else max_end - now)
            else:
                rel_state.append(None)
        neg_bits = tuple(check_relation(trace, rel) for rel in self.neg_relations)
        frontier = (
            tuple(sorted(rule_windows)),
            tuple(fact_bits),
            tuple(sorted(fact_windows)),
            tuple(rel_state),
            neg_bits,
            self.problem.bound.horizon - now,
        )
        return (False, frontier, tuple(sorted(ends)), tuple(outstanding))

    def _accepts(self, states: tuple[State, ...]) -> bool:
        trace = Trace(states)
        return (
            all(check_rule(trace, r) == FULFILLED for r in self.problem.rules)
            and all(check_relation(trace, rel) for rel in self.problem.relations)
            and all(fact_holds(trace, f) for f in self.problem.facts)
        )

    def _timestamp_candidates(self, states: tuple[State, ...], ends: tuple[int, ...]):
        horizon = self.problem.bound.horizon
        if not states:
            return (0,) if horizon >= 0 else ()
        prev = states[-1].timestamp
        candidates = {prev + 1}
        for end in ends:
            if end > prev:
                candidates.add(end)
                candidates.add(end + 1)
        return tuple(sorted(c for c in candidates if c <= horizon))

    def _children(self, states: tuple[State, ...], ends: tuple[int, ...]):
        for ts in self._timestamp_candidates(states, ends):
            for events in self.event_sets:
                for valuation in self.valuations:
                    yield State(events, valuation, ts)

    # -- plain bounded satisfiability -----------------------------------------

    def find_model(self) -> Trace | None:
        for k in range(self.problem.bound.states + 1):
            witness = self._dfs((), k)
            if witness is not None:
                return Trace(witness)
        return None

    def _dfs(self, states: tuple[State, ...], left: int):
        self._tick()
        prune, frontier, ends, _ = self._analyze(states)
        if prune:
            return None
        if left == 0:
            return states if self._accepts(states) else None
        key = (frontier, left)
        if key in self.seen:
            return None
        for child in self._children(states, ends):
            found = self._dfs(states + (child,), left - 1)
            if found is not None:
                return found
        self.seen.add(key)
        return None

    # -- situational two-level query -------------------------------------------

    def find_conflicting_situation(self, subject: NormRule) -> Trace | None:
        """A shortest prefix ending at a trigger of the subject rule that no
        in-bound suffix can complete to a trace fulfilling everything."""
        self.outer_seen: set = set()
        for k in range(1, self.problem.bound.states + 1):
            witness = self._situational_dfs((), k, subject)
            if witness is not None:
                return Trace(witness)
        return None

    def _situational_dfs(self, states, left, subject):
        self._tick()
        prune, frontier, ends, outstanding = self._analyze(states)
        if prune:
            return None
        if left == 0:
            if not self._prefix_admissible(states, outstanding, subject):
                return None
            if not self._extendable(states):
                return states
            return None
        key = (frontier, left)
        if key in self.outer_seen:
            return None
        for child in self._children(states, ends):
            found = self._situational_dfs(states + (child,), left - 1, subject)
            if found is not None:
                return found
        self.outer_seen.add(key)
        return None

    def _prefix_admissible(self, states, outstanding, subject) -> bool:
        if not states:
            return False
        last = states[-1]
        if subject.trigger_event not in last.occurring:
            return False
        if not eval_prop(subject.trigger_cond, last.valuation):
            return False
        # pending windows must be resolvable inside the horizon
        if outstanding:
            if last.timestamp + max(outstanding) > self.problem.bound.horizon:
                return False
        return True

    def _extendable(self, states) -> bool:
        # the suffix gets its own K-state allowance; a full-length prefix must
        # not count as conflicting merely because no room is left
        for extra in range(self.problem.bound.states + 1):
            if self._dfs(states, extra) is not None:
                return True
        return False


def _verify_witness(problem: EncodingProblem, witness: Trace) -> None:
    for rule in problem.rules:
        verdict = check_rule(witness, rule)
        if verdict != FULFILLED:
            raise AssertionError(f"witness fails rule {rule.id}: {verdict}")
    for rel in problem.relations:
        if not check_relation(witness, rel):
            raise AssertionError(f"witness fails relation {rel}")
    for fact in problem.facts:
        if not fact_holds(witness, fact):
            raise AssertionError(f"witness fails fact {fact.id}")


def _solve_raw(problem: EncodingProblem, budget: Budget) -> SolveResult:
    search = _Search(problem, budget)
    try:
        witness = search.find_model()
    except _BudgetExceeded:
        search.stats.elapsed = time.monotonic() - search.started
        return SolveResult("unknown", stats=search.stats)
    search.stats.elapsed = time.monotonic() - search.started
    if witness is not None:
        witness.validate_against(problem.signature)
        _verify_witness(problem, witness)
        return SolveResult("sat", witness=witness, stats=search.stats)
    return SolveResult("unsat", stats=search.stats)


def solve(problem: EncodingProblem, budget: Budget | None = None) -> SolveResult:
    """Decide the problem; UNSAT results carry a deletion-minimized core."""
    budget = budget or Budget()
    result = _solve_raw(problem, budget)
    if result.status != "unsat":
        return result
    core = list(problem.constraint_ids())
    stats = result.stats
    for cid in list(core):
        trial = set(core) - {cid}
        dropped = problem.without(set(problem.constraint_ids()) - trial)
        sub = _solve_raw(dropped, budget)
        stats.nodes += sub.stats.nodes
        if sub.status == "unknown":
            continue  # keep the constraint when the re-solve is inconclusive
        if sub.status == "unsat":
            core.remove(cid)
    return SolveResult("unsat", core=tuple(core), stats=stats)


def solve_situational(
    problem: EncodingProblem, subject: NormRule, budget: Budget | None = None
) -> SolveResult:
    """SAT means a conflicting situation exists; the witness is the prefix."""
    if problem.facts:
        raise EncodeError("situational queries take no facts")
    budget = budget or Budget()
    search = _Search(problem, budget)
    try:
        witness = search.find_conflicting_situation(subject)
    except _BudgetExceeded:
        search.stats.elapsed = time.monotonic() - search.started
        return SolveResult("unknown", stats=search.stats)
    search.stats.elapsed = time.monotonic() - search.started
    if witness is not None:
        witness.validate_against(problem.signature)
        return SolveResult("sat", witness=witness, stats=search.stats)
    return SolveResult("unsat", stats=search.stats)


def situation_is_conflicting(
    problem: EncodingProblem, subject: NormRule, prefix: Trace, budget: Budget | None = None
) -> bool:
    """Whether a given history ending at a trigger of the subject rule has no
    in-bound completion fulfilling every rule and relation."""
    if problem.facts:
        raise EncodeError("situational queries take no facts")
    search = _Search(problem, budget or Budget())
    states = tuple(prefix.states)
    prune, _, _, outstanding = search._analyze(states)
    if prune:
        return False
    if not search._prefix_admissible(states, outstanding, subject):
        return False
    return not search._extendable(states)


# ---------------------------------------------------------------------------
# SMT-LIB export
# ---------------------------------------------------------------------------


def _sexpr(*parts: str) -> str:
    return "(" + " ".join(parts) + ")"


class _SmtEmitter:
    def __init__(self, problem: EncodingProblem):
        self.p = problem
        self.k = problem.bound.states
        search = _Search(problem, Budget())
        self.events = search.events
        self.measures = search.measures

    def _act(self, i):
        return f"act_{i}"

    def _ts(self, i):
        return f"ts_{i}"

    def _ev(self, e, i):
        return f"ev_{e}_{i}"

    def _m(self, m, i):
        return f"m_{m}_{i}"

    def _term(self, term: Term, i: int) -> str:
        if isinstance(term, Const):
            return str(term.value)
        if isinstance(term, MeasureRef):
            return self._m(term.name, i)
        if isinstance(term, Neg):
            return _sexpr("-", "0", self._term(term.term, i))
        if isinstance(term, Add):
            return _sexpr("+", self._term(term.left, i), self._term(term.right, i))
        if isinstance(term, Scale):
            return _sexpr("*", str(term.factor), self._term(term.term, i))
        raise TypeError(term)

    def _prop(self, prop: Prop, i: int) -> str:
        if isinstance(prop, BoolLit):
            return "true" if prop.value else "false"
        if isinstance(prop, Cmp):
            op = "=" if prop.op == "eq" else ">="
            return _sexpr(op, self._term(prop.left, i), self._term(prop.right, i))
        if isinstance(prop, Not):
            return _sexpr("not", self._prop(prop.prop, i))
        if isinstance(prop, And):
            return _sexpr("and", self._prop(prop.left, i), self._prop(prop.right, i))
        if isinstance(prop, Or):
            return _sexpr("or", self._prop(prop.left, i), self._prop(prop.right, i))
        raise TypeError(prop)

    @staticmethod
    def _conj(parts: list[str]) -> str:
        parts = [p for p in parts if p != "true"]
        if not parts:
            return "true"
        if len(parts) == 1:
            return parts[0]
        return _sexpr("and", *parts)

    @staticmethod
    def _disj(parts: list[str]) -> str:
        parts = [p for p in parts if p != "false"]
        if not parts:
            return "false"
        if len(parts) == 1:
            return parts[0]
        return _sexpr("or", *parts)

    def _deadline_end(self, item, i: int) -> str:
        raw = self._term(item.obligation.deadline, i)
        clamped = _sexpr("ite", _sexpr("<", raw, "0"), "0", raw)
        return _sexpr("+", self._ts(i), clamped)

    def _fulfilled_pos(self, item, i: int, end: str) -> str:
        event = item.obligation.event
        return self._disj(
            [
                self._conj([self._act(j), self._ev(event, j), _sexpr("<=", self._ts(j), end)])
                for j in range(i, self.k)
            ]
        )

    def _violated_pos_at(self, item, i: int, j: int, end: str) -> str:
        inside = [
            _sexpr("=>", self._act(jp), _sexpr("<", self._ts(jp), end)) for jp in range(i, j)
        ]
        return self._conj(
            [self._act(j), _sexpr(">=", self._ts(j), end)]
            + inside
            + [_sexpr("not", self._fulfilled_pos(item, i, end))]
        )

    def _violated_neg_at(self, item, i: int, j: int, end: str) -> str:
        event = item.obligation.event
        before = [_sexpr("=>", self._act(jp), _sexpr("not", self._ev(event, jp))) for jp in range(i, j)]
        return self._conj(
            [self._act(j), self._ev(event, j), _sexpr("<=", self._ts(j), end)] + before
        )

    def _fulfilled_neg(self, item, i: int, end: str) -> str:
        event = item.obligation.event
        return self._conj(
            [
                _sexpr(
                    "=>",
                    self._conj([self._act(j), _sexpr("<=", self._ts(j), end)]),
                    _sexpr("not", self._ev(event, j)),
                )
                for j in range(i, self.k)
            ]
        )

    def _chain_fulfilled(self, chain: ObligationChain, pos: int, i: int) -> str:
        item = chain.items[pos]
        guard_off = _sexpr("not", self._prop(item.guard, i))
        end = self._deadline_end(item, i)
        if item.obligation.polarity == "negative":
            return self._disj([guard_off, self._fulfilled_neg(item, i, end)])
        fulfilled = self._fulfilled_pos(item, i, end)
        if pos == len(chain.items) - 1:
            return self._disj([guard_off, fulfilled])
        fallback = self._disj(
            [
                self._conj(
                    [self._violated_pos_at(item, i, j, end), self._chain_fulfilled(chain, pos + 1, j)]
                )
                for j in range(i, self.k)
            ]
        )
        return self._disj([guard_off, fulfilled, fallback])

    def _chain_violated(self, chain: ObligationChain, pos: int, i: int) -> str:
        item = chain.items[pos]
        guard_on = self._prop(item.guard, i)
        end = self._deadline_end(item, i)
        if item.obligation.polarity == "negative":
            hit = self._disj([self._violated_neg_at(item, i, j, end) for j in range(i, self.k)])
            return self._conj([guard_on, hit])
        steps = []
        for j in range(i, self.k):
            violated = self._violated_pos_at(item, i, j, end)
            if pos == len(chain.items) - 1:
                steps.append(violated)
            else:
                steps.append(self._conj([violated, self._chain_violated(chain, pos + 1, j)]))
        return self._conj([guard_on, self._disj(steps)])

    def _rule_assert(self, rule: NormRule) -> str:
        per_state = []
        for i in range(self.k):
            trigger = self._conj(
                [self._act(i), self._ev(rule.trigger_event, i), self._prop(rule.trigger_cond, i)]
            )
            per_state.append(_sexpr("=>", trigger, self._chain_fulfilled(rule.chain, 0, i)))
        return self._conj(per_state)

    def _fact_assert(self, fact: Fact) -> str:
        options = []
        for i in range(self.k):
            trigger = self._conj(
                [self._act(i), self._ev(fact.trigger_event, i), self._prop(fact.trigger_cond, i)]
            )
            if fact.mode == "asserted":
                body = self._chain_fulfilled(fact.chain, 0, i)
            else:
                body = self._chain_violated(fact.chain, 0, i)
            options.append(self._conj([trigger, body]))
        return self._disj(options)

    def _relation_assert(self, rel: Relation) -> str:
        k = self.k
        kind = rel.kind

        def every(fn):
            return self._conj([_sexpr("=>", self._act(i), fn(i)) for i in range(k)])

        if kind == "hypernym":
            a, b = rel.args
            body = every(lambda i: _sexpr("=>", self._ev(a, i), self._ev(b, i)))
        elif kind == "isContradictoryWith":
            a, b = rel.args
            body = every(lambda i: _sexpr("not", _sexpr("and", self._ev(a, i), self._ev(b, i))))
        elif kind == "happensBefore":
            a, b = rel.args
            body = every(
                lambda i: _sexpr(
                    "=>",
                    self._ev(b, i),
                    self._disj([self._conj([self._act(j), self._ev(a, j)]) for j in range(i)]),
                )
            )
        elif kind == "eventEqual":
            a, b = rel.args
            body = every(
                lambda i: _sexpr("and", _sexpr("=>", self._ev(a, i), self._ev(b, i)),
                                 _sexpr("=>", self._ev(b, i), self._ev(a, i)))
            )
        elif kind in ("imply", "mutuallyExclusive", "opposite", "measureEqual"):
            pa, pb = rel.args
            if kind == "imply":
                body = every(lambda i: _sexpr("=>", self._prop(pa, i), self._prop(pb, i)))
            elif kind == "mutuallyExclusive":
                body = every(lambda i: _sexpr("not", _sexpr("and", self._prop(pa, i), self._prop(pb, i))))
            elif kind == "opposite":
                body = every(lambda i: _sexpr("not", _sexpr("=", self._prop(pa, i), self._prop(pb, i))))
            else:
                body = every(lambda i: _sexpr("=", self._prop(pa, i), self._prop(pb, i)))
        elif kind == "forbids":
            prop, event = rel.args
            body = every(lambda i: _sexpr("=>", self._prop(prop, i), _sexpr("not", self._ev(event, i))))
        elif kind == "induces":
            event, prop = rel.args
            body = every(lambda i: _sexpr("=>", self._ev(event, i), self._prop(prop, i)))
        elif kind == "whenThenUntil":
            ea, prop, ec = rel.args

            def until_at(i):
                eventually = self._disj(
                    [
                        self._conj(
                            [self._act(j), self._ev(ec, j)]
                            + [
                                _sexpr("=>", self._act(kk), self._prop(prop, kk))
                                for kk in range(i, j)
                            ]
                        )
                        for j in range(i, self.k)
                    ]
                )
                forever = self._conj(
                    [_sexpr("=>", self._act(j), self._prop(prop, j)) for j in range(i, self.k)]
                )
                return _sexpr("=>", self._ev(ea, i), self._disj([eventually, forever]))

            body = every(until_at)
        elif kind == "whenThenFor":
            event, prop, duration = rel.args

            def for_at(i):
                end = _sexpr("+", self._ts(i), self._term(duration, i))
                window = self._conj(
                    [
                        _sexpr(
                            "=>",
                            self._conj([self._act(j), _sexpr("<", self._ts(j), end)]),
                            self._prop(prop, j),
                        )
                        for j in range(i, self.k)
                    ]
                )
                return _sexpr("=>", self._ev(event, i), window)

            body = every(for_at)
        else:
            raise ValueError(f"unknown relation kind: {kind!r}")
        if rel.sign == "negative":
            return _sexpr("not", body)
        return body


def export_smt(problem: EncodingProblem) -> str:
    """SMT-LIB v2 text whose sat/unsat agrees with the built-in verdict.

    Emission order is deterministic so exports diff cleanly.
    """
    em = _SmtEmitter(problem)
    k = problem.bound.states
    lines = [
        "; bounded-trace satisfiability of normalized requirement rules",
        f"; states={k} horizon={problem.bound.horizon}",
        "(set-logic QF_LIA)",
    ]
    for i in range(k):
        lines.append(f"(declare-const act_{i} Bool)")
        lines.append(f"(declare-const ts_{i} Int)")
        for e in em.events:
            lines.append(f"(declare-const ev_{e}_{i} Bool)")
        for m in em.measures:
            lines.append(f"(declare-const m_{m}_{i} Int)")
    for i in range(k):
        if i + 1 < k:
            lines.append(f"(assert (=> act_{i + 1} act_{i}))")
            lines.append(f"(assert (=> act_{i + 1} (< ts_{i} ts_{i + 1})))")
        lines.append(f"(assert (=> act_{i} (and (<= 0 ts_{i}) (<= ts_{i} {problem.bound.horizon}))))")
        for m in em.measures:
            choices = " ".join(f"(= m_{m}_{i} {v})" for v in problem.domains.get(m, (0,)))
            lines.append(f"(assert (=> act_{i} (or {choices})))")
        inactive = [f"(not ev_{e}_{i})" for e in em.events]
        inactive += [f"(= m_{m}_{i} {problem.domains.get(m, (0,))[0]})" for m in em.measures]
        inactive.append(f"(= ts_{i} 0)")
        lines.append(f"(assert (=> (not act_{i}) (and {' '.join(inactive)})))")
    for rule in problem.rules:
        lines.append(f"; rule {rule.id}")
        lines.append(f"(assert {em._rule_assert(rule)})")
    for idx, rel in enumerate(problem.relations):
        lines.append(f"; relation {idx} {rel.kind}")
        lines.append(f"(assert {em._relation_assert(rel)})")
    for fact in problem.facts:
        lines.append(f"; fact {fact.id}")
        lines.append(f"(assert {em._fact_assert(fact)})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# External solver harness
# ---------------------------------------------------------------------------


def external_solver_command() -> list[str] | None:
    """Locate an SMT-LIB solver; honors SLEECKIT_SMT_SOLVER."""
    import os

    override = os.environ.get("SLEECKIT_SMT_SOLVER")
    if override:
        return override.split()
    for name, args in (("z3", ["-in"]), ("cvc5", ["--lang=smt2"]), ("cvc4", ["--lang=smt2"])):
        path = shutil.which(name)
        if path:
            return [path] + args
    return None


def external_verdict(smt_text: str, command: list[str] | None = None, timeout: float = 60.0) -> str:
    """Run the exported problem through an external solver; the first line of
    its output is the verdict (sat/unsat/unknown)."""
    command = command or external_solver_command()
    if command is None:
        raise RuntimeError("no external SMT solver available")
    proc = subprocess.run(
        command, input=smt_text.encode(), capture_output=True, timeout=timeout
    )
    first = proc.stdout.decode().strip().splitlines()
    if not first:
        raise RuntimeError(f"solver produced no output: {proc.stderr.decode()[:200]}")
    verdict = first[0].strip()
    if verdict not in ("sat", "unsat", "unknown"):
        raise RuntimeError(f"unexpected solver output: {verdict!r}")
    return verdict
