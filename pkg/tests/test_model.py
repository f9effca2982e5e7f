"""Core model tests: term/proposition evaluation, obligation and chain
verdicts, rule fulfillment, and relation semantics over traces."""

from __future__ import annotations

import random

import pytest

from sleeckit.model import (
    FALSE,
    FULFILLED,
    PENDING,
    Add,
    Cmp,
    Const,
    CondObligation,
    EvalError,
    Fact,
    MeasureRef,
    Neg,
    NegativeDeadlineWarning,
    NormRule,
    Not,
    Obligation,
    ObligationChain,
    Or,
    And,
    Relation,
    Scale,
    Signature,
    TRUE,
    Trace,
    TraceError,
    canonical_prop,
    check_chain,
    check_obligation,
    check_relation,
    check_rule,
    eval_prop,
    eval_term,
    fact_holds,
    make_trace,
    violated_at,
)


def ob(event, deadline=0, polarity="positive"):
    return Obligation(polarity, event, Const(deadline))


def cob(event, deadline=0, polarity="positive", guard=TRUE):
    return CondObligation(guard, ob(event, deadline, polarity))


def chain(*items):
    return ObligationChain(tuple(items))


def rule(rid, ev, cond, *items):
    return NormRule(rid, ev, cond, chain(*items))


M1 = Cmp("eq", MeasureRef("patientStressed"), Const(1))


class TestTerms:
    def test_constant(self):
        assert eval_term(Const(5), {}) == 5

    def test_measure_identity(self):
        assert eval_term(MeasureRef("m"), {"m": 3}) == 3

    def test_arithmetic(self):
        # 2*m + (-c) with m=4, c=1 -> 7, worked by hand
        t = Add(Scale(2, MeasureRef("m")), Neg(Const(1)))
        assert eval_term(t, {"m": 4}) == 7

    def test_unbound_measure_named(self):
        with pytest.raises(EvalError, match="stress"):
            eval_term(MeasureRef("stress"), {})


class TestProps:
    def test_literals(self):
        assert eval_prop(TRUE, {}) is True
        assert eval_prop(FALSE, {}) is False

    def test_boolean_measure(self):
        assert eval_prop(M1, {"patientStressed": 1}) is True
        assert eval_prop(M1, {"patientStressed": 0}) is False

    def test_truth_table_case(self):
        # not(m >= 2) and (m = 1) with m=1, oracle: truth table
        p = And(Not(Cmp("ge", MeasureRef("m"), Const(2))), Cmp("eq", MeasureRef("m"), Const(1)))
        assert eval_prop(p, {"m": 1}) is True
        assert eval_prop(p, {"m": 2}) is False


class TestTraceConstruction:
    def test_monotone_timestamps_enforced(self):
        with pytest.raises(TraceError):
            make_trace([({"A"}, {}, 3), ({"B"}, {}, 3)])
        with pytest.raises(TraceError):
            make_trace([({"A"}, {}, 3), ({"B"}, {}, 1)])

    def test_validate_against_signature(self):
        sig = Signature(frozenset({"A"}), {"m": "boolean"})
        make_trace([({"A"}, {"m": 1}, 0)]).validate_against(sig)
        with pytest.raises(TraceError):
            make_trace([({"A"}, {}, 0)]).validate_against(sig)
        with pytest.raises(TraceError):
            make_trace([({"A"}, {"m": 2}, 0)]).validate_against(sig)


class TestObligations:
    def test_positive_fulfilled_in_window(self):
        trace = make_trace([({"A"}, {}, 1), ({"B"}, {}, 3)])
        assert check_obligation(trace, 0, cob("B", 5)) == FULFILLED

    def test_positive_violated_at_window_close(self):
        # window [1,6] exhausted with no B; oracle: exhaustive window scan
        trace = make_trace([({"A"}, {}, 1), (set(), {}, 6)])
        assert check_obligation(trace, 0, cob("B", 5)) == violated_at(1)

    def test_negative_violated_at_first_occurrence(self):
        trace = make_trace([({"A"}, {}, 1), ({"B"}, {}, 3)])
        assert check_obligation(trace, 0, cob("B", 5, "negative")) == violated_at(1)

    def test_positive_pending_while_window_open(self):
        trace = make_trace([({"A"}, {}, 1), (set(), {}, 4)])
        assert check_obligation(trace, 0, cob("B", 5)) == PENDING

    def test_positive_violated_when_deadline_skipped(self):
        trace = make_trace([({"A"}, {}, 1), (set(), {}, 9)])
        assert check_obligation(trace, 0, cob("B", 5)) == violated_at(1)

    def test_negative_vacuously_fulfilled_on_open_window(self):
        trace = make_trace([({"A"}, {}, 1)])
        assert check_obligation(trace, 0, cob("B", 5, "negative")) == FULFILLED

    def test_guard_off_fulfills(self):
        trace = make_trace([({"A"}, {"m": 0}, 1)])
        assert check_obligation(trace, 0, cob("B", 5, guard=Cmp("eq", MeasureRef("m"), Const(1)))) == FULFILLED

    def test_index_out_of_range(self):
        trace = make_trace([({"A"}, {}, 1)])
        with pytest.raises(IndexError):
            check_obligation(trace, 1, cob("B"))

    def test_negative_symbolic_deadline_clamped_with_warning(self):
        trace = make_trace([({"A", "B"}, {"m": 3}, 1)])
        item = CondObligation(TRUE, Obligation("positive", "B", Neg(MeasureRef("m"))))
        with pytest.warns(NegativeDeadlineWarning):
            assert check_obligation(trace, 0, item) == FULFILLED

    def test_complete_window_dichotomy(self):
        # Fulfilled and ViolatedAt are mutually exclusive and exhaustive once
        # the final timestamp passes the window end.
        rng = random.Random(7)
        for _ in range(300):
            deadline = rng.randint(0, 4)
            n = rng.randint(1, 4)
            stamps = sorted(rng.sample(range(0, 12), n))
            states = [({"B"} if rng.random() < 0.4 else set(), {}, ts) for ts in stamps]
            states.append((set(), {}, 13 + deadline))
            trace = make_trace(states)
            verdict = check_obligation(trace, 0, cob("B", deadline))
            assert verdict.status in ("fulfilled", "violated")
            window = [st for st in trace.states if st.timestamp <= trace.states[0].timestamp + deadline]
            expect = any("B" in st.occurring for st in window)
            assert (verdict == FULFILLED) == expect


class TestChains:
    def test_single_item_delegates(self):
        trace = make_trace([({"A"}, {}, 1), ({"B"}, {}, 3)])
        for item in (cob("B", 5), cob("C", 1), cob("B", 5, "negative")):
            assert check_chain(trace, 0, chain(item)) == check_obligation(trace, 0, item)

    def test_fallback_fires_at_violation_point(self):
        # B within 2 otherwise C within 2 on A@1, _@4, C@5:
        # head violated at state 1 (ts 4 >= 3), fallback window [4,6], C@5 in it
        trace = make_trace([({"A"}, {}, 1), (set(), {}, 4), ({"C"}, {}, 5)])
        assert check_chain(trace, 0, chain(cob("B", 2), cob("C", 2))) == FULFILLED

    def test_negative_fallback_violated(self):
        trace = make_trace([({"A"}, {}, 1), ({"C"}, {}, 4)])
        verdict = check_chain(trace, 0, chain(cob("B", 2), cob("C", 2, "negative")))
        assert verdict == violated_at(1)

    def test_head_pending_is_chain_pending(self):
        trace = make_trace([({"A"}, {}, 1)])
        assert check_chain(trace, 0, chain(cob("B", 5), cob("C", 2))) == PENDING

    def test_chain_shape_enforced(self):
        with pytest.raises(ValueError):
            chain(cob("B", 1, "negative"), cob("C", 1))
        with pytest.raises(ValueError):
            ObligationChain(())


RULE16 = rule(
    "Rule16",
    "MeetingUser",
    Not(M1),
    CondObligation(TRUE, Obligation("positive", "ExaminingPatient", Const(1800))),
)


class TestRules:
    def test_trigger_condition_defeats_single_state(self):
        trace = make_trace([({"MeetingUser"}, {"patientStressed": 1}, 1)])
        assert check_rule(trace, RULE16) == FULFILLED

    def test_empty_trace_vacuously_fulfilled(self):
        for r in (RULE16, rule("r", "A", TRUE, cob("B", 5))):
            assert check_rule(Trace(()), r) == FULFILLED

    def test_negative_rule_fulfilled_on_open_window(self):
        # not C within 10h against A@1, B@6: no C so far, so fulfilled
        r = rule("R3", "A", TRUE, cob("C", 36000, "negative"))
        trace = make_trace([({"A"}, {}, 1), ({"B"}, {}, 6)])
        assert check_rule(trace, r) == FULFILLED

    def test_violation_reported_over_pending(self):
        r = rule("r", "A", TRUE, cob("B", 2))
        trace = make_trace([({"A"}, {}, 0), ({"A"}, {}, 5)])
        assert check_rule(trace, r).status == "violated"


class TestFacts:
    def test_asserted_fact(self):
        f = Fact("f", "A", TRUE, chain(cob("B", 2)))
        assert fact_holds(make_trace([({"A", "B"}, {}, 0)]), f)
        assert not fact_holds(make_trace([({"B"}, {}, 0)]), f)

    def test_negated_fact_requires_violation(self):
        f = Fact("f", "A", TRUE, chain(cob("B", 2)), mode="negated")
        assert fact_holds(make_trace([({"A"}, {}, 0), (set(), {}, 4)]), f)
        assert not fact_holds(make_trace([({"A", "B"}, {}, 0), (set(), {}, 4)]), f)
        # pending window never counts
        assert not fact_holds(make_trace([({"A"}, {}, 0)]), f)


def st(events, ts, **vals):
    return (set(events), vals, ts)


class TestRelations:
    def test_hypernym(self):
        trace = make_trace([st({"DrinkWater", "DrinkLiquid"}, 0), st({"DrinkLiquid"}, 1)])
        assert check_relation(trace, Relation("hypernym", ("DrinkWater", "DrinkLiquid")))
        trace2 = make_trace([st({"DrinkWater"}, 0)])
        assert not check_relation(trace2, Relation("hypernym", ("DrinkWater", "DrinkLiquid")))

    def test_contradictory_vacuous(self):
        trace = make_trace([st({"B"}, 0), st(set(), 1)])
        assert check_relation(trace, Relation("isContradictoryWith", ("A", "B")))

    def test_happens_before_needs_strictly_earlier(self):
        hb = Relation("happensBefore", ("ClosingDoor", "LockingDoor"))
        assert check_relation(make_trace([st({"ClosingDoor"}, 0), st({"LockingDoor"}, 3)]), hb)
        assert not check_relation(make_trace([st({"ClosingDoor", "LockingDoor"}, 0)]), hb)
        assert not check_relation(make_trace([st({"LockingDoor"}, 0), st({"ClosingDoor"}, 1)]), hb)

    def test_when_then_for_window_scan(self):
        # loggedIn must hold through [0, 600); state at 300 breaks it
        rel = Relation("whenThenFor", ("LoginConfirmed", Cmp("eq", MeasureRef("loggedIn"), Const(1)), Const(600)))
        trace = make_trace([st({"LoginConfirmed"}, 0, loggedIn=1), st(set(), 300, loggedIn=0)])
        assert not check_relation(trace, rel)
        ok = make_trace([st({"LoginConfirmed"}, 0, loggedIn=1), st(set(), 300, loggedIn=1), st(set(), 600, loggedIn=0)])
        assert check_relation(ok, rel)

    def test_until(self):
        consent = Cmp("eq", MeasureRef("consentObtained"), Const(1))
        rel = Relation("whenThenUntil", ("CollectConsent", consent, "ConsentWithdraw"))
        good = make_trace(
            [st({"CollectConsent"}, 0, consentObtained=1),
             st(set(), 1, consentObtained=1),
             st({"ConsentWithdraw"}, 2, consentObtained=0)]
        )
        assert check_relation(good, rel)
        bad = make_trace(
            [st({"CollectConsent"}, 0, consentObtained=1),
             st(set(), 1, consentObtained=0),
             st({"ConsentWithdraw"}, 2, consentObtained=0)]
        )
        assert not check_relation(bad, rel)
        # no withdraw: condition must hold to the end of the trace
        forever = make_trace([st({"CollectConsent"}, 0, consentObtained=1), st(set(), 5, consentObtained=1)])
        assert check_relation(forever, rel)

    def test_forbids_and_induces(self):
        wet = Cmp("eq", MeasureRef("inWater"), Const(1))
        forbids = Relation("forbids", (wet, "CarStartSpeeding"))
        assert not check_relation(make_trace([st({"CarStartSpeeding"}, 0, inWater=1)]), forbids)
        assert check_relation(make_trace([st({"CarStartSpeeding"}, 0, inWater=0)]), forbids)
        induces = Relation("induces", ("CollectConsent", Cmp("eq", MeasureRef("consentObtained"), Const(1))))
        assert check_relation(make_trace([st({"CollectConsent"}, 0, consentObtained=1)]), induces)
        assert not check_relation(make_trace([st({"CollectConsent"}, 0, consentObtained=0)]), induces)


def random_trace(rng, events=("A", "B"), measures=("m",), max_states=4, max_ts=8):
    n = rng.randint(0, max_states)
    stamps = sorted(rng.sample(range(max_ts + 1), n))
    states = []
    for ts in stamps:
        occurring = {e for e in events if rng.random() < 0.5}
        vals = {m: rng.randint(0, 1) for m in measures}
        states.append((occurring, vals, ts))
    return make_trace(states)


def all_relation_instances():
    pa = Cmp("eq", MeasureRef("m"), Const(1))
    pb = Cmp("ge", MeasureRef("m"), Const(1))
    return [
        Relation("hypernym", ("A", "B")),
        Relation("isContradictoryWith", ("A", "B")),
        Relation("happensBefore", ("A", "B")),
        Relation("eventEqual", ("A", "B")),
        Relation("imply", (pa, pb)),
        Relation("mutuallyExclusive", (pa, pb)),
        Relation("opposite", (pa, Not(pb))),
        Relation("measureEqual", (pa, pb)),
        Relation("forbids", (pa, "A")),
        Relation("induces", ("A", pa)),
        Relation("whenThenUntil", ("A", pa, "B")),
        Relation("whenThenFor", ("A", pa, Const(3))),
    ]


class TestRelationProperties:
    def test_complement_property(self):
        rng = random.Random(11)
        rels = all_relation_instances()
        for _ in range(200):
            trace = random_trace(rng)
            for rel in rels:
                assert check_relation(trace, rel) != check_relation(trace, rel.negated())

    def test_event_equal_is_mutual_hypernym(self):
        rng = random.Random(12)
        for _ in range(300):
            trace = random_trace(rng)
            eq = check_relation(trace, Relation("eventEqual", ("A", "B")))
            hyp_ab = check_relation(trace, Relation("hypernym", ("A", "B")))
            hyp_ba = check_relation(trace, Relation("hypernym", ("B", "A")))
            assert eq == (hyp_ab and hyp_ba)

    def test_opposite_implies_mutually_exclusive(self):
        rng = random.Random(13)
        pa = Cmp("eq", MeasureRef("m"), Const(1))
        pb = Cmp("eq", MeasureRef("n"), Const(1))
        for _ in range(300):
            trace = random_trace(rng, measures=("m", "n"))
            if check_relation(trace, Relation("opposite", (pa, pb))):
                assert check_relation(trace, Relation("mutuallyExclusive", (pa, pb)))

    def test_opposite_is_exactly_one_holds(self):
        pa = Cmp("eq", MeasureRef("m"), Const(1))
        pb = Cmp("eq", MeasureRef("n"), Const(1))
        rng = random.Random(14)
        for _ in range(200):
            trace = random_trace(rng, measures=("m", "n"))
            expected = all(
                eval_prop(pa, s.valuation) ^ eval_prop(pb, s.valuation) for s in trace.states
            )
            assert check_relation(trace, Relation("opposite", (pa, pb))) == expected


class TestCanonicalProp:
    def test_double_negation_cancels(self):
        assert canonical_prop(Not(Not(M1))) == canonical_prop(M1)

    def test_commutativity_normalized(self):
        p = Cmp("eq", MeasureRef("a"), Const(1))
        q = Cmp("eq", MeasureRef("b"), Const(1))
        assert canonical_prop(And(p, q)) == canonical_prop(And(q, p))
        assert canonical_prop(Or(p, Or(q, p))) == canonical_prop(Or(q, p))

    def test_de_morgan(self):
        p = Cmp("eq", MeasureRef("a"), Const(1))
        q = Cmp("eq", MeasureRef("b"), Const(1))
        assert canonical_prop(Not(And(p, q))) == canonical_prop(Or(Not(p), Not(q)))

    def test_canonicalization_preserves_semantics(self):
        rng = random.Random(15)

        def random_prop(depth):
            roll = rng.random()
            if depth == 0 or roll < 0.3:
                return Cmp(
                    rng.choice(["eq", "ge"]),
                    MeasureRef(rng.choice("ab")),
                    Const(rng.randint(0, 1)),
                )
            if roll < 0.5:
                return Not(random_prop(depth - 1))
            ctor = And if roll < 0.75 else Or
            return ctor(random_prop(depth - 1), random_prop(depth - 1))

        for _ in range(400):
            p = random_prop(3)
            c = canonical_prop(p)
            for a in (0, 1):
                for b in (0, 1):
                    val = {"a": a, "b": b}
                    assert eval_prop(p, val) == eval_prop(c, val)
