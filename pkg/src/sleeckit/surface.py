"""Surface document parser and normalizer.

Reads ``.sleec`` documents (definition, rule, relation, concern and purpose
blocks), resolves declared symbols, and rewrites rules with ``unless``
defeaters and ``otherwise`` fallbacks into the normalized rule form used by
the evaluator and solver.  Spans are byte ranges into the original document
so diagnoses can highlight sources.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .model import (
    Add,
    And,
    BoolLit,
    Cmp,
    CondObligation,
    Const,
    FALSE,
    Fact,
    MeasureRef,
    Neg,
    NormRule,
    Not,
    Obligation,
    ObligationChain,
    Or,
    Prop,
    Relation,
    Scale,
    Signature,
    Term,
    TRUE,
)

KEYWORDS = {
    "when", "then", "within", "unless", "otherwise", "not", "and", "or",
    "exists", "while", "until", "for", "true", "false",
    "event", "measure", "constant", "boolean", "numeric",
    "def_start", "def_end", "rule_start", "rule_end",
    "relation_start", "relation_end",
    "concern_start", "concern_end", "purpose_start", "purpose_end",
    "seconds", "second", "minutes", "minute", "hours", "hour", "days", "day",
}

EVENT_REL_KEYWORDS = {
    "hypernym": "hypernym",
    "isContradictoryWith": "isContradictoryWith",
    "happensBefore": "happensBefore",
}
MEASURE_REL_KEYWORDS = {
    "imply": "imply",
    "mutuallyExclusive": "mutuallyExclusive",
    "oppositeTo": "opposite",
}

UNIT_SECONDS = {
    "second": 1, "seconds": 1,
    "minute": 60, "minutes": 60,
    "hour": 3600, "hours": 3600,
    "day": 86400, "days": 86400,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>=>|>=|<=|<>|[()=<>+\-*:,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num" | "ident" | "keyword" | "sym" | "eof"
    value: str
    start: int  # byte offset
    end: int
    line: int
    col: int


class ParseError(Exception):
    def __init__(self, message: str, token: Token | None = None, expected: set[str] | None = None):
        self.token = token
        self.expected = frozenset(expected or ())
        self.line = token.line if token else 0
        self.col = token.col if token else 0
        self.span = (token.start, token.end) if token else (0, 0)
        detail = f" at line {self.line}, column {self.col}" if token else ""
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(message + detail)


class UndeclaredSymbolError(ParseError):
    pass


class DocumentParseError(Exception):
    """Carries every error collected during a parse (one per rule at most)."""

    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


class NormalizeError(Exception):
    pass


def tokenize(text: str) -> list[Token]:
    # spans are byte offsets; precompute char -> byte prefix sums
    byte_of = [0]
    for ch in text:
        byte_of.append(byte_of[-1] + len(ch.encode("utf-8")))
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            tok = Token("sym", text[pos], byte_of[pos], byte_of[pos + 1], line, pos - line_start + 1)
            raise ParseError(f"unexpected character {text[pos]!r}", tok)
        newlines = m.group(0).count("\n")
        if m.lastgroup not in ("ws", "comment"):
            value = m.group(0)
            kind = m.lastgroup
            if kind == "ident" and value in KEYWORDS:
                kind = "keyword"
            tokens.append(
                Token(kind, value, byte_of[m.start()], byte_of[m.end()], line, m.start() - line_start + 1)
            )
        if newlines:
            line += newlines
            line_start = m.start() + m.group(0).rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", byte_of[len(text)], byte_of[len(text)], line, len(text) - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Surface AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Defeater:
    condition: Prop
    response: ObligationChain | None  # None preempts the rule
    span: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass(frozen=True)
class SurfaceRule:
    id: str
    trigger_event: str
    condition: Prop
    response: ObligationChain
    defeaters: tuple[Defeater, ...]
    span: tuple[int, int] = field(compare=False, default=(0, 0))


@dataclass(frozen=True)
class SurfaceDocument:
    signature: Signature
    rules: tuple[SurfaceRule, ...]
    facts: tuple[Fact, ...]
    relations: tuple[Relation, ...]
    text: str = field(compare=False, default="")
    spans: dict = field(compare=False, default_factory=dict)  # id -> (start, end)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.events: dict[str, tuple[int, int]] = {}
        self.measures: dict[str, str] = {}
        self.constants: dict[str, int] = {}
        self.relation_spans: list[tuple[int, int]] = []

    # -- token plumbing -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, value: str) -> bool:
        return self.peek().value == value

    def accept(self, value: str) -> Token | None:
        if self.at(value):
            return self.next()
        return None

    def expect(self, value: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.value != value:
            raise ParseError(
                f"found {tok.value!r}" if tok.kind != "eof" else "unexpected end of input",
                tok,
                expected={what or value},
            )
        return self.next()

    def expect_ident(self, what: str, upper: bool | None = None) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            raise ParseError(
                f"found {tok.value!r}" if tok.kind != "eof" else "unexpected end of input",
                tok,
                expected={what},
            )
        if upper is True and not tok.value[:1].isupper():
            raise ParseError(f"{what} must start uppercase, found {tok.value!r}", tok, expected={what})
        if upper is False and tok.value[:1].isupper():
            raise ParseError(f"{what} must start lowercase, found {tok.value!r}", tok, expected={what})
        return self.next()

    # -- declarations --------------------------------------------------------

    def parse_document(self, text: str) -> SurfaceDocument:
        errors: list[ParseError] = []
        rules: list[SurfaceRule] = []
        facts: list[Fact] = []
        relations: list[Relation] = []
        spans: dict = {}
        while not self.at(""):
            tok = self.peek()
            try:
                if tok.value == "def_start":
                    self.next()
                    self._parse_definitions(errors)
                elif tok.value == "rule_start":
                    self.next()
                    self._parse_rules(rules, spans, errors)
                elif tok.value == "relation_start":
                    self.next()
                    self._parse_relations(relations, errors)
                elif tok.value in ("concern_start", "purpose_start"):
                    role = "concern" if tok.value == "concern_start" else "purpose"
                    self.next()
                    self._parse_facts(role, facts, spans, errors)
                else:
                    errors.append(ParseError(f"found {tok.value!r}", tok, expected={
                        "def_start", "rule_start", "relation_start", "concern_start", "purpose_start"}))
                    break
            except ParseError as err:
                errors.append(err)
                break
        if errors:
            raise DocumentParseError(errors)
        sig = Signature(frozenset(self.events), dict(self.measures), dict(self.constants))
        spans.update({name: span for name, span in self.events.items()})
        spans.update({f"relation:{i}": span for i, span in enumerate(self.relation_spans)})
        return SurfaceDocument(sig, tuple(rules), tuple(facts), tuple(relations), text, spans)

    def _parse_definitions(self, errors: list[ParseError]) -> None:
        while not self.accept("def_end"):
            tok = self.peek()
            if tok.value == "event":
                self.next()
                name = self.expect_ident("event name", upper=True)
                self._declare(name, errors, kind="event")
            elif tok.value == "measure":
                self.next()
                name = self.expect_ident("measure name", upper=False)
                sort = "boolean"
                if self.accept(":"):
                    sort_tok = self.peek()
                    if sort_tok.value not in ("boolean", "numeric"):
                        raise ParseError(f"found {sort_tok.value!r}", sort_tok, expected={"boolean", "numeric"})
                    sort = self.next().value
                self._declare(name, errors, kind="measure", sort=sort)
            elif tok.value == "constant":
                self.next()
                name = self.expect_ident("constant name")
                self.expect("=")
                num = self.peek()
                if num.kind != "num":
                    raise ParseError(f"found {num.value!r}", num, expected={"number"})
                self.next()
                self._declare(name, errors, kind="constant", value=int(num.value))
            elif tok.kind == "eof":
                raise ParseError("unexpected end of input", tok, expected={"def_end"})
            else:
                raise ParseError(f"found {tok.value!r}", tok, expected={"event", "measure", "constant", "def_end"})

    def _declare(self, name_tok: Token, errors: list[ParseError], kind: str, sort: str = "", value: int = 0) -> None:
        name = name_tok.value
        if name in self.events or name in self.measures or name in self.constants:
            errors.append(ParseError(f"duplicate declaration of {name!r}", name_tok))
            return
        if kind == "event":
            self.events[name] = (name_tok.start, name_tok.end)
        elif kind == "measure":
            self.measures[name] = sort
        else:
            self.constants[name] = value

    # -- rules ----------------------------------------------------------------

    def _parse_rules(self, rules: list[SurfaceRule], spans: dict, errors: list[ParseError]) -> None:
        while not self.accept("rule_end"):
            if self.peek().kind == "eof":
                errors.append(ParseError("unexpected end of input", self.peek(), expected={"rule_end"}))
                return
            try:
                rule = self._parse_rule()
                rules.append(rule)
                spans[rule.id] = rule.span
            except ParseError as err:
                errors.append(err)
                self._skip_to_next_rule()

    def _skip_to_next_rule(self) -> None:
        # first-error-per-rule recovery: skip to the next "<Id> when" or block end
        while True:
            tok = self.peek()
            if tok.kind == "eof" or tok.value == "rule_end":
                return
            if tok.kind == "ident" and self.peek(1).value == "when":
                return
            self.next()

    def _parse_rule(self) -> SurfaceRule:
        id_tok = self.expect_ident("rule identifier")
        self.expect("when")
        event_tok = self.expect_ident("trigger event", upper=True)
        condition: Prop = TRUE
        if self.accept("and"):
            condition = self._parse_prop()
        self.expect("then")
        response = self._parse_chain()
        defeaters: list[Defeater] = []
        while self.at("unless"):
            d_start = self.next()
            cond = self._parse_prop()
            alt = None
            if self.accept("then"):
                alt = self._parse_chain()
            defeaters.append(Defeater(cond, alt, (d_start.start, self.tokens[self.pos - 1].end)))
        end = self.tokens[self.pos - 1].end
        return SurfaceRule(
            id_tok.value, event_tok.value, condition, response, tuple(defeaters),
            (id_tok.start, end),
        )

    # -- obligation chains ----------------------------------------------------

    def _parse_chain(self) -> ObligationChain:
        items = [self._parse_cond_obligation()]
        while self.accept("otherwise"):
            items.append(self._parse_cond_obligation())
        try:
            return ObligationChain(tuple(items))
        except ValueError as err:
            raise ParseError(str(err), self.peek()) from None

    def _parse_cond_obligation(self) -> CondObligation:
        guard: Prop = TRUE
        if self._guard_ahead():
            guard = self._parse_prop()
            self.expect("=>")
        polarity = "positive"
        if self.at("not"):
            self.next()
            polarity = "negative"
        event = self.expect_ident("response event", upper=True)
        deadline: Term = Const(0)
        if self.accept("within"):
            deadline = self._parse_deadline()
        return CondObligation(guard, Obligation(polarity, event.value, deadline))

    def _guard_ahead(self) -> bool:
        # a chain item has an optional "<prop> =>" guard; scan for "=>" before
        # any token that must belong to the obligation or the enclosing rule
        depth = 0
        ahead = 0
        while True:
            tok = self.peek(ahead)
            if tok.kind == "eof":
                return False
            if tok.value == "(":
                depth += 1
            elif tok.value == ")":
                if depth == 0:
                    return False
                depth -= 1
            elif depth == 0:
                if tok.value == "=>":
                    return True
                if tok.value in ("within", "otherwise", "unless", "then", "while") or tok.value.endswith(
                    ("_start", "_end")
                ):
                    return False
                if tok.kind == "ident" and tok.value[:1].isupper() and ahead == 0:
                    return False
            ahead += 1

    def _parse_deadline(self) -> Term:
        term = self._parse_term()
        factor = 1
        tok = self.peek()
        if tok.value in UNIT_SECONDS:
            factor = UNIT_SECONDS[self.next().value]
        if factor != 1:
            if isinstance(term, Const):
                term = Const(term.value * factor)
            else:
                term = Scale(factor, term)
        return term

    # -- propositions and terms -------------------------------------------------

    def _parse_prop(self) -> Prop:
        left = self._parse_conj()
        while self.accept("or"):
            left = Or(left, self._parse_conj())
        return left

    def _parse_conj(self) -> Prop:
        left = self._parse_prop_atom()
        while self.accept("and"):
            left = And(left, self._parse_prop_atom())
        return left

    def _parse_prop_atom(self) -> Prop:
        tok = self.peek()
        if tok.value == "not":
            self.next()
            return Not(self._parse_prop_atom())
        if tok.value == "(":
            self.next()
            inner = self._parse_prop()
            self.expect(")")
            return inner
        if tok.value == "true":
            self.next()
            return TRUE
        if tok.value == "false":
            self.next()
            return FALSE
        start = self.pos
        term = self._parse_term()
        op_tok = self.peek()
        if op_tok.value in ("=", ">=", "<=", ">", "<"):
            self.next()
            right = self._parse_term()
            return self._comparison(op_tok.value, term, right)
        # bare measure sugar: m is shorthand for m = 1 on boolean measures
        if isinstance(term, MeasureRef):
            sort = self.measures.get(term.name)
            if sort == "numeric":
                raise ParseError(
                    f"numeric measure {term.name!r} cannot stand alone as a condition",
                    self.tokens[start],
                    expected={"comparison"},
                )
            return Cmp("eq", term, Const(1))
        raise ParseError(f"found {op_tok.value!r}", op_tok, expected={"=", ">="})

    @staticmethod
    def _comparison(op: str, left: Term, right: Term) -> Prop:
        if op == "=":
            return Cmp("eq", left, right)
        if op == ">=":
            return Cmp("ge", left, right)
        if op == "<=":
            return Cmp("ge", right, left)
        if op == ">":
            return Not(Cmp("ge", right, left))
        return Not(Cmp("ge", left, right))  # "<"

    def _parse_term(self) -> Term:
        left = self._parse_factor()
        while True:
            if self.accept("+"):
                left = Add(left, self._parse_factor())
            elif self.at("-") and self.peek(1).value != ">":
                self.next()
                left = Add(left, Neg(self._parse_factor()))
            else:
                return left

    def _parse_factor(self) -> Term:
        tok = self.peek()
        if tok.value == "-":
            self.next()
            return Neg(self._parse_factor())
        if tok.value == "(":
            self.next()
            inner = self._parse_term()
            self.expect(")")
            return inner
        if tok.kind == "num":
            self.next()
            value = int(tok.value)
            if self.accept("*"):
                return Scale(value, self._parse_factor())
            return Const(value)
        if tok.kind == "ident" and not tok.value[:1].isupper():
            self.next()
            if tok.value in self.constants:
                return Const(self.constants[tok.value])
            return MeasureRef(tok.value)
        raise ParseError(f"found {tok.value!r}", tok, expected={"term"})

    # -- relations ---------------------------------------------------------------

    def _parse_relations(self, relations: list[Relation], errors: list[ParseError]) -> None:
        while not self.accept("relation_end"):
            if self.peek().kind == "eof":
                errors.append(ParseError("unexpected end of input", self.peek(), expected={"relation_end"}))
                return
            start = self.peek().start
            try:
                relations.append(self._parse_relation())
                self.relation_spans.append((start, self.tokens[self.pos - 1].end))
            except ParseError as err:
                errors.append(err)
                while self.peek().kind != "eof" and not self.at("relation_end"):
                    self.next()

    def _parse_relation(self) -> Relation:
        if self.at("not"):
            self.next()
            self.expect("(")
            rel = self._parse_relation_body()
            self.expect(")")
            return rel.negated()
        return self._parse_relation_body()

    def _parse_relation_body(self) -> Relation:
        if self.at("when"):
            self.next()
            ea = self.expect_ident("event", upper=True).value
            self.expect("then")
            prop = self._parse_prop()
            tok = self.peek()
            if tok.value == "until":
                self.next()
                eb = self.expect_ident("event", upper=True).value
                return Relation("whenThenUntil", (ea, prop, eb), provenance="stakeholder")
            if tok.value == "for":
                self.next()
                duration = self._parse_deadline()
                return Relation("whenThenFor", (ea, prop, duration), provenance="stakeholder")
            raise ParseError(f"found {tok.value!r}", tok, expected={"until", "for"})
        first = self.peek()
        if first.kind == "ident" and first.value[:1].isupper() and self.peek(1).value != "induces" and (
            self.peek(1).value in EVENT_REL_KEYWORDS or self.peek(1).value == "equal"
        ):
            a = self.next().value
            kw = self.next().value
            b = self.expect_ident("event", upper=True).value
            kind = "eventEqual" if kw == "equal" else EVENT_REL_KEYWORDS[kw]
            return Relation(kind, (a, b), provenance="stakeholder")
        if first.kind == "ident" and first.value[:1].isupper() and self.peek(1).value == "induces":
            event = self.next().value
            self.next()
            prop = self._parse_prop()
            return Relation("induces", (event, prop), provenance="stakeholder")
        prop = self._parse_prop()
        kw_tok = self.peek()
        if kw_tok.value == "forbids":
            self.next()
            event = self.expect_ident("event", upper=True).value
            return Relation("forbids", (prop, event), provenance="stakeholder")
        if kw_tok.value in MEASURE_REL_KEYWORDS or kw_tok.value == "equal":
            kw = self.next().value
            other = self._parse_prop()
            kind = "measureEqual" if kw == "equal" else MEASURE_REL_KEYWORDS[kw]
            return Relation(kind, (prop, other), provenance="stakeholder")
        raise ParseError(
            f"found {kw_tok.value!r}", kw_tok,
            expected={"forbids", "equal", *MEASURE_REL_KEYWORDS, *EVENT_REL_KEYWORDS},
        )

    # -- facts ----------------------------------------------------------------

    def _parse_facts(self, role: str, facts: list[Fact], spans: dict, errors: list[ParseError]) -> None:
        end_kw = f"{role}_end"
        while not self.accept(end_kw):
            if self.peek().kind == "eof":
                errors.append(ParseError("unexpected end of input", self.peek(), expected={end_kw}))
                return
            try:
                fact = self._parse_fact(role)
                facts.append(fact)
                spans[fact.id] = fact.source_span
            except ParseError as err:
                errors.append(err)
                while self.peek().kind != "eof" and not self.at(end_kw):
                    self.next()

    def _parse_fact(self, role: str) -> Fact:
        id_tok = self.expect_ident("fact identifier")
        self.expect("exists")
        event = self.expect_ident("event", upper=True)
        condition: Prop = TRUE
        if self.accept("and"):
            condition = self._parse_prop()
        mode = "asserted"
        chain = ObligationChain((CondObligation(TRUE, Obligation("positive", event.value, Const(0))),))
        if self.accept("while"):
            if self.at("not") and self.peek(1).value == "(":
                self.next()
                self.expect("(")
                chain = self._parse_chain()
                self.expect(")")
                mode = "negated"
            elif self._chain_ahead():
                chain = self._parse_chain()
            else:
                extra = self._parse_prop()
                condition = extra if condition == TRUE else And(condition, extra)
        end = self.tokens[self.pos - 1].end
        return Fact(id_tok.value, event.value, condition, chain, mode, role, (id_tok.start, end))

    def _chain_ahead(self) -> bool:
        tok = self.peek()
        if tok.kind == "ident" and tok.value[:1].isupper():
            return True
        if tok.value == "not" and self.peek(1).kind == "ident" and self.peek(1).value[:1].isupper():
            return True
        return self._guard_ahead()


def parse(text: str) -> SurfaceDocument:
    """Parse a surface document; raises DocumentParseError with every
    collected error (at most one per rule) on failure."""
    parser = _Parser(tokenize(text))
    doc = parser.parse_document(text)
    errors = _resolve_symbols(doc)
    if errors:
        raise DocumentParseError(errors)
    return doc


def _fragment_parser(signature: Signature) -> _Parser:
    parser = _Parser([])
    parser.measures = dict(signature.measures)
    parser.constants = dict(signature.constants)
    parser.events = {name: (0, 0) for name in signature.events}
    return parser


def parse_prop(text: str, signature: Signature) -> Prop:
    """Parse a standalone proposition against a signature (serialization)."""
    parser = _fragment_parser(signature)
    parser.tokens = tokenize(text)
    prop = parser._parse_prop()
    if parser.peek().kind != "eof":
        raise ParseError(f"trailing input after proposition: {parser.peek().value!r}", parser.peek())
    return prop


def parse_term(text: str, signature: Signature) -> Term:
    """Parse a standalone term against a signature (serialization)."""
    parser = _fragment_parser(signature)
    parser.tokens = tokenize(text)
    term = parser._parse_term()
    if parser.peek().kind != "eof":
        raise ParseError(f"trailing input after term: {parser.peek().value!r}", parser.peek())
    return term


def _resolve_symbols(doc: SurfaceDocument) -> list[ParseError]:
    sig = doc.signature
    errors: list[ParseError] = []
    seen_ids: set[str] = set()

    def check_event(name: str, span):
        if name not in sig.events:
            errors.append(_undeclared(name, span))

    def check_prop(prop: Prop, span):
        from .model import prop_measures

        for m in prop_measures(prop):
            if m not in sig.measures:
                errors.append(_undeclared(m, span))

    def check_chain(chain: ObligationChain, span):
        from .model import term_measures

        for item in chain.items:
            check_prop(item.guard, span)
            check_event(item.obligation.event, span)
            for m in term_measures(item.obligation.deadline):
                if m not in sig.measures:
                    errors.append(_undeclared(m, span))

    for rule in doc.rules:
        if rule.id in seen_ids:
            errors.append(ParseError(f"duplicate rule id {rule.id!r}", None))
        seen_ids.add(rule.id)
        check_event(rule.trigger_event, rule.span)
        check_prop(rule.condition, rule.span)
        check_chain(rule.response, rule.span)
        for d in rule.defeaters:
            check_prop(d.condition, rule.span)
            if d.response is not None:
                check_chain(d.response, rule.span)
    for fact in doc.facts:
        if fact.id in seen_ids:
            errors.append(ParseError(f"duplicate fact id {fact.id!r}", None))
        seen_ids.add(fact.id)
        check_event(fact.trigger_event, fact.source_span)
        check_prop(fact.trigger_cond, fact.source_span)
        check_chain(fact.chain, fact.source_span)
    for rel in doc.relations:
        for arg in rel.args:
            if isinstance(arg, str):
                check_event(arg, None)
            elif isinstance(arg, Prop):
                check_prop(arg, None)
    return errors


def _undeclared(name: str, span) -> UndeclaredSymbolError:
    err = UndeclaredSymbolError(f"undeclared symbol {name!r}")
    if span:
        err.span = span
    return err


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def expansion_branches(rule: SurfaceRule, preempted_negates: bool = False):
    """Branch conditions and chains for a surface rule.

    Later ``unless`` clauses override earlier ones, so the branch for
    defeater k is guarded by d_k and the negation of every later defeater;
    the base response requires every defeater to be false.  Returns a list of
    (condition, chain-or-None); None means the branch imposes no obligation.
    """
    defeaters = rule.defeaters
    branches: list[tuple[Prop, ObligationChain | None]] = []
    base_parts = [rule.condition] + [Not(d.condition) for d in defeaters]
    branches.append((_conjoin(base_parts), rule.response))
    for k, defeater in enumerate(defeaters):
        parts = [rule.condition, defeater.condition]
        parts += [Not(d.condition) for d in defeaters[k + 1:]]
        response = defeater.response
        if response is None and preempted_negates:
            head = rule.response.items[0].obligation
            flipped = "negative" if head.polarity == "positive" else "positive"
            response = ObligationChain((CondObligation(TRUE, Obligation(flipped, head.event, head.deadline)),))
        branches.append((_conjoin(parts), response))
    return branches


def _conjoin(parts: list[Prop]) -> Prop:
    parts = [p for p in parts if p != TRUE]
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def normalize(doc: SurfaceDocument, preempted_negates: bool = False) -> tuple[list[NormRule], list[Fact]]:
    """Expand defeaters into normalized rules with mutually exclusive trigger
    conditions.  Facts pass through unchanged."""
    rules: list[NormRule] = []
    for rule in doc.rules:
        for idx, (cond, chain) in enumerate(expansion_branches(rule, preempted_negates)):
            if chain is None:
                continue
            _check_deadlines(chain, rule.id)
            rule_id = rule.id if idx == 0 else f"{rule.id}_u{idx}"
            rules.append(NormRule(rule_id, rule.trigger_event, cond, chain, rule.span))
    return rules, list(doc.facts)


def _check_deadlines(chain: ObligationChain, rule_id: str) -> None:
    for item in chain.items:
        deadline = item.obligation.deadline
        if isinstance(deadline, Const) and deadline.value < 0:
            raise NormalizeError(f"rule {rule_id!r}: negative constant deadline")
        if isinstance(deadline, Neg) and isinstance(deadline.term, Const) and deadline.term.value > 0:
            raise NormalizeError(f"rule {rule_id!r}: negative constant deadline")


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_term(term: Term) -> str:
    if isinstance(term, Const):
        return str(term.value)
    if isinstance(term, MeasureRef):
        return term.name
    if isinstance(term, Neg):
        return f"- {_term_atom(term.term)}"
    if isinstance(term, Add):
        if isinstance(term.right, Neg):
            return f"{render_term(term.left)} - {_term_atom(term.right.term)}"
        return f"{render_term(term.left)} + {render_term(term.right)}"
    if isinstance(term, Scale):
        return f"{term.factor} * {_term_atom(term.term)}"
    raise TypeError(f"not a term: {term!r}")


def _term_atom(term: Term) -> str:
    text = render_term(term)
    if isinstance(term, (Add, Neg)):
        return f"({text})"
    return text


_BARE_ONE = Const(1)


def render_prop(prop: Prop, measures: dict[str, str] | None = None) -> str:
    return _render_prop(prop, 0, measures or {})


def _render_prop(prop: Prop, level: int, measures: dict[str, str]) -> str:
    # level: 0 = or, 1 = and, 2 = atom
    if isinstance(prop, BoolLit):
        return "true" if prop.value else "false"
    if isinstance(prop, Cmp):
        if (
            prop.op == "eq"
            and isinstance(prop.left, MeasureRef)
            and prop.right == _BARE_ONE
            and measures.get(prop.left.name, "boolean") == "boolean"
        ):
            return prop.left.name
        op = "=" if prop.op == "eq" else ">="
        return f"{render_term(prop.left)} {op} {render_term(prop.right)}"
    if isinstance(prop, Not):
        return f"not {_render_prop(prop.prop, 2, measures)}"
    if isinstance(prop, And):
        text = f"{_render_prop(prop.left, 1, measures)} and {_render_prop(prop.right, 1, measures)}"
        return f"({text})" if level > 1 else text
    if isinstance(prop, Or):
        text = f"{_render_prop(prop.left, 0, measures)} or {_render_prop(prop.right, 0, measures)}"
        return f"({text})" if level > 0 else text
    raise TypeError(f"not a proposition: {prop!r}")


def render_deadline(term: Term) -> str:
    if isinstance(term, Const):
        if term.value == 0:
            return ""
        for unit, factor in (("days", 86400), ("hours", 3600), ("minutes", 60), ("seconds", 1)):
            if term.value % factor == 0:
                count = term.value // factor
                name = unit if count != 1 else unit[:-1]
                return f" within {count} {name}"
    if isinstance(term, Scale) and term.factor in (60, 3600, 86400):
        unit = {60: "minutes", 3600: "hours", 86400: "days"}[term.factor]
        return f" within {_term_atom(term.term)} {unit}"
    return f" within {render_term(term)} seconds"


def render_chain(chain: ObligationChain, measures: dict[str, str] | None = None) -> str:
    measures = measures or {}
    parts = []
    for item in chain.items:
        text = ""
        if item.guard != TRUE:
            text += f"{_render_prop(item.guard, 2, measures)} => "
        if item.obligation.polarity == "negative":
            text += "not "
        text += item.obligation.event
        text += render_deadline(item.obligation.deadline)
        parts.append(text)
    return " otherwise ".join(parts)


def render_rule(rule: NormRule, measures: dict[str, str] | None = None) -> str:
    measures = measures or {}
    cond = ""
    if rule.trigger_cond != TRUE:
        cond = f" and {_render_prop(rule.trigger_cond, 1, measures)}"
    return f"{rule.id} when {rule.trigger_event}{cond} then {render_chain(rule.chain, measures)}"


def render_fact(fact: Fact, measures: dict[str, str] | None = None) -> str:
    measures = measures or {}
    cond = ""
    if fact.trigger_cond != TRUE:
        cond = f" and {_render_prop(fact.trigger_cond, 1, measures)}"
    trivial = ObligationChain(
        (CondObligation(TRUE, Obligation("positive", fact.trigger_event, Const(0))),)
    )
    if fact.mode == "asserted" and fact.chain == trivial:
        return f"{fact.id} exists {fact.trigger_event}{cond}"
    body = render_chain(fact.chain, measures)
    if fact.mode == "negated":
        return f"{fact.id} exists {fact.trigger_event}{cond} while not ({body})"
    return f"{fact.id} exists {fact.trigger_event}{cond} while {body}"


def render_relation(rel: Relation, measures: dict[str, str] | None = None) -> str:
    measures = measures or {}
    kind = rel.kind
    if kind in ("hypernym", "isContradictoryWith", "happensBefore", "eventEqual"):
        kw = "equal" if kind == "eventEqual" else kind
        body = f"{rel.args[0]} {kw} {rel.args[1]}"
    elif kind in ("imply", "mutuallyExclusive", "opposite", "measureEqual"):
        kw = {"opposite": "oppositeTo", "measureEqual": "equal"}.get(kind, kind)
        body = f"{_render_prop(rel.args[0], 2, measures)} {kw} {_render_prop(rel.args[1], 2, measures)}"
    elif kind == "forbids":
        body = f"{_render_prop(rel.args[0], 2, measures)} forbids {rel.args[1]}"
    elif kind == "induces":
        body = f"{rel.args[0]} induces {_render_prop(rel.args[1], 2, measures)}"
    elif kind == "whenThenUntil":
        body = f"when {rel.args[0]} then {_render_prop(rel.args[1], 2, measures)} until {rel.args[2]}"
    else:  # whenThenFor
        duration = render_deadline(rel.args[2]) or " within 0 seconds"
        body = f"when {rel.args[0]} then {_render_prop(rel.args[1], 2, measures)}{duration.replace(' within', ' for', 1)}"
    if rel.sign == "negative":
        return f"not ({body})"
    return body


def render_document(
    signature: Signature,
    rules: list[NormRule] | tuple[NormRule, ...] = (),
    facts: list[Fact] | tuple[Fact, ...] = (),
    relations: list[Relation] | tuple[Relation, ...] = (),
) -> str:
    """Canonical normalized text; parse(render(x)) is structurally x."""
    measures = dict(signature.measures)
    lines: list[str] = []
    if signature.events or signature.measures or signature.constants:
        lines.append("def_start")
        for name in sorted(signature.events):
            lines.append(f"  event {name}")
        for name in sorted(signature.measures):
            lines.append(f"  measure {name} : {signature.measures[name]}")
        for name in sorted(signature.constants):
            lines.append(f"  constant {name} = {signature.constants[name]}")
        lines.append("def_end")
    if rules:
        lines.append("rule_start")
        for rule in rules:
            lines.append(f"  {render_rule(rule, measures)}")
        lines.append("rule_end")
    if relations:
        lines.append("relation_start")
        for rel in relations:
            lines.append(f"  {render_relation(rel, measures)}")
        lines.append("relation_end")
    concerns = [f for f in facts if f.role == "concern"]
    others = [f for f in facts if f.role != "concern"]
    if concerns:
        lines.append("concern_start")
        for fact in concerns:
            lines.append(f"  {render_fact(fact, measures)}")
        lines.append("concern_end")
    if others:
        lines.append("purpose_start")
        for fact in others:
            lines.append(f"  {render_fact(fact, measures)}")
        lines.append("purpose_end")
    return "\n".join(lines) + ("\n" if lines else "")
