"""Typed first-order language and the weighted-rule DSL.

Two small line-oriented grammars live here: language declarations
(``type/const/pred`` lines) and weighted definite clauses
(``W head :- b1,...,bn.``). Both are parsed into immutable structures with
stable ordering, so rule indices are reproducible across runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

BLEND_HEAD_ALIASES = {"neural_agent": "neural", "logic_agent": "logic"}
PRED_KINDS = ("state", "action", "blend")

# weights live in [0,1] on disk but are trained as unconstrained logits;
# parsed values are clamped so logit() is finite even for 0.0 / 1.0 files
WEIGHT_EPS = 1e-6


class ParseError(ValueError):
    """Malformed language or rule source. Carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Predicate:
    name: str
    arg_types: tuple[str, ...]
    kind: str  # state | action | blend

    @property
    def arity(self) -> int:
        return len(self.arg_types)

    def __str__(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class Constant:
    name: str
    type: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Constant | Variable


@dataclass(frozen=True)
class Atom:
    pred: Predicate
    args: tuple[Term, ...]

    def __post_init__(self):
        if len(self.args) != self.pred.arity:
            raise ValueError(
                f"{self.pred.name} expects {self.pred.arity} args, got {len(self.args)}"
            )
        for arg, want in zip(self.args, self.pred.arg_types):
            if isinstance(arg, Constant) and arg.type != want:
                raise ValueError(
                    f"{self.pred.name}: constant {arg.name}:{arg.type} where {want} expected"
                )

    @property
    def is_ground(self) -> bool:
        return all(isinstance(a, Constant) for a in self.args)

    def variables(self) -> list[Variable]:
        return [a for a in self.args if isinstance(a, Variable)]

    def __str__(self) -> str:
        return f"{self.pred.name}({','.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Rule:
    """Weighted definite clause. ``weight`` is the initial value in [0,1]."""

    weight: float
    head: Atom
    body: tuple[Atom, ...]

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"rule weight {self.weight} outside [0,1]")
        if not self.body:
            raise ValueError("rule body must be non-empty")
        if self.head.pred.kind not in ("action", "blend"):
            raise ValueError(f"rule head {self.head.pred.name} must be action- or blend-kind")
        for b in self.body:
            if b.pred.kind != "state":
                raise ValueError(f"body atom {b.pred.name} must be state-kind")
        body_vars = {v.name for a in self.body for v in a.variables()}
        for v in self.head.variables():
            if v.name != "X" and v.name not in body_vars:
                raise ValueError(f"head variable {v.name} not bound in body")

    def __str__(self) -> str:
        return format_rule(self)


@dataclass(frozen=True)
class Language:
    """Declared types, constants and predicates, in declaration order."""

    types: tuple[str, ...]
    constants: tuple[Constant, ...]
    predicates: tuple[Predicate, ...]
    _pred_by_name: dict = field(default_factory=dict, repr=False, compare=False)
    _const_by_name: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._pred_by_name.update({p.name: p for p in self.predicates})
        self._const_by_name.update({c.name: c for c in self.constants})

    def predicate(self, name: str) -> Predicate | None:
        return self._pred_by_name.get(name)

    def constant(self, name: str) -> Constant | None:
        return self._const_by_name.get(name)

    def constants_of_type(self, type_name: str) -> list[Constant]:
        return [c for c in self.constants if c.type == type_name]

    def predicates_of_kind(self, kind: str) -> list[Predicate]:
        return [p for p in self.predicates if p.kind == kind]

    @property
    def action_names(self) -> list[str]:
        return [p.name for p in self.predicates_of_kind("action")]


@dataclass(frozen=True)
class RuleSet:
    language: Language
    rules: tuple[Rule, ...]

    def __len__(self) -> int:
        return len(self.rules)


_LANG_LINE = re.compile(
    r"""^(?:
        type\s+(?P<type>[a-z_][\w]*)
      | const\s+(?P<cname>[a-z_][\w]*)\s*:\s*(?P<ctype>[a-z_][\w]*)
      | pred\s+(?P<pname>[a-z_][\w]*)\s*/\s*(?P<arity>\d+)\s+(?P<kind>\w+)\s*
        \(\s*(?P<sig>[a-z_][\w]*(?:\s*,\s*[a-z_][\w]*)*)\s*\)
    )\s*\.$""",
    re.VERBOSE,
)


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_language(text: str) -> Language:
    """Parse ``type/const/pred`` declarations into a Language."""
    types: list[str] = []
    constants: list[Constant] = []
    predicates: list[Predicate] = []
    seen_types, seen_consts, seen_preds = set(), set(), set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        # a single physical line may carry several declarations
        for stmt in filter(None, (s.strip() for s in _split_statements(line, lineno))):
            m = _LANG_LINE.match(stmt + ".")
            if not m:
                raise ParseError(f"malformed declaration: {stmt!r}", lineno)
            if m.group("type"):
                name = m.group("type")
                if name in seen_types:
                    raise ParseError(f"duplicate type {name}", lineno)
                seen_types.add(name)
                types.append(name)
            elif m.group("cname"):
                cname, ctype = m.group("cname"), m.group("ctype")
                if cname in seen_consts:
                    raise ParseError(f"duplicate constant {cname}", lineno)
                if ctype not in seen_types:
                    raise ParseError(f"unknown type {ctype} for constant {cname}", lineno)
                seen_consts.add(cname)
                constants.append(Constant(cname, ctype))
            else:
                pname, kind = m.group("pname"), m.group("kind")
                sig = tuple(t.strip() for t in m.group("sig").split(","))
                if pname in seen_preds:
                    raise ParseError(f"duplicate predicate {pname}", lineno)
                if kind not in PRED_KINDS:
                    raise ParseError(f"unknown predicate kind {kind!r}", lineno)
                if int(m.group("arity")) != len(sig):
                    raise ParseError(
                        f"{pname}: declared arity {m.group('arity')} != signature size {len(sig)}",
                        lineno,
                    )
                if len(sig) < 1:
                    raise ParseError(f"{pname}: arity must be >= 1", lineno)
                for t in sig:
                    if t not in seen_types:
                        raise ParseError(f"unknown type {t} in signature of {pname}", lineno)
                if kind == "blend" and (pname not in ("neural", "logic") or len(sig) != 1):
                    raise ParseError(
                        f"blend predicates must be exactly neural/1 and logic/1, got {pname}/{len(sig)}",
                        lineno,
                    )
                seen_preds.add(pname)
                predicates.append(Predicate(pname, sig, kind))
    return Language(tuple(types), tuple(constants), tuple(predicates))


def _split_statements(line: str, lineno: int) -> list[str]:
    parts = line.split(".")
    if parts[-1].strip():
        raise ParseError("declaration missing terminating period", lineno)
    return parts[:-1]


# ---------------------------------------------------------------------------
# rule tokenizer + parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d+|\d+)(?![\w.])|(?P<ident>[A-Za-z_][\w]*)"
    r"|(?P<impl>:-)|(?P<sym>[(),.]))"
)


def _tokenize(text: str):
    tokens = []  # (kind, value, line)
    pos, line = 0, 1
    while pos < len(text):
        if text[pos] == "#":  # comment to end of line
            nl = text.find("\n", pos)
            pos = len(text) if nl < 0 else nl
            continue
        if text[pos] == "\n":
            line += 1
            pos += 1
            continue
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.start() != pos:
            raise ParseError(f"unexpected character {text[pos]!r}", line)
        if m.group("num"):
            tokens.append(("num", m.group("num"), line))
        elif m.group("ident"):
            tokens.append(("ident", m.group("ident"), line))
        elif m.group("impl"):
            tokens.append((":-", ":-", line))
        else:
            tokens.append((m.group("sym"), m.group("sym"), line))
        pos = m.end()
    return tokens


class _RuleParser:
    def __init__(self, tokens, lang: Language):
        self.toks = tokens
        self.i = 0
        self.lang = lang

    def _peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def _next(self, want=None):
        tok = self._peek()
        if tok is None:
            raise ParseError("parse error at end-of-input (missing terminating period?)")
        if want and tok[0] != want:
            raise ParseError(f"expected {want!r}, got {tok[1]!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> list[Rule]:
        rules = []
        while self._peek() is not None:
            rules.append(self._clause())
        return rules

    def _clause(self) -> Rule:
        weight = 0.5
        tok = self._peek()
        if tok[0] == "num":
            self._next()
            weight = float(tok[1])
            if not 0.0 <= weight <= 1.0:
                raise ParseError(f"rule weight {tok[1]} outside [0,1]", tok[2])
        head_tok = self._peek()
        head = self._atom()
        if head.pred.kind == "state":
            raise ParseError(
                f"head predicate {head.pred.name} is state-kind", head_tok[2]
            )
        self._next(":-")
        body = [self._atom()]
        while self._peek() and self._peek()[0] == ",":
            self._next(",")
            body.append(self._atom())
        self._next(".")
        try:
            return Rule(min(max(weight, WEIGHT_EPS), 1.0 - WEIGHT_EPS), head, tuple(body))
        except ValueError as exc:
            raise ParseError(str(exc), head_tok[2]) from exc

    def _atom(self) -> Atom:
        name_tok = self._next("ident")
        name = BLEND_HEAD_ALIASES.get(name_tok[1], name_tok[1])
        pred = self.lang.predicate(name)
        if pred is None:
            raise ParseError(f"undeclared predicate {name_tok[1]}", name_tok[2])
        self._next("(")
        args = [self._term(pred, 0)]
        while self._peek() and self._peek()[0] == ",":
            self._next(",")
            args.append(self._term(pred, len(args)))
        self._next(")")
        try:
            return Atom(pred, tuple(args))
        except ValueError as exc:
            raise ParseError(str(exc), name_tok[2]) from exc

    def _term(self, pred: Predicate, argpos: int) -> Term:
        tok = self._next("ident")
        nxt = self._peek()
        if nxt is not None and nxt[0] == "(":
            raise ParseError(
                f"function symbols are not supported: {tok[1]}(...)", tok[2]
            )
        if tok[1][0].isupper():
            return Variable(tok[1])
        const = self.lang.constant(tok[1])
        if const is None:
            raise ParseError(f"unknown constant {tok[1]}", tok[2])
        return const


def parse_rules(text: str, lang: Language) -> RuleSet:
    """Parse weighted clauses ``W head :- b1,...,bn.`` against ``lang``."""
    return RuleSet(lang, tuple(_RuleParser(_tokenize(text), lang).parse()))


def format_rule(rule: Rule) -> str:
    """Serialize a rule; weights printed at 4 decimal places."""
    body = ",".join(str(b) for b in rule.body)
    return f"{rule.weight:.4f} {rule.head}:-{body}."


def format_rules(ruleset: RuleSet) -> str:
    return "\n".join(format_rule(r) for r in ruleset.rules) + "\n"


def with_weights(ruleset: RuleSet, weights) -> RuleSet:
    """Copy of ``ruleset`` with rule weights replaced (e.g. trained values)."""
    if len(weights) != len(ruleset.rules):
        raise ValueError("weight vector size mismatch")
    rules = tuple(
        Rule(min(max(float(w), 0.0), 1.0), r.head, r.body)
        for w, r in zip(weights, ruleset.rules)
    )
    return RuleSet(ruleset.language, rules)
