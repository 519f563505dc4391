"""Parser for the PDDL 2.1 subset used by the engine.

Supported: typed objects, predicates, negative preconditions, and
durative actions with fixed numeric durations.  Anything outside that
subset (numeric fluents, continuous effects, duration inequalities,
ADL connectives, instantaneous actions) is rejected with an
UnsupportedPddlError naming the construct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


class PddlError(Exception):
    """Base class for all PDDL front-end errors."""


class PddlSyntaxError(PddlError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class UnsupportedPddlError(PddlError):
    def __init__(self, feature: str, line: int = 0):
        loc = f"line {line}: " if line else ""
        super().__init__(f"{loc}unsupported PDDL construct: {feature}")
        self.feature = feature


class PddlValidationError(PddlError):
    """Well-formed input that violates a semantic rule (unknown object etc.)."""


SUPPORTED_REQUIREMENTS = {
    "strips",
    "typing",
    "negative-preconditions",
    "durative-actions",
}


# ---------------------------------------------------------------------------
# tokenizer

@dataclass
class Token:
    kind: str  # '(' | ')' | 'id'
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            tokens.append(Token(ch, ch, line, col))
            i += 1
            col += 1
            continue
        j = i
        while j < n and text[j] not in " \t\r\n();":
            j += 1
        tokens.append(Token("id", text[i:j].lower(), line, col))
        col += j - i
        i = j
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# AST types

@dataclass(frozen=True)
class Literal:
    """A (possibly negated) predicate application over names or variables."""

    pred: str
    args: tuple[str, ...]
    positive: bool = True

    def negate(self) -> "Literal":
        return Literal(self.pred, self.args, not self.positive)

    def __str__(self) -> str:
        inner = f"({self.pred}{''.join(' ' + a for a in self.args)})"
        return inner if self.positive else f"(not {inner})"


@dataclass(frozen=True)
class Predicate:
    name: str
    params: tuple[tuple[str, str], ...]  # (variable, type)


@dataclass(frozen=True)
class ActionSchema:
    """A durative action schema with a constant duration."""

    name: str
    params: tuple[tuple[str, str], ...]  # (variable, type)
    duration: Fraction
    cond_start: tuple[Literal, ...]
    cond_overall: tuple[Literal, ...]
    cond_end: tuple[Literal, ...]
    eff_start: tuple[Literal, ...]  # positive = add, negative = delete
    eff_end: tuple[Literal, ...]


@dataclass(frozen=True)
class DomainAst:
    name: str
    requirements: tuple[str, ...]
    types: dict[str, str]  # type -> parent (root types map to "object")
    predicates: tuple[Predicate, ...]
    actions: tuple[ActionSchema, ...]


@dataclass(frozen=True)
class ProblemAst:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]  # (object, type)
    init: tuple[Literal, ...]  # ground positive atoms
    goal: tuple[Literal, ...]  # ground literals (conjunction)


# ---------------------------------------------------------------------------
# s-expression layer

SExpr = "str | list"


def _read_sexprs(tokens: list[Token]) -> list:
    pos = 0

    def parse_one():
        nonlocal pos
        tok = tokens[pos]
        if tok.kind == "(":
            pos += 1
            items = []
            start = tok
            while tokens[pos].kind != ")":
                if tokens[pos].kind == "eof":
                    raise PddlSyntaxError("unbalanced '(': expected ')'", start.line, start.col)
                items.append(parse_one())
            pos += 1
            return _Tagged(items, start.line, start.col)
        if tok.kind == ")":
            raise PddlSyntaxError("unexpected ')'", tok.line, tok.col)
        pos += 1
        return _Atom(tok.value, tok.line, tok.col)

    out = []
    while tokens[pos].kind != "eof":
        out.append(parse_one())
    return out


class _Atom(str):
    def __new__(cls, value, line, col):
        obj = super().__new__(cls, value)
        obj.line = line
        obj.col = col
        return obj


class _Tagged(list):
    def __init__(self, items, line, col):
        super().__init__(items)
        self.line = line
        self.col = col


def _loc(node) -> tuple[int, int]:
    return getattr(node, "line", 0), getattr(node, "col", 0)


def _expect_list(node, what: str) -> list:
    if not isinstance(node, list):
        line, col = _loc(node)
        raise PddlSyntaxError(f"expected {what}, got '{node}'", line, col)
    return node


def _expect_name(node, what: str) -> str:
    if not isinstance(node, str):
        line, col = _loc(node)
        raise PddlSyntaxError(f"expected {what}", line, col)
    return str(node)


# ---------------------------------------------------------------------------
# shared pieces

def _parse_typed_list(items: list, *, variables: bool) -> list[tuple[str, str]]:
    """Parse `a b - t c d - u e` into [(name, type)] with default type object."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        tok = items[i]
        name = _expect_name(tok, "a name")
        if name == "-":
            if i + 1 >= len(items):
                line, col = _loc(tok)
                raise PddlSyntaxError("dangling '-' in typed list", line, col)
            typ = _expect_name(items[i + 1], "a type name")
            for p in pending:
                out.append((p, typ))
            pending = []
            i += 2
            continue
        if variables and not name.startswith("?"):
            line, col = _loc(tok)
            raise PddlSyntaxError(f"expected a ?variable, got '{name}'", line, col)
        pending.append(name)
        i += 1
    for p in pending:
        out.append((p, "object"))
    return out


def _parse_literal(node) -> Literal:
    lst = _expect_list(node, "a literal")
    if not lst:
        line, col = _loc(node)
        raise PddlSyntaxError("empty literal", line, col)
    head = _expect_name(lst[0], "a predicate name")
    if head == "not":
        if len(lst) != 2:
            line, col = _loc(node)
            raise PddlSyntaxError("(not ...) takes exactly one literal", line, col)
        inner = _parse_literal(lst[1])
        if not inner.positive:
            line, col = _loc(node)
            raise PddlSyntaxError("double negation", line, col)
        return inner.negate()
    if head in ("and", "or", "imply", "when", "forall", "exists"):
        line, col = _loc(node)
        raise UnsupportedPddlError(f"'{head}' inside a literal position", line)
    args = tuple(_expect_name(a, "an argument") for a in lst[1:])
    return Literal(head, args)


def _flatten_and(node) -> list:
    """Return the conjuncts of `(and x y ...)`, or [node] for a bare form."""
    lst = _expect_list(node, "a formula")
    if lst and isinstance(lst[0], str) and str(lst[0]) == "and":
        return list(lst[1:])
    return [lst]


# ---------------------------------------------------------------------------
# domain parsing

def parse_domain(text: str) -> DomainAst:
    """Parse a PDDL domain document restricted to the supported subset."""
    forms = _read_sexprs(tokenize(text))
    if len(forms) != 1:
        raise PddlSyntaxError("expected a single (define ...) form", 1, 1)
    top = _expect_list(forms[0], "(define ...)")
    if not top or str(top[0]) != "define":
        line, col = _loc(forms[0])
        raise PddlSyntaxError("expected (define (domain ...) ...)", line, col)
    head = _expect_list(top[1], "(domain name)")
    if len(head) != 2 or str(head[0]) != "domain":
        line, col = _loc(top[1])
        raise PddlSyntaxError("expected (domain <name>)", line, col)
    name = _expect_name(head[1], "domain name")

    requirements: list[str] = []
    types: dict[str, str] = {}
    predicates: list[Predicate] = []
    actions: list[ActionSchema] = []

    for section in top[2:]:
        sec = _expect_list(section, "a domain section")
        if not sec:
            continue
        key = _expect_name(sec[0], "a section keyword")
        if key == ":requirements":
            for req in sec[1:]:
                rname = _expect_name(req, "a requirement").lstrip(":")
                if rname not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedPddlError(f":{rname}", _loc(req)[0])
                requirements.append(rname)
        elif key == ":types":
            for tname, parent in _parse_typed_list(sec[1:], variables=False):
                types[tname] = parent
            for parent in list(types.values()):
                if parent != "object":
                    types.setdefault(parent, "object")
        elif key == ":predicates":
            for p in sec[1:]:
                plist = _expect_list(p, "a predicate declaration")
                pname = _expect_name(plist[0], "a predicate name")
                params = tuple(_parse_typed_list(plist[1:], variables=True))
                predicates.append(Predicate(pname, params))
        elif key == ":durative-action":
            actions.append(_parse_durative_action(sec))
        elif key == ":action":
            raise UnsupportedPddlError("instantaneous :action (only :durative-action is supported)", _loc(sec)[0])
        elif key in (":functions", ":constants", ":derived"):
            raise UnsupportedPddlError(key, _loc(sec)[0])
        else:
            raise PddlSyntaxError(f"unknown domain section '{key}'", *_loc(sec))

    ast = DomainAst(name, tuple(requirements), types, tuple(predicates), tuple(actions))
    _validate_domain(ast)
    return ast


def _parse_duration(node) -> Fraction:
    lst = _expect_list(node, "a duration constraint")
    line, col = _loc(node)
    if len(lst) != 3 or str(lst[0]) != "=" or str(lst[1]) != "?duration":
        head = str(lst[0]) if lst else "()"
        if head in ("<=", ">=", "<", ">", "at", "and"):
            raise UnsupportedPddlError("duration-inequalities", line)
        raise PddlSyntaxError("expected (= ?duration <number>)", line, col)
    value = _expect_name(lst[2], "a duration value")
    try:
        dur = Fraction(value)
    except ValueError:
        raise UnsupportedPddlError(f"non-constant duration expression '{value}'", line) from None
    if dur <= 0:
        raise PddlValidationError(f"line {line}: duration must be positive, got {value}")
    return dur


def _parse_durative_action(sec: list) -> ActionSchema:
    line, _ = _loc(sec)
    name = _expect_name(sec[1], "an action name")
    fields = {}
    i = 2
    while i < len(sec):
        key = _expect_name(sec[i], "an action keyword")
        if i + 1 >= len(sec):
            raise PddlSyntaxError(f"missing value for {key}", *_loc(sec[i]))
        fields[key] = sec[i + 1]
        i += 2

    params = tuple(_parse_typed_list(_expect_list(fields.get(":parameters", _Tagged([], line, 0)), "parameters"), variables=True))
    if ":duration" not in fields:
        raise PddlSyntaxError(f"durative action '{name}' has no :duration", line, 0)
    duration = _parse_duration(fields[":duration"])

    cond_start: list[Literal] = []
    cond_overall: list[Literal] = []
    cond_end: list[Literal] = []
    if ":condition" in fields:
        for timed in _flatten_and(fields[":condition"]):
            tl = _expect_list(timed, "a timed condition")
            if not tl:
                continue  # `(and)` conjunct
            tline, tcol = _loc(timed)
            head = _expect_name(tl[0], "a time qualifier")
            if head == "at" and len(tl) == 3 and str(tl[1]) == "start":
                cond_start.append(_parse_literal(tl[2]))
            elif head == "at" and len(tl) == 3 and str(tl[1]) == "end":
                cond_end.append(_parse_literal(tl[2]))
            elif head == "over" and len(tl) == 3 and str(tl[1]) == "all":
                cond_overall.append(_parse_literal(tl[2]))
            else:
                raise PddlSyntaxError("expected (at start ..)/(over all ..)/(at end ..)", tline, tcol)

    eff_start: list[Literal] = []
    eff_end: list[Literal] = []
    if ":effect" in fields:
        for timed in _flatten_and(fields[":effect"]):
            tl = _expect_list(timed, "a timed effect")
            if not tl:
                continue
            tline, tcol = _loc(timed)
            head = _expect_name(tl[0], "a time qualifier")
            if head in ("increase", "decrease", "assign"):
                raise UnsupportedPddlError(f"numeric effect '{head}'", tline)
            if head == "at" and len(tl) == 3 and str(tl[1]) == "start":
                eff_start.append(_parse_literal(tl[2]))
            elif head == "at" and len(tl) == 3 and str(tl[1]) == "end":
                eff_end.append(_parse_literal(tl[2]))
            else:
                raise PddlSyntaxError("expected (at start ..) or (at end ..) effect", tline, tcol)

    return ActionSchema(
        name=name,
        params=params,
        duration=duration,
        cond_start=tuple(cond_start),
        cond_overall=tuple(cond_overall),
        cond_end=tuple(cond_end),
        eff_start=tuple(eff_start),
        eff_end=tuple(eff_end),
    )


def _validate_domain(ast: DomainAst) -> None:
    # acyclic type hierarchy
    for t in ast.types:
        seen = {t}
        cur = ast.types[t]
        while cur != "object":
            if cur in seen:
                raise PddlValidationError(f"type hierarchy cycle through '{cur}'")
            seen.add(cur)
            cur = ast.types.get(cur, "object")
    # unique predicate names, declared parameter types
    names = set()
    known_types = set(ast.types) | {"object"}
    for p in ast.predicates:
        if p.name in names:
            raise PddlValidationError(f"duplicate predicate '{p.name}'")
        names.add(p.name)
        for _, typ in p.params:
            if typ not in known_types:
                raise PddlValidationError(f"predicate '{p.name}' uses undeclared type '{typ}'")
    preds = {p.name: p for p in ast.predicates}
    for a in ast.actions:
        scope = dict(a.params)
        for var, typ in a.params:
            if typ not in known_types:
                raise PddlValidationError(f"action '{a.name}' parameter {var} has undeclared type '{typ}'")
        for lit in (a.cond_start + a.cond_overall + a.cond_end + a.eff_start + a.eff_end):
            if lit.pred not in preds:
                raise PddlValidationError(f"action '{a.name}' uses undeclared predicate '{lit.pred}'")
            decl = preds[lit.pred]
            if len(lit.args) != len(decl.params):
                raise PddlValidationError(
                    f"action '{a.name}': '{lit.pred}' expects {len(decl.params)} arguments, got {len(lit.args)}")
            for arg in lit.args:
                if arg.startswith("?") and arg not in scope:
                    raise PddlValidationError(f"action '{a.name}' uses unbound variable {arg}")


# ---------------------------------------------------------------------------
# problem parsing

def parse_problem(text: str) -> ProblemAst:
    """Parse a PDDL problem document."""
    forms = _read_sexprs(tokenize(text))
    if len(forms) != 1:
        raise PddlSyntaxError("expected a single (define ...) form", 1, 1)
    top = _expect_list(forms[0], "(define ...)")
    if not top or str(top[0]) != "define":
        line, col = _loc(forms[0])
        raise PddlSyntaxError("expected (define (problem ...) ...)", line, col)
    head = _expect_list(top[1], "(problem name)")
    if len(head) != 2 or str(head[0]) != "problem":
        line, col = _loc(top[1])
        raise PddlSyntaxError("expected (problem <name>)", line, col)
    name = _expect_name(head[1], "problem name")

    domain_name = ""
    objects: list[tuple[str, str]] = []
    init: list[Literal] = []
    goal: list[Literal] = []

    for section in top[2:]:
        sec = _expect_list(section, "a problem section")
        if not sec:
            continue
        key = _expect_name(sec[0], "a section keyword")
        if key == ":domain":
            domain_name = _expect_name(sec[1], "a domain name")
        elif key == ":requirements":
            for req in sec[1:]:
                rname = _expect_name(req, "a requirement").lstrip(":")
                if rname not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedPddlError(f":{rname}", _loc(req)[0])
        elif key == ":objects":
            objects.extend(_parse_typed_list(sec[1:], variables=False))
        elif key == ":init":
            for fact in sec[1:]:
                fl = _expect_list(fact, "an init fact")
                fline, _ = _loc(fact)
                if fl and str(fl[0]) == "at" and len(fl) == 3 and not isinstance(fl[1], list) \
                        and str(fl[1]).replace(".", "").isdigit():
                    raise UnsupportedPddlError("timed initial literal", fline)
                if fl and str(fl[0]) == "=":
                    raise UnsupportedPddlError("numeric fluent initialisation", fline)
                lit = _parse_literal(fact)
                if not lit.positive:
                    raise PddlSyntaxError("negative :init facts are not allowed", fline, 0)
                init.append(lit)
        elif key == ":goal":
            for conj in _flatten_and(sec[1]):
                cl = _expect_list(conj, "a goal literal")
                if not cl:
                    continue  # (and) empty goal
                goal.append(_parse_literal(conj))
        elif key == ":metric":
            raise UnsupportedPddlError(":metric", _loc(sec)[0])
        else:
            raise PddlSyntaxError(f"unknown problem section '{key}'", *_loc(sec))

    ast = ProblemAst(name, domain_name, tuple(objects), tuple(init), tuple(goal))
    _validate_problem(ast)
    return ast


def _validate_problem(ast: ProblemAst) -> None:
    known = {o for o, _ in ast.objects}
    for lit in ast.init + ast.goal:
        for arg in lit.args:
            if arg not in known:
                raise PddlValidationError(f"unknown object '{arg}' in {lit}")


# ---------------------------------------------------------------------------
# pretty printing (round-trip support)

def _fmt_typed(pairs) -> str:
    return " ".join(f"{n} - {t}" for n, t in pairs)


def domain_to_pddl(ast: DomainAst) -> str:
    out = [f"(define (domain {ast.name})"]
    if ast.requirements:
        out.append("  (:requirements " + " ".join(f":{r}" for r in ast.requirements) + ")")
    if ast.types:
        out.append("  (:types " + " ".join(f"{t} - {p}" for t, p in sorted(ast.types.items())) + ")")
    if ast.predicates:
        decls = " ".join(
            "(" + p.name + "".join(f" {v} - {t}" for v, t in p.params) + ")" for p in ast.predicates)
        out.append(f"  (:predicates {decls})")
    for a in ast.actions:
        out.append(f"  (:durative-action {a.name}")
        out.append(f"    :parameters ({_fmt_typed(a.params)})")
        num = int(a.duration) if a.duration.denominator == 1 else float(a.duration)
        out.append(f"    :duration (= ?duration {num})")
        conds = [f"(at start {l})" for l in a.cond_start]
        conds += [f"(over all {l})" for l in a.cond_overall]
        conds += [f"(at end {l})" for l in a.cond_end]
        out.append("    :condition (and " + " ".join(conds) + ")")
        effs = [f"(at start {l})" for l in a.eff_start]
        effs += [f"(at end {l})" for l in a.eff_end]
        out.append("    :effect (and " + " ".join(effs) + "))")
    out.append(")")
    return "\n".join(out)


def problem_to_pddl(ast: ProblemAst) -> str:
    out = [f"(define (problem {ast.name})", f"  (:domain {ast.domain_name})"]
    if ast.objects:
        out.append(f"  (:objects {_fmt_typed(ast.objects)})")
    out.append("  (:init " + " ".join(str(l) for l in ast.init) + ")")
    out.append("  (:goal (and " + " ".join(str(l) for l in ast.goal) + "))")
    out.append(")")
    return "\n".join(out)
