"""Core finite-trace LTL: propositions, vocabulary, AST, parsing, evaluation.

Formulas are built over predicate propositions such as ``agent_at(kitchen)``
or ``is_on(book,book_shelf)`` and written in whitespace-separated prefix
notation: unary ``G F X !``, binary ``U W & | i`` (``i`` is implication).
Semantics are finite-trace with a strong next: ``X f`` is false when the
trace ends before the next step.

``evaluate_finite_trace`` is the reference oracle; the automaton layer is
tested against it, never the other way round.
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import (
    ArityError,
    TrailingTokensError,
    UnassignedPropositionError,
    UnknownTokenError,
)

UNARY_OPERATORS = ("G", "F", "X", "!")
BINARY_OPERATORS = ("U", "W", "&", "|", "i")
CONSTANT_TOKENS = ("true", "false")
RESERVED_TOKENS = frozenset(UNARY_OPERATORS + BINARY_OPERATORS + CONSTANT_TOKENS)

PLACEHOLDERS = ("A", "B", "C", "D")

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_PROP_TOKEN = re.compile(rf"^({_IDENT})(?:\(([^()\s]*)\))?$")


@dataclass(frozen=True)
class Proposition:
    """A predicate applied to zero, one or two object identifiers."""

    predicate: str
    args: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.args) > 2:
            raise ValueError(f"propositions take at most two arguments: {self.args}")

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({','.join(self.args)})"


#: Predicates shared by every household vocabulary in this package.
STANDARD_PREDICATES: dict[str, int] = {
    "agent_at": 1,
    "is_switchedon": 1,
    "is_open": 1,
    "is_grabbed": 1,
    "is_touched": 1,
    "is_on": 2,
    "is_in": 2,
}


class Vocabulary:
    """Registry of predicates (with arity) and object identifiers.

    Two modes: grounded vocabularies resolve arguments against registered
    objects; a lifted vocabulary additionally accepts the placeholder
    letters A-D, which is how half-translated formulas are parsed.
    """

    def __init__(
        self,
        predicates: Mapping[str, int] | None = None,
        objects: Iterable[str] = (),
        synonyms: Mapping[str, str] | None = None,
        allow_placeholders: bool = False,
    ):
        self.predicates: dict[str, int] = {}
        self.objects: list[str] = []
        self.synonyms: dict[str, str] = dict(synonyms or {})
        self.allow_placeholders = allow_placeholders
        for name, arity in (predicates or {}).items():
            self.add_predicate(name, arity)
        for name in objects:
            self.add_object(name)

    def add_predicate(self, name: str, arity: int) -> None:
        if name in RESERVED_TOKENS:
            raise ValueError(f"predicate name collides with an operator token: {name}")
        if not 0 <= arity <= 2:
            raise ValueError(f"arity must be 0..2, got {arity}")
        self.predicates[name] = arity

    def add_object(self, name: str) -> None:
        if name in RESERVED_TOKENS:
            raise ValueError(f"object name collides with an operator token: {name}")
        if name not in self.objects:
            self.objects.append(name)

    def knows_object(self, name: str) -> bool:
        return name in self.objects or (self.allow_placeholders and name in PLACEHOLDERS)

    def resolve(self, token: str) -> Proposition:
        """Turn one proposition token into a Proposition, or raise UnknownTokenError."""
        m = _PROP_TOKEN.match(token)
        if m is None:
            raise UnknownTokenError(f"not a proposition token: {token!r}")
        name, arg_text = m.group(1), m.group(2)
        args = tuple(a for a in (arg_text or "").split(",") if a) if arg_text is not None else ()
        if name not in self.predicates:
            if not args and self.allow_placeholders and name in PLACEHOLDERS:
                return Proposition(name)
            raise UnknownTokenError(f"unknown predicate: {name!r}")
        if len(args) != self.predicates[name]:
            raise UnknownTokenError(
                f"predicate {name} takes {self.predicates[name]} argument(s), got {len(args)}"
            )
        for a in args:
            if not self.knows_object(a):
                raise UnknownTokenError(f"unknown object {a!r} in {token!r}")
        return Proposition(name, args)

    @classmethod
    def lifted(cls) -> "Vocabulary":
        """Vocabulary for placeholder formulas like ``G ! agent_at(A)``."""
        return cls(predicates=STANDARD_PREDICATES, allow_placeholders=True)

    def to_json(self) -> str:
        return json.dumps(
            {
                "predicates": [{"name": n, "arity": a} for n, a in self.predicates.items()],
                "objects": list(self.objects),
                "synonyms": dict(self.synonyms),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        raw = json.loads(text)
        return cls(
            predicates={p["name"]: p["arity"] for p in raw.get("predicates", [])},
            objects=raw.get("objects", []),
            synonyms=raw.get("synonyms", {}),
        )


# --- formula AST -----------------------------------------------------------


class Formula:
    """Base class; all nodes are immutable and compare structurally."""

    __slots__ = ()

    def __str__(self) -> str:
        return render_prefix(self)


@dataclass(frozen=True)
class Const(Formula):
    value: bool


@dataclass(frozen=True)
class Atom(Formula):
    prop: Proposition


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Finally(Formula):
    operand: Formula


@dataclass(frozen=True)
class Globally(Formula):
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class WeakUntil(Formula):
    left: Formula
    right: Formula


TRUE = Const(True)
FALSE = Const(False)

_UNARY_CLASSES: dict[str, type] = {"G": Globally, "F": Finally, "X": Next, "!": Not}
_BINARY_CLASSES: dict[str, type] = {"U": Until, "W": WeakUntil, "&": And, "|": Or, "i": Implies}
_UNARY_TOKENS = {cls: tok for tok, cls in _UNARY_CLASSES.items()}
_BINARY_TOKENS = {cls: tok for tok, cls in _BINARY_CLASSES.items()}


def render_prefix(f: Formula) -> str:
    """Render a formula as a whitespace-separated prefix token stream."""
    out: list[str] = []
    _render_into(f, out)
    return " ".join(out)


def _render_into(f: Formula, out: list[str]) -> None:
    match f:
        case Const(value):
            out.append("true" if value else "false")
        case Atom(prop):
            out.append(str(prop))
        case Not(g) | Next(g) | Finally(g) | Globally(g):
            out.append(_UNARY_TOKENS[type(f)])
            _render_into(g, out)
        case And(l, r) | Or(l, r) | Implies(l, r) | Until(l, r) | WeakUntil(l, r):
            out.append(_BINARY_TOKENS[type(f)])
            _render_into(l, out)
            _render_into(r, out)
        case _:
            raise TypeError(f"not a formula: {f!r}")


def parse_proposition(token: str) -> Proposition:
    """Parse a bare proposition token like ``is_on(book,book_shelf)``.

    Unlike Vocabulary.resolve this does not validate predicate or object
    names; trace files and world snapshots use it to round-trip keys.
    """
    m = _PROP_TOKEN.match(token)
    if m is None:
        raise UnknownTokenError(f"not a proposition token: {token!r}")
    name, arg_text = m.group(1), m.group(2)
    if arg_text is None:
        return Proposition(name)
    return Proposition(name, tuple(a for a in arg_text.split(",") if a))


def parse_prefix(text: str, vocabulary: Vocabulary) -> Formula:
    """Parse prefix notation into a Formula.

    Returns the unique formula whose prefix rendering equals the input
    token stream. Raises UnknownTokenError / ArityError / TrailingTokensError.
    """
    tokens = text.split()
    if not tokens:
        raise ArityError("empty input")
    formula, pos = _parse_at(tokens, 0, vocabulary)
    if pos != len(tokens):
        raise TrailingTokensError(f"unexpected trailing tokens: {' '.join(tokens[pos:])!r}")
    return formula


def _parse_at(tokens: list[str], pos: int, vocabulary: Vocabulary) -> tuple[Formula, int]:
    if pos >= len(tokens):
        raise ArityError("token stream ended mid-expression")
    tok = tokens[pos]
    if tok == "true":
        return TRUE, pos + 1
    if tok == "false":
        return FALSE, pos + 1
    if tok in _UNARY_CLASSES:
        operand, nxt = _parse_at(tokens, pos + 1, vocabulary)
        return _UNARY_CLASSES[tok](operand), nxt
    if tok in _BINARY_CLASSES:
        left, mid = _parse_at(tokens, pos + 1, vocabulary)
        right, nxt = _parse_at(tokens, mid, vocabulary)
        return _BINARY_CLASSES[tok](left, right), nxt
    return Atom(vocabulary.resolve(tok)), pos + 1


def propositions(f: Formula) -> tuple[Proposition, ...]:
    """All propositions in f, deduplicated, in first-occurrence order."""
    seen: dict[Proposition, None] = {}
    _collect_props(f, seen)
    return tuple(seen)


def _collect_props(f: Formula, seen: dict[Proposition, None]) -> None:
    match f:
        case Const():
            pass
        case Atom(prop):
            seen.setdefault(prop, None)
        case Not(g) | Next(g) | Finally(g) | Globally(g):
            _collect_props(g, seen)
        case And(l, r) | Or(l, r) | Implies(l, r) | Until(l, r) | WeakUntil(l, r):
            _collect_props(l, seen)
            _collect_props(r, seen)


# --- state assignments and traces ------------------------------------------


class StateAssignment(Mapping):
    """Immutable truth assignment for a set of propositions."""

    __slots__ = ("_values", "_hash")

    def __init__(self, values: Mapping[Proposition, bool]):
        object.__setattr__(self, "_values", dict(values))
        object.__setattr__(self, "_hash", hash(frozenset(self._values.items())))

    def value(self, prop: Proposition) -> bool:
        try:
            return self._values[prop]
        except KeyError:
            raise UnassignedPropositionError(f"no value for {prop}") from None

    def restrict(self, props: Iterable[Proposition]) -> "StateAssignment":
        return StateAssignment({p: self.value(p) for p in props})

    def true_props(self) -> tuple[Proposition, ...]:
        return tuple(p for p, v in self._values.items() if v)

    def __getitem__(self, prop: Proposition) -> bool:
        return self.value(prop)

    def __iter__(self) -> Iterator[Proposition]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateAssignment):
            return NotImplemented
        return self._values == other._values

    def __repr__(self) -> str:
        inner = ", ".join(f"{p}={'T' if v else 'F'}" for p, v in self._values.items())
        return f"StateAssignment({inner})"


Trace = Sequence[StateAssignment]


def evaluate_finite_trace(f: Formula, trace: Trace, position: int = 0) -> bool:
    """Reference semantics of finite-trace LTL, evaluated by direct recursion.

    The trace must be nonempty and ``position`` must index into it. ``X`` is
    strong (false at the last step); ``U`` requires its right operand to
    occur; ``W`` also accepts the left operand holding forever.
    """
    n = len(trace)
    if n == 0:
        raise ValueError("traces are nonempty by definition")
    if not 0 <= position < n:
        raise ValueError(f"position {position} outside trace of length {n}")
    return _eval(f, trace, position, n)


def _eval(f: Formula, t: Trace, i: int, n: int) -> bool:
    match f:
        case Const(value):
            return value
        case Atom(prop):
            return t[i].value(prop)
        case Not(g):
            return not _eval(g, t, i, n)
        case And(l, r):
            return _eval(l, t, i, n) and _eval(r, t, i, n)
        case Or(l, r):
            return _eval(l, t, i, n) or _eval(r, t, i, n)
        case Implies(l, r):
            return (not _eval(l, t, i, n)) or _eval(r, t, i, n)
        case Next(g):
            return i + 1 < n and _eval(g, t, i + 1, n)
        case Finally(g):
            return any(_eval(g, t, j, n) for j in range(i, n))
        case Globally(g):
            return all(_eval(g, t, j, n) for j in range(i, n))
        case Until(l, r):
            return any(
                _eval(r, t, j, n) and all(_eval(l, t, k, n) for k in range(i, j))
                for j in range(i, n)
            )
        case WeakUntil(l, r):
            return _eval(Until(l, r), t, i, n) or _eval(Globally(l), t, i, n)
    raise TypeError(f"not a formula: {f!r}")


# --- normalization ----------------------------------------------------------


def normalize(f: Formula) -> Formula:
    """Canonical semantics-preserving form.

    Folds boolean constants, removes double negation, rewrites implication
    to ``| ! a b``, flattens nested conjunction/disjunction, sorts operands
    by rendered string and deduplicates. Idempotent.
    """
    match f:
        case Const() | Atom():
            return f
        case Not(g):
            n = normalize(g)
            if isinstance(n, Const):
                return Const(not n.value)
            if isinstance(n, Not):
                return n.operand
            return Not(n)
        case And():
            return _normalize_junction(f, And, absorb=FALSE, neutral=TRUE)
        case Or():
            return _normalize_junction(f, Or, absorb=TRUE, neutral=FALSE)
        case Implies(l, r):
            return normalize(Or(Not(l), r))
        case Next(g):
            return Next(normalize(g))
        case Finally(g):
            return Finally(normalize(g))
        case Globally(g):
            return Globally(normalize(g))
        case Until(l, r):
            return Until(normalize(l), normalize(r))
        case WeakUntil(l, r):
            return WeakUntil(normalize(l), normalize(r))
    raise TypeError(f"not a formula: {f!r}")


def _normalize_junction(f: Formula, kind: type, absorb: Const, neutral: Const) -> Formula:
    members: dict[str, Formula] = {}
    for part in _junction_parts(f, kind):
        n = normalize(part)
        if n == absorb:
            return absorb
        if n == neutral:
            continue
        # nested same-kind results from child normalization flatten too
        for sub in _junction_parts(n, kind) if isinstance(n, kind) else (n,):
            members.setdefault(render_prefix(sub), sub)
    if not members:
        return neutral
    ordered = [members[k] for k in sorted(members)]
    result = ordered[-1]
    for part in reversed(ordered[:-1]):
        result = kind(part, result)
    return result


def _junction_parts(f: Formula, kind: type) -> Iterator[Formula]:
    if isinstance(f, kind):
        yield from _junction_parts(f.left, kind)
        yield from _junction_parts(f.right, kind)
    else:
        yield f


def conjuncts(f: Formula) -> tuple[Formula, ...]:
    """Top-level conjuncts of f (f itself if it is not a conjunction)."""
    return tuple(_junction_parts(f, And))


def conjoin(formulas: Sequence[Formula]) -> Formula:
    """Conjunction of a constraint list: true when empty, normalized otherwise."""
    if not formulas:
        return TRUE
    if len(formulas) == 1:
        return formulas[0]
    result = formulas[0]
    for f in formulas[1:]:
        result = And(result, f)
    return normalize(result)
