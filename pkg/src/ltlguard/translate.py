"""Natural-language constraint to formula pipeline.

Stages: recognize referring expressions, ground each to a vocabulary
identifier, lift the utterance by replacing spans with placeholder letters,
translate the lifted utterance to a lifted formula, substitute identifiers
back into the atoms. The two language-heavy stages (recognition, lifted
translation) take an optional text-completion backend; without one they fall
back to deterministic implementations (lexicon scan, pattern templates) so
the whole pipeline runs offline and reproducibly.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from importlib import resources

from .automaton import DeterministicAutomaton, automaton_to_dot, compile_automaton
from .errors import (
    AlphabetTooLargeError,
    LtlGuardError,
    NoCandidateAboveThresholdError,
    ParseError,
    StateExplosionError,
    TranslationError,
    UnparseableTranslationError,
    UnsupportedPatternError,
    UnverifiedConstraintError,
)
from .ltl import (
    And,
    Atom,
    Const,
    Finally,
    Formula,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    Until,
    Vocabulary,
    WeakUntil,
    parse_prefix,
    render_prefix,
)
from .product import ProductDeadTable, build_dead_table

log = logging.getLogger(__name__)

PLACEHOLDER_LETTERS = ("A", "B", "C", "D")

DEFAULT_GROUNDING_THRESHOLD = 0.2


def _prompt_asset(name: str) -> str:
    return resources.files("ltlguard").joinpath("prompts", name).read_text()


# --- domain types -----------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """One natural-language constraint and its grounded formula."""

    id: int
    nl_text: str
    formula: Formula
    verified: bool = False


@dataclass(frozen=True)
class GroundingTable:
    """Recognition and grounding record for one utterance."""

    utterance: str
    spans: tuple[str, ...]
    lifted_utterance: str
    placeholder_to_span: tuple[tuple[str, str], ...]
    placeholder_to_identifier: tuple[tuple[str, str], ...]

    def span_of(self, placeholder: str) -> str:
        return dict(self.placeholder_to_span)[placeholder]

    def identifier_of(self, placeholder: str) -> str:
        return dict(self.placeholder_to_identifier)[placeholder]

    def unlift(self) -> str:
        """Substitute spans back; must reproduce the original utterance."""
        out = self.lifted_utterance
        for letter, span in self.placeholder_to_span:
            out = out.replace(letter, span)
        return out


# --- referring expression recognition ---------------------------------------


def _surface_lexicon(vocabulary: Vocabulary) -> list[tuple[str, str]]:
    """(surface form, identifier) pairs, longest surfaces first.

    Each identifier is findable as itself, with underscores as spaces, and
    squashed; synonyms come from the vocabulary table.
    """
    entries: dict[str, str] = {}
    for ident in vocabulary.objects:
        lowered = ident.lower()
        for surface in (lowered, lowered.replace("_", " "), lowered.replace("_", "")):
            entries.setdefault(surface, ident)
    for surface, ident in vocabulary.synonyms.items():
        entries.setdefault(surface.lower(), ident)
    return sorted(entries.items(), key=lambda kv: (-len(kv[0]), kv[0]))


def _word_boundary(text: str, start: int, end: int) -> bool:
    def hard(ch: str) -> bool:
        return ch.isalnum() or ch == "_"

    before = start == 0 or not hard(text[start - 1])
    after = end == len(text) or not hard(text[end])
    return before and after


def _lexicon_scan(utterance: str, vocabulary: Vocabulary) -> list[str]:
    lowered = utterance.lower()
    lexicon = _surface_lexicon(vocabulary)
    spans: list[str] = []
    i = 0
    while i < len(lowered):
        hit_len = 0
        for surface, _ in lexicon:
            end = i + len(surface)
            if lowered.startswith(surface, i) and _word_boundary(lowered, i, end):
                hit_len = len(surface)
                break
        if hit_len:
            span = utterance[i : i + hit_len]
            if span not in spans:
                spans.append(span)
            i += hit_len
        else:
            i += 1
    return spans


def recognize_referring_expressions(
    utterance: str,
    vocabulary: Vocabulary,
    backend=None,
) -> list[str]:
    """Spans of the utterance that name objects or locations.

    Backend replies are pipe-separated; anything that is not a verbatim
    substring of the utterance is dropped. With no backend, a longest-match
    scan against the vocabulary's surface forms.
    """
    if not utterance:
        raise ValueError("empty utterance")
    if backend is None:
        return _lexicon_scan(utterance, vocabulary)
    prompt = _prompt_asset("recognition.txt") + utterance + "\nPropositions:"
    reply = backend.complete(prompt)
    spans: list[str] = []
    for raw in reply.split("|"):
        span = raw.strip()
        if not span:
            continue
        if span not in utterance:
            log.warning("dropping non-substring span %r", span)
            continue
        if span not in spans:
            spans.append(span)
    return spans


# --- grounding ---------------------------------------------------------------


def _canon(text: str) -> str:
    return "".join(ch for ch in text.lower() if ch.isalnum())


def _tokens(text: str) -> set[str]:
    return {t for t in re.split(r"[\s_]+", text.lower()) if t}


class TokenJaccardScorer:
    """Offline similarity: squashed equality wins, token overlap otherwise."""

    def __call__(self, span: str, identifier: str) -> float:
        if _canon(span) == _canon(identifier):
            return 1.0
        a, b = _tokens(span), _tokens(identifier)
        if not a or not b:
            return 0.0
        return len(a & b) / len(a | b)


def ground_expression(
    span: str,
    vocabulary: Vocabulary,
    scorer=None,
    threshold: float = DEFAULT_GROUNDING_THRESHOLD,
) -> str:
    """The vocabulary identifier most similar to the span.

    Synonym-table hits short-circuit; otherwise argmax of the scorer over all
    identifiers, ties broken lexicographically.
    """
    if not vocabulary.objects:
        raise NoCandidateAboveThresholdError("vocabulary has no objects")
    synonym = vocabulary.synonyms.get(span.lower())
    if synonym is not None and synonym in vocabulary.objects:
        return synonym
    scorer = scorer or TokenJaccardScorer()
    best_score = -1.0
    best_ident = ""
    for ident in sorted(vocabulary.objects):
        score = scorer(span, ident)
        if score > best_score:
            best_score, best_ident = score, ident
    if best_score < threshold:
        raise NoCandidateAboveThresholdError(
            f"no identifier scores above {threshold} for span {span!r}"
            f" (best: {best_ident!r} at {best_score:.2f})"
        )
    return best_ident


# --- lifting -----------------------------------------------------------------


def lift_utterance(utterance: str, spans: list[str]) -> tuple[str, tuple[tuple[str, str], ...]]:
    """Replace spans with placeholder letters, first occurrence gets A."""
    ordered = sorted(spans, key=utterance.index)
    if len(ordered) > len(PLACEHOLDER_LETTERS):
        raise TranslationError(
            f"utterance has {len(ordered)} referring expressions;"
            f" only {len(PLACEHOLDER_LETTERS)} placeholders exist"
        )
    letter = {span: PLACEHOLDER_LETTERS[k] for k, span in enumerate(ordered)}
    by_length = sorted(ordered, key=len, reverse=True)
    out: list[str] = []
    i = 0
    while i < len(utterance):
        hit = next((s for s in by_length if utterance.startswith(s, i)), None)
        if hit is not None:
            out.append(letter[hit])
            i += len(hit)
        else:
            out.append(utterance[i])
            i += 1
    return "".join(out), tuple((letter[s], s) for s in ordered)


def substitute_placeholders(
    formula: Formula,
    placeholder_to_identifier: dict[str, str],
    vocabulary: Vocabulary,
) -> Formula:
    """Swap placeholder arguments for grounded identifiers, validating each atom."""

    def sub(f: Formula) -> Formula:
        match f:
            case Const(_):
                return f
            case Atom(p):
                args = tuple(placeholder_to_identifier.get(a, a) for a in p.args)
                token = f"{p.predicate}({','.join(args)})" if args else p.predicate
                return Atom(vocabulary.resolve(token))
            case Not(g):
                return Not(sub(g))
            case And(a, b):
                return And(sub(a), sub(b))
            case Or(a, b):
                return Or(sub(a), sub(b))
            case Implies(a, b):
                return Implies(sub(a), sub(b))
            case Next(g):
                return Next(sub(g))
            case Finally(g):
                return Finally(sub(g))
            case Globally(g):
                return Globally(sub(g))
            case Until(a, b):
                return Until(sub(a), sub(b))
            case WeakUntil(a, b):
                return WeakUntil(sub(a), sub(b))
            case _:
                raise TypeError(f"unknown formula node {type(f).__name__}")

    return sub(formula)


# --- lifted translation: deterministic pattern fallback ----------------------

_COUNTS = {
    "once": 1, "twice": 2, "thrice": 3,
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
}

_PROHIBITIONS = (
    "please do not", "do not", "don't", "never",
    "you cannot", "you can't", "you can not", "you must not", "you may not",
)

# verb phrase -> (predicate, negated); tried in order, first search hit wins
_VERB_RULES: list[tuple[re.Pattern, str, bool]] = [
    (re.compile(r"put(?:ting)?(?: the)? (\w+) on(?: the)? (\w+)"), "is_on", False),
    (re.compile(r"put(?:ting)?(?: the)? (\w+) in(?:to)?(?: the)? (\w+)"), "is_in", False),
    (re.compile(r"(?:switch(?:ing|ed)?|turn(?:ing|ed)?) (\w+) off"), "is_switchedon", True),
    (re.compile(r"(?:switch(?:ing|ed)?|turn(?:ing|ed)?) off(?: the)? (\w+)"), "is_switchedon", True),
    (re.compile(r"(?:switch(?:ing|ed)?|turn(?:ing|ed)?) on(?: the)? (\w+)"), "is_switchedon", False),
    (re.compile(r"(?:pick(?:ing|ed)? up|grab(?:bing|bed)?|hold(?:ing)?|carry(?:ing)?)(?: the)? (\w+)"), "is_grabbed", False),
    (re.compile(r"open(?:ing|ed)?(?: the)? (\w+)"), "is_open", False),
    (re.compile(r"clos(?:e|ing|ed)(?: the)? (\w+)"), "is_open", True),
    (re.compile(r"touch(?:ing|ed)?(?: the)? (\w+)"), "is_touched", False),
    (re.compile(r"leav(?:e|ing)(?: the)? (\w+)"), "agent_at", True),
    (
        re.compile(
            r"(?:go(?:ing|ne)? (?:to|into)|been (?:to|in|at)|visit(?:ing|ed)?|"
            r"enter(?:ing|ed)?|reach(?:ing|ed)?|mov(?:e|ing) to|walk(?:ing)? to|"
            r"pass(?:ing|ed)? through|stay(?:ing)? (?:in|at))(?: the)? (\w+)"
        ),
        "agent_at",
        False,
    ),
]


def _phrase_prop(phrase: str, it_refers_to: str | None = None) -> tuple[str, bool]:
    """Map a verb phrase to (proposition token, negated)."""
    for pattern, predicate, negated in _VERB_RULES:
        m = pattern.search(phrase)
        if m is None:
            continue
        args = [g for g in m.groups() if g]
        if "it" in args:
            if it_refers_to is None:
                raise UnsupportedPatternError(f"dangling pronoun in {phrase!r}")
            args = [it_refers_to if a == "it" else a for a in args]
        return f"{predicate}({','.join(args)})", negated
    raise UnsupportedPatternError(f"no verb pattern matches {phrase!r}")


def _positive_prop(phrase: str) -> str:
    token, negated = _phrase_prop(phrase)
    if negated:
        raise UnsupportedPatternError(f"negative verb not supported here: {phrase!r}")
    return token


def _visit_chain(prop: str, m: int) -> str:
    # m-th entry-block witness: F (p & (p U (!p & (!p U chain(m-1)))))
    if m == 1:
        return f"F {prop}"
    return f"F & {prop} U {prop} & ! {prop} U ! {prop} {_visit_chain(prop, m - 1)}"


def _at_most(prop: str, n: int) -> str:
    return f"! {_visit_chain(prop, n + 1)}"


def _starts_with_prohibition(phrase: str) -> bool:
    stripped = phrase.strip()
    return any(stripped.startswith(p) for p in _PROHIBITIONS)


def _consequence(cons: str, condition_arg: str | None) -> str:
    token, negated = _phrase_prop(cons, it_refers_to=condition_arg)
    body = f"! {token}" if negated else token
    if "never" in cons or _starts_with_prohibition(cons):
        return f"G ! {token}"
    if "immediately" in cons or "right after" in cons:
        return f"X {body}"
    return f"F {body}"


def _first_arg(token: str) -> str | None:
    m = re.search(r"\(([^,)]+)", token)
    return m.group(1) if m else None


def _trigger(cond: str, cons: str) -> str:
    cond_prop = _positive_prop(cond)
    return f"G i {cond_prop} {_consequence(cons, _first_arg(cond_prop))}"


def fallback_translate_lifted(utterance: str) -> str:
    """Template translation of one lifted utterance to a prefix formula string."""
    text = " ".join(utterance.split())

    m = re.match(r"^once you (.+?) you are never allowed to .+ again$", text)
    if m:
        return _at_most(_positive_prop(m.group(1)), 1)
    m = re.match(r"^(.+?) (once|twice|thrice|\w+ times) will lock .+$", text)
    if m:
        count_word = m.group(2).split()[0]
        if count_word not in _COUNTS:
            raise UnsupportedPatternError(f"unknown count {count_word!r}")
        return _at_most(_positive_prop(m.group(1)), _COUNTS[count_word])
    m = re.match(r"^(.+?),? at most (\w+)(?: times?)?$", text)
    if m:
        if m.group(2) not in _COUNTS:
            raise UnsupportedPatternError(f"unknown count {m.group(2)!r}")
        return _at_most(_positive_prop(m.group(1)), _COUNTS[m.group(2)])

    if " until " in text:
        left, right = text.split(" until ", 1)
        return f"W ! {_positive_prop(left)} {_positive_prop(right)}"
    for key in (" if you haven't ", " if you have not "):
        if key in text:
            left, right = text.split(key, 1)
            # reference corpus orients "you can't X if you haven't Y"
            # opposite to the "don't X ..." form; reproduced as-is
            if left.startswith(("you can't", "you cannot", "you can not")):
                return f"W ! {_positive_prop(right)} {_positive_prop(left)}"
            return f"W ! {_positive_prop(left)} {_positive_prop(right)}"
    if " before " in text:
        left, right = text.split(" before ", 1)
        if _starts_with_prohibition(left):
            return f"W ! {_positive_prop(left)} {_positive_prop(right)}"
        return f"W ! {_positive_prop(right)} {_positive_prop(left)}"

    if " means " in text:
        cond, cons = text.split(" means ", 1)
        return _trigger(cond, cons)
    if " implies " in text:
        cond, cons = text.split(" implies ", 1)
        return _trigger(cond, cons)
    m = re.match(r"^if you\s+(.+?), (.+)$", text)
    if m:
        return _trigger(m.group(1), m.group(2))
    m = re.match(r"^you can (.+?), but then (.+)$", text)
    if m:
        return _trigger(m.group(1), m.group(2))
    m = re.match(r"^(.+?) if you have (.+)$", text)
    if m:
        return _trigger(m.group(2), m.group(1))

    if _starts_with_prohibition(text):
        return f"G ! {_positive_prop(text)}"

    raise UnsupportedPatternError(f"no template matches {utterance!r}")


def translate_lifted(lifted_utterance: str, backend=None) -> Formula:
    """Lifted utterance to lifted formula, by backend or by templates."""
    vocab = Vocabulary.lifted()
    if backend is None:
        return parse_prefix(fallback_translate_lifted(lifted_utterance), vocab)
    prompt = _prompt_asset("lifted_translation.txt") + lifted_utterance + "\nLTL:"
    reply = backend.complete(prompt)
    try:
        return _parse_reply(reply, vocab)
    except ParseError as first_error:
        retry_prompt = (
            f"{prompt} {reply.strip()}\n"
            f"That failed to parse: {first_error}. "
            "Reply with one prefix-notation LTL formula only.\nLTL:"
        )
        reply = backend.complete(retry_prompt)
        try:
            return _parse_reply(reply, vocab)
        except ParseError as second_error:
            raise UnparseableTranslationError(
                f"backend output unparseable after retry: {second_error}"
            ) from second_error


def _parse_reply(reply: str, vocab: Vocabulary) -> Formula:
    line = next((ln for ln in reply.splitlines() if ln.strip()), "")
    if line.strip().startswith("LTL:"):
        line = line.strip()[len("LTL:") :]
    return parse_prefix(line.strip(), vocab)


# --- full pipeline -----------------------------------------------------------


def analyze_utterance(
    nl_text: str,
    vocabulary: Vocabulary,
    backend=None,
    *,
    scorer=None,
    threshold: float = DEFAULT_GROUNDING_THRESHOLD,
) -> GroundingTable:
    """Recognition, lifting and grounding for one utterance."""
    spans = recognize_referring_expressions(nl_text, vocabulary, backend)
    lifted, placeholder_to_span = lift_utterance(nl_text, spans)
    placeholder_to_identifier = tuple(
        (letter, ground_expression(span, vocabulary, scorer, threshold))
        for letter, span in placeholder_to_span
    )
    return GroundingTable(
        utterance=nl_text,
        spans=tuple(sorted(spans, key=nl_text.index)),
        lifted_utterance=lifted,
        placeholder_to_span=placeholder_to_span,
        placeholder_to_identifier=placeholder_to_identifier,
    )


def translate_constraint(
    nl_text: str,
    vocabulary: Vocabulary,
    backend=None,
    *,
    scorer=None,
    threshold: float = DEFAULT_GROUNDING_THRESHOLD,
    constraint_id: int = 0,
) -> Constraint:
    """Run the whole pipeline on one utterance."""
    table = analyze_utterance(
        nl_text, vocabulary, backend, scorer=scorer, threshold=threshold
    )
    lifted_formula = translate_lifted(table.lifted_utterance, backend)
    formula = substitute_placeholders(
        lifted_formula, dict(table.placeholder_to_identifier), vocabulary
    )
    return Constraint(id=constraint_id, nl_text=nl_text, formula=formula)


# --- constraint sets ---------------------------------------------------------


@dataclass(eq=False)
class ConstraintSet:
    """Per-constraint automata plus the product dead table, ready to monitor."""

    constraints: tuple[Constraint, ...]
    automata: tuple[DeterministicAutomaton, ...]
    dead_table: ProductDeadTable | None

    @property
    def alphabet(self):
        if self.dead_table is None:
            return ()
        return self.dead_table.alphabet

    @property
    def is_empty(self) -> bool:
        return not self.constraints

    def component_of(self, constraint_id: int) -> int:
        for k, c in enumerate(self.constraints):
            if c.id == constraint_id:
                return k
        raise KeyError(f"no constraint with id {constraint_id}")


def assemble_constraint_set(
    constraints: list[Constraint] | tuple[Constraint, ...],
    *,
    strict: bool = False,
    kernel_backend: str | None = None,
) -> ConstraintSet:
    """Compile every constraint and build the product dead table.

    strict refuses constraints whose verified flag is still false, which is
    the expert-in-the-loop assembly mode; the permissive mode accepts raw
    machine translations.
    """
    ordered = tuple(constraints)
    if strict:
        pending = [c.id for c in ordered if not c.verified]
        if pending:
            raise UnverifiedConstraintError(
                f"strict assembly refused unverified constraints: {pending}"
            )
    if not ordered:
        return ConstraintSet(constraints=(), automata=(), dead_table=None)
    automata = []
    for c in ordered:
        try:
            automata.append(compile_automaton(c.formula))
        except (AlphabetTooLargeError, StateExplosionError) as exc:
            raise type(exc)(f"constraint {c.id} ({c.nl_text!r}): {exc}") from exc
    try:
        table = build_dead_table(tuple(automata), backend=kernel_backend)
    except (AlphabetTooLargeError, StateExplosionError) as exc:
        raise type(exc)(f"constraint set of {len(ordered)}: {exc}") from exc
    return ConstraintSet(
        constraints=ordered, automata=tuple(automata), dead_table=table
    )


# --- expert verification -----------------------------------------------------

_OPERATOR_GLOSS = {
    "G": 'G: "globally" - the body must hold at every remaining step',
    "F": 'F: "finally" - the body must hold at some remaining step',
    "X": 'X: "next" - the body must hold at the very next step',
    "U": 'U: "until" - the left holds until the right does, which must happen',
    "W": 'W: "weak until" - like U, but the right side may never happen',
    "!": '!: "not"',
    "&": '&: "and"',
    "|": '|: "or"',
    "i": 'i: "implies" - whenever the left holds, the right must too',
}


@dataclass(frozen=True)
class ReviewBundle:
    """Everything an expert needs to approve or reject one constraint."""

    nl_text: str
    formula_text: str
    gloss: tuple[str, ...]
    dot: str


def verification_review(constraint: Constraint) -> ReviewBundle:
    formula_text = render_prefix(constraint.formula)
    present = [tok for tok in _OPERATOR_GLOSS if tok in formula_text.split()]
    auto = compile_automaton(constraint.formula)
    return ReviewBundle(
        nl_text=constraint.nl_text,
        formula_text=formula_text,
        gloss=tuple(_OPERATOR_GLOSS[tok] for tok in present),
        dot=automaton_to_dot(auto),
    )


def approve(constraint: Constraint) -> Constraint:
    return replace(constraint, verified=True)


# --- constraints file --------------------------------------------------------


def constraints_from_json(
    text: str,
    vocabulary: Vocabulary,
    backend=None,
) -> list[Constraint]:
    """Load a constraints file: [{"nl": ..., "ltl"?: ..., "verified"?: ...}].

    Entries with an "ltl" field parse directly (pre-verified expert input);
    the rest go through the translation pipeline.
    """
    import json

    raw = json.loads(text)
    if not isinstance(raw, list):
        raise LtlGuardError("constraints file must be a JSON list")
    out: list[Constraint] = []
    for k, entry in enumerate(raw):
        nl = entry.get("nl", "")
        if "ltl" in entry:
            formula = parse_prefix(entry["ltl"], vocabulary)
            out.append(
                Constraint(
                    id=k,
                    nl_text=nl,
                    formula=formula,
                    verified=bool(entry.get("verified", False)),
                )
            )
        else:
            constraint = translate_constraint(nl, vocabulary, backend, constraint_id=k)
            if entry.get("verified"):
                constraint = approve(constraint)
            out.append(constraint)
    return out


def constraints_to_json(constraints: list[Constraint] | tuple[Constraint, ...]) -> str:
    import json

    return json.dumps(
        [
            {
                "nl": c.nl_text,
                "ltl": render_prefix(c.formula),
                "verified": c.verified,
            }
            for c in constraints
        ],
        indent=2,
    )
