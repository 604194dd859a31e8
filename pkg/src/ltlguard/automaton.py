"""Compile formulas into deterministic finite-trace automata by progression.

States are normalized residual formulas; consuming a state assignment moves
to the progression of the current residual. A run over a whole trace ends in
a residual whose empty-continuation acceptance decides the trace. Dead
states are those from which no accepting state is reachable.

Transition tables are dense numpy arrays indexed by assignment bitmask
(bit ``b`` of the mask is the truth value of ``alphabet[b]``), which is what
the product kernels consume.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
import json

import numpy as np

from .errors import (
    AlphabetTooLargeError,
    BareAtomResidualError,
    StateExplosionError,
)
from .ltl import (
    And,
    Atom,
    Const,
    FALSE,
    Finally,
    Formula,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    Proposition,
    StateAssignment,
    Trace,
    TRUE,
    Until,
    Vocabulary,
    WeakUntil,
    normalize,
    parse_prefix,
    propositions,
    render_prefix,
)

ALPHABET_CAP = 16
STATE_CAP = 10_000


class Classification(Enum):
    ACCEPTING = "accepting"
    LIVE = "live"
    DEAD = "dead"


def progress(f: Formula, assignment: StateAssignment) -> Formula:
    """One progression step: the residual obligation after observing one state.

    For any continuation w: (s . w) satisfies f iff w satisfies
    progress(f, s), where the empty continuation is judged by
    end_of_trace_accepting. Strong next is preserved by conjoining
    ``F true`` (\"the remaining trace is nonempty\") onto the operand.
    """
    return normalize(_progress_raw(normalize(f), assignment))


def _progress_raw(f: Formula, s: StateAssignment) -> Formula:
    match f:
        case Const():
            return f
        case Atom(prop):
            return Const(s.value(prop))
        case Not(g):
            return Not(_progress_raw(g, s))
        case And(l, r):
            return And(_progress_raw(l, s), _progress_raw(r, s))
        case Or(l, r):
            return Or(_progress_raw(l, s), _progress_raw(r, s))
        case Next(g):
            return And(g, Finally(TRUE))
        case Finally(g):
            return Or(_progress_raw(g, s), f)
        case Globally(g):
            return And(_progress_raw(g, s), f)
        case Until(l, r):
            return Or(_progress_raw(r, s), And(_progress_raw(l, s), f))
        case WeakUntil(l, r):
            return Or(_progress_raw(r, s), And(_progress_raw(l, s), f))
    raise TypeError(f"cannot progress {f!r}")


def end_of_trace_accepting(f: Formula) -> bool:
    """Does the empty continuation satisfy this residual formula?

    Raises BareAtomResidualError on a free atom: an atom demands a current
    state, so a residual holding one outside any temporal operator cannot
    be judged here.
    """
    return _empty_accepts(f, bare_atom_raises=True)


def _empty_accepts(f: Formula, bare_atom_raises: bool = False) -> bool:
    match f:
        case Const(value):
            return value
        case Atom():
            if bare_atom_raises:
                raise BareAtomResidualError(f"free atom in residual: {f}")
            return False  # the empty continuation has no position to satisfy it
        case Not(g):
            return not _empty_accepts(g, bare_atom_raises)
        case And(l, r):
            return _empty_accepts(l, bare_atom_raises) and _empty_accepts(r, bare_atom_raises)
        case Or(l, r):
            return _empty_accepts(l, bare_atom_raises) or _empty_accepts(r, bare_atom_raises)
        case Implies(l, r):
            return (not _empty_accepts(l, bare_atom_raises)) or _empty_accepts(r, bare_atom_raises)
        case Next() | Finally() | Until():
            return False
        case Globally() | WeakUntil():
            return True
    raise TypeError(f"not a formula: {f!r}")


def _support(f: Formula) -> tuple[Formula, ...]:
    """Maximal non-boolean subtrees of f, deduped, in render order.

    Every progression residual is a boolean combination of these units, so
    they act as the free variables of its propositional skeleton.
    """
    seen: dict[Formula, None] = {}

    def walk(g: Formula) -> None:
        match g:
            case Const(_):
                pass
            case Not(x):
                walk(x)
            case And(a, b) | Or(a, b) | Implies(a, b):
                walk(a)
                walk(b)
            case _:
                seen.setdefault(g, None)

    walk(f)
    return tuple(sorted(seen, key=render_prefix))


def _truth_table(f: Formula, support: tuple[Formula, ...]) -> np.ndarray:
    """Evaluate f's boolean skeleton over every valuation of its support."""
    size = 1 << len(support)
    env = {
        v: ((np.arange(size) >> i) & 1).astype(bool) for i, v in enumerate(support)
    }
    memo: dict[int, np.ndarray] = {}

    def ev(g: Formula) -> np.ndarray:
        cached = memo.get(id(g))
        if cached is not None:
            return cached
        match g:
            case Const(value):
                out = np.full(size, value, dtype=bool)
            case Not(x):
                out = ~ev(x)
            case And(a, b):
                out = ev(a) & ev(b)
            case Or(a, b):
                out = ev(a) | ev(b)
            case Implies(a, b):
                out = ~ev(a) | ev(b)
            case _:
                out = env[g]
        memo[id(g)] = out
        return out

    return ev(f)


def _semantic_key(f: Formula) -> tuple:
    """State identity: the truth table of f over the support it depends on.

    Progression produces endless syntactic variants of propositionally equal
    residuals; keying states semantically keeps the fixpoint finite. Equal
    keys imply propositional equivalence, which implies equal acceptance
    behaviour on every continuation.
    """
    support = _support(f)
    table = _truth_table(f, support)
    size = len(table)
    relevant = [
        i
        for i in range(len(support))
        if bool(np.any(table != table[np.arange(size) ^ (1 << i)]))
    ]
    reduced_size = 1 << len(relevant)
    full = np.zeros(reduced_size, dtype=np.int64)
    for j, i in enumerate(relevant):
        full |= ((np.arange(reduced_size) >> j) & 1) << i
    reduced = table[full]
    bits = int.from_bytes(np.packbits(reduced, bitorder="little").tobytes(), "little")
    return tuple(render_prefix(support[i]) for i in relevant), bits


_REBUILD_RENDER_LIMIT = 600


def _rebuild_compact(f: Formula) -> Formula:
    """Replace an oversized residual with an equivalent minterm expansion.

    First-seen residuals can double in size along deep progression chains;
    states are keyed semantically so swapping in any propositionally equal
    form is sound, and the expansion is bounded by the support size.
    """
    support = _support(f)
    if not support:
        return normalize(f)
    table = _truth_table(f, support)
    terms: list[Formula] = []
    for m in range(len(table)):
        if not table[m]:
            continue
        term: Formula | None = None
        for i, v in enumerate(support):
            lit: Formula = v if (m >> i) & 1 else Not(v)
            term = lit if term is None else And(term, lit)
        terms.append(term if term is not None else TRUE)
    if not terms:
        return FALSE
    combined = terms[0]
    for t in terms[1:]:
        combined = Or(combined, t)
    return normalize(combined)


def assignment_to_mask(assignment: StateAssignment, alphabet: tuple[Proposition, ...]) -> int:
    mask = 0
    for bit, prop in enumerate(alphabet):
        if assignment.value(prop):
            mask |= 1 << bit
    return mask


def mask_to_assignment(mask: int, alphabet: tuple[Proposition, ...]) -> StateAssignment:
    return StateAssignment({p: bool(mask >> b & 1) for b, p in enumerate(alphabet)})


@dataclass
class DeterministicAutomaton:
    """Dense-table DFA over assignment bitmasks of a fixed alphabet."""

    formula: Formula
    alphabet: tuple[Proposition, ...]
    state_formulas: tuple[Formula, ...]
    initial: int
    table: np.ndarray  # (n_states, 2**len(alphabet)) int32
    accepting: np.ndarray  # (n_states,) bool
    dead: np.ndarray  # (n_states,) bool

    @property
    def n_states(self) -> int:
        return len(self.state_formulas)

    @property
    def n_masks(self) -> int:
        return 1 << len(self.alphabet)

    def step(self, state: int, assignment: StateAssignment) -> int:
        return int(self.table[state, assignment_to_mask(assignment, self.alphabet)])

    def run(self, trace: Trace, start: int | None = None) -> int:
        state = self.initial if start is None else start
        for assignment in trace:
            state = self.step(state, assignment)
        return state

    def accepts(self, trace: Trace) -> bool:
        if len(trace) == 0:
            raise ValueError("traces are nonempty by definition")
        return bool(self.accepting[self.run(trace)])

    def classify(self, state: int) -> Classification:
        if self.accepting[state]:
            return Classification.ACCEPTING
        if self.dead[state]:
            return Classification.DEAD
        return Classification.LIVE


def compile_automaton(
    f: Formula,
    *,
    alphabet_cap: int = ALPHABET_CAP,
    state_cap: int = STATE_CAP,
) -> DeterministicAutomaton:
    """Explore the progression fixpoint of f into a DeterministicAutomaton."""
    alphabet = propositions(f)
    if len(alphabet) > alphabet_cap:
        raise AlphabetTooLargeError(
            f"{len(alphabet)} propositions exceed the cap of {alphabet_cap}"
        )
    n_masks = 1 << len(alphabet)
    assignments = [mask_to_assignment(m, alphabet) for m in range(n_masks)]

    initial = normalize(f)
    index: dict[tuple, int] = {_semantic_key(initial): 0}
    states: list[Formula] = [initial]
    rows: dict[int, list[int]] = {}
    queue: deque[int] = deque([0])
    while queue:
        sid = queue.popleft()
        row = []
        for assignment in assignments:
            residual = progress(states[sid], assignment)
            key = _semantic_key(residual)
            nid = index.get(key)
            if nid is None:
                if len(states) >= state_cap:
                    raise StateExplosionError(
                        f"more than {state_cap} states while compiling {render_prefix(f)}"
                    )
                if len(render_prefix(residual)) > _REBUILD_RENDER_LIMIT:
                    residual = _rebuild_compact(residual)
                nid = len(states)
                index[key] = nid
                states.append(residual)
                queue.append(nid)
            row.append(nid)
        rows[sid] = row

    table = np.asarray([rows[i] for i in range(len(states))], dtype=np.int32).reshape(
        len(states), n_masks
    )
    accepting = np.fromiter(
        (_empty_accepts(s) for s in states), dtype=bool, count=len(states)
    )
    dead = _dead_states(table, accepting)
    return DeterministicAutomaton(
        formula=f,
        alphabet=alphabet,
        state_formulas=tuple(states),
        initial=0,
        table=table,
        accepting=accepting,
        dead=dead,
    )


def _dead_states(table: np.ndarray, accepting: np.ndarray) -> np.ndarray:
    """A state is dead iff no accepting state is reachable from it."""
    n = len(accepting)
    reverse: list[list[int]] = [[] for _ in range(n)]
    for src in range(n):
        for dst in set(int(x) for x in table[src]):
            reverse[dst].append(src)
    co_reachable = accepting.copy()
    queue = deque(np.flatnonzero(accepting))
    while queue:
        dst = queue.popleft()
        for src in reverse[dst]:
            if not co_reachable[src]:
                co_reachable[src] = True
                queue.append(src)
    return ~co_reachable


# --- serialization -----------------------------------------------------------


def automaton_to_json(auto: DeterministicAutomaton) -> str:
    return json.dumps(
        {
            "formula": render_prefix(auto.formula),
            "alphabet": [str(p) for p in auto.alphabet],
            "states": [render_prefix(s) for s in auto.state_formulas],
            "initial": auto.initial,
            "accepting": [int(i) for i in np.flatnonzero(auto.accepting)],
            "dead": [int(i) for i in np.flatnonzero(auto.dead)],
            "transitions": auto.table.tolist(),
        },
        indent=2,
    )


def automaton_from_json(text: str, vocabulary: Vocabulary) -> DeterministicAutomaton:
    raw = json.loads(text)
    n = len(raw["states"])
    accepting = np.zeros(n, dtype=bool)
    accepting[raw["accepting"]] = True
    dead = np.zeros(n, dtype=bool)
    dead[raw["dead"]] = True
    return DeterministicAutomaton(
        formula=parse_prefix(raw["formula"], vocabulary),
        alphabet=tuple(vocabulary.resolve(t) for t in raw["alphabet"]),
        state_formulas=tuple(parse_prefix(s, vocabulary) for s in raw["states"]),
        initial=raw["initial"],
        table=np.asarray(raw["transitions"], dtype=np.int32),
        accepting=accepting,
        dead=dead,
    )


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _minterm(mask: int, alphabet: tuple[Proposition, ...]) -> str:
    return " & ".join(
        ("" if mask >> b & 1 else "!") + str(p) for b, p in enumerate(alphabet)
    )


def automaton_to_dot(auto: DeterministicAutomaton, name: str = "constraint") -> str:
    """Graphviz rendering: accepting states double-circled, dead states filled."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  __start [shape=point, label=""];']
    for sid, sf in enumerate(auto.state_formulas):
        attrs = [f"label={_quote(render_prefix(sf))}"]
        attrs.append("shape=doublecircle" if auto.accepting[sid] else "shape=circle")
        if auto.dead[sid]:
            attrs.append('style=filled, fillcolor="gray80"')
        lines.append(f"  s{sid} [{', '.join(attrs)}];")
    lines.append(f"  __start -> s{auto.initial};")
    by_edge: dict[tuple[int, int], list[int]] = {}
    for mask in range(auto.n_masks):
        for src in range(auto.n_states):
            by_edge.setdefault((src, int(auto.table[src, mask])), []).append(mask)
    for (src, dst), masks in sorted(by_edge.items()):
        if len(masks) == auto.n_masks:
            label = "*"
        elif len(masks) <= 3:
            label = " | ".join(_minterm(m, auto.alphabet) for m in masks)
        else:
            label = f"{len(masks)} assignments"
        lines.append(f"  s{src} -> s{dst} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
