"""Explicit product of per-constraint automata over the union alphabet.

Each constraint compiles to its own automaton; the runtime state is the
vector of component states, which keeps per-constraint attribution free.
Deadness of the product is NOT the disjunction of component deadness:
constraints sharing propositions can be jointly unsatisfiable while every
component still sees a path (G !p together with F p). Exact classification
therefore needs reachability over the explicit product, computed here once
and memoized in a ProductDeadTable.

Any vector containing a dead component state is collapsed into a single
absorbing sink (encoded -1): component death already implies product death,
and the collapse keeps the reachable code set small.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .automaton import (
    ALPHABET_CAP,
    Classification,
    DeterministicAutomaton,
    assignment_to_mask,
)
from .errors import AlphabetTooLargeError, StateExplosionError
from .ltl import Proposition, StateAssignment

ProductState = tuple[int, ...]

SINK = -1

DEFAULT_REACH_CAP = 50_000

# hard ceiling on transition-table entries (n_reachable * 2^|alphabet|)
_TABLE_ENTRY_CAP = 1 << 27


def union_alphabet(
    automata: tuple[DeterministicAutomaton, ...] | list[DeterministicAutomaton],
) -> tuple[Proposition, ...]:
    """Union of component alphabets, ordered by first occurrence."""
    seen: dict[Proposition, None] = {}
    for auto in automata:
        for p in auto.alphabet:
            seen.setdefault(p, None)
    return tuple(seen)


def product_step(
    automata: tuple[DeterministicAutomaton, ...] | list[DeterministicAutomaton],
    vector: ProductState,
    assignment: StateAssignment,
) -> ProductState:
    """Step every component by its own alphabet's restriction of assignment."""
    if len(vector) != len(automata):
        raise ValueError(
            f"product state has {len(vector)} components, expected {len(automata)}"
        )
    return tuple(a.step(s, assignment) for a, s in zip(automata, vector))


def _pack(automata, alphabet):
    m_all = 1 << len(alphabet)
    position = {p: b for b, p in enumerate(alphabet)}
    masks = np.arange(m_all, dtype=np.int64)
    steps = []
    dead_rows = []
    acc_rows = []
    offsets = np.zeros(len(automata), dtype=np.int64)
    n_states = np.zeros(len(automata), dtype=np.int64)
    radices = np.zeros(len(automata), dtype=np.int64)
    total = 0
    radix = 1
    for i, auto in enumerate(automata):
        local = np.zeros(m_all, dtype=np.int64)
        for b_local, p in enumerate(auto.alphabet):
            local |= ((masks >> position[p]) & 1) << b_local
        steps.append(auto.table[:, local])
        dead_rows.append(auto.dead)
        acc_rows.append(auto.accepting)
        offsets[i] = total
        n_states[i] = auto.n_states
        radices[i] = radix
        total += auto.n_states
        radix *= auto.n_states
    return (
        np.ascontiguousarray(np.concatenate(steps, axis=0), dtype=np.int32),
        offsets,
        n_states,
        np.concatenate(dead_rows),
        np.concatenate(acc_rows),
        radices,
        m_all,
    )


@dataclass(eq=False)
class ProductDeadTable:
    """Reachable product codes with transition, accepting and dead arrays.

    reachable is sorted; trans[r, m] is the index of the successor of
    reachable[r] under union mask m, or SINK. Built eagerly so that runtime
    pruning gets O(1) verdicts per proposed action.
    """

    components: tuple[DeterministicAutomaton, ...]
    alphabet: tuple[Proposition, ...]
    backend: str
    initial_vector: ProductState
    reachable: np.ndarray
    trans: np.ndarray
    accepting: np.ndarray
    dead: np.ndarray
    _radices: np.ndarray = field(repr=False)

    @property
    def n_reachable(self) -> int:
        return int(self.reachable.size)

    @property
    def n_masks(self) -> int:
        return 1 << len(self.alphabet)

    @property
    def initial_index(self) -> int:
        if self._component_dead(self.initial_vector):
            return SINK
        return self.index_of(self.initial_vector)

    def encode(self, vector: ProductState) -> int:
        return int(sum(int(s) * int(r) for s, r in zip(vector, self._radices)))

    def decode(self, code: int) -> ProductState:
        return tuple(
            int((code // int(r)) % a.n_states)
            for a, r in zip(self.components, self._radices)
        )

    def _component_dead(self, vector: ProductState) -> bool:
        return any(bool(a.dead[s]) for a, s in zip(self.components, vector))

    def index_of(self, vector: ProductState) -> int:
        """Index into reachable, or SINK for component-dead vectors.

        Raises KeyError for live vectors outside the explored region.
        """
        if self._component_dead(vector):
            return SINK
        code = self.encode(vector)
        pos = int(np.searchsorted(self.reachable, code))
        if pos == self.n_reachable or int(self.reachable[pos]) != code:
            raise KeyError(f"product state {vector} not reachable from the initial vector")
        return pos

    def mask_of(self, assignment: StateAssignment) -> int:
        return assignment_to_mask(assignment, self.alphabet)

    def step_index(self, index: int, mask: int) -> int:
        if index == SINK:
            return SINK
        return int(self.trans[index, mask])

    def classify_index(self, index: int) -> Classification:
        if index == SINK or bool(self.dead[index]):
            return Classification.DEAD
        if bool(self.accepting[index]):
            return Classification.ACCEPTING
        return Classification.LIVE

    def classify_vector(self, vector: ProductState) -> Classification:
        return self.classify_index(self.index_of(vector))

    def step_vector(
        self, vector: ProductState, assignment: StateAssignment
    ) -> ProductState:
        return product_step(self.components, vector, assignment)

    def dead_components(self, vector: ProductState) -> tuple[int, ...]:
        return tuple(
            i for i, (a, s) in enumerate(zip(self.components, vector)) if bool(a.dead[s])
        )

    def non_accepting_components(self, vector: ProductState) -> tuple[int, ...]:
        return tuple(
            i
            for i, (a, s) in enumerate(zip(self.components, vector))
            if not bool(a.accepting[s])
        )


def build_dead_table(
    automata: tuple[DeterministicAutomaton, ...] | list[DeterministicAutomaton],
    *,
    backend: str | None = None,
    initial: ProductState | None = None,
    reach_cap: int = DEFAULT_REACH_CAP,
) -> ProductDeadTable:
    components = tuple(automata)
    if not components:
        raise ValueError("cannot build a product over zero automata")
    alphabet = union_alphabet(components)
    if len(alphabet) > ALPHABET_CAP:
        raise AlphabetTooLargeError(
            f"union alphabet has {len(alphabet)} propositions, cap is {ALPHABET_CAP}"
        )
    picked = _kernels.resolve_backend(backend)
    steps, offsets, n_states, dead_flat, acc_flat, radices, m_all = _pack(
        components, alphabet
    )
    if initial is None:
        initial = tuple(a.initial for a in components)

    if any(bool(a.dead[s]) for a, s in zip(components, initial)):
        # the start itself is the sink; nothing live is reachable
        return ProductDeadTable(
            components=components,
            alphabet=alphabet,
            backend=picked,
            initial_vector=initial,
            reachable=np.empty(0, dtype=np.int64),
            trans=np.empty((0, m_all), dtype=np.int32),
            accepting=np.empty(0, dtype=bool),
            dead=np.empty(0, dtype=bool),
            _radices=radices,
        )

    start_code = int(sum(int(s) * int(r) for s, r in zip(initial, radices)))
    try:
        reachable = _kernels.explore(
            picked,
            steps,
            offsets,
            n_states,
            dead_flat,
            radices,
            np.int64(start_code),
            m_all,
            reach_cap,
        )
    except ValueError as exc:
        raise StateExplosionError(
            f"product exceeded the reachability cap of {reach_cap} states"
        ) from exc
    if reachable.size * m_all > _TABLE_ENTRY_CAP:
        raise StateExplosionError(
            f"product table would need {reachable.size * m_all} entries"
        )
    trans = _kernels.fill(picked, reachable, steps, offsets, n_states, dead_flat, radices, m_all)
    accepting = _kernels.accepting(picked, reachable, offsets, n_states, acc_flat, radices)
    dead = _kernels.dead(picked, trans, accepting)
    return ProductDeadTable(
        components=components,
        alphabet=alphabet,
        backend=picked,
        initial_vector=initial,
        reachable=reachable,
        trans=trans,
        accepting=np.asarray(accepting, dtype=bool),
        dead=np.asarray(dead, dtype=bool),
        _radices=radices,
    )


def classify_product(
    automata: tuple[DeterministicAutomaton, ...] | list[DeterministicAutomaton],
    vector: ProductState,
    table: ProductDeadTable,
) -> Classification:
    """Classify an arbitrary vector, rebuilding from it if it lies off-table."""
    try:
        return table.classify_vector(vector)
    except KeyError:
        rebuilt = build_dead_table(tuple(automata), backend=table.backend, initial=vector)
        return rebuilt.classify_index(rebuilt.initial_index)
