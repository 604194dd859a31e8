"""Runtime constraint monitor.

A session holds the product-state vector across committed steps. A proposed
action is judged by stepping the vector with the action's predicted
assignment and classifying the result: a dead product state means no
continuation can satisfy the conjunction, so the action must be pruned
before execution. Termination ("DONE") is only safe from an accepting
product state.

Verdicts are pure queries; only commit() advances the session. The caller
owns the retry policy; DEFAULT_VIOLATION_RETRY_CAP is the conventional cap
before a live-but-stuck episode is aborted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .automaton import Classification
from .errors import (
    CommitAfterViolationError,
    LtlGuardError,
    UnknownTokenError,
    UnsatisfiableConstraintsError,
)
from .ltl import StateAssignment, Trace, parse_proposition, render_prefix
from .product import ProductState
from .translate import ConstraintSet

DEFAULT_VIOLATION_RETRY_CAP = 5

# Rendering of the termination action in reports and error messages.
TERMINAL_ACTION = "STOP"


class VerdictKind(Enum):
    SAFE = "safe"
    VIOLATION = "violation"
    UNSATISFIABLE = "unsatisfiable"


@dataclass(frozen=True)
class ViolationReport:
    """Everything the explainer needs about one rejected action.

    attributed_constraints lists the ids whose own automaton entered a dead
    state. When only the product died (interacting constraints, no single
    component dead) product_only is set and the ids are the constraints
    still holding unmet obligations. terminal marks a rejected STOP.
    """

    proposed_action: str
    safe_assignment: StateAssignment
    violated_assignment: StateAssignment
    attributed_constraints: tuple[int, ...]
    product_only: bool = False
    terminal: bool = False

    def __post_init__(self):
        if not self.attributed_constraints:
            raise ValueError("a violation must attribute at least one constraint")


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    report: ViolationReport | None = None

    @property
    def is_safe(self) -> bool:
        return self.kind is VerdictKind.SAFE

    @staticmethod
    def safe() -> "Verdict":
        return Verdict(VerdictKind.SAFE)

    @staticmethod
    def violation(report: ViolationReport) -> "Verdict":
        return Verdict(VerdictKind.VIOLATION, report)

    @staticmethod
    def unsatisfiable(report: ViolationReport | None = None) -> "Verdict":
        return Verdict(VerdictKind.UNSATISFIABLE, report)


class MonitorSession:
    """Single-writer monitor state over one constraint set.

    Verdict queries (check_action, check_termination, pending_obligations)
    are read-only and may run concurrently; commit requires exclusive
    access. Construct through open_session, which vets the initial state.
    """

    __slots__ = ("constraint_set", "current", "committed_trace")

    def __init__(
        self,
        constraint_set: ConstraintSet,
        current: ProductState,
        committed_trace: list[StateAssignment],
    ):
        self.constraint_set = constraint_set
        self.current = current
        self.committed_trace = committed_trace

    @property
    def last_assignment(self) -> StateAssignment:
        return self.committed_trace[-1]

    # Convenience method forms of the module-level operations.
    def check_action(self, predicted: StateAssignment, action: str = "") -> Verdict:
        return check_action(self, predicted, action)

    def commit(self, predicted: StateAssignment, action: str = "") -> "MonitorSession":
        return commit(self, predicted, action)

    def check_termination(self, action: str = TERMINAL_ACTION) -> Verdict:
        return check_termination(self, action)

    def pending_obligations(self) -> list[tuple[int, str]]:
        return pending_obligations(self)


def _ids(cs: ConstraintSet, components: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(cs.constraints[k].id for k in components)


def open_session(cs: ConstraintSet, initial: StateAssignment) -> MonitorSession:
    """Start monitoring with the world's initial assignment as step 0.

    Raises UnsatisfiableConstraintsError when the product is dead already,
    either because the constraints contradict each other or because the
    initial state itself violates them; the error carries a .report with
    the attribution so callers can abort with an explanation.
    """
    if cs.is_empty:
        return MonitorSession(cs, (), [initial])
    table = cs.dead_table
    nxt = table.step_vector(table.initial_vector, initial)
    dead = table.dead_components(nxt)
    if dead:
        report = ViolationReport(
            proposed_action="<initial state>",
            safe_assignment=initial,
            violated_assignment=initial,
            attributed_constraints=_ids(cs, dead),
        )
    elif table.classify_vector(nxt) is Classification.DEAD:
        report = ViolationReport(
            proposed_action="<initial state>",
            safe_assignment=initial,
            violated_assignment=initial,
            attributed_constraints=_ids(cs, table.non_accepting_components(nxt)),
            product_only=True,
        )
    else:
        return MonitorSession(cs, nxt, [initial])
    names = ", ".join(
        f'"{cs.constraints[cs.component_of(i)].nl_text}"'
        for i in report.attributed_constraints
    )
    err = UnsatisfiableConstraintsError(
        f"constraints are unsatisfiable from the initial state: {names}"
    )
    err.report = report
    raise err


def check_action(
    session: MonitorSession, predicted: StateAssignment, action: str = ""
) -> Verdict:
    """Judge one proposed step without mutating the session."""
    cs = session.constraint_set
    if cs.is_empty:
        return Verdict.safe()
    table = cs.dead_table
    nxt = table.step_vector(session.current, predicted)
    dead = table.dead_components(nxt)
    if dead:
        return Verdict.violation(
            ViolationReport(
                proposed_action=action,
                safe_assignment=session.last_assignment,
                violated_assignment=predicted,
                attributed_constraints=_ids(cs, dead),
            )
        )
    if table.classify_vector(nxt) is Classification.DEAD:
        # No single automaton died, so every constraint still holding an
        # obligation is part of the conflict.
        return Verdict.violation(
            ViolationReport(
                proposed_action=action,
                safe_assignment=session.last_assignment,
                violated_assignment=predicted,
                attributed_constraints=_ids(cs, table.non_accepting_components(nxt)),
                product_only=True,
            )
        )
    return Verdict.safe()


def commit(
    session: MonitorSession, predicted: StateAssignment, action: str = ""
) -> MonitorSession:
    """Advance the session by a step that check_action approves."""
    verdict = check_action(session, predicted, action)
    if not verdict.is_safe:
        err = CommitAfterViolationError(
            f'refusing to commit "{action or "step"}": it leads to a dead state'
        )
        err.report = verdict.report
        raise err
    if not session.constraint_set.is_empty:
        table = session.constraint_set.dead_table
        session.current = table.step_vector(session.current, predicted)
    session.committed_trace.append(predicted)
    return session


def check_termination(
    session: MonitorSession, action: str = TERMINAL_ACTION
) -> Verdict:
    """Safe iff terminating now leaves every constraint satisfied."""
    cs = session.constraint_set
    if cs.is_empty:
        return Verdict.safe()
    table = cs.dead_table
    if table.classify_vector(session.current) is Classification.ACCEPTING:
        return Verdict.safe()
    return Verdict.violation(
        ViolationReport(
            proposed_action=action,
            safe_assignment=session.last_assignment,
            violated_assignment=session.last_assignment,
            attributed_constraints=_ids(
                cs, table.non_accepting_components(session.current)
            ),
            terminal=True,
        )
    )


def pending_obligations(session: MonitorSession) -> list[tuple[int, str]]:
    """(constraint id, residual formula) for live non-accepting components."""
    cs = session.constraint_set
    out: list[tuple[int, str]] = []
    if cs.is_empty:
        return out
    for k, (auto, s) in enumerate(zip(cs.automata, session.current)):
        if not bool(auto.dead[s]) and not bool(auto.accepting[s]):
            out.append((cs.constraints[k].id, render_prefix(auto.state_formulas[s])))
    return out


def replay_session(cs: ConstraintSet, trace: Trace) -> MonitorSession:
    """Rebuild a session from a committed trace (step 0 is the initial state)."""
    if not trace:
        raise ValueError("cannot replay an empty trace")
    session = open_session(cs, trace[0])
    for assignment in trace[1:]:
        commit(session, assignment)
    return session


# --- trace replay files ------------------------------------------------------
#
# One JSON record per line: {"action": "walk to kitchen",
#                            "state": {"agent_at(kitchen)": true, ...}}
# The first record carries the initial state (its action is ignored by
# convention and usually "<init>").


def parse_trace_record(text: str) -> tuple[str, StateAssignment]:
    record = json.loads(text)
    if not isinstance(record, dict):
        raise ValueError("record is not an object")
    action = record.get("action")
    state = record.get("state")
    if not isinstance(action, str) or not isinstance(state, dict):
        raise ValueError('record needs "action": string and "state": object')
    values = {}
    for prop, value in state.items():
        if not isinstance(value, bool):
            raise ValueError(f"state value for {prop!r} is not a boolean")
        values[parse_proposition(prop)] = value
    return action, StateAssignment(values)


def iter_trace_records(
    lines: Iterable[str],
) -> Iterator[tuple[int, str, StateAssignment]]:
    """Yield (line number, action, assignment); wrap malformed lines."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            action, assignment = parse_trace_record(line)
        except (ValueError, UnknownTokenError) as exc:
            raise LtlGuardError(f"trace line {lineno}: {exc}") from exc
        yield lineno, action, assignment


def dump_trace_record(action: str, assignment: StateAssignment) -> str:
    return json.dumps(
        {"action": action, "state": {str(p): bool(v) for p, v in assignment.items()}},
        sort_keys=False,
    )
