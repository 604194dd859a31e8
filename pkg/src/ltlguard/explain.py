"""Violation explanations and reprompting error messages.

The automaton decides validity; a language model is only ever asked to put
the verdict into words. When no backend is available (or it fails), a
deterministic template produces the explanation instead, so the
reprompting loop works fully offline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import BackendError
from .ltl import Proposition, StateAssignment, propositions
from .monitor import ViolationReport
from .translate import Constraint, _prompt_asset


class ExplanationSource(Enum):
    LLM = "llm"
    TEMPLATE = "template"


@dataclass(frozen=True)
class AgentQuery:
    """Prompt contents asking a model to verbalize one violation."""

    constraints_nl: tuple[str, ...]
    invalid_action: str
    safe_assignment_rendering: str
    violated_assignment_rendering: str

    def render(self) -> str:
        return _prompt_asset("agent_query.txt").format(
            constraints=json.dumps(list(self.constraints_nl)),
            invalid_action=self.invalid_action,
            safe=self.safe_assignment_rendering,
            violated=self.violated_assignment_rendering,
        )


@dataclass(frozen=True)
class ViolationExplanation:
    reason_text: str
    attributed_constraints: tuple[int, ...]
    source: ExplanationSource

    def __post_init__(self):
        if not self.reason_text:
            raise ValueError("explanation must not be empty")


def constraint_alphabet(constraints) -> tuple[Proposition, ...]:
    """Union alphabet over constraint formulas, first occurrence first."""
    seen: dict[Proposition, None] = {}
    for c in constraints:
        for p in propositions(c.formula):
            seen.setdefault(p, None)
    return tuple(seen)


def render_assignment(
    assignment: StateAssignment, alphabet: tuple[Proposition, ...]
) -> str:
    """Conjunction syntax over the union alphabet: ``!p & q & !r``."""
    return " & ".join(
        str(p) if assignment.value(p) else f"!{p}" for p in alphabet
    )


def build_agent_query(
    report: ViolationReport,
    constraints: tuple[Constraint, ...],
    alphabet: tuple[Proposition, ...] | None = None,
) -> AgentQuery:
    """Fill the agent-query prompt for one report.

    alphabet fixes the conjunct order of the assignment lines; by default
    propositions appear in constraint-occurrence order.
    """
    if alphabet is None:
        alphabet = constraint_alphabet(constraints)
    return AgentQuery(
        constraints_nl=tuple(c.nl_text for c in constraints),
        invalid_action=report.proposed_action,
        safe_assignment_rendering=render_assignment(report.safe_assignment, alphabet),
        violated_assignment_rendering=render_assignment(
            report.violated_assignment, alphabet
        ),
    )


def _template_reason(
    report: ViolationReport,
    constraints: tuple[Constraint, ...],
    obligations: tuple[tuple[int, str], ...],
) -> str:
    by_id = {c.id: c for c in constraints}
    action = report.proposed_action
    if report.product_only:
        names = [f'"{by_id[i].nl_text}"' for i in report.attributed_constraints]
        if len(names) == 1:
            parts = [
                f'The action "{action}" leaves the constraint {names[0]}'
                " impossible to satisfy alongside the other constraints."
            ]
        else:
            joint = " together with ".join(names)
            parts = [
                f'The action "{action}" violates the constraints {joint} jointly.'
            ]
    else:
        parts = [
            f'The action "{action}" violates the constraint "{by_id[i].nl_text}".'
            for i in report.attributed_constraints
        ]
    if report.terminal and obligations:
        remaining = "; ".join(residual for _, residual in obligations)
        parts.append(f"The following obligations remain: {remaining}.")
    return " ".join(parts)


def explain(
    report: ViolationReport,
    constraints: tuple[Constraint, ...],
    backend=None,
    *,
    obligations: tuple[tuple[int, str], ...] = (),
) -> ViolationExplanation:
    """Produce a reason for the violation; never fails.

    obligations is the pending_obligations listing for terminal reports,
    surfaced so the agent learns what still has to happen before STOP.
    """
    if backend is not None:
        try:
            text = backend.complete(build_agent_query(report, constraints).render())
            if text.strip():
                return ViolationExplanation(
                    reason_text=text.strip(),
                    attributed_constraints=report.attributed_constraints,
                    source=ExplanationSource.LLM,
                )
        except BackendError:
            pass
    return ViolationExplanation(
        reason_text=_template_reason(report, constraints, obligations),
        attributed_constraints=report.attributed_constraints,
        source=ExplanationSource.TEMPLATE,
    )


def format_error_message(expl: ViolationExplanation) -> str:
    return f"Error: {expl.reason_text} The correct plan would be:"


def reprompt_message(session, report: ViolationReport, backend=None) -> str:
    """One-call path from a monitor report to the reprompting message."""
    obligations = tuple(session.pending_obligations()) if report.terminal else ()
    expl = explain(
        report, session.constraint_set.constraints, backend, obligations=obligations
    )
    return format_error_message(expl)
