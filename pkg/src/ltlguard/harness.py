"""Scripted evaluation harness: run task fixtures under three agent modes.

The three modes mirror the usual ablation ladder:

* ``base`` replays the task's example program with no knowledge of the
  constraints; a shadow product run scores how safe that was.
* ``nl_constraints`` plans to the goal while masking actions that would kill
  a constraint, but terminates unconditionally, so trailing obligations slip.
* ``safety_chip`` pushes every step through the monitor, splices repair
  plans in front of rejected actions, discharges reported obligations before
  stopping, and aborts rather than commit anything unsafe.

Agents are deterministic searches, not language models, which keeps episode
transcripts reproducible; the reprompting messages a model would receive are
still generated and recorded on every intervention.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

from .automaton import Classification
from .errors import UnsatisfiableConstraintsError
from .explain import explain, format_error_message, reprompt_message
from .fixtures import TaskFixture
from .ltl import StateAssignment, parse_proposition
from .monitor import DEFAULT_VIOLATION_RETRY_CAP, open_session
from .translate import (
    Constraint,
    ConstraintSet,
    assemble_constraint_set,
    translate_constraint,
)
from .world import ORIGIN, Action, HouseWorld, Infeasible, predict_effects

AGENT_MODES = ("base", "nl_constraints", "safety_chip")
CONSTRAINT_SOURCES = ("expert_verified", "translated")

# One episode may commit at most this many actions before we call it stuck.
STEP_BUDGET = 400
_PLAN_DEPTH_CAP = 24
_PLAN_NODE_CAP = 50_000


@dataclass(frozen=True)
class AuditEntry:
    """One gate decision: what was proposed, what the verdict was."""

    action: str
    verdict: str  # safe | violation | terminal_violation | unsatisfiable | infeasible
    committed: bool
    detail: str = ""


@dataclass
class EpisodeResult:
    task_name: str
    agent_mode: str
    success: bool
    safe: bool
    aborted: bool
    violations: int
    actions: tuple[str, ...]
    trace: tuple[StateAssignment, ...]
    audit: tuple[AuditEntry, ...]
    messages: tuple[str, ...] = ()


@dataclass(frozen=True)
class SuiteMetrics:
    episodes: int
    success_rate: float
    safety_rate: float
    aborted: int


def compute_metrics(results) -> SuiteMetrics:
    results = list(results)
    n = len(results)
    if n == 0:
        return SuiteMetrics(0, 0.0, 0.0, 0)
    return SuiteMetrics(
        episodes=n,
        success_rate=sum(r.success for r in results) / n,
        safety_rate=sum(r.safe for r in results) / n,
        aborted=sum(r.aborted for r in results),
    )


def build_constraints(
    task: TaskFixture, source: str = "expert_verified", backend=None
) -> tuple[Constraint, ...]:
    if source == "expert_verified":
        return task.expert_constraints()
    if source == "translated":
        vocab = task.vocabulary()
        return tuple(
            translate_constraint(spec.nl, vocab, backend, constraint_id=k)
            for k, spec in enumerate(task.constraints)
        )
    raise ValueError(f"unknown constraint source {source!r}")


# --- planning over (world, product vector) nodes -------------------------------


def _world_key(world: HouseWorld):
    return (
        world.agent_location,
        tuple(
            (n, p.location, p.container, p.support, p.grabbed, p.touched)
            for n, p in sorted(world.portables.items())
        ),
        tuple(
            (n, f.open, f.switched_on, f.touched)
            for n, f in sorted(world.fixtures.items())
        ),
    )


class _Planner:
    """Breadth-first search through safe, feasible actions.

    Candidate actions are restricted to the ones that can matter: walking
    anywhere, plus manipulations whose effect propositions occur in the
    constraint alphabet or the task goal. Without that restriction the
    search would happily enumerate every way of stacking every object on
    every piece of furniture.
    """

    def __init__(self, task: TaskFixture, cs: ConstraintSet):
        self.cs = cs
        relevant = set(cs.alphabet)
        relevant.update(parse_proposition(p) for p, _ in task.goal)
        self.put_targets = {
            p.args for p in relevant if p.predicate == "is_on"
        }
        self.putin_targets = {
            p.args for p in relevant if p.predicate == "is_in"
        }
        self.grabbable = {p.args[0] for p in relevant if p.predicate == "is_grabbed"}
        self.grabbable.update(obj for obj, _ in self.put_targets)
        self.grabbable.update(obj for obj, _ in self.putin_targets)
        self.switch_rel = {
            p.args[0] for p in relevant if p.predicate == "is_switchedon"
        }
        self.open_rel = {p.args[0] for p in relevant if p.predicate == "is_open"}
        self.open_rel.update(dest for _, dest in self.putin_targets)
        # a relevant portable seeded inside a container makes it relevant too
        for name, location in task.world.portables:
            if name in self.grabbable:
                self.open_rel.add(location)
        self.touch_rel = {p.args[0] for p in relevant if p.predicate == "is_touched"}

    def candidates(self, world: HouseWorld) -> list[Action]:
        acts = [
            Action("walk", (loc,)) for loc in world.locations if loc != ORIGIN
        ]
        for name, portable in world.portables.items():
            if name in self.grabbable and not portable.grabbed:
                acts.append(Action("grab", (name,)))
        for name, fixture in world.fixtures.items():
            if fixture.openable and name in self.open_rel:
                acts.append(Action("close" if fixture.open else "open", (name,)))
            if fixture.switchable and name in self.switch_rel:
                acts.append(
                    Action("switch off" if fixture.switched_on else "switch on", (name,))
                )
            if name in self.touch_rel and not fixture.touched:
                acts.append(Action("touch", (name,)))
        here = world.agent_location
        for name in world.held_objects():
            if (name, here) in self.put_targets or name in self.grabbable:
                acts.append(Action("put", (name, here)))
            if (name, here) in self.putin_targets:
                acts.append(Action("put in", (name, here)))
        return acts

    def _safe_step(self, vector, predicted):
        if self.cs.is_empty:
            return vector, True
        table = self.cs.dead_table
        nxt = table.step_vector(vector, predicted)
        return nxt, table.classify_vector(nxt) is not Classification.DEAD

    def plan(
        self,
        world: HouseWorld,
        vector,
        goal_test: Callable[[HouseWorld, tuple], bool],
        depth_cap: int = _PLAN_DEPTH_CAP,
    ) -> list[Action] | None:
        """Shortest safe action sequence to a goal node, or None."""
        if goal_test(world, vector):
            return []
        seen = {(_world_key(world), vector)}
        queue = deque([(world, vector, ())])
        while queue:
            cur_world, cur_vec, path = queue.popleft()
            if len(path) >= depth_cap:
                continue
            for action in self.candidates(cur_world):
                predicted = predict_effects(cur_world, action)
                if isinstance(predicted, Infeasible):
                    continue
                nxt, ok = self._safe_step(cur_vec, predicted)
                if not ok:
                    continue
                nxt_world = cur_world.clone()
                nxt_world._apply(action)
                key = (_world_key(nxt_world), nxt)
                if key in seen:
                    continue
                seen.add(key)
                if len(seen) > _PLAN_NODE_CAP:
                    return None
                nxt_path = path + (action,)
                if goal_test(nxt_world, nxt):
                    return list(nxt_path)
                queue.append((nxt_world, nxt, nxt_path))
        return None

    def action_admissible(self, world: HouseWorld, vector, action: Action) -> bool:
        predicted = predict_effects(world, action)
        if isinstance(predicted, Infeasible):
            return False
        return self._safe_step(vector, predicted)[1]

    def components_accepting(self, vector, components) -> bool:
        return all(
            bool(self.cs.automata[k].accepting[vector[k]]) for k in components
        )


# --- the three agents -----------------------------------------------------------


def _program(task: TaskFixture) -> list[Action]:
    return [Action.parse(line) for line in task.example_program]


class _ShadowRun:
    """Raw product tracking for ungated agents."""

    def __init__(self, cs: ConstraintSet, initial: StateAssignment):
        self.cs = cs
        self.dead_seen = False
        self.vector = ()
        if not cs.is_empty:
            table = cs.dead_table
            self.vector = table.step_vector(table.initial_vector, initial)
            self.dead_seen = (
                table.classify_vector(self.vector) is Classification.DEAD
            )

    def step(self, assignment: StateAssignment) -> bool:
        """Advance; returns True while still live."""
        if self.cs.is_empty or self.dead_seen:
            return not self.dead_seen
        table = self.cs.dead_table
        self.vector = table.step_vector(self.vector, assignment)
        if table.classify_vector(self.vector) is Classification.DEAD:
            self.dead_seen = True
        return not self.dead_seen

    def accepting_now(self) -> bool:
        if self.cs.is_empty:
            return True
        if self.dead_seen:
            return False
        return (
            self.cs.dead_table.classify_vector(self.vector)
            is Classification.ACCEPTING
        )


def _finish(task, mode, *, success, safe, aborted, violations, actions, trace,
            audit, messages=()):
    return EpisodeResult(
        task_name=task.name,
        agent_mode=mode,
        success=success,
        safe=safe,
        aborted=aborted,
        violations=violations,
        actions=tuple(actions),
        trace=tuple(trace),
        audit=tuple(audit),
        messages=tuple(messages),
    )


def _run_ungated(task, cs, plan_actions, mode) -> EpisodeResult:
    """Execute a fixed action list with no gate, scoring safety afterwards."""
    world = task.build_world()
    shadow = _ShadowRun(cs, world.snapshot())
    trace = [world.snapshot()]
    actions: list[str] = []
    audit: list[AuditEntry] = []
    executable = True
    for action in plan_actions:
        predicted = predict_effects(world, action)
        if isinstance(predicted, Infeasible):
            executable = False
            audit.append(
                AuditEntry(action.render(), "infeasible", False, predicted.reason)
            )
            continue
        assignment = world.apply(action)
        live = shadow.step(assignment)
        trace.append(assignment)
        actions.append(action.render())
        audit.append(
            AuditEntry(action.render(), "safe" if live else "violation", True)
        )
    accepted = shadow.accepting_now()
    actions.append("DONE")
    audit.append(
        AuditEntry("DONE", "safe" if accepted else "terminal_violation", True)
    )
    return _finish(
        task,
        mode,
        success=executable and task.goal_satisfied(world.snapshot()),
        safe=(not shadow.dead_seen) and accepted,
        aborted=False,
        violations=0,
        actions=actions,
        trace=trace,
        audit=audit,
    )


def _run_base(task, cs) -> EpisodeResult:
    return _run_ungated(task, cs, _program(task), "base")


def _run_nl_constraints(task, cs) -> EpisodeResult:
    """Constraint-aware planner without termination gating."""
    world = task.build_world()
    shadow = _ShadowRun(cs, world.snapshot())
    plan = None
    if not shadow.dead_seen:
        planner = _Planner(task, cs)
        plan = planner.plan(
            world,
            shadow.vector,
            lambda w, v: task.goal_satisfied(w.snapshot()),
        )
    if plan is None:
        # no safe route it can see; it shrugs and follows the example program
        plan = _program(task)
    return _run_ungated(task, cs, plan, "nl_constraints")


def _run_safety_chip(task, cs, backend, retry_cap) -> EpisodeResult:
    world = task.build_world()
    audit: list[AuditEntry] = []
    messages: list[str] = []
    actions: list[str] = []
    violations = 0

    try:
        session = open_session(cs, world.snapshot())
    except UnsatisfiableConstraintsError as err:
        expl = explain(err.report, cs.constraints, backend)
        messages.append(format_error_message(expl))
        audit.append(
            AuditEntry("<initial state>", "unsatisfiable", False, expl.reason_text)
        )
        return _finish(
            task, "safety_chip",
            success=False, safe=True, aborted=True, violations=0,
            actions=[], trace=[world.snapshot()], audit=audit, messages=messages,
        )

    planner = _Planner(task, cs)
    queue = deque(_program(task))
    queue.append(Action("DONE", ()))
    rejections_in_a_row = 0
    aborted = False
    done = False

    def splice(repair: list[Action], then: Action | None) -> None:
        items = list(repair) + ([then] if then is not None else [])
        queue.extendleft(reversed(items))

    while queue:
        if len(actions) > STEP_BUDGET:
            aborted = True
            break
        action = queue.popleft()

        if action.is_done:
            if not task.goal_satisfied(world.snapshot()):
                repair = planner.plan(
                    world, session.current,
                    lambda w, v: task.goal_satisfied(w.snapshot()),
                )
                if repair is None:
                    aborted = True
                    break
                splice(repair, action)
                continue
            verdict = session.check_termination()
            if verdict.is_safe:
                actions.append("DONE")
                audit.append(AuditEntry("DONE", "safe", True))
                done = True
                break
            violations += 1
            rejections_in_a_row += 1
            message = reprompt_message(session, verdict.report, backend)
            messages.append(message)
            audit.append(
                AuditEntry("DONE", "terminal_violation", False, message)
            )
            if rejections_in_a_row > retry_cap:
                aborted = True
                break
            comps = tuple(
                cs.component_of(cid)
                for cid in verdict.report.attributed_constraints
            )
            repair = planner.plan(
                world, session.current,
                lambda w, v: planner.components_accepting(v, comps),
            )
            if repair is None:
                aborted = True
                break
            splice(repair, action)
            continue

        predicted = predict_effects(world, action)
        if isinstance(predicted, Infeasible):
            # example programs may skip legwork (a grab before any walk);
            # route to a state where the action applies, then retry it
            repair = planner.plan(
                world, session.current,
                lambda w, v: planner.action_admissible(w, v, action),
            )
            if repair is None:
                audit.append(
                    AuditEntry(action.render(), "infeasible", False, predicted.reason)
                )
                aborted = True
                break
            splice(repair, action)
            continue

        verdict = session.check_action(predicted, action.render())
        if verdict.is_safe:
            assignment = world.apply(action)
            session.commit(assignment, action.render())
            actions.append(action.render())
            audit.append(AuditEntry(action.render(), "safe", True))
            rejections_in_a_row = 0
            continue

        violations += 1
        rejections_in_a_row += 1
        message = reprompt_message(session, verdict.report, backend)
        messages.append(message)
        audit.append(AuditEntry(action.render(), "violation", False, message))
        if rejections_in_a_row > retry_cap:
            aborted = True
            break
        repair = planner.plan(
            world, session.current,
            lambda w, v: planner.action_admissible(w, v, action),
        )
        if repair is None:
            aborted = True
            break
        splice(repair, action)

    return _finish(
        task, "safety_chip",
        success=done and task.goal_satisfied(world.snapshot()),
        safe=True,  # the monitor never let a dead step through
        aborted=aborted,
        violations=violations,
        actions=actions,
        trace=list(session.committed_trace),
        audit=audit,
        messages=messages,
    )


def run_episode(
    task: TaskFixture,
    agent_mode: str,
    *,
    backend=None,
    constraint_source: str = "expert_verified",
    retry_cap: int = DEFAULT_VIOLATION_RETRY_CAP,
    kernel_backend: str | None = None,
) -> EpisodeResult:
    """Run one task under one agent mode and score it."""
    if agent_mode not in AGENT_MODES:
        raise ValueError(f"unknown agent mode {agent_mode!r}")
    constraints = build_constraints(task, constraint_source, backend)
    cs = assemble_constraint_set(constraints, kernel_backend=kernel_backend)
    if agent_mode == "base":
        return _run_base(task, cs)
    if agent_mode == "nl_constraints":
        return _run_nl_constraints(task, cs)
    return _run_safety_chip(task, cs, backend, retry_cap)


def run_suite(
    tasks,
    agent_mode: str,
    **episode_kwargs,
) -> list[EpisodeResult]:
    return [run_episode(task, agent_mode, **episode_kwargs) for task in tasks]
