"""Monitor session behavior: verdicts, attribution, replay, termination."""

import random

import pytest

from corpus import DEMO_CONSTRAINT_PAIRS, DEMO_OBJECTS
from randform import random_formula

from ltlguard.automaton import compile_automaton
from ltlguard.errors import (
    CommitAfterViolationError,
    LtlGuardError,
    UnsatisfiableConstraintsError,
)
from ltlguard.ltl import (
    STANDARD_PREDICATES,
    StateAssignment,
    Vocabulary,
    evaluate_finite_trace,
    parse_prefix,
    parse_proposition,
    propositions,
)
from ltlguard.monitor import (
    DEFAULT_VIOLATION_RETRY_CAP,
    TERMINAL_ACTION,
    MonitorSession,
    Verdict,
    VerdictKind,
    ViolationReport,
    check_action,
    check_termination,
    commit,
    dump_trace_record,
    iter_trace_records,
    open_session,
    parse_trace_record,
    pending_obligations,
    replay_session,
)
from ltlguard.translate import Constraint, assemble_constraint_set

# Union alphabet of the ten demo constraints, in registry order.
DEMO_UNION = tuple(
    parse_proposition(p)
    for p in (
        "agent_at(bedside_table)",
        "agent_at(book_shelf)",
        "is_grabbed(book)",
        "is_switchedon(coffee_machine)",
        "is_on(book,book_shelf)",
        "agent_at(television)",
        "agent_at(hallway)",
        "agent_at(statue)",
        "agent_at(lamp)",
        "is_on(mail,office_table)",
        "is_in(book,mail_box)",
        "is_grabbed(phone)",
    )
)

VOCAB = Vocabulary(STANDARD_PREDICATES, DEMO_OBJECTS + ["pantry"])


def assign(*true_props: str) -> StateAssignment:
    on = {parse_proposition(p) for p in true_props}
    return StateAssignment({p: p in on for p in DEMO_UNION})


def single(prop: str, value: bool) -> StateAssignment:
    return StateAssignment({parse_proposition(prop): value})


def make_set(pairs, backend="numpy"):
    constraints = tuple(
        Constraint(id=k, nl_text=nl, formula=parse_prefix(f, VOCAB), verified=True)
        for k, (nl, f) in enumerate(pairs)
    )
    return assemble_constraint_set(constraints, kernel_backend=backend)


@pytest.fixture(scope="module")
def demo_set():
    return make_set(DEMO_CONSTRAINT_PAIRS)


@pytest.fixture
def demo_session(demo_set):
    return open_session(demo_set, assign())


class TestOpenSession:
    def test_empty_set_is_safe_forever(self):
        cs = assemble_constraint_set([])
        session = open_session(cs, assign("agent_at(hallway)"))
        for _ in range(3):
            assert check_action(session, assign(), "walk to lamp").is_safe
            commit(session, assign())
        assert check_termination(session).is_safe
        assert pending_obligations(session) == []

    def test_demo_set_opens_live(self, demo_session):
        assert len(demo_session.committed_trace) == 1
        assert demo_session.last_assignment == assign()

    def test_contradiction_is_unsatisfiable_product_only(self):
        cs = make_set([("never go to pantry", "G ! agent_at(pantry)"),
                       ("go to pantry", "F agent_at(pantry)")])
        initial = single("agent_at(pantry)", False)
        with pytest.raises(UnsatisfiableConstraintsError) as exc_info:
            open_session(cs, initial)
        report = exc_info.value.report
        assert report.product_only
        assert report.attributed_constraints == (1,)

    def test_initial_state_violation_attributes_component(self):
        cs = make_set([("never go to pantry", "G ! agent_at(pantry)"),
                       ("go to pantry", "F agent_at(pantry)")])
        initial = single("agent_at(pantry)", True)
        with pytest.raises(UnsatisfiableConstraintsError) as exc_info:
            open_session(cs, initial)
        report = exc_info.value.report
        assert not report.product_only
        assert report.attributed_constraints == (0,)

    def test_single_contradictory_constraint(self):
        cs = make_set([("impossible", "& agent_at(pantry) ! agent_at(pantry)")])
        with pytest.raises(UnsatisfiableConstraintsError):
            open_session(cs, single("agent_at(pantry)", False))


class TestCheckAction:
    def test_demo_first_intervention(self, demo_session):
        verdict = check_action(
            demo_session, assign("agent_at(bedside_table)"), "walk to bedside_table"
        )
        assert verdict.kind is VerdictKind.VIOLATION
        report = verdict.report
        assert report.attributed_constraints == (0,)
        assert not report.product_only
        assert not report.terminal
        assert report.proposed_action == "walk to bedside_table"
        assert report.safe_assignment == assign()
        assert report.violated_assignment == assign("agent_at(bedside_table)")

    def test_demo_second_intervention(self, demo_session):
        commit(demo_session, assign("agent_at(book_shelf)"))
        commit(demo_session, assign("agent_at(bedside_table)"))
        verdict = check_action(
            demo_session,
            assign("agent_at(bedside_table)", "is_grabbed(book)"),
            "grab book",
        )
        assert verdict.kind is VerdictKind.VIOLATION
        assert verdict.report.attributed_constraints == (1,)

    def test_stutter_step_is_safe(self, demo_session):
        assert check_action(demo_session, assign()).is_safe

    def test_purity(self, demo_session):
        predicted = assign("agent_at(bedside_table)")
        before_state = demo_session.current
        first = check_action(demo_session, predicted, "walk to bedside_table")
        second = check_action(demo_session, predicted, "walk to bedside_table")
        assert first == second
        assert demo_session.current == before_state
        assert len(demo_session.committed_trace) == 1

    def test_product_only_violation_mid_run(self):
        # Avoid p forever, but also reach p: any step keeps the conflict,
        # which no single component sees.
        cs = make_set([("never go to pantry", "G ! agent_at(pantry)"),
                       ("go to pantry eventually", "F agent_at(pantry)")])
        initial = single("agent_at(pantry)", False)
        with pytest.raises(UnsatisfiableConstraintsError) as exc_info:
            open_session(cs, initial)
        assert exc_info.value.report.product_only

    def test_missing_proposition_raises(self, demo_session):
        from ltlguard.errors import UnassignedPropositionError

        with pytest.raises(UnassignedPropositionError):
            check_action(demo_session, single("agent_at(hallway)", True))


class TestCommit:
    def test_safe_commit_extends_trace(self, demo_session):
        commit(demo_session, assign("agent_at(book_shelf)"), "walk to book_shelf")
        assert len(demo_session.committed_trace) == 2
        assert demo_session.last_assignment == assign("agent_at(book_shelf)")

    def test_commit_after_violation_refused(self, demo_session):
        state_before = demo_session.current
        with pytest.raises(CommitAfterViolationError) as exc_info:
            commit(demo_session, assign("agent_at(bedside_table)"), "walk to bedside_table")
        assert exc_info.value.report.attributed_constraints == (0,)
        assert demo_session.current == state_before
        assert len(demo_session.committed_trace) == 1

    def test_corrected_demo_prefix_commits(self, demo_session):
        # The repaired opening of the delivery demo: bookshelf first, then
        # bedside table, switch the coffee machine on, then take the book.
        steps = [
            assign("agent_at(book_shelf)"),
            assign("agent_at(bedside_table)"),
            assign("is_switchedon(coffee_machine)"),
            assign("is_grabbed(book)", "is_switchedon(coffee_machine)"),
            assign("agent_at(book_shelf)", "is_grabbed(book)"),
            assign("agent_at(book_shelf)", "is_on(book,book_shelf)"),
        ]
        for step in steps:
            commit(demo_session, step)
        assert len(demo_session.committed_trace) == 7


class TestTermination:
    def test_fresh_avoidance_set_accepts_termination(self):
        cs = make_set([("never pick up phone", "G ! is_grabbed(phone)")])
        session = open_session(cs, single("is_grabbed(phone)", False))
        assert check_termination(session).is_safe

    def test_demo_terminal_rejection_after_shelving(self, demo_session):
        for step in [
            assign("agent_at(book_shelf)"),
            assign("agent_at(bedside_table)"),
            assign("is_switchedon(coffee_machine)"),
            assign("is_grabbed(book)", "is_switchedon(coffee_machine)"),
            assign("is_on(book,book_shelf)"),
        ]:
            commit(demo_session, step)
        verdict = check_termination(demo_session)
        assert verdict.kind is VerdictKind.VIOLATION
        report = verdict.report
        assert report.terminal
        assert report.proposed_action == TERMINAL_ACTION
        # Shelving the book armed the television and mail obligations.
        assert report.attributed_constraints == (2, 5)

        obligations = dict(pending_obligations(demo_session))
        assert set(obligations) == {2, 5}
        assert "F agent_at(television)" in obligations[2]
        assert "F is_on(mail,office_table)" in obligations[5]

    def test_obligations_clear_one_by_one(self, demo_session):
        for step in [
            assign("agent_at(book_shelf)"),
            assign("agent_at(bedside_table)"),
            assign("is_switchedon(coffee_machine)"),
            assign("is_grabbed(book)", "is_switchedon(coffee_machine)"),
            assign("is_on(book,book_shelf)"),
            assign("agent_at(television)"),
        ]:
            commit(demo_session, step)
        verdict = check_termination(demo_session)
        assert verdict.report.attributed_constraints == (5,)
        commit(demo_session, assign("is_on(mail,office_table)"))
        assert check_termination(demo_session).is_safe

    def test_monotone_rejection(self, demo_session):
        commit(demo_session, assign("agent_at(hallway)"))
        verdicts = [check_termination(demo_session) for _ in range(3)]
        assert all(v.kind is VerdictKind.VIOLATION for v in verdicts)
        assert verdicts[0] == verdicts[1] == verdicts[2]
        # Hallway arms both the statue and the second television constraint.
        assert verdicts[0].report.attributed_constraints == (3, 8)


class TestReplay:
    def test_replay_reproduces_current(self, demo_session):
        for step in [
            assign("agent_at(book_shelf)"),
            assign("agent_at(hallway)"),
            assign("agent_at(statue)"),
        ]:
            commit(demo_session, step)
        rebuilt = replay_session(demo_session.constraint_set, demo_session.committed_trace)
        assert rebuilt.current == demo_session.current
        assert rebuilt.committed_trace == demo_session.committed_trace

    def test_replay_empty_trace_rejected(self, demo_set):
        with pytest.raises(ValueError):
            replay_session(demo_set, [])


class TestTraceRecords:
    def test_round_trip(self):
        line = dump_trace_record("walk to kitchen", assign("agent_at(hallway)"))
        action, assignment = parse_trace_record(line)
        assert action == "walk to kitchen"
        assert assignment == assign("agent_at(hallway)")

    def test_iter_reports_line_numbers(self):
        lines = [
            dump_trace_record("<init>", assign()),
            "",
            "{not json",
        ]
        records = iter_trace_records(lines)
        assert next(records)[0] == 1
        with pytest.raises(LtlGuardError, match="trace line 3"):
            next(records)

    @pytest.mark.parametrize(
        "bad",
        [
            '["list"]',
            '{"action": 3, "state": {}}',
            '{"action": "walk", "state": {"p": "yes"}}',
        ],
    )
    def test_malformed_records(self, bad):
        with pytest.raises(ValueError):
            parse_trace_record(bad)


def _random_set(rng: random.Random):
    """A 2-3 constraint set over pa/pb/pc; None when initially unsat."""
    n = rng.randint(2, 3)
    constraints = tuple(
        Constraint(id=k, nl_text=f"rule {k}", formula=random_formula(rng, depth=3))
        for k in range(n)
    )
    return assemble_constraint_set(constraints, kernel_backend="numpy")


def _random_assignment(rng: random.Random, props) -> StateAssignment:
    return StateAssignment({p: rng.random() < 0.5 for p in props})


class TestRandomizedProperties:
    def test_attribution_soundness_and_replay(self):
        # Whenever check_action attributes constraint ids, each of their
        # automata alone must be dead on committed trace + predicted step.
        rng = random.Random(2024)
        violations_seen = 0
        for _ in range(150):
            cs = _random_set(rng)
            props = list(cs.alphabet)
            try:
                session = open_session(cs, _random_assignment(rng, props))
            except UnsatisfiableConstraintsError as exc:
                for cid in exc.report.attributed_constraints:
                    k = cs.component_of(cid)
                    if not exc.report.product_only:
                        auto = compile_automaton(cs.constraints[k].formula)
                        state = auto.run([exc.report.violated_assignment])
                        assert bool(auto.dead[state])
                continue
            for _ in range(8):
                predicted = _random_assignment(rng, props)
                verdict = check_action(session, predicted, "step")
                if verdict.is_safe:
                    commit(session, predicted)
                    continue
                violations_seen += 1
                report = verdict.report
                trace = list(session.committed_trace) + [predicted]
                for cid in report.attributed_constraints:
                    k = cs.component_of(cid)
                    auto = cs.automata[k]
                    if report.product_only:
                        # The component itself stays live on this trace.
                        assert not bool(auto.dead[auto.run(trace)])
                    else:
                        assert bool(auto.dead[auto.run(trace)])
            rebuilt = replay_session(cs, session.committed_trace)
            assert rebuilt.current == session.current
        assert violations_seen > 10

    def test_gated_episodes_satisfy_all_constraints(self):
        # Filtering actions through the monitor and gating DONE through
        # check_termination yields traces satisfying every formula.
        rng = random.Random(7321)
        finished = 0
        for _ in range(150):
            cs = _random_set(rng)
            props = list(cs.alphabet)
            try:
                session = open_session(cs, _random_assignment(rng, props))
            except UnsatisfiableConstraintsError:
                continue
            for _ in range(10):
                predicted = _random_assignment(rng, props)
                if check_action(session, predicted).is_safe:
                    commit(session, predicted)
                if check_termination(session).is_safe:
                    finished += 1
                    for constraint in cs.constraints:
                        needed = propositions(constraint.formula)
                        trace = [a.restrict(needed) for a in session.committed_trace]
                        assert evaluate_finite_trace(constraint.formula, trace)
                    break
        assert finished > 30

    def test_retry_cap_constant(self):
        assert DEFAULT_VIOLATION_RETRY_CAP == 5


class TestVerdictTypes:
    def test_report_requires_attribution(self):
        with pytest.raises(ValueError):
            ViolationReport(
                proposed_action="walk",
                safe_assignment=assign(),
                violated_assignment=assign(),
                attributed_constraints=(),
            )

    def test_verdict_constructors(self):
        assert Verdict.safe().is_safe
        assert Verdict.unsatisfiable().kind is VerdictKind.UNSATISFIABLE
        report = ViolationReport(
            proposed_action="walk",
            safe_assignment=assign(),
            violated_assignment=assign(),
            attributed_constraints=(0,),
        )
        verdict = Verdict.violation(report)
        assert not verdict.is_safe
        assert verdict.report is report

    def test_session_methods_delegate(self, demo_set):
        session = open_session(demo_set, assign())
        assert isinstance(session, MonitorSession)
        assert session.check_action(assign()).is_safe
        session.commit(assign())
        assert session.check_termination().is_safe
        assert session.pending_obligations() == []
