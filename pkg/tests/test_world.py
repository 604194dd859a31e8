"""World model: action grammar, effect rules, prediction purity."""

import random

import pytest

from ltlguard.errors import LtlGuardError, UnknownObjectError
from ltlguard.ltl import Proposition
from ltlguard.world import ORIGIN, Action, HouseWorld, Infeasible, predict_effects


def p(text: str) -> Proposition:
    from ltlguard.ltl import parse_proposition

    return parse_proposition(text)


@pytest.fixture
def kitchen_world():
    world = HouseWorld(rooms=["kitchen", "bathroom", "living_room", "bedroom"])
    world.add_fixture("fridge", openable=True)
    world.add_fixture("coffee_machine", switchable=True)
    world.add_fixture("table")
    world.add_portable("salmon", location="kitchen")
    world.add_portable("apple", location="fridge")
    return world


class TestActionGrammar:
    RENDERINGS = [
        (Action("walk", ("kitchen",)), "walk to kitchen"),
        (Action("find", ("salmon",)), "find salmon"),
        (Action("grab", ("salmon",)), "grab salmon"),
        (Action("open", ("fridge",)), "open fridge"),
        (Action("close", ("fridge",)), "close fridge"),
        (Action("put", ("salmon", "table")), "put salmon on table"),
        (Action("put in", ("salmon", "fridge")), "put salmon in fridge"),
        (Action("switch on", ("coffee_machine",)), "switch on coffee_machine"),
        (Action("switch off", ("coffee_machine",)), "switch off coffee_machine"),
        (Action("touch", ("statue",)), "touch statue"),
        (Action("look at", ("statue",)), "look at statue"),
        (Action("DONE"), "DONE"),
    ]

    @pytest.mark.parametrize("action,text", RENDERINGS)
    def test_render_parse_round_trip(self, action, text):
        assert action.render() == text
        assert Action.parse(text) == action

    def test_program_line_form(self):
        action = Action.from_program("[PUTIN]  <salmon> (319)  <fridge> (305)")
        assert action == Action("put in", ("salmon", "fridge"))
        assert action.render() == "put salmon in fridge"
        assert Action.parse("[WALK] <kitchen> (205)") == Action("walk", ("kitchen",))

    def test_bad_verb(self):
        with pytest.raises(ValueError):
            Action("fly", ("kitchen",))

    def test_bad_arity(self):
        with pytest.raises(ValueError):
            Action("put", ("salmon",))
        with pytest.raises(ValueError):
            Action("DONE", ("x",))

    def test_unparseable(self):
        with pytest.raises(ValueError):
            Action.parse("teleport to kitchen")

    def test_done_flag(self):
        assert Action("DONE").is_done
        assert not Action("walk", ("kitchen",)).is_done


class TestWorldBuild:
    def test_agent_starts_at_origin(self, kitchen_world):
        assert kitchen_world.agent_location == ORIGIN
        assert kitchen_world.snapshot().value(p(f"agent_at({ORIGIN})"))

    def test_duplicate_names_rejected(self, kitchen_world):
        with pytest.raises(ValueError):
            kitchen_world.add_room("kitchen")
        with pytest.raises(ValueError):
            kitchen_world.add_portable("salmon", "kitchen")

    def test_portable_needs_known_location(self, kitchen_world):
        with pytest.raises(UnknownObjectError):
            kitchen_world.add_portable("pear", "attic")


class TestEffects:
    def test_walk_location_exclusivity(self, kitchen_world):
        snap = predict_effects(kitchen_world, Action("walk", ("kitchen",)))
        agent_props = [q for q in snap if q.predicate == "agent_at"]
        assert sum(snap.value(q) for q in agent_props) == 1
        assert snap.value(p("agent_at(kitchen)"))

    def test_walk_to_portable_resolves_location(self, kitchen_world):
        snap = predict_effects(kitchen_world, Action("walk", ("salmon",)))
        assert snap.value(p("agent_at(kitchen)"))

    def test_grab_requires_colocation(self, kitchen_world):
        result = predict_effects(kitchen_world, Action("grab", ("salmon",)))
        assert isinstance(result, Infeasible)
        assert "reach" in result.reason

    def test_grab_requires_open_container(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("fridge",)))
        result = predict_effects(kitchen_world, Action("grab", ("apple",)))
        assert isinstance(result, Infeasible)
        assert "closed" in result.reason
        kitchen_world.apply(Action("open", ("fridge",)))
        snap = predict_effects(kitchen_world, Action("grab", ("apple",)))
        assert snap.value(p("is_grabbed(apple)"))

    def test_put_requires_holding(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("table",)))
        result = predict_effects(kitchen_world, Action("put", ("salmon", "table")))
        assert isinstance(result, Infeasible)
        assert "holding" in result.reason

    def test_put_on_clears_grab(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("salmon",)))
        kitchen_world.apply(Action("grab", ("salmon",)))
        kitchen_world.apply(Action("walk", ("table",)))
        snap = kitchen_world.apply(Action("put", ("salmon", "table")))
        assert snap.value(p("is_on(salmon,table)"))
        assert not snap.value(p("is_grabbed(salmon)"))
        assert not snap.value(p("is_in(salmon,table)"))

    def test_put_in_requires_open_destination(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("salmon",)))
        kitchen_world.apply(Action("grab", ("salmon",)))
        kitchen_world.apply(Action("walk", ("fridge",)))
        result = predict_effects(kitchen_world, Action("put in", ("salmon", "fridge")))
        assert isinstance(result, Infeasible)
        kitchen_world.apply(Action("open", ("fridge",)))
        snap = kitchen_world.apply(Action("put in", ("salmon", "fridge")))
        assert snap.value(p("is_in(salmon,fridge)"))

    def test_open_close_round_trip(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("fridge",)))
        assert kitchen_world.apply(Action("open", ("fridge",))).value(p("is_open(fridge)"))
        assert not kitchen_world.apply(Action("close", ("fridge",))).value(
            p("is_open(fridge)")
        )

    def test_open_rejects_non_openable(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("table",)))
        assert isinstance(
            predict_effects(kitchen_world, Action("open", ("table",))), Infeasible
        )

    def test_switch_gating(self, kitchen_world):
        result = predict_effects(kitchen_world, Action("switch on", ("coffee_machine",)))
        assert isinstance(result, Infeasible)
        kitchen_world.apply(Action("walk", ("coffee_machine",)))
        snap = kitchen_world.apply(Action("switch on", ("coffee_machine",)))
        assert snap.value(p("is_switchedon(coffee_machine)"))
        snap = kitchen_world.apply(Action("switch off", ("coffee_machine",)))
        assert not snap.value(p("is_switchedon(coffee_machine)"))

    def test_touch_sets_touched(self, kitchen_world):
        kitchen_world.apply(Action("walk", ("coffee_machine",)))
        snap = kitchen_world.apply(Action("touch", ("coffee_machine",)))
        assert snap.value(p("is_touched(coffee_machine)"))

    def test_find_and_look_are_noops(self, kitchen_world):
        before = kitchen_world.snapshot()
        assert predict_effects(kitchen_world, Action("find", ("salmon",))) == before
        assert predict_effects(kitchen_world, Action("look at", ("salmon",))) == before

    def test_unknown_object(self, kitchen_world):
        with pytest.raises(UnknownObjectError):
            predict_effects(kitchen_world, Action("walk", ("attic",)))

    def test_apply_raises_on_infeasible(self, kitchen_world):
        with pytest.raises(LtlGuardError, match="infeasible"):
            kitchen_world.apply(Action("grab", ("salmon",)))


class TestPredictionPurity:
    def test_predict_does_not_mutate(self, kitchen_world):
        before = kitchen_world.snapshot()
        for action in [
            Action("walk", ("kitchen",)),
            Action("grab", ("salmon",)),
            Action("open", ("fridge",)),
            Action("DONE"),
        ]:
            predict_effects(kitchen_world, action)
        assert kitchen_world.snapshot() == before
        assert kitchen_world.agent_location == ORIGIN

    def test_random_walk_exclusivity(self, kitchen_world):
        rng = random.Random(5)
        world = kitchen_world
        verbs = list(world.locations)
        for _ in range(60):
            target = rng.choice(verbs)
            snap = world.apply(Action("walk", (target,)))
            agent_props = [q for q in snap if q.predicate == "agent_at"]
            assert sum(snap.value(q) for q in agent_props) == 1

    def test_example_program_replay(self, kitchen_world):
        # The Four Room in-context program, with an added walk to the
        # fridge so every precondition is met in a flat world.
        program = [
            "[WALK] <kitchen> (205)",
            "[WALK] <salmon> (319)",
            "[FIND] <salmon> (319)",
            "[GRAB] <salmon> (319)",
            "[WALK] <fridge> (305)",
            "[FIND] <fridge> (305)",
            "[OPEN] <fridge> (305)",
            "[PUTIN] <salmon> (319) <fridge> (305)",
        ]
        for line in program:
            kitchen_world.apply(Action.parse(line))
        snap = kitchen_world.snapshot()
        assert snap.value(p("is_in(salmon,fridge)"))
        assert snap.value(p("agent_at(fridge)"))
