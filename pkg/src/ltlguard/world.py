"""A small household world with the simulator's action vocabulary.

Flat model: rooms, landmarks and fixtures are all walkable locations, and
the agent is at exactly one of them. Portable objects sit at a location,
possibly inside or on top of a fixture, or in the agent's hand. This is
deliberately geometry-free; the monitor only ever sees the proposition
snapshot, so location exclusivity and the effect rules are the whole
physics.

predict_effects answers "what would the truth assignment be after this
action" without mutating anything, which is what lets the monitor prune
actions before they happen.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .errors import LtlGuardError, UnknownObjectError
from .ltl import Proposition, StateAssignment

ORIGIN = "origin"

# verb -> (program tag, arity)
_VERBS = {
    "walk": ("WALK", 1),
    "find": ("FIND", 1),
    "grab": ("GRAB", 1),
    "open": ("OPEN", 1),
    "close": ("CLOSE", 1),
    "put": ("PUT", 2),
    "put in": ("PUTIN", 2),
    "switch on": ("SWITCHON", 1),
    "switch off": ("SWITCHOFF", 1),
    "touch": ("TOUCH", 1),
    "look at": ("LOOKAT", 1),
    "DONE": ("DONE", 0),
}

_TAG_TO_VERB = {tag: verb for verb, (tag, _) in _VERBS.items()}


@dataclass(frozen=True)
class Action:
    verb: str
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        if self.verb not in _VERBS:
            raise ValueError(f"unknown verb {self.verb!r}")
        arity = _VERBS[self.verb][1]
        if len(self.targets) != arity:
            raise ValueError(
                f"{self.verb} takes {arity} target(s), got {len(self.targets)}"
            )

    @property
    def is_done(self) -> bool:
        return self.verb == "DONE"

    def render(self) -> str:
        if self.verb == "DONE":
            return "DONE"
        if self.verb == "walk":
            return f"walk to {self.targets[0]}"
        if self.verb == "put":
            return f"put {self.targets[0]} on {self.targets[1]}"
        if self.verb == "put in":
            return f"put {self.targets[0]} in {self.targets[1]}"
        return f"{self.verb} {self.targets[0]}"

    @staticmethod
    def parse(text: str) -> "Action":
        """Inverse of render; also accepts program lines like [PUTIN] <a> <b>."""
        text = text.strip()
        if text.startswith("["):
            return Action.from_program(text)
        if text == "DONE":
            return Action("DONE")
        for verb in ("walk to",):
            if text.startswith(verb + " "):
                return Action("walk", (text[len(verb) + 1 :].strip(),))
        for verb in ("switch on", "switch off", "look at"):
            if text.startswith(verb + " "):
                return Action(verb, (text[len(verb) + 1 :].strip(),))
        if text.startswith("put "):
            rest = text[4:]
            for sep, verb in ((" in ", "put in"), (" on ", "put")):
                if sep in rest:
                    a, b = rest.split(sep, 1)
                    return Action(verb, (a.strip(), b.strip()))
            raise ValueError(f"cannot parse put action: {text!r}")
        for verb in ("find", "grab", "open", "close", "touch"):
            if text.startswith(verb + " "):
                return Action(verb, (text[len(verb) + 1 :].strip(),))
        raise ValueError(f"cannot parse action: {text!r}")

    @staticmethod
    def from_program(line: str) -> "Action":
        """Parse the bracketed program form: [PUTIN] <salmon> (319) <fridge> (305)."""
        import re

        m = re.match(r"^\[(\w+)\]", line.strip())
        if m is None:
            raise ValueError(f"not a program line: {line!r}")
        tag = m.group(1)
        if tag not in _TAG_TO_VERB:
            raise ValueError(f"unknown program tag {tag!r}")
        targets = tuple(re.findall(r"<([^<>]+)>", line))
        return Action(_TAG_TO_VERB[tag], targets)


@dataclass(frozen=True)
class Infeasible:
    """Returned when an action's preconditions fail in the current world."""

    action: Action
    reason: str


@dataclass
class _Portable:
    location: str | None  # None while held
    container: str | None = None
    support: str | None = None
    grabbed: bool = False
    touched: bool = False


@dataclass
class _Fixture:
    openable: bool = False
    switchable: bool = False
    open: bool = False
    switched_on: bool = False
    touched: bool = False


class HouseWorld:
    """Mutable world state; build with add_room/add_fixture/add_portable."""

    def __init__(self, rooms=()):
        self.rooms: list[str] = []
        self.fixtures: dict[str, _Fixture] = {}
        self.portables: dict[str, _Portable] = {}
        self.agent_location: str = ORIGIN
        self._locations: list[str] = [ORIGIN]
        for room in rooms:
            self.add_room(room)

    # --- construction ---------------------------------------------------

    def add_room(self, name: str) -> None:
        self._register_location(name)
        self.rooms.append(name)

    def add_fixture(
        self, name: str, *, openable: bool = False, switchable: bool = False
    ) -> None:
        self._register_location(name)
        self.fixtures[name] = _Fixture(openable=openable, switchable=switchable)

    def add_portable(self, name: str, location: str) -> None:
        if name in self._locations or name in self.portables:
            raise ValueError(f"duplicate entity name {name!r}")
        if location not in self._locations:
            raise UnknownObjectError(f"unknown location {location!r}")
        # placed at an openable fixture means inside it
        fixture = self.fixtures.get(location)
        container = location if fixture is not None and fixture.openable else None
        self.portables[name] = _Portable(location=location, container=container)

    def _register_location(self, name: str) -> None:
        if name in self._locations or name in self.portables:
            raise ValueError(f"duplicate entity name {name!r}")
        self._locations.append(name)

    # --- queries ----------------------------------------------------------

    @property
    def locations(self) -> tuple[str, ...]:
        return tuple(self._locations)

    def knows(self, name: str) -> bool:
        return name in self._locations or name in self.portables

    def held_objects(self) -> tuple[str, ...]:
        return tuple(n for n, p in self.portables.items() if p.grabbed)

    def location_of(self, name: str) -> str | None:
        """Where a target is: itself for locations, its spot for portables."""
        if name in self._locations:
            return name
        if name in self.portables:
            return self.portables[name].location
        raise UnknownObjectError(f"unknown object {name!r}")

    def snapshot(self) -> StateAssignment:
        """Truth assignment over every registered proposition."""
        values: dict[Proposition, bool] = {}
        for loc in self._locations:
            values[Proposition("agent_at", (loc,))] = loc == self.agent_location
        for name, fixture in self.fixtures.items():
            if fixture.openable:
                values[Proposition("is_open", (name,))] = fixture.open
            if fixture.switchable:
                values[Proposition("is_switchedon", (name,))] = fixture.switched_on
            values[Proposition("is_touched", (name,))] = fixture.touched
        for name, portable in self.portables.items():
            values[Proposition("is_grabbed", (name,))] = portable.grabbed
            values[Proposition("is_touched", (name,))] = portable.touched
            for loc in self._locations:
                values[Proposition("is_in", (name, loc))] = portable.container == loc
                values[Proposition("is_on", (name, loc))] = portable.support == loc
        return StateAssignment(values)

    # --- dynamics ---------------------------------------------------------

    def _check(self, action: Action) -> str | None:
        """Precondition failure reason, or None when feasible."""
        for target in action.targets:
            if not self.knows(target):
                raise UnknownObjectError(f"unknown object {target!r}")
        verb = action.verb
        if verb in ("walk", "find", "look at", "DONE"):
            if verb == "walk" and action.targets[0] in self.portables:
                if self.portables[action.targets[0]].location is None and not (
                    self.portables[action.targets[0]].grabbed
                ):
                    return f"{action.targets[0]} is nowhere to walk to"
            return None
        if verb == "grab":
            name = action.targets[0]
            portable = self.portables.get(name)
            if portable is None:
                return f"{name} cannot be picked up"
            if portable.grabbed:
                return f"already holding {name}"
            if portable.location != self.agent_location:
                return f"{name} is not within reach"
            if portable.container is not None:
                container = self.fixtures.get(portable.container)
                if container is not None and container.openable and not container.open:
                    return f"{portable.container} is closed"
            return None
        if verb in ("open", "close"):
            name = action.targets[0]
            fixture = self.fixtures.get(name)
            if fixture is None or not fixture.openable:
                return f"{name} cannot be opened"
            if self.agent_location != name:
                return f"not at {name}"
            return None
        if verb in ("switch on", "switch off"):
            name = action.targets[0]
            fixture = self.fixtures.get(name)
            if fixture is None or not fixture.switchable:
                return f"{name} has no switch"
            if self.agent_location != name:
                return f"not at {name}"
            return None
        if verb == "touch":
            name = action.targets[0]
            if self.location_of(name) != self.agent_location:
                return f"{name} is not within reach"
            return None
        if verb in ("put", "put in"):
            obj, dest = action.targets
            portable = self.portables.get(obj)
            if portable is None or not portable.grabbed:
                return f"not holding {obj}"
            if dest not in self._locations:
                return f"cannot place things on {dest}"
            if self.agent_location != dest:
                return f"not at {dest}"
            if verb == "put in":
                fixture = self.fixtures.get(dest)
                if fixture is not None and fixture.openable and not fixture.open:
                    return f"{dest} is closed"
            return None
        raise AssertionError(f"unhandled verb {verb}")

    def _apply(self, action: Action) -> None:
        verb = action.verb
        if verb == "walk":
            target = action.targets[0]
            destination = self.location_of(target)
            if destination is not None:
                self.agent_location = destination
        elif verb == "grab":
            portable = self.portables[action.targets[0]]
            portable.grabbed = True
            portable.location = None
            portable.container = None
            portable.support = None
        elif verb == "open":
            self.fixtures[action.targets[0]].open = True
        elif verb == "close":
            self.fixtures[action.targets[0]].open = False
        elif verb == "switch on":
            self.fixtures[action.targets[0]].switched_on = True
        elif verb == "switch off":
            self.fixtures[action.targets[0]].switched_on = False
        elif verb == "touch":
            name = action.targets[0]
            if name in self.portables:
                self.portables[name].touched = True
            elif name in self.fixtures:
                self.fixtures[name].touched = True
            # rooms shrug off touches
        elif verb in ("put", "put in"):
            obj, dest = action.targets
            portable = self.portables[obj]
            portable.grabbed = False
            portable.location = dest
            portable.container = dest if verb == "put in" else None
            portable.support = dest if verb == "put" else None
        # find / look at / DONE have no effect

    def apply(self, action: Action) -> StateAssignment:
        """Execute a feasible action; raises on infeasible ones."""
        reason = self._check(action)
        if reason is not None:
            raise LtlGuardError(f"infeasible action {action.render()!r}: {reason}")
        self._apply(action)
        return self.snapshot()

    def clone(self) -> "HouseWorld":
        return copy.deepcopy(self)


def predict_effects(world: HouseWorld, action: Action) -> StateAssignment | Infeasible:
    """Post-action assignment without side effects, or Infeasible."""
    reason = world._check(action)
    if reason is not None:
        return Infeasible(action, reason)
    if action.verb in ("find", "look at", "DONE"):
        return world.snapshot()
    shadow = world.clone()
    shadow._apply(action)
    return shadow.snapshot()
