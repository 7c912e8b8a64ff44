"""Desk-scale assembly world.

Executes a flattened plan step by step against a scenario (which parts
exist, in what quantity, what must end up joined) and returns a verdict. Only
part existence and joining are modelled; there is no geometry.
"""

import json
import logging
from typing import Dict, FrozenSet, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    ValidationError,
    model_validator,
)

from . import base
from . import constants as c


logger = logging.getLogger('tnplanner.sim')

ASSEMBLE_PARAMETERS = ('part_a', 'part_b')


class SimulatorError(base.TNPlannerError):
    pass


class PreconditionFailure(SimulatorError):

    def __init__(self, reason, step_index, detail=''):
        self.reason = reason
        self.step_index = step_index
        self.detail = detail
        message = 'Step {} fails precondition {}'.format(step_index, reason)
        if detail:
            message = '{}: {}'.format(message, detail)
        super().__init__(message)


class UnknownAction(SimulatorError):

    def __init__(self, action, step_index):
        self.action = action
        self.step_index = step_index
        super().__init__('Step {}: no semantics for action {!r}'.format(
            step_index, action))


Joint = FrozenSet[str]


class Scenario(BaseModel):
    """A scenario file. ``precedence`` entries ``[[a, b], [c, d]]`` mean joint
    (c, d) can only be made once (a, b) exists.
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str
    parts: Dict[str, PositiveInt]
    aliases: Dict[str, str] = Field(default_factory=dict)
    goal: Tuple[Tuple[str, str], ...] = ()
    holdings: Dict[str, Optional[str]] = Field(default_factory=dict)
    precedence: Tuple[Tuple[Tuple[str, str], Tuple[str, str]], ...] = ()

    @model_validator(mode='after')
    def _check_names(self):
        for alias, canonical in self.aliases.items():
            if canonical not in self.parts:
                raise ValueError('alias {!r} points at unknown part'
                                 ' {!r}'.format(alias, canonical))
        joints = list(self.goal) + [j for p in self.precedence for j in p]
        for joint in joints:
            for part in joint:
                if part not in self.parts:
                    raise ValueError('unknown part {!r}'.format(part))
        for robot, part in self.holdings.items():
            if part is not None and part not in self.parts:
                raise ValueError('robot {!r} holds unknown part {!r}'.format(
                    robot, part))
        return self


class ScenarioRules(BaseModel):
    model_config = ConfigDict(frozen=True)

    parts: FrozenSet[str]
    consumables: FrozenSet[str] = frozenset()
    aliases: Dict[str, str] = Field(default_factory=dict)
    precedence: Tuple[Tuple[Joint, Joint], ...] = ()
    strict: bool = False


class WorldState(BaseModel):
    """Immutable; ``apply_step`` returns a successor."""

    model_config = ConfigDict(frozen=True)

    available_parts: Dict[str, int]
    holding: Dict[str, Optional[str]] = Field(default_factory=dict)
    assemblies: FrozenSet[Joint] = frozenset()
    rules: ScenarioRules

    def resolve(self, name):
        name = name.strip()
        if name in self.rules.parts:
            return name
        if not self.rules.strict and name in self.rules.aliases:
            return self.rules.aliases[name]
        return None

    def is_present(self, part):
        return (self.available_parts.get(part, 0) > 0 or
                part in self.holding.values())


class GoalSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    required_joints: FrozenSet[Joint] = frozenset()


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    success: bool
    failed_step: Optional[int] = None
    reason: Optional[str] = None
    detail: str = ''


def load_scenario(path):
    try:
        with open(path, encoding='utf8') as f:
            return Scenario.model_validate(json.load(f))
    except (OSError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            message = exc.errors()[0]['msg']
        else:
            message = str(exc)
        raise base.ConfigError('Invalid scenario {}: {}'.format(
            path, message)) from exc


def initial_state(scenario, strict=False):
    """Held parts are taken out of the available counts."""
    available = dict(scenario.parts)
    for part in scenario.holdings.values():
        if part is not None:
            available[part] -= 1
    rules = ScenarioRules(
        parts=frozenset(scenario.parts),
        consumables=frozenset(p for p, n in scenario.parts.items() if n > 1),
        aliases=dict(scenario.aliases),
        precedence=tuple((frozenset(before), frozenset(after))
                         for before, after in scenario.precedence),
        strict=strict)
    return WorldState(available_parts=available,
                      holding=dict(scenario.holdings), rules=rules)


def goal_of(scenario):
    return GoalSpec(required_joints=frozenset(frozenset(j)
                                              for j in scenario.goal))


def _assemble_parts(state, parameters, index):
    if set(parameters) != set(ASSEMBLE_PARAMETERS):
        raise PreconditionFailure(
            c.REASON_BAD_PARAMETERS, index, 'expected parameters {}'.format(
                ' and '.join(ASSEMBLE_PARAMETERS)))
    parts = []
    for name in (parameters['part_a'], parameters['part_b']):
        part = state.resolve(name)
        if part is None:
            raise PreconditionFailure(c.REASON_MISSING_PART, index,
                                      'no part called {!r}'.format(name))
        parts.append(part)
    part_a, part_b = parts
    for part in parts:
        if part in state.rules.consumables and not state.is_present(part):
            raise PreconditionFailure(c.REASON_OUT_OF_STOCK, index,
                                      'no {!r} left'.format(part))
    if part_a == part_b:
        raise PreconditionFailure(c.REASON_SELF_JOIN, index,
                                  '{!r} joined to itself'.format(part_a))
    joint = frozenset(parts)
    consumed = [p for p in parts if p in state.rules.consumables]
    if not consumed and joint in state.assemblies:
        raise PreconditionFailure(
            c.REASON_ALREADY_JOINED, index, '{!r} and {!r} are already'
            ' joined'.format(part_a, part_b))
    for before, after in state.rules.precedence:
        if joint == after and before not in state.assemblies:
            raise PreconditionFailure(
                c.REASON_PRECEDENCE, index, 'joining {} needs {} first'.format(
                    ' and '.join(sorted(after)),
                    ' and '.join(sorted(before))))
    available = dict(state.available_parts)
    holding = dict(state.holding)
    for part in consumed:
        if available.get(part, 0) > 0:
            available[part] -= 1
            continue
        # Stock is gone; the unit spent is the one a robot holds.
        robot = next(r for r, p in sorted(holding.items()) if p == part)
        holding[robot] = None
    return state.model_copy(update={
        'available_parts': available,
        'holding': holding,
        'assemblies': state.assemblies | {joint},
    })


ACTION_SEMANTICS = {
    c.ASSEMBLE_PARTS: _assemble_parts,
}


def apply_step(state, step, index=0):
    """``step`` is anything indexable as ``(action, parameters)``, e.g. an
    ``ExecutableStep``.
    """
    action, parameters = step[0], step[1]
    try:
        semantics = ACTION_SEMANTICS[action]
    except KeyError:
        raise UnknownAction(action, index) from None
    return semantics(state, parameters, index)


def check_plan(initial, goal, plan):
    state = initial
    for index, step in enumerate(plan):
        try:
            state = apply_step(state, step, index)
        except PreconditionFailure as exc:
            logger.debug('%s', exc)
            return Verdict(success=False, failed_step=index,
                           reason=exc.reason, detail=exc.detail)
        except UnknownAction as exc:
            return Verdict(success=False, failed_step=index,
                           reason=c.REASON_UNKNOWN_ACTION, detail=str(exc))
    missing = goal.required_joints - state.assemblies
    if missing:
        return Verdict(success=False, reason=c.REASON_GOAL_UNMET,
                       detail='missing joints: {}'.format('; '.join(
                           ' and '.join(sorted(j)) for j in sorted(
                               missing, key=sorted))))
    return Verdict(success=True)


def verdict_to_dict(verdict):
    return {
        'verdict': 'success' if verdict.success else 'failure',
        'failed_step': verdict.failed_step,
        'reason': verdict.reason,
    }
