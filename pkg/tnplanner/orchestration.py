"""Manager, planners and allocator.

The Manager turns an instruction into a flat list of total task words using
the same envelope protocol as the planners; each total task word is routed to
the Planner that owns it and grown into a tree; the Allocator then binds
every terminal leaf to a robot. The three stages always run in that order.
"""

import concurrent.futures
import json
import logging
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import base
from . import constants as c
from . import knowledge_base as kbase
from . import llm_backend
from . import prompt_engine as pe
from . import tree_engine
from . import utils


logger = logging.getLogger('tnplanner.orchestration')


class OrchestrationError(base.TNPlannerError):
    pass


class EmptyInstruction(OrchestrationError):
    pass


class NoPlanner(OrchestrationError):

    def __init__(self, action):
        self.action = action
        super().__init__('No planner registered for total task word'
                         ' {!r}'.format(action))


class NoCapableRobot(OrchestrationError):

    def __init__(self, action, index):
        self.action = action
        self.index = index
        super().__init__('No available robot can execute {!r} (step'
                         ' {})'.format(action, index))


class RobotState(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    id: str = Field(min_length=1)
    executable_actions: Tuple[str, ...] = Field(min_length=1)
    busy: bool = False

    def can_execute(self, action):
        return not self.busy and action in self.executable_actions


class Planner:
    """Grows trees for the total task words its own KB declares as
    non-terminal.
    """

    def __init__(self, name, kb, backend, limits, examples=None,
                 example_repetitions=1):
        self.name = name
        self.kb = kb
        self.backend = backend
        self.limits = limits
        self.examples = examples
        self.example_repetitions = example_repetitions

    def serves(self, word):
        spec = self.kb.task_words.get(word)
        return spec is not None and not spec.is_terminal

    def plan(self, root, general_info, log=None):
        root.is_terminal = kbase.lookup(self.kb, root.action).is_terminal
        return tree_engine.expand_tree(
            self.kb, self.backend, root, general_info, self.limits,
            examples=self.examples,
            example_repetitions=self.example_repetitions, log=log)

    def __repr__(self):
        return '<Planner {}>'.format(self.name)


class Manager:
    """The Manager KB names its entry word in ``metadata.root``; the root's
    possible subtasks are the total task words.
    """

    def __init__(self, kb, backend, examples=None, example_repetitions=1):
        if kb.metadata.root is None:
            raise base.ConfigError('Manager knowledge base {} names no root'
                                   ' task word'.format(kb.name))
        self.kb = kb
        self.backend = backend
        self.root_spec = kbase.lookup(kb, kb.metadata.root)
        self.total_task_words = tuple(self.root_spec.possible_subtasks)
        self.planner_registry = {}
        self.examples = examples
        self.example_repetitions = example_repetitions

    def register(self, word, planner):
        current = self.planner_registry.get(word)
        if current is planner:
            return
        if current is not None:
            logger.warning('Total task word %s is already served by %s;'
                           ' ignoring %s', word, current.name, planner.name)
            return
        self.planner_registry[word] = planner

    def validate(self):
        for word in self.total_task_words:
            if word not in self.planner_registry:
                raise NoPlanner(word)
        return self


class Allocator:

    def __init__(self, robots, policy=c.DEFAULT_POLICY):
        robots = list(robots)
        ids = [r.id for r in robots]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise base.ConfigError('Duplicate robot ids: {}'.format(
                ', '.join(duplicates)))
        if policy not in c.POLICIES:
            raise base.ConfigError('Unknown allocation policy {!r}'.format(
                policy))
        self.robots = robots
        self.policy = policy


def build_registry(manager, planners):
    for planner in planners:
        for word in manager.total_task_words:
            if planner.serves(word):
                manager.register(word, planner)
    return manager.planner_registry


def default_fleet(knowledge_bases):
    """One robot able to execute every terminal word of ``knowledge_bases``."""
    actions = sorted({w for kb in knowledge_bases for w in kb.terminal_words()})
    if not actions:
        raise base.ConfigError('No planner knowledge base declares a terminal'
                               ' task word; pass a robot fleet')
    return [RobotState(id=c.DEFAULT_ROBOT_ID, executable_actions=actions)]


def load_fleet(path):
    try:
        with open(path, encoding='utf8') as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise base.ConfigError('Unable to read robot fleet {}: {}'.format(
            path, exc)) from exc
    if not isinstance(data, list):
        raise base.ConfigError('Robot fleet {} must be a JSON list'.format(
            path))
    try:
        return [RobotState.model_validate(r) for r in data]
    except ValidationError as exc:
        raise base.ConfigError('Invalid robot fleet {}: {}'.format(
            path, exc.errors()[0]['msg'])) from exc


def initialize_base_list(manager, instruction, state, log=None):
    """Ask the backend for the total task words of ``instruction``; returns
    the unexpanded roots ``"1"``, ``"2"``, ...
    """
    if not instruction or not instruction.strip():
        raise EmptyInstruction('The instruction is empty')
    kb = manager.kb
    spec = manager.root_spec
    prompt = pe.build_prompt(
        spec, {c.INSTRUCTION_PARAMETER: instruction}, state or '', kb=kb,
        examples=manager.examples,
        example_repetitions=manager.example_repetitions)

    def validator(text):
        return pe.validate_sequence(kb, spec, pe.parse_output(text))

    def on_attempt(_text, report):
        if log is not None:
            log.record(spec.name, report)

    try:
        text, _ = manager.backend.complete_validated(prompt, validator,
                                                     on_attempt=on_attempt)
    except llm_backend.ValidationExhausted as exc:
        unknown = tree_engine.unknown_word_error(kb, exc)
        if unknown is not None:
            raise unknown from exc
        raise
    roots = [tree_engine.TaskNode(str(index), step.action, step.parameters)
             for index, step in enumerate(pe.parse_output(text).steps, 1)]
    logger.info('Base list: %s', ', '.join(r.action for r in roots))
    return roots


def find_planner(manager, root):
    try:
        return manager.planner_registry[root.action]
    except KeyError:
        raise NoPlanner(root.action) from None


def allocate_robot(allocator, roots, instruction=None, state=None):
    """Bind each terminal leaf, in flatten order, to a robot."""
    del instruction, state  # part of the allocator interface, unused here
    tree_engine.flatten(roots)
    robots = allocator.robots
    pointer = 0
    leaves = [leaf for root in roots for leaf in root.leaves()]
    for index, leaf in enumerate(leaves):
        capable = [r for r in robots if r.can_execute(leaf.action)]
        if not capable:
            raise NoCapableRobot(leaf.action, index)
        if allocator.policy == 'round-robin':
            for offset in range(len(robots)):
                robot = robots[(pointer + offset) % len(robots)]
                if robot.can_execute(leaf.action):
                    pointer = (pointer + offset + 1) % len(robots)
                    break
        else:
            robot = min(capable, key=lambda r: (len(r.executable_actions),
                                                r.id))
        leaf.assigned_robot = robot.id
    return roots


def generate_task_tree(instruction, state, manager, planners, allocator,
                       workers=1, log=None):
    """Run the three stages. Errors are tagged with the stage they happened
    in and carry the forest as it stood.
    """
    build_registry(manager, planners)
    stage = c.PIPELINE_STAGES[0]
    roots = []
    try:
        roots = initialize_base_list(manager, instruction, state, log=log)
        stage = c.PIPELINE_STAGES[1]
        routed = [(root, find_planner(manager, root)) for root in roots]

        def grow(pair):
            root, planner = pair
            general_info = root.parameters.get(c.INSTRUCTION_PARAMETER,
                                               instruction)
            return planner.plan(root, general_info, log=log)

        if workers > 1 and len(routed) > 1:
            with concurrent.futures.ThreadPoolExecutor(
                    max_workers=workers) as executor:
                list(executor.map(grow, routed))
        else:
            for pair in routed:
                grow(pair)
        stage = c.PIPELINE_STAGES[2]
        allocate_robot(allocator, roots, instruction, state)
    except base.TNPlannerError as exc:
        exc.stage = stage
        exc.tree = roots
        raise
    logger.info('Generated %s tree(s) with %s executable step(s)',
                len(roots), len(tree_engine.flatten(roots)))
    return roots


def write_plan(path, roots):
    """Allocated plan as JSON lines ``{action, parameters, robot}``."""
    steps = tree_engine.flatten(roots)
    utils.write_json_lines(path, [s.to_dict() for s in steps])
    return steps


def build_pipeline(knowledge_bases, backend, config, robots=None,
                   examples=None):
    """Manager (first KB), one planner per remaining KB and the allocator,
    with the planner registry filled in.
    """
    manager_kb, planner_kbs = knowledge_bases[0], knowledge_bases[1:]
    limits = tree_engine.ExpansionLimits.from_run_config(config)
    manager = Manager(manager_kb, backend, examples=examples,
                      example_repetitions=config.example_repetitions)
    planners = [Planner(kb.name, kb, backend, limits, examples=examples,
                        example_repetitions=config.example_repetitions)
                for kb in planner_kbs]
    build_registry(manager, planners)
    allocator = Allocator(robots or default_fleet(planner_kbs), config.policy)
    return manager, planners, allocator
