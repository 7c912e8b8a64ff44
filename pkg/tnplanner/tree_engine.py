"""Task trees.

A tree is grown by repeatedly expanding its non-terminal leaves through the
LLM backend until every leaf is a terminal (robot-executable) task word.
Reading the leaves of a forest depth-first, left to right, gives the
executable task sequence.
"""

import itertools
import json
import logging
import threading
from typing import NamedTuple, Optional

from pydantic import BaseModel, ConfigDict, PositiveInt

from . import base
from . import constants as c
from . import knowledge_base as kbase
from . import llm_backend
from . import prompt_engine as pe
from . import utils


logger = logging.getLogger('tnplanner.tree')


class TreeError(base.TNPlannerError):
    """``tree`` holds the tree (or forest) as it was when the error was
    raised.
    """

    tree = None


class DepthLimit(TreeError):
    pass


class NodeBudgetExceeded(TreeError):
    pass


class ExpansionBudgetExceeded(TreeError):
    pass


class IncompleteTree(TreeError):
    pass


class ExpansionLimits(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_depth: PositiveInt = c.DEFAULT_MAX_DEPTH
    max_nodes: PositiveInt = c.DEFAULT_MAX_NODES
    max_expansions: PositiveInt = c.DEFAULT_MAX_EXPANSIONS

    @classmethod
    def from_run_config(cls, config):
        return cls(max_depth=config.max_depth, max_nodes=config.max_nodes,
                   max_expansions=config.max_expansions)


class ExecutableStep(NamedTuple):
    action: str
    parameters: dict
    robot: Optional[str] = None

    def to_dict(self):
        return {'action': self.action, 'parameters': dict(self.parameters),
                'robot': self.robot}


class TaskNode:
    """One instantiated task. Ids are positional: the i-th root is ``"i"``
    and the k-th child of node ``n`` is ``"n.k"``.
    """

    def __init__(self, node_id, action, parameters=None, is_terminal=False,
                 depth=0, origin=None, assigned_robot=None):
        self.id = node_id
        self.action = action
        self.parameters = dict(parameters or {})
        self.is_terminal = is_terminal
        self.depth = depth
        self.origin = origin
        self.assigned_robot = assigned_robot
        self.children = []

    @classmethod
    def create(cls, kb, node_id, action, parameters=None, depth=0,
               origin=None):
        """Build a node whose terminal flag is taken from the KB."""
        spec = kbase.lookup(kb, action)
        return cls(node_id, action, parameters, is_terminal=spec.is_terminal,
                   depth=depth, origin=origin)

    def attach(self, children):
        if self.is_terminal:
            raise TreeError('Terminal node {} ({}) cannot have'
                            ' children'.format(self.id, self.action))
        for child in children:
            if child.depth != self.depth + 1:
                raise TreeError('Child {} is not one level below {}'.format(
                    child.id, self.id))
        self.children = list(children)

    def walk(self):
        """Pre-order, left to right."""
        yield self
        for child in self.children:
            yield from child.walk()

    def leaves(self):
        return [n for n in self.walk() if not n.children]

    def signature(self):
        return (self.action, tuple(sorted(self.parameters.items())),
                self.is_terminal)

    def __repr__(self):
        return '<TaskNode {} {}>'.format(self.id, self.action)


class GenerationLog:
    """Every validation outcome seen while growing a forest, in arrival
    order. Shared by concurrent expansions.
    """

    def __init__(self):
        self.records = []
        self._lock = threading.Lock()

    def record(self, node_id, report):
        with self._lock:
            self.records.append((node_id, report))

    @property
    def reports(self):
        return [report for _, report in self.records]

    @property
    def format_ok(self):
        return all(r.format_ok for r in self.reports)

    @property
    def subtasks_total(self):
        return sum(r.subtasks_total for r in self.reports)

    @property
    def subtasks_param_ok(self):
        return sum(r.subtasks_param_ok for r in self.reports)


class CallBudget:
    """Backend calls one tree may still make."""

    def __init__(self, limit):
        self.limit = limit
        self.calls = 0

    @property
    def remaining(self):
        return self.limit - self.calls

    def spend(self):
        self.calls += 1


def open_leaves(root):
    return [n for n in root.walk() if not n.children and not n.is_terminal]


def count_nodes(root):
    return sum(1 for _ in root.walk())


def unknown_word_error(kb, exhausted):
    """``UnknownTaskWord`` for the first out-of-KB action in the last
    rejected attempt, if there is one.
    """
    for step in exhausted.outcomes[-1].step_reports:
        if step.action not in kb:
            return kbase.UnknownTaskWord(
                step.action, utils.nearest_match(step.action, kb.task_words))
    return None


def expand_node(kb, backend, node, general_info, limits, examples=None,
                example_repetitions=1, log=None, budget=None):
    """Ask the backend to decompose ``node`` and attach one child per step of
    the accepted response. If any step names a task word the KB lacks, the
    whole expansion is rejected. Every attempt is charged to ``budget``.
    """
    if node.is_terminal or node.children:
        raise TreeError('Node {} ({}) is not an open leaf'.format(
            node.id, node.action))
    if node.depth >= limits.max_depth:
        raise DepthLimit('Node {} ({}) is at depth {}, the maximum is'
                         ' {}'.format(node.id, node.action, node.depth,
                                      limits.max_depth))
    spec = kbase.lookup(kb, node.action)
    prompt = pe.build_prompt(spec, node.parameters, general_info, kb=kb,
                             examples=examples,
                             example_repetitions=example_repetitions)

    def validator(text):
        return pe.validate_sequence(kb, spec, pe.parse_output(text))

    def on_attempt(_text, report):
        if budget is not None:
            budget.spend()
        if log is not None:
            log.record(node.id, report)

    try:
        text, attempts = backend.complete_validated(
            prompt, validator, remaining_depth=limits.max_depth - node.depth,
            on_attempt=on_attempt,
            max_attempts=budget.remaining if budget is not None else None)
    except llm_backend.AttemptCapReached as exc:
        raise ExpansionBudgetExceeded(
            'Expansion budget of {} used up while retrying node {}'
            ' ({})'.format(budget.limit, node.id, node.action)) from exc
    except llm_backend.ValidationExhausted as exc:
        unknown = unknown_word_error(kb, exc)
        if unknown is not None:
            raise unknown from exc
        raise
    sequence = pe.parse_output(text)
    children = [
        TaskNode.create(kb, '{}.{}'.format(node.id, index), step.action,
                        step.parameters, depth=node.depth + 1, origin=node.id)
        for index, step in enumerate(sequence.steps, 1)]
    node.attach(children)
    logger.debug('Expanded %s (%s) into %s after %s attempt(s)', node.id,
                 node.action, ', '.join(n.action for n in children), attempts)
    return children


def expand_tree(kb, backend, root, general_info, limits, examples=None,
                example_repetitions=1, log=None):
    """Expand every open leaf, recomputing the open leaves depth-first left
    to right after each sweep, until none remain. ``max_expansions`` caps the
    backend calls made for the tree, retries included. Any error carries the
    tree as it stood.
    """
    nodes = count_nodes(root)
    budget = CallBudget(limits.max_expansions)
    leaf = None
    try:
        kbase.lookup(kb, root.action)
        while True:
            leaves = open_leaves(root)
            if not leaves:
                break
            for leaf in leaves:
                if budget.remaining <= 0:
                    raise ExpansionBudgetExceeded(
                        'Expansion budget of {} used up before node {}'
                        ' ({})'.format(budget.limit, leaf.id, leaf.action))
                children = expand_node(
                    kb, backend, leaf, general_info, limits,
                    examples=examples,
                    example_repetitions=example_repetitions, log=log,
                    budget=budget)
                nodes += len(children)
                if nodes > limits.max_nodes:
                    leaf.children = []
                    raise NodeBudgetExceeded(
                        'Expanding node {} ({}) would exceed the budget of {}'
                        ' nodes'.format(leaf.id, leaf.action,
                                        limits.max_nodes))
    except base.TNPlannerError as exc:
        exc.tree = root
        if exc.node is None:
            exc.node = leaf
        raise
    logger.info('Tree %s (%s) complete: %s nodes from %s backend call(s)',
                root.id, root.action, nodes, budget.calls)
    return root


def flatten(roots):
    steps = []
    for root in roots:
        for leaf in root.leaves():
            if not leaf.is_terminal:
                error = IncompleteTree('Node {} ({}) is a non-terminal'
                                       ' leaf'.format(leaf.id, leaf.action))
                error.tree = roots
                raise error
            steps.append(ExecutableStep(leaf.action, dict(leaf.parameters),
                                        leaf.assigned_robot))
    return steps


def tree_to_dict(node, include_robot=True):
    data = {
        'id': node.id,
        'action': node.action,
        'parameters': dict(node.parameters),
        'is_terminal': node.is_terminal,
        'children': [tree_to_dict(n, include_robot) for n in node.children],
    }
    if include_robot:
        data['assigned_robot'] = node.assigned_robot
    return data


def tree_from_dict(data, depth=0, origin=None):
    node = TaskNode(data['id'], data['action'], data.get('parameters'),
                    is_terminal=bool(data.get('is_terminal')), depth=depth,
                    origin=origin, assigned_robot=data.get('assigned_robot'))
    node.children = [tree_from_dict(child, depth + 1, node.id)
                     for child in data.get('children', ())]
    return node


def dump_forest(roots, include_robot=True):
    return utils.pretty_json([tree_to_dict(r, include_robot) for r in roots])


def load_forest(path):
    with open(path, encoding='utf8') as f:
        return [tree_from_dict(d) for d in json.load(f)]


def diff_forests(expected, actual, compare_robots=True):
    """Return the first node (taken from ``actual`` where it exists) whose
    own fields or child sequence differ between the two forests, or
    ``None``. An unexpanded node on either side is not a difference, so a
    partial forest from a failed run can be compared with a complete one
    (pass ``compare_robots=False`` when it never reached allocation).
    """
    for old, new in itertools.zip_longest(expected, actual):
        if old is None or new is None or old.signature() != new.signature():
            return new or old
    for old, new in zip(expected, actual):
        found = _diff_nodes(old, new, compare_robots)
        if found is not None:
            return found
    return None


def _diff_nodes(old, new, compare_robots):
    if (compare_robots and old.is_terminal and
            old.assigned_robot != new.assigned_robot):
        return new
    if not (old.children and new.children):
        return None
    if [n.signature() for n in old.children] != \
            [n.signature() for n in new.children]:
        return new
    for old_child, new_child in zip(old.children, new.children):
        found = _diff_nodes(old_child, new_child, compare_robots)
        if found is not None:
            return found
    return None
