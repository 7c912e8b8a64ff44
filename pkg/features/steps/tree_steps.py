"""Steps for the Tree Engine Feature."""

import logging

from behave import when, then

from features.steps import utils
from tnplanner import base
from tnplanner import constants as c
from tnplanner import prompt_engine as pe
from tnplanner import tree_engine
from tnplanner import utils as tnutils


logger = logging.getLogger('tnplanner.steps.tree')

TASK_DESCRIPTION = 'Assemble the product on the workbench'


def grow(context, word, settings=None):
    kb = context.scenario.kb
    limits = tree_engine.ExpansionLimits(**(settings or {}))
    root = tree_engine.TaskNode.create(
        kb, '1', word, {c.INSTRUCTION_PARAMETER: TASK_DESCRIPTION})
    context.scenario.root = root
    context.scenario.error = None
    try:
        tree_engine.expand_tree(kb, context.scenario.backend, root,
                                TASK_DESCRIPTION, limits)
    except base.TNPlannerError as exc:
        context.scenario.error = exc


def find_node(root, node_id):
    for node in root.walk():
        if node.id == node_id:
            return node
    raise utils.TNPlannerStepsError('No node {}'.format(node_id))


def copy_tree(root):
    return tree_engine.tree_from_dict(tree_engine.tree_to_dict(root))


# Whens
# ------------------------------------------------------------------------------

@when('the {word} tree is grown with {settings}')
def step_impl(context, word, settings):
    grow(context, word, tnutils.parse_k_v_attributes(settings.split(',')))


@when('the {word} tree is grown')
def step_impl(context, word):
    grow(context, word)


@when('the partial tree is flattened')
def step_impl(context):
    context.scenario.error = None
    try:
        tree_engine.flatten([context.scenario.root])
    except tree_engine.TreeError as exc:
        context.scenario.error = exc


@when('a lone {word} node is expanded')
def step_impl(context, word):
    kb = context.scenario.kb
    node = tree_engine.TaskNode.create(kb, '1', word)
    context.scenario.error = None
    try:
        tree_engine.expand_node(kb, context.scenario.backend, node, '',
                                tree_engine.ExpansionLimits())
    except tree_engine.TreeError as exc:
        context.scenario.error = exc


@when('a copy of the tree has {name} of node {node_id} changed to "{value}"')
def step_impl(context, name, node_id, value):
    copy = copy_tree(context.scenario.root)
    find_node(copy, node_id).parameters[name] = value
    context.scenario.copy = copy


@when('a copy of the tree has the children of node {node_id} removed')
def step_impl(context, node_id):
    copy = copy_tree(context.scenario.root)
    find_node(copy, node_id).children = []
    context.scenario.copy = copy


# Thens
# ------------------------------------------------------------------------------

@then('the tree has {count:d} nodes and no open leaves')
def step_impl(context, count):
    assert context.scenario.error is None, context.scenario.error
    root = context.scenario.root
    assert tree_engine.count_nodes(root) == count, tree_engine.count_nodes(
        root)
    assert tree_engine.open_leaves(root) == []


@then('the backend expanded {words} in that order')
def step_impl(context, words):
    tasks = [pe.envelope_from_prompt(entry.prompt).task
             for entry in context.scenario.backend.transcript]
    assert tasks == utils.kb_names(words), tasks


@then('node {node_id} is {action} under {parent} at depth {depth:d}')
def step_impl(context, node_id, action, parent, depth):
    node = find_node(context.scenario.root, node_id)
    assert node.action == action
    assert node.origin == parent
    assert node.depth == depth
    assert node.is_terminal


@then('the tree flattens to')
def step_impl(context):
    steps = tree_engine.flatten([context.scenario.root])
    expected = [(row['action'], {'part_a': row['part_a'],
                                 'part_b': row['part_b']})
                for row in context.table]
    assert [(s.action, s.parameters) for s in steps] == expected, steps


@then('the tree flattens to {count:d} atomic tasks')
def step_impl(context, count):
    steps = tree_engine.flatten([context.scenario.root])
    assert len(steps) == count, len(steps)
    assert {s.action for s in steps} == {c.ASSEMBLE_PARTS}


@then('the deepest node is at depth {depth:d}')
def step_impl(context, depth):
    assert max(n.depth for n in context.scenario.root.walk()) == depth


@then('the failed tree has {count:d} nodes')
def step_impl(context, count):
    error = context.scenario.error
    assert error is not None
    assert error.tree is context.scenario.root
    assert tree_engine.count_nodes(error.tree) == count, \
        tree_engine.count_nodes(error.tree)


@then('the trees first differ at node {node_id}')
def step_impl(context, node_id):
    node = tree_engine.diff_forests([context.scenario.root],
                                    [context.scenario.copy])
    assert node is not None and node.id == node_id, node


@then('the tree does not differ from its own serialization')
def step_impl(context):
    root = context.scenario.root
    assert tree_engine.diff_forests([root], [copy_tree(root)]) is None
    assert tree_engine.dump_forest([root]) == tree_engine.dump_forest(
        [copy_tree(root)])


@then('the trees do not differ')
def step_impl(context):
    assert tree_engine.diff_forests([context.scenario.root],
                                    [context.scenario.copy]) is None


@then('the backend made at most {count:d} calls for the tree')
def step_impl(context, count):
    calls = [entry for entry in context.scenario.backend.transcript
             if entry.prompt != utils.WARM_UP_PROMPT]
    assert len(calls) <= count, len(calls)
