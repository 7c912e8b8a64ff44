"""Steps for the Properties Feature."""

import logging
import random

from behave import when, then, given

from features.steps import utils
from tnplanner import constants as c
from tnplanner import eval_harness as ev
from tnplanner import knowledge_base as kbase
from tnplanner import prompt_engine as pe
from tnplanner import tree_engine


logger = logging.getLogger('tnplanner.steps.properties')


class Planned:
    """One random KB with everything planning it produced."""

    def __init__(self, kb, root, tree, backend, log):
        self.kb = kb
        self.root = root
        self.tree = tree
        self.backend = backend
        self.log = log


def planned(context):
    return context.scenario.planned


# Givens
# ------------------------------------------------------------------------------

@given('a batch of random knowledge bases')
def step_impl(context):
    rng = random.Random(context.settings['seed'])
    context.scenario.rng = rng
    context.scenario.random_kbs = [
        utils.random_knowledge_base(rng)
        for _ in range(context.settings['random_kbs'])]
    logger.info('Drew %s random knowledge bases with seed %s',
                len(context.scenario.random_kbs), context.settings['seed'])


# Whens
# ------------------------------------------------------------------------------

@when('every random knowledge base is planned from its root')
def step_impl(context):
    context.scenario.planned = []
    for kb, root_word in context.scenario.random_kbs:
        backend = utils.oracle_backend([kb])
        log = tree_engine.GenerationLog()
        root = tree_engine.TaskNode.create(kb, '1', root_word)
        tree_engine.expand_tree(kb, backend, root, 'Random task',
                                tree_engine.ExpansionLimits(), log=log)
        context.scenario.planned.append(
            Planned(kb, root_word, root, backend, log))


# Thens
# ------------------------------------------------------------------------------

@then('every random knowledge base has no Error diagnostics')
def step_impl(context):
    for item in planned(context):
        diagnostics = kbase.validate_knowledge_base(item.kb)
        assert not kbase.has_errors(diagnostics), diagnostics
        assert kbase.can_terminate(item.kb, item.root)


@then('every flattened plan has as many steps as its tree has leaves')
def step_impl(context):
    for item in planned(context):
        steps = tree_engine.flatten([item.tree])
        assert len(steps) == len(item.tree.leaves())
        assert all(item.kb.task_words[s.action].is_terminal for s in steps)


@then('no tree has an open leaf')
def step_impl(context):
    for item in planned(context):
        assert tree_engine.open_leaves(item.tree) == []


@then('every tree node names a task word of its knowledge base')
def step_impl(context):
    for item in planned(context):
        for node in item.tree.walk():
            assert node.action in item.kb, node


@then('every child sits one level below its parent')
def step_impl(context):
    for item in planned(context):
        for node in item.tree.walk():
            for child in node.children:
                assert child.depth == node.depth + 1
                assert child.origin == node.id
                assert child.id.startswith(node.id + '.')


@then('every recorded response parses to a sequence that serializes back to'
      ' itself')
def step_impl(context):
    for item in planned(context):
        for entry in item.backend.transcript:
            sequence = pe.parse_output(entry.response)
            assert pe.serialize_output(sequence) == entry.response
            assert pe.parse_output(pe.serialize_output(sequence)) == sequence


@then('every tree loads back from its dump without a difference')
def step_impl(context):
    for item in planned(context):
        copy = tree_engine.tree_from_dict(tree_engine.tree_to_dict(item.tree))
        assert tree_engine.diff_forests([item.tree], [copy]) is None
        assert tree_engine.dump_forest([copy]) == tree_engine.dump_forest(
            [item.tree])


@then('every generation log counts no more correct subtasks than subtasks')
def step_impl(context):
    for item in planned(context):
        assert item.log.subtasks_param_ok <= item.log.subtasks_total
        assert item.log.subtasks_total == sum(
            len(n.children) for n in item.tree.walk())


@then('aggregating random trial records gives the same report in any order')
def step_impl(context):
    rng = context.scenario.rng
    records = []
    for generation in range(1, 21):
        format_ok = rng.random() < 0.8
        total = rng.randint(1, 12) if format_ok else 0
        records.append(ev.TrialRecord(
            case_id='case-{}'.format(generation % 3),
            generation=generation,
            format_ok=format_ok,
            subtasks_total=total,
            subtasks_param_ok=rng.randint(0, total),
            plan_verdict=('success' if format_ok and rng.random() < 0.5
                          else 'failure'),
            verdict_source=c.VERDICT_SIMULATOR))
    expected = ev.aggregate(records).to_dict()
    for _ in range(5):
        rng.shuffle(records)
        assert ev.aggregate(records).to_dict() == expected
    assert ev.aggregate(reversed(records)).to_dict() == expected
