"""Steps for the Simulator Feature."""

import itertools
import json
import logging
import os

from behave import when, then, given

from features.steps import utils
from tnplanner import base
from tnplanner import constants as c
from tnplanner import sim_executor as sim
from tnplanner import tree_engine
from tnplanner import utils as tnutils


logger = logging.getLogger('tnplanner.steps.sim')


def steps_from_rows(table):
    """Like ``utils.steps_from_table`` but honours an optional ``action``
    column.
    """
    if 'action' not in table.headings:
        return utils.steps_from_table(table)
    return [tree_engine.ExecutableStep(
        row['action'], {'part_a': row['part_a'], 'part_b': row['part_b']})
        for row in table]


def check(context, plan):
    scenario = context.scenario.world
    strict = getattr(context.scenario, 'strict', False)
    return sim.check_plan(sim.initial_state(scenario, strict=strict),
                          sim.goal_of(scenario), plan)


# Givens
# ------------------------------------------------------------------------------

@given('the scenario {name}')
def step_impl(context, name):
    context.scenario.world = sim.load_scenario(
        utils.fixture_path('scenarios', name))


@given('{mode} alias resolution')
def step_impl(context, mode):
    context.scenario.strict = mode == 'strict'


# Whens
# ------------------------------------------------------------------------------

@when('the plan is checked')
def step_impl(context):
    context.scenario.verdict = check(context, steps_from_rows(context.table))


@when('every ordering of the plan is checked')
def step_impl(context):
    plan = steps_from_rows(context.table)
    context.scenario.verdicts = [
        check(context, list(ordering))
        for ordering in itertools.permutations(plan)]


@when('{count:d} joints of {part_a} and {part_b} are checked')
def step_impl(context, count, part_a, part_b):
    step = tree_engine.ExecutableStep(
        c.ASSEMBLE_PARTS, {'part_a': part_a, 'part_b': part_b})
    context.scenario.verdict = check(context, [step] * count)


@when('a step with only part_a "{part}" is checked')
def step_impl(context, part):
    step = tree_engine.ExecutableStep(c.ASSEMBLE_PARTS, {'part_a': part})
    context.scenario.verdict = check(context, [step])


@when('the scenario document is loaded')
def step_impl(context):
    path = os.path.join(context.scenario.tmpdir, 'scenario.json')
    tnutils.write_text(path, context.text)
    context.scenario.error = None
    try:
        context.scenario.world = sim.load_scenario(path)
    except base.ConfigError as exc:
        context.scenario.error = exc


# Thens
# ------------------------------------------------------------------------------

@then('the plan succeeds')
def step_impl(context):
    verdict = context.scenario.verdict
    assert verdict.success, verdict


@then('the plan fails at the end with {reason}')
def step_impl(context, reason):
    verdict = context.scenario.verdict
    assert not verdict.success
    assert verdict.failed_step is None, verdict
    assert verdict.reason == reason, verdict


@then('the plan fails at step {index:d} with {reason}')
def step_impl(context, index, reason):
    verdict = context.scenario.verdict
    assert not verdict.success
    assert (verdict.failed_step, verdict.reason) == (index, reason), verdict


@then('all {count:d} orderings succeed')
def step_impl(context, count):
    verdicts = context.scenario.verdicts
    assert len(verdicts) == count
    failures = [v for v in verdicts if not v.success]
    assert not failures, failures


@then('the verdict record is {record}')
def step_impl(context, record):
    assert sim.verdict_to_dict(context.scenario.verdict) == json.loads(record)


@then('the verdict detail mentions "{text}"')
def step_impl(context, text):
    assert text in context.scenario.verdict.detail, \
        context.scenario.verdict.detail
