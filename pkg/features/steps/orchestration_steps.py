"""Steps for the Orchestration Feature."""

import logging
import os

from behave import when, then, given

from features.steps import utils
from tnplanner import base
from tnplanner import constants as c
from tnplanner import orchestration
from tnplanner import prompt_engine as pe
from tnplanner import tree_engine
from tnplanner import utils as tnutils


logger = logging.getLogger('tnplanner.steps.orchestration')


def plan(context, instruction, policy=None, workers=1):
    """Build the pipeline from the scenario's settings and run it. Errors
    from either half end up in ``context.scenario.error``.
    """
    config = base.RunConfig(
        policy=policy or context.scenario.policy, workers=workers,
        example_repetitions=context.scenario.example_repetitions)
    context.scenario.error = None
    context.scenario.forest = None
    try:
        manager, planners, allocator = orchestration.build_pipeline(
            context.scenario.kbs, context.scenario.backend, config,
            robots=context.scenario.robots,
            examples=context.scenario.examples)
        context.scenario.manager = manager
        context.scenario.forest = orchestration.generate_task_tree(
            instruction, 'The parts lie on the workbench.', manager, planners,
            allocator, workers=workers)
    except base.TNPlannerError as exc:
        context.scenario.error = exc
    return context.scenario.forest


def robots_of(forest):
    return [step.robot for step in tree_engine.flatten(forest)]


# Givens
# ------------------------------------------------------------------------------

@given('a pipeline over {names} with an oracle backend')
def step_impl(context, names):
    kbs = [utils.load_kb(n) for n in utils.kb_names(names)]
    context.scenario.kbs = kbs
    context.scenario.backend = utils.oracle_backend(kbs)
    context.scenario.robots = None
    context.scenario.policy = c.DEFAULT_POLICY
    context.scenario.examples = None
    context.scenario.example_repetitions = 1


@given('the robot fleet {fleet}')
def step_impl(context, fleet):
    context.scenario.robots = orchestration.load_fleet(
        utils.fixture_path('fleets', fleet))


@given('the bundled examples repeated {times:d} times')
def step_impl(context, times):
    context.scenario.examples = pe.load_examples(
        os.path.join(pe.TEMPLATES_DIR, 'examples', 'assembly.txt'))
    context.scenario.example_repetitions = times


@given('the {policy} policy')
def step_impl(context, policy):
    context.scenario.policy = policy


# Whens
# ------------------------------------------------------------------------------

@when('the instruction "{instruction}" is planned with {workers:d} workers')
def step_impl(context, instruction, workers):
    context.scenario.instruction = instruction
    plan(context, instruction, workers=workers)


@when('the instruction "{instruction}" is planned')
def step_impl(context, instruction):
    context.scenario.instruction = instruction
    plan(context, instruction)


@when('an empty instruction is planned')
def step_impl(context):
    plan(context, '   ')


@when('the manager is validated')
def step_impl(context):
    context.scenario.error = None
    try:
        manager, _, _ = orchestration.build_pipeline(
            context.scenario.kbs, context.scenario.backend, base.RunConfig(),
            robots=context.scenario.robots)
        manager.validate()
    except base.TNPlannerError as exc:
        context.scenario.error = exc


@when('the allocated plan is written')
def step_impl(context):
    path = os.path.join(context.scenario.tmpdir, 'plan.jsonl')
    orchestration.write_plan(path, context.scenario.forest)
    context.scenario.plan_path = path


# Thens
# ------------------------------------------------------------------------------

@then('the forest has {trees:d} tree and no children')
def step_impl(context, trees):
    forest = context.scenario.error.tree
    assert len(forest) == trees, forest
    assert all(not root.children for root in forest)


@then('the forest has {trees:d} tree and {steps:d} executable steps')
def step_impl(context, trees, steps):
    assert context.scenario.error is None, context.scenario.error
    forest = context.scenario.forest
    assert len(forest) == trees
    assert len(tree_engine.flatten(forest)) == steps


@then('the forest has {trees:d} trees and {steps:d} executable steps')
def step_impl(context, trees, steps):
    assert context.scenario.error is None, context.scenario.error
    forest = context.scenario.forest
    assert len(forest) == trees
    assert len(tree_engine.flatten(forest)) == steps


@then('every executable step is {action}')
def step_impl(context, action):
    steps = tree_engine.flatten(context.scenario.forest)
    assert {s.action for s in steps} == {action}, steps


@then('the robots are {robots}')
def step_impl(context, robots):
    assert context.scenario.error is None, context.scenario.error
    actual = robots_of(context.scenario.forest)
    assert actual == utils.kb_names(robots), actual


@then('root {node_id} carries the task_description "{description}"')
def step_impl(context, node_id, description):
    root = next(r for r in context.scenario.forest if r.id == node_id)
    assert root.parameters[c.INSTRUCTION_PARAMETER] == description, \
        root.parameters


@then('the forest without robots is the same as under the {policy} policy')
def step_impl(context, policy):
    forest = context.scenario.forest
    other = plan(context, context.scenario.instruction, policy=policy)
    assert context.scenario.error is None, context.scenario.error
    assert tree_engine.dump_forest(forest, include_robot=False) == \
        tree_engine.dump_forest(other, include_robot=False)


@then('the failure happened in stage {label}')
def step_impl(context, label):
    error = context.scenario.error
    assert error is not None
    assert error.stage_label() == 'stage {}'.format(label), \
        error.stage_label()


@then('the forest is the same as when planned with {workers:d} worker')
def step_impl(context, workers):
    forest = context.scenario.forest
    assert context.scenario.error is None, context.scenario.error
    other = plan(context, context.scenario.instruction, workers=workers)
    assert tree_engine.dump_forest(forest) == tree_engine.dump_forest(other)


@then('the plan file has {count:d} lines of action, parameters and robot')
def step_impl(context, count):
    records = tnutils.read_json_lines(context.scenario.plan_path)
    assert len(records) == count
    for record in records:
        assert sorted(record) == ['action', 'parameters', 'robot'], record
        assert record['robot'] == c.DEFAULT_ROBOT_ID


@then('every prompt carries the first example {times:d} times')
def step_impl(context, times):
    prompts = [entry.prompt for entry in context.scenario.backend.transcript]
    assert len(prompts) == 5, len(prompts)
    for prompt in prompts:
        assert prompt.count('Example 1 (') == times, prompt
