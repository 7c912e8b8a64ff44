"""Steps for the Command-line Feature."""

import filecmp
import logging
import os
import shlex

from behave import when, then, given

from features.steps import utils
from tnplanner import layout
from tnplanner import utils as tnutils


logger = logging.getLogger('tnplanner.steps.cli')

# Flags whose value names a bundled fixture.
FIXTURE_FLAGS = {'--robots': 'fleets', '--script': 'scripts',
                 '--verdicts': 'verdicts'}


def output_dir(context, name='out'):
    return os.path.join(context.scenario.tmpdir, name)


def layout_file(directory, getter_name, *args):
    template = dict(layout.OUTPUT_LAYOUT)[getter_name]
    return os.path.normpath(template.format(directory, *args))


def fixture_flags(flags):
    argv = shlex.split(flags)
    for index, token in enumerate(argv[1:], 1):
        if argv[index - 1] in FIXTURE_FLAGS:
            argv[index] = utils.fixture_path(FIXTURE_FLAGS[argv[index - 1]],
                                             token)
    return argv


def plan_argv(instruction, names, out, flags=''):
    argv = ['plan', '--instruction', instruction, '--out', out]
    for name in utils.kb_names(names):
        argv += ['--kb', utils.kb_path(name)]
    return argv + fixture_flags(flags)


def run(context, argv):
    context.scenario.exit_status, context.scenario.stdout, \
        context.scenario.stderr = utils.run_cli(argv)


# Givens
# ------------------------------------------------------------------------------

@given('a recorded plan of "{instruction}" over {names}')
def step_impl(context, instruction, names):
    out = output_dir(context, 'recorded')
    status, _, stderr = utils.run_cli(plan_argv(instruction, names, out))
    if status != 0:
        raise utils.TNPlannerStepsError(
            'Recording the plan failed: {}'.format(stderr))
    context.scenario.recorded_dir = out


@given('recorded response {entry:d} has {old} replaced by {new}')
def step_impl(context, entry, old, new):
    utils.edit_transcript_response(
        layout_file(context.scenario.recorded_dir, 'get_transcript_path'),
        entry, old, new)


@given('the last recorded response is dropped')
def step_impl(context):
    utils.drop_last_transcript_entry(
        layout_file(context.scenario.recorded_dir, 'get_transcript_path'))


# Whens
# ------------------------------------------------------------------------------

@when('tnplan kb-validate is run on {names}')
def step_impl(context, names):
    run(context, ['kb-validate'] + [utils.kb_path(n)
                                    for n in utils.kb_names(names)])


@when('tnplan kb-graph is run on {name} writing to the output directory')
def step_impl(context, name):
    context.scenario.out = output_dir(context)
    run(context, ['kb-graph', utils.kb_path(name), '--out',
                  context.scenario.out])


@when('tnplan kb-graph is run on {name}')
def step_impl(context, name):
    run(context, ['kb-graph', utils.kb_path(name)])


@when('tnplan plans "{instruction}" over {names} the configured number of'
      ' times')
def step_impl(context, instruction, names):
    context.scenario.runs = []
    for number in range(1, context.settings['plan_repeats'] + 1):
        out = output_dir(context, 'run{}'.format(number))
        status, _, stderr = utils.run_cli(plan_argv(instruction, names, out))
        assert status == 0, stderr
        context.scenario.runs.append(out)


@when('tnplan plans "{instruction}" over {names} with {flags}')
def step_impl(context, instruction, names, flags):
    context.scenario.out = output_dir(context)
    run(context, plan_argv(instruction, names, context.scenario.out, flags))


@when('tnplan replays the recorded transcript')
def step_impl(context):
    run(context, ['replay', layout_file(context.scenario.recorded_dir,
                                        'get_transcript_path')])


@when('tnplan evaluates {cases} {repeats:d} times with {flags}')
def step_impl(context, cases, repeats, flags):
    context.scenario.out = output_dir(context)
    run(context, ['eval', utils.fixture_path('cases', cases), '--repeats',
                  str(repeats), '--out', context.scenario.out] +
        fixture_flags(flags))


@when('tnplan evaluates {cases} {repeats:d} times')
def step_impl(context, cases, repeats):
    context.scenario.out = output_dir(context)
    run(context, ['eval', utils.fixture_path('cases', cases), '--repeats',
                  str(repeats), '--out', context.scenario.out])


# Thens
# ------------------------------------------------------------------------------

@then('tnplan exits with status {status:d}')
def step_impl(context, status):
    assert context.scenario.exit_status == status, (
        context.scenario.exit_status, context.scenario.stdout,
        context.scenario.stderr)


@then('its output has {count:d} lines starting with "{prefix}"')
def step_impl(context, count, prefix):
    lines = [line for line in context.scenario.stdout.splitlines()
             if line.startswith(prefix)]
    assert len(lines) == count, context.scenario.stdout


@then("its output includes '{text}'")
def step_impl(context, text):
    assert text in context.scenario.stdout, context.scenario.stdout


@then('its output includes "{text}"')
def step_impl(context, text):
    assert text in context.scenario.stdout, context.scenario.stdout


@then('its errors include "{text}"')
def step_impl(context, text):
    assert text in context.scenario.stderr, context.scenario.stderr


@then('the output directory has no {name}')
def step_impl(context, name):
    assert not os.path.exists(os.path.join(context.scenario.out, name))


@then('the output directory has {names}')
def step_impl(context, names):
    for name in utils.kb_names(names):
        path = os.path.join(context.scenario.out, name)
        assert os.path.isfile(path), path


@then('the transcript file has {count:d} entries')
def step_impl(context, count):
    records = tnutils.read_json_lines(
        layout_file(context.scenario.out, 'get_transcript_path'))
    assert [r['sequence'] for r in records] == list(range(1, count + 1))


@then('the plan file assigns {robots}')
def step_impl(context, robots):
    records = tnutils.read_json_lines(
        layout_file(context.scenario.out, 'get_plan_path'))
    assert [r['robot'] for r in records] == utils.kb_names(robots), records


@then('the replayed tree is byte-identical to the recorded one')
def step_impl(context):
    recorded = context.scenario.recorded_dir
    replayed = os.path.join(recorded, 'replay')
    assert filecmp.cmp(layout_file(recorded, 'get_tree_path'),
                       layout_file(replayed, 'get_tree_path'), shallow=False)


@then('every run wrote the same tree.json, plan.jsonl and transcript.jsonl')
def step_impl(context):
    first, *rest = context.scenario.runs
    for getter_name in ('get_tree_path', 'get_plan_path',
                        'get_transcript_path'):
        expected = tnutils.read_text(layout_file(first, getter_name))
        for other in rest:
            assert tnutils.read_text(layout_file(other, getter_name)) == \
                expected, (getter_name, other)
