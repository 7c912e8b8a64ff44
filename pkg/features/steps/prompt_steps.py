"""Steps for the Prompt Engine Feature."""

import logging
import os

from behave import when, then

from features.steps import utils
from tnplanner import constants as c
from tnplanner import knowledge_base as kbase
from tnplanner import prompt_engine as pe


logger = logging.getLogger('tnplanner.steps.prompt')

BUNDLED_EXAMPLES = 'assembly.txt'


def bundled_examples():
    return pe.load_examples(
        os.path.join(pe.TEMPLATES_DIR, 'examples', BUNDLED_EXAMPLES))


def build_envelope(context, word, instantiated):
    kb = context.scenario.kb
    try:
        context.scenario.envelope = pe.build_envelope(
            kbase.lookup(kb, word), instantiated, '', kb=kb)
    except pe.PromptEngineError as exc:
        context.scenario.error = exc
    else:
        context.scenario.error = None


# Whens
# ------------------------------------------------------------------------------

@when('an envelope is built for {word} with {name} "{value}"')
def step_impl(context, word, name, value):
    build_envelope(context, word, {name: value})


@when('an envelope is built for {word}')
def step_impl(context, word):
    build_envelope(context, word, {})


@when('a prompt for {word} with task_description "{description}" is built'
      ' twice with the bundled examples')
def step_impl(context, word, description):
    kb = context.scenario.kb
    spec = kbase.lookup(kb, word)
    examples = bundled_examples()
    context.scenario.prompts = [
        pe.build_prompt(spec, {c.INSTRUCTION_PARAMETER: description},
                        description, kb=kb, examples=examples)
        for _ in range(2)]
    context.scenario.prompt = context.scenario.prompts[0]


@when('a prompt for {word} with task_description "{description}" is built'
      ' with the bundled examples repeated {times:d} times')
def step_impl(context, word, description, times):
    kb = context.scenario.kb
    context.scenario.prompt = pe.build_prompt(
        kbase.lookup(kb, word), {c.INSTRUCTION_PARAMETER: description},
        description, kb=kb, examples=bundled_examples(),
        example_repetitions=times)


@when("the response '{text}' is parsed")
def step_impl(context, text):
    context.scenario.sequence = pe.parse_output(text)


@when("the response '{text}' is checked against {parent}")
def step_impl(context, text, parent):
    kb = context.scenario.kb
    context.scenario.report = pe.validate_sequence(
        kb, kbase.lookup(kb, parent), pe.parse_output(text))


@when('the response {text} is classified against {parent}')
def step_impl(context, text, parent):
    context.scenario.label = utils.classify_response(
        context.scenario.kb, parent, text)


# Thens
# ------------------------------------------------------------------------------

@then('the envelope lists possible subtasks {subtasks}')
def step_impl(context, subtasks):
    assert context.scenario.envelope.possible_subtasks == tuple(
        utils.kb_names(subtasks))


@then('the envelope gives {subtask} the parameters {names}')
def step_impl(context, subtask, names):
    params = context.scenario.envelope.subtask_parameters[subtask]
    assert [p.name for p in params] == utils.kb_names(names)


@then('the envelope task parameters are empty')
def step_impl(context):
    assert context.scenario.envelope.task_parameters == {}


@then('both prompts are identical')
def step_impl(context):
    first, second = context.scenario.prompts
    assert first == second


@then('the prompt sections appear in the order preamble, EXAMPLES:, INPUT:,'
      ' GENERAL_INFO:')
def step_impl(context):
    prompt = context.scenario.prompt
    assert prompt.startswith(pe.load_preamble())
    positions = [prompt.index('\n{}\n'.format(header)) for header in (
        c.EXAMPLES_HEADER, c.ENVELOPE_HEADER, c.GENERAL_INFO_HEADER)]
    assert positions == sorted(positions), positions
    assert prompt.endswith('\n')


@then('the envelope recovered from the prompt is for {word}')
def step_impl(context, word):
    envelope = pe.envelope_from_prompt(context.scenario.prompt)
    assert envelope.task == word
    assert envelope.task_parameters == {
        c.INSTRUCTION_PARAMETER: 'Assemble a desk lamp'}


@then('the prompt contains the first example {times:d} times')
def step_impl(context, times):
    assert context.scenario.prompt.count('Example 1 (') == times


@then('the parsed sequence is {action} with part "{part}", count "{count}"'
      ' and torque "{torque}"')
def step_impl(context, action, part, count, torque):
    step, = context.scenario.sequence.steps
    assert step.action == action
    assert step.parameters == {'part': part, 'count': count,
                               'torque': torque}, step.parameters


@then('serializing and parsing the sequence again gives the same sequence')
def step_impl(context):
    sequence = context.scenario.sequence
    assert pe.parse_output(pe.serialize_output(sequence)) == sequence


@then('the feedback says "{text}"')
def step_impl(context, text):
    feedback = pe.feedback_paragraph(context.scenario.report)
    assert feedback.startswith(c.FEEDBACK_HEADER)
    assert text in feedback, feedback


@then('{ok:d} of {total:d} subtasks have correct parameters')
def step_impl(context, ok, total):
    report = context.scenario.report
    assert (report.subtasks_param_ok, report.subtasks_total) == (ok, total)


@then('the response is accepted')
def step_impl(context):
    assert context.scenario.report.ok


@then('the sequence does not match a declared sequence')
def step_impl(context):
    assert not context.scenario.report.sequence_matches_declared


@then('it is classified as {label}')
def step_impl(context, label):
    assert context.scenario.label == label, context.scenario.label
