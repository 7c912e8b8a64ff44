"""Steps for the LLM Backend Feature."""

import contextlib
import hashlib
import logging
import os
from unittest import mock

from behave import when, then, given

from features.steps import utils
from tnplanner import base
from tnplanner import constants as c
from tnplanner import knowledge_base as kbase
from tnplanner import llm_backend
from tnplanner import prompt_engine as pe
from tnplanner import utils as tnutils


logger = logging.getLogger('tnplanner.steps.backend')


class FakeEndpoint:
    """Stands in for ``requests.post``: answers with the scripted status
    codes in order, repeating the last one.
    """

    def __init__(self, statuses, content=''):
        self.statuses = list(statuses)
        self.content = content
        self.calls = []

    def __call__(self, url, json=None, headers=None, timeout=None):
        self.calls.append({'url': url, 'json': json, 'headers': headers})
        status = self.statuses[min(len(self.calls), len(self.statuses)) - 1]
        response = mock.Mock(ok=status < 400, status_code=status,
                             text='status {}'.format(status))
        response.json.return_value = {
            'choices': [{'message': {'role': 'assistant',
                                     'content': self.content}}]}
        return response


def send(context, word, description, remaining_depth=None):
    kb = context.scenario.kb
    spec = kbase.lookup(kb, word)
    prompt = pe.build_prompt(spec, {c.INSTRUCTION_PARAMETER: description},
                             description, kb=kb)

    def validator(text):
        return pe.validate_sequence(kb, spec, pe.parse_output(text))

    context.scenario.error = None
    try:
        text, attempt = context.scenario.backend.complete_validated(
            prompt, validator, remaining_depth=remaining_depth)
    except llm_backend.BackendError as exc:
        context.scenario.error = exc
        return
    context.scenario.answer = pe.parse_output(text)
    context.scenario.attempt = attempt


def complete(context, prompt, times):
    context.scenario.answers = []
    context.scenario.error = None
    endpoint = getattr(context.scenario, 'endpoint', None)
    patch = (mock.patch.object(llm_backend.requests, 'post', endpoint)
             if endpoint is not None else contextlib.nullcontext())
    with patch:
        for _ in range(times):
            try:
                context.scenario.answers.append(
                    context.scenario.backend.complete(prompt))
            except llm_backend.BackendError as exc:
                context.scenario.error = exc
                break


def http_backend(context, endpoint):
    context.scenario.endpoint = endpoint
    context.scenario.backend = llm_backend.HTTPBackend(
        utils.backend_config('http', endpoint='http://llm.invalid/v1/chat',
                             model='test-model', retry_wait=0))


# Givens
# ------------------------------------------------------------------------------

@given('an oracle backend over {names} writing its transcript to a file')
def step_impl(context, names):
    path = os.path.join(context.scenario.tmpdir, 'transcript.jsonl')
    context.scenario.transcript_path = path
    context.scenario.backend = utils.oracle_backend(
        [utils.load_kb(n) for n in utils.kb_names(names)],
        llm_backend.Transcript(path))


@given('an oracle backend over {names}')
def step_impl(context, names):
    context.scenario.backend = utils.oracle_backend(
        [utils.load_kb(n) for n in utils.kb_names(names)])


@given('a replay backend over script {script} in {mode} mode')
def step_impl(context, script, mode):
    context.scenario.backend = utils.replay_backend(script, mode)


@given('the first scripted response has been used up')
def step_impl(context):
    context.scenario.backend.complete(utils.WARM_UP_PROMPT)


@given('a digest replay script answering "{first}" and then "{second}" to the'
       ' prompt "{prompt}"')
def step_impl(context, first, second, prompt):
    key = tnutils.content_digest(prompt)
    records = [llm_backend.ScriptRecord(key=key, response=first),
               llm_backend.ScriptRecord(key='unrelated', response='never'),
               llm_backend.ScriptRecord(key=key, response=second)]
    context.scenario.backend = llm_backend.ReplayBackend(
        utils.backend_config('replay', script='unused'), records=records)


@given('SOURCE_DATE_EPOCH is {seconds}')
def step_impl(context, seconds):
    utils.set_env(context, 'SOURCE_DATE_EPOCH', seconds)


@given('the environment variable {name} is "{value}"')
def step_impl(context, name, value):
    utils.set_env(context, name, value)


@given('an HTTP backend whose endpoint answers {status:d} and then'
       ' "{content}"')
def step_impl(context, status, content):
    http_backend(context, FakeEndpoint([status, 200], content))


@given('an HTTP backend whose endpoint always answers {status:d}')
def step_impl(context, status):
    http_backend(context, FakeEndpoint([status]))


# Whens
# ------------------------------------------------------------------------------

@when('{word} with task_description "{description}" is sent through the'
      ' backend with {remaining:d} levels left')
def step_impl(context, word, description, remaining):
    send(context, word, description, remaining)


@when('{word} with task_description "{description}" is sent through the'
      ' backend')
def step_impl(context, word, description):
    send(context, word, description)


@when('{count:d} prompts are completed')
def step_impl(context, count):
    context.scenario.answers = []
    context.scenario.error = None
    for index in range(1, count + 1):
        try:
            context.scenario.answers.append(
                context.scenario.backend.complete('prompt {}'.format(index)))
        except llm_backend.BackendError as exc:
            context.scenario.error = exc
            break


@when('the prompt "{prompt}" is completed {times:d} times')
def step_impl(context, prompt, times):
    complete(context, prompt, times)


@when('the prompt "{prompt}" is completed once')
def step_impl(context, prompt):
    complete(context, prompt, 1)


@when('a backend is configured with {setting}')
def step_impl(context, setting):
    context.scenario.error = None
    try:
        config = base.RunConfig(
            **tnutils.parse_k_v_attributes(setting.split(',')))
        llm_backend.BackendConfig.from_run_config(config)
    except base.ConfigError as exc:
        context.scenario.error = exc


# Thens
# ------------------------------------------------------------------------------

@then('the accepted answer is {actions}')
def step_impl(context, actions):
    assert context.scenario.error is None, context.scenario.error
    assert list(context.scenario.answer.actions) == utils.kb_names(actions), \
        context.scenario.answer.actions


@then('it was accepted on attempt {attempt:d}')
def step_impl(context, attempt):
    assert context.scenario.attempt == attempt


@then('the transcript has {count:d} entries')
def step_impl(context, count):
    assert len(context.scenario.backend.transcript) == count, len(
        context.scenario.backend.transcript)


@then('the transcript has {count:d} entry')
def step_impl(context, count):
    assert len(context.scenario.backend.transcript) == count


@then('transcript entry {sequence:d} is attempt {attempt:d} whose prompt'
      ' carries the feedback "{text}"')
def step_impl(context, sequence, attempt, text):
    entry = list(context.scenario.backend.transcript)[sequence - 1]
    assert entry.sequence == sequence
    assert entry.attempt == attempt
    assert c.FEEDBACK_HEADER in entry.prompt
    assert text in entry.prompt, entry.prompt


@then('ValidationExhausted is raised after {attempts:d} attempts')
def step_impl(context, attempts):
    error = context.scenario.error
    assert isinstance(error, llm_backend.ValidationExhausted), error
    assert len(error.outcomes) == attempts
    assert not any(outcome.ok for outcome in error.outcomes)


@then('the answers were {answers}')
def step_impl(context, answers):
    assert context.scenario.answers == utils.kb_names(answers), \
        context.scenario.answers


@then('every transcript line has a sequence number, a sha256 prompt digest'
      ' and the timestamp {timestamp}')
def step_impl(context, timestamp):
    records = tnutils.read_json_lines(context.scenario.transcript_path)
    assert records
    for number, record in enumerate(records, 1):
        assert record['sequence'] == number
        assert record['prompt_digest'] == hashlib.sha256(
            record['prompt'].encode('utf8')).hexdigest()
        assert record['timestamp'] == timestamp, record['timestamp']
        assert record['backend'] == 'oracle'


@then('the answer is "{answer}"')
def step_impl(context, answer):
    assert context.scenario.error is None, context.scenario.error
    assert context.scenario.answers == [answer], context.scenario.answers


@then('the endpoint was called {count:d} times with the bearer token'
      ' "{token}"')
def step_impl(context, count, token):
    calls = context.scenario.endpoint.calls
    assert len(calls) == count
    for call in calls:
        assert call['headers']['Authorization'] == 'Bearer {}'.format(token)
        assert call['json']['model'] == 'test-model'
        assert call['json']['messages'][0]['content'] == 'hello'


@then('the endpoint was called {count:d} times')
def step_impl(context, count):
    assert len(context.scenario.endpoint.calls) == count
