"""Steps for the Evaluation Harness Feature."""

import logging
import os
import random

from behave import when, then, given

from features.steps import utils
from tnplanner import base
from tnplanner import constants as c
from tnplanner import eval_harness as ev


logger = logging.getLogger('tnplanner.steps.eval')


def run_config(context):
    settings = getattr(context.scenario, 'run_settings', {})
    return base.RunConfig(out=context.scenario.tmpdir, **settings)


def evaluate(context, cases, repeats):
    context.scenario.error = None
    try:
        config = run_config(context)
        context.scenario.report, context.scenario.records = ev.run_eval(
            cases, config, repeats=repeats, verdicts_path=config.verdicts)
    except base.TNPlannerError as exc:
        context.scenario.error = exc


def cell(rate):
    return c.NOT_AVAILABLE if rate is None else rate.percent()


def record(context, number):
    return context.scenario.records[number - 1]


def run_settings(context):
    settings = context.scenario.run_settings = getattr(
        context.scenario, 'run_settings', {})
    return settings


# Givens
# ------------------------------------------------------------------------------

@given('the cases {name}')
def step_impl(context, name):
    context.scenario.cases = ev.load_cases(utils.fixture_path('cases', name))


@given('the run uses knowledge bases {names}')
def step_impl(context, names):
    run_settings(context)['kb_paths'] = tuple(
        utils.kb_path(n) for n in utils.kb_names(names))


@given('the run replays script {script} in {mode} mode')
def step_impl(context, script, mode):
    run_settings(context).update(backend='replay', replay_key=mode,
                                 script=utils.fixture_path('scripts', script))


@given('the run judges plans by the labels {name}')
def step_impl(context, name):
    run_settings(context)['verdicts'] = utils.fixture_path('verdicts', name)


@given('the run allows no retries')
def step_impl(context):
    run_settings(context)['max_retries'] = 0


# Whens
# ------------------------------------------------------------------------------

@when('the rate of {successes:d} in {total:d} is computed')
def step_impl(context, successes, total):
    context.scenario.error = None
    try:
        context.scenario.rate = ev.compute_rate(successes, total)
    except ev.EvalError as exc:
        context.scenario.error = exc


@when('the cases are evaluated {repeats:d} times')
def step_impl(context, repeats):
    evaluate(context, context.scenario.cases, repeats)


@when('the cases are evaluated {repeats:d} time')
def step_impl(context, repeats):
    evaluate(context, context.scenario.cases, repeats)


@when('the cases {name} are loaded and evaluated')
def step_impl(context, name):
    context.scenario.error = None
    try:
        cases = ev.load_cases(utils.fixture_path('cases', name))
        ev.run_eval(cases, run_config(context), repeats=1)
    except base.ConfigError as exc:
        context.scenario.error = exc


@when('the trial records are written and read back')
def step_impl(context):
    path = os.path.join(context.scenario.tmpdir, 'trials.jsonl')
    ev.write_trial_records(path, context.scenario.records)
    context.scenario.reloaded = ev.load_trial_records(path)


@when('the report is written')
def step_impl(context):
    config = run_config(context)
    context.scenario.table = ev.write_report(
        config, context.scenario.report, 'oracle')
    context.scenario.config = config


# Thens
# ------------------------------------------------------------------------------

@then('it renders as {percent}')
def step_impl(context, percent):
    assert context.scenario.rate.percent() == percent, \
        context.scenario.rate.percent()


@then('truncated it renders as {percent}')
def step_impl(context, percent):
    rendered = context.scenario.rate.percent(truncate=True)
    assert rendered == percent, rendered


@then('the rates are {fmt} / {param} / {plan}')
def step_impl(context, fmt, param, plan):
    assert context.scenario.error is None, context.scenario.error
    report = context.scenario.report
    actual = tuple(cell(r) for r in (report.format_success_rate,
                                     report.parameter_success_rate,
                                     report.plan_success_rate))
    assert actual == (fmt, param, plan), actual


@then('there are {count:d} trial records from {cases:d} cases')
def step_impl(context, count, cases):
    assert len(context.scenario.records) == count
    assert context.scenario.report.generations == count
    assert context.scenario.report.cases == cases


@then('every trial record was judged by the simulator')
def step_impl(context):
    for trial in context.scenario.records:
        assert trial.verdict_source == c.VERDICT_SIMULATOR
        assert trial.verdict_reason is None, trial


@then('every trial record was judged by external labels')
def step_impl(context):
    for trial in context.scenario.records:
        assert trial.verdict_source == c.VERDICT_EXTERNAL
        assert trial.external_labels


@then('evaluating them again gives the same trial records')
def step_impl(context):
    first = [r.model_dump() for r in context.scenario.records]
    repeats = max(r.generation for r in context.scenario.records)
    evaluate(context, context.scenario.cases, repeats)
    assert [r.model_dump() for r in context.scenario.records] == first


@then('the plan success cell reads "{text}"')
def step_impl(context, text):
    rate = context.scenario.report.plan_success_rate
    rendered = '{} ({}/{})'.format(rate.table_cell(), rate.numerator,
                                   rate.denominator)
    assert rendered == text, rendered
    assert text in context.scenario.report.table('oracle')


@then('trial record {number:d} counts {ok:d} of {total:d} subtasks')
def step_impl(context, number, ok, total):
    trial = record(context, number)
    assert (trial.subtasks_param_ok, trial.subtasks_total) == (ok, total), \
        trial


@then('trial record {number:d} covers transcript entries {first:d} to'
      ' {last:d}')
def step_impl(context, number, first, last):
    assert record(context, number).transcript_range == (first, last)


@then('trial record {number:d} failed with "{text}"')
def step_impl(context, number, text):
    trial = record(context, number)
    assert trial.plan_verdict == 'failure'
    assert trial.error.startswith(text), trial.error
    assert trial.verdict_reason == trial.error


@then('aggregating the reloaded records gives the same report')
def step_impl(context):
    reloaded = ev.aggregate(context.scenario.reloaded)
    assert reloaded.to_dict() == context.scenario.report.to_dict()


@then('aggregating the records in shuffled order gives the same report')
def step_impl(context):
    records = list(context.scenario.records)
    random.Random(context.settings['seed']).shuffle(records)
    assert ev.aggregate(records).to_dict() == \
        context.scenario.report.to_dict()


@then('report.json has the plan success rate {ok:d} of {total:d}')
def step_impl(context, ok, total):
    report = utils.read_json(context.scenario.config.get_report_path())
    rate = report['plan_success_rate']
    assert (rate['numerator'], rate['denominator']) == (ok, total), rate
    assert report['verdict_source'] == c.VERDICT_EXTERNAL


@then('report.txt has the columns {columns}')
def step_impl(context, columns):
    with open(context.scenario.config.get_report_table_path(),
              encoding='utf8') as f:
        header = f.readline().split()
    assert header[1:] == utils.kb_names(columns), header


@then('the report cells read "{fmt}", "{param}" and "{plan}"')
def step_impl(context, fmt, param, plan):
    assert context.scenario.error is None, context.scenario.error
    report = context.scenario.report
    table = report.table('replay')
    for text in (fmt, param, plan):
        assert text in table, table
    rates = (report.format_success_rate, report.parameter_success_rate,
             report.plan_success_rate)
    cells = tuple('{} ({}/{})'.format(r.table_cell(), r.numerator,
                                      r.denominator) for r in rates)
    assert cells == (fmt, param, plan), cells
