"""Evaluation harness.

Runs the full pipeline several times per test case and scores the
generations on three rates:

- format success: generations whose every model response had the required
  output shape, over all generations;
- parameter success: generated subtasks with an allowed action and exactly
  the declared, well-typed parameters, pooled over every generation;
- plan success: generations whose plan achieved the task, judged by the
  assembly simulator or by external (human) verdict labels.
"""

import fractions
import json
import logging
import math
from typing import Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveInt,
    ValidationError,
    model_validator,
)

from . import base
from . import constants as c
from . import knowledge_base as kbase
from . import llm_backend
from . import orchestration
from . import prompt_engine as pe
from . import sim_executor
from . import tree_engine
from . import utils


logger = logging.getLogger('tnplanner.eval')


class EvalError(base.TNPlannerError):
    pass


class EmptyDenominator(EvalError):
    pass


class Rate:
    """An exact ratio. ``percent()`` renders it to one decimal place."""

    def __init__(self, numerator, denominator):
        if denominator <= 0:
            raise EmptyDenominator(
                'A rate needs a positive denominator, got {}'.format(
                    denominator))
        if not 0 <= numerator <= denominator:
            raise EvalError('Rate numerator {} is outside 0..{}'.format(
                numerator, denominator))
        self.numerator = numerator
        self.denominator = denominator
        self.value = fractions.Fraction(numerator, denominator)

    def percent(self, truncate=False):
        """Half-up rounding by default; ``truncate`` drops the digits past the
        first decimal instead. Whole percentages have no decimal part.
        """
        tenths = self.value * 1000
        if truncate:
            tenths = math.floor(tenths)
        else:
            tenths = math.floor(tenths + fractions.Fraction(1, 2))
        whole, decimal = divmod(tenths, 10)
        if decimal:
            return '{}.{}%'.format(whole, decimal)
        return '{}%'.format(whole)

    def table_cell(self):
        rounded = self.percent()
        truncated = self.percent(truncate=True)
        if rounded == truncated:
            return rounded
        return '{} [{}]'.format(rounded, truncated)

    def to_dict(self):
        return {
            'numerator': self.numerator,
            'denominator': self.denominator,
            'percent': self.percent(),
            'percent_truncated': self.percent(truncate=True),
        }

    def __eq__(self, other):
        return (isinstance(other, Rate) and
                (self.numerator, self.denominator) ==
                (other.numerator, other.denominator))

    def __hash__(self):
        return hash((self.numerator, self.denominator))

    def __repr__(self):
        return '<Rate {}/{}>'.format(self.numerator, self.denominator)


class TrialRecord(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    case_id: str
    generation: PositiveInt
    format_ok: bool
    subtasks_total: NonNegativeInt = 0
    subtasks_param_ok: NonNegativeInt = 0
    plan_verdict: str
    verdict_source: str
    verdict_reason: Optional[str] = None
    external_labels: Tuple[bool, ...] = ()
    transcript_range: Tuple[int, int] = (0, 0)
    error: Optional[str] = None

    @model_validator(mode='after')
    def _check_counts(self):
        if self.subtasks_param_ok > self.subtasks_total:
            raise ValueError('more correct subtasks than subtasks')
        if not self.format_ok and (self.subtasks_total or
                                   self.plan_verdict != 'failure'):
            raise ValueError('a format failure counts no subtasks and fails'
                             ' the plan')
        if self.plan_verdict not in ('success', 'failure'):
            raise ValueError('unknown plan verdict {!r}'.format(
                self.plan_verdict))
        return self

    @property
    def plan_ok(self):
        return self.plan_verdict == 'success'


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    format_success_rate: Rate
    parameter_success_rate: Optional[Rate]
    plan_success_rate: Rate
    generations: int
    cases: int
    verdict_source: str

    def to_dict(self):
        param = self.parameter_success_rate
        return {
            'cases': self.cases,
            'generations': self.generations,
            'verdict_source': self.verdict_source,
            'format_success_rate': self.format_success_rate.to_dict(),
            'parameter_success_rate': (param.to_dict() if param is not None
                                       else c.NOT_AVAILABLE),
            'plan_success_rate': self.plan_success_rate.to_dict(),
        }

    def table(self, label):
        """Plain-text table in FORMAT / PARAMETER / PLAN column order."""
        cells = []
        for rate in (self.format_success_rate, self.parameter_success_rate,
                     self.plan_success_rate):
            if rate is None:
                cells.append(c.NOT_AVAILABLE)
            else:
                cells.append('{} ({}/{})'.format(rate.table_cell(),
                                                 rate.numerator,
                                                 rate.denominator))
        header = ['MODEL'] + list(c.REPORT_COLUMNS)
        row = [label] + cells
        widths = [max(len(h), len(r)) for h, r in zip(header, row)]
        lines = ['  '.join(v.ljust(w) for v, w in zip(line, widths)).rstrip()
                 for line in (header, row)]
        return '\n'.join(lines) + '\n'


class EvalCase(BaseModel):
    """One test case. ``kb`` optionally overrides the run's KB paths (the
    Manager KB first); paths are relative to the case file.
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    id: str = Field(min_length=1)
    instruction: str
    state: str = ''
    scenario: Optional[str] = None
    verdicts: Optional[str] = None
    kb: Tuple[str, ...] = ()


class VerdictLabels(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    case_id: str
    generation: PositiveInt
    labels: Tuple[bool, ...] = Field(min_length=1)

    @property
    def majority(self):
        return sum(self.labels) * 2 > len(self.labels)


def compute_rate(successes, total):
    return Rate(successes, total)


def aggregate(records):
    """Pure function of the records; their order does not matter."""
    records = list(records)
    if not records:
        raise EmptyDenominator('No trial records to aggregate')
    sources = {r.verdict_source for r in records}
    if len(sources) > 1:
        raise EvalError('Trial records mix verdict sources: {}'.format(
            ', '.join(sorted(sources))))
    subtasks = sum(r.subtasks_total for r in records)
    return MetricsReport(
        format_success_rate=compute_rate(
            sum(1 for r in records if r.format_ok), len(records)),
        parameter_success_rate=(
            compute_rate(sum(r.subtasks_param_ok for r in records), subtasks)
            if subtasks else None),
        plan_success_rate=compute_rate(
            sum(1 for r in records if r.plan_ok), len(records)),
        generations=len(records),
        cases=len({r.case_id for r in records}),
        verdict_source=sources.pop())


def load_cases(path):
    try:
        with open(path, encoding='utf8') as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise base.ConfigError('Unable to read cases {}: {}'.format(
            path, exc)) from exc
    if not isinstance(data, list) or not data:
        raise base.ConfigError(
            'Case file {} must be a non-empty JSON list'.format(path))
    try:
        cases = [EvalCase.model_validate(d) for d in data]
    except ValidationError as exc:
        raise base.ConfigError('Invalid case file {}: {}'.format(
            path, exc.errors()[0]['msg'])) from exc
    return [case.model_copy(update={
        'scenario': utils.resolve_relative(case.scenario, path),
        'verdicts': utils.resolve_relative(case.verdicts, path),
        'kb': tuple(utils.resolve_relative(p, path) for p in case.kb),
    }) for case in cases]


def load_verdicts(path):
    """Map ``(case_id, generation)`` to its labels."""
    try:
        with open(path, encoding='utf8') as f:
            data = json.load(f)
        labels = [VerdictLabels.model_validate(d) for d in data]
    except (OSError, ValueError, TypeError) as exc:
        raise base.ConfigError('Unable to read verdicts {}: {}'.format(
            path, exc)) from exc
    return {(v.case_id, v.generation): v for v in labels}


def verdict_source_for(cases, verdicts_path=None):
    if verdicts_path:
        return c.VERDICT_EXTERNAL
    if all(case.verdicts for case in cases):
        return c.VERDICT_EXTERNAL
    if all(case.scenario for case in cases):
        return c.VERDICT_SIMULATOR
    raise base.ConfigError('Every case needs a scenario, or every case a'
                           ' verdict file, unless a run verdict file is'
                           ' given')


def run_eval(cases, config, repeats=None, verdicts_path=None,
             transcript=None):
    """Run every case ``repeats`` times through one shared backend and
    transcript. Pipeline errors fail the trial, not the run.
    """
    repeats = repeats or config.repeats
    if not cases:
        raise base.ConfigError('No cases to evaluate')
    if repeats < 1:
        raise base.ConfigError('repeats must be at least 1')
    source = verdict_source_for(cases, verdicts_path)
    external = {}
    if source == c.VERDICT_EXTERNAL:
        for path in sorted({verdicts_path} if verdicts_path else
                           {case.verdicts for case in cases}):
            external.update(load_verdicts(path))
    kb_cache = {}

    def knowledge_bases(case):
        paths = case.kb or tuple(config.kb_paths)
        if not paths:
            raise base.ConfigError('Case {} has no knowledge bases'.format(
                case.id))
        for path in paths:
            if path not in kb_cache:
                kb_cache[path] = kbase.load_knowledge_base(path)
        return [kb_cache[p] for p in paths]

    per_case = [(case, knowledge_bases(case)) for case in cases]
    every_kb = list(kb_cache.values())
    transcript = transcript if transcript is not None else \
        llm_backend.Transcript()
    backend = llm_backend.get_backend(
        llm_backend.BackendConfig.from_run_config(config), transcript,
        every_kb)
    examples = pe.load_examples(config.examples) if config.examples else None
    robots = orchestration.load_fleet(config.robots) if config.robots else None
    records = []
    for case, kbs in per_case:
        scenario = (sim_executor.load_scenario(case.scenario)
                    if source == c.VERDICT_SIMULATOR else None)
        for generation in range(1, repeats + 1):
            if source == c.VERDICT_EXTERNAL and \
                    (case.id, generation) not in external:
                raise base.ConfigError(
                    'No verdict labels for case {} generation {}'.format(
                        case.id, generation))
            records.append(run_trial(
                case, generation, kbs, backend, config, robots, scenario,
                external.get((case.id, generation)), examples))
    report = aggregate(records)
    logger.info('Evaluated %s generation(s) of %s case(s)',
                report.generations, report.cases)
    return report, records


def run_trial(case, generation, kbs, backend, config, robots, scenario,
              labels, examples=None):
    transcript = backend.transcript
    first = len(transcript) + 1
    log = tree_engine.GenerationLog()
    roots = None
    error = None
    try:
        manager, planners, allocator = orchestration.build_pipeline(
            kbs, backend, config, robots=robots, examples=examples)
        roots = orchestration.generate_task_tree(
            case.instruction, case.state, manager, planners, allocator,
            workers=config.workers, log=log)
    except base.ConfigError:
        raise
    except base.TNPlannerError as exc:
        error = '{}: {}'.format(type(exc).__name__, exc)
        if exc.stage_label():
            error = '{}: {}'.format(exc.stage_label(), error)
        logger.warning('Case %s generation %s failed: %s', case.id,
                       generation, error)
    format_ok = bool(log.records) and log.format_ok
    verdict_reason = None
    if labels is not None:
        source = c.VERDICT_EXTERNAL
        plan_ok = format_ok and labels.majority
        external_labels = labels.labels
    else:
        source = c.VERDICT_SIMULATOR
        external_labels = ()
        if roots is None or not format_ok:
            plan_ok = False
            verdict_reason = error or 'format-failure'
        else:
            verdict = sim_executor.check_plan(
                sim_executor.initial_state(scenario, config.strict_aliases),
                sim_executor.goal_of(scenario), tree_engine.flatten(roots))
            plan_ok = verdict.success
            verdict_reason = verdict.reason
    return TrialRecord(
        case_id=case.id,
        generation=generation,
        format_ok=format_ok,
        subtasks_total=log.subtasks_total if format_ok else 0,
        subtasks_param_ok=log.subtasks_param_ok if format_ok else 0,
        plan_verdict='success' if plan_ok else 'failure',
        verdict_source=source,
        verdict_reason=verdict_reason,
        external_labels=external_labels,
        transcript_range=(first, len(transcript)),
        error=error)


def write_trial_records(path, records):
    utils.write_json_lines(path, [r.model_dump(mode='json') for r in records])


def load_trial_records(path):
    return [TrialRecord.model_validate(r) for r in utils.read_json_lines(path)]


def write_report(config, report, label):
    utils.write_text(config.get_report_path(),
                     utils.pretty_json(report.to_dict()))
    table = report.table(label)
    utils.write_text(config.get_report_table_path(), table)
    return table
