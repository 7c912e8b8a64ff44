"""Think_Net_Prompt protocol: build input envelopes from task word specs,
parse model responses into subtask sequences, and check those sequences
against the knowledge base.

Parsing is the format gate (does the response have the required shape at
all); ``validate_sequence`` is the parameter gate (does every step use an
allowed action with exactly the declared, well-typed parameters).
"""

import functools
import json
import logging
import os
import re
from typing import Dict, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictBool,
    StrictFloat,
    StrictInt,
    StrictStr,
    ValidationError,
)

from . import base
from . import constants as c
from . import knowledge_base as kbase
from . import utils


logger = logging.getLogger('tnplanner.prompt')

TEMPLATES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                             'templates')
ENVELOPE_RE = re.compile(
    r'^{}\n(.*)$'.format(re.escape(c.ENVELOPE_HEADER)), re.MULTILINE)


class PromptEngineError(base.TNPlannerError):
    pass


class UnknownParameter(PromptEngineError):

    def __init__(self, name, task):
        self.name = name
        self.task = task
        super().__init__('Task word {!r} declares no parameter {!r}'.format(
            task, name))


class NotExpandable(PromptEngineError):
    """Terminal task words are executed, never decomposed."""

    def __init__(self, task):
        self.task = task
        super().__init__('Task word {!r} is terminal and cannot be'
                         ' expanded'.format(task))


class FormatError(PromptEngineError):
    """The model response does not have the required output shape."""

    def __init__(self, category, detail=''):
        self.category = category
        self.detail = detail
        message = 'Response format error ({})'.format(category)
        if detail:
            message = '{}: {}'.format(message, detail)
        super().__init__(message)


class PromptEnvelope(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    task: str
    introduction: str = ''
    task_parameters: Dict[str, str] = Field(default_factory=dict)
    possible_subtasks: Tuple[str, ...] = ()
    subtask_descriptions: Tuple[str, ...] = ()
    subtask_parameters: Dict[str, Tuple[kbase.ParameterSpec, ...]] = Field(
        default_factory=dict)
    possible_subtask_sequences: Tuple[Tuple[str, ...], ...] = ()
    rules: str = ''
    general_info: str = ''

    def to_json(self):
        return utils.canonical_json(
            self.model_dump(mode='json', by_alias=True))


class SubtaskStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    action: str = Field(min_length=1)
    parameters: Dict[str, str] = Field(default_factory=dict)


class OutputSequence(BaseModel):
    model_config = ConfigDict(frozen=True)

    steps: Tuple[SubtaskStep, ...]

    @property
    def actions(self):
        return tuple(s.action for s in self.steps)


class StepReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    action: str
    membership_ok: bool
    parameters_ok: bool
    missing_params: Tuple[str, ...] = ()
    type_errors: Tuple[str, ...] = ()
    extraneous_params: Tuple[str, ...] = ()

    @property
    def ok(self):
        return self.membership_ok and self.parameters_ok


class ValidationReport(BaseModel):
    """Outcome of one model response. ``format_ok`` false means the response
    never got as far as per-step checks.
    """

    model_config = ConfigDict(frozen=True)

    format_ok: bool
    step_reports: Tuple[StepReport, ...] = ()
    sequence_matches_declared: bool = False
    format_category: Optional[str] = None
    format_detail: str = ''

    @property
    def ok(self):
        return self.format_ok and all(s.ok for s in self.step_reports)

    @property
    def subtasks_total(self):
        return len(self.step_reports)

    @property
    def subtasks_param_ok(self):
        return sum(1 for s in self.step_reports if s.ok)

    def hard_failures(self):
        return [s for s in self.step_reports if not s.ok]


class _StepDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    action: StrictStr = Field(min_length=1)
    parameters: Dict[StrictStr, Union[StrictStr, StrictBool, StrictInt,
                                      StrictFloat]]


class _OutputDocument(BaseModel):
    subtask_sequence: Tuple[_StepDocument, ...]


@functools.lru_cache(maxsize=None)
def load_preamble(version=c.PREAMBLE_VERSION):
    path = os.path.join(TEMPLATES_DIR, c.PREAMBLE_TEMPLATE.format(version))
    return utils.read_text(path).strip()


def load_examples(path):
    """Static few-shot example text shipped as a fixture."""
    return utils.read_text(path).strip()


def build_envelope(spec, instantiated, general_info, kb=None):
    if spec.is_terminal:
        raise NotExpandable(spec.name)
    declared = spec.parameter_names
    for name in instantiated:
        if name not in declared:
            raise UnknownParameter(name, spec.name)
    subtask_parameters = {}
    for subtask in spec.possible_subtasks:
        if kb is not None:
            subtask_parameters[subtask] = kbase.subtask_parameters_for(
                kb, spec, subtask)
        elif subtask in spec.subtask_parameters:
            subtask_parameters[subtask] = spec.subtask_parameters[subtask]
    return PromptEnvelope(
        task=spec.name,
        introduction=spec.introduction,
        task_parameters={k: str(v) for k, v in instantiated.items()},
        possible_subtasks=spec.possible_subtasks,
        subtask_descriptions=spec.subtask_descriptions,
        subtask_parameters=subtask_parameters,
        possible_subtask_sequences=spec.possible_subtask_sequences,
        rules=spec.rules,
        general_info=general_info or '')


def build_prompt(spec, instantiated, general_info, kb=None, examples=None,
                 example_repetitions=1):
    """Preamble, optional few-shot examples, the canonical envelope and the
    general information, in that order. Identical inputs give identical
    text.
    """
    envelope = build_envelope(spec, instantiated, general_info, kb=kb)
    sections = [load_preamble()]
    if examples:
        sections.append('{}\n{}'.format(
            c.EXAMPLES_HEADER,
            '\n\n'.join([examples] * max(1, example_repetitions))))
    sections.append('{}\n{}'.format(c.ENVELOPE_HEADER, envelope.to_json()))
    sections.append('{}\n{}'.format(c.GENERAL_INFO_HEADER, general_info or ''))
    return '\n\n'.join(sections) + '\n'


def envelope_from_prompt(prompt):
    """Recover the envelope a prompt was built from (the last ``INPUT:``
    block, so examples and appended feedback never interfere).
    """
    matches = ENVELOPE_RE.findall(prompt)
    if not matches:
        raise PromptEngineError('Prompt contains no envelope')
    try:
        return PromptEnvelope.model_validate(json.loads(matches[-1]))
    except (ValueError, ValidationError) as exc:
        raise PromptEngineError(
            'Prompt envelope is not valid: {}'.format(exc)) from exc


def parse_output(text):
    """Extract the first well-formed JSON object from ``text`` (prose and code
    fences around it are tolerated) and check it has the output shape.
    """
    obj = _first_json_object(text or '')
    if obj is None:
        raise FormatError(c.FORMAT_NO_JSON)
    if c.OUTPUT_TOP_KEY not in obj:
        raise FormatError(c.FORMAT_WRONG_TOP_KEY, 'top-level keys are {}'.format(
            ', '.join(sorted(obj)) or 'none'))
    sequence = obj[c.OUTPUT_TOP_KEY]
    if isinstance(sequence, list) and not sequence:
        raise FormatError(c.FORMAT_EMPTY_SEQUENCE)
    try:
        document = _OutputDocument.model_validate(
            {c.OUTPUT_TOP_KEY: sequence})
    except ValidationError as exc:
        first = exc.errors()[0]
        raise FormatError(c.FORMAT_STEP_SHAPE, '{}: {}'.format(
            '.'.join(str(p) for p in first['loc']), first['msg'])) from exc
    steps = tuple(
        SubtaskStep(action=step.action,
                    parameters={k: _value_text(v)
                                for k, v in step.parameters.items()})
        for step in document.subtask_sequence)
    return OutputSequence(steps=steps)


def serialize_output(sequence):
    return utils.canonical_json({c.OUTPUT_TOP_KEY: [
        {'action': step.action, 'parameters': dict(step.parameters)}
        for step in sequence.steps]})


def validate_sequence(kb, parent, sequence):
    if parent.is_terminal:
        raise NotExpandable(parent.name)
    reports = []
    for index, step in enumerate(sequence.steps):
        membership_ok = step.action in parent.possible_subtasks
        given = step.parameters
        if membership_ok or step.action in kb:
            declared = kbase.subtask_parameters_for(kb, parent, step.action)
            declared_names = {p.name for p in declared}
            missing = tuple(p.name for p in declared if p.name not in given)
            extraneous = tuple(sorted(set(given) - declared_names))
            type_errors = tuple(
                '{}: expected {}, got {!r}'.format(p.name, p.type_tag,
                                                   given[p.name])
                for p in declared
                if p.name in given and not utils.coerces_to(given[p.name],
                                                            p.type_tag))
        else:
            missing = ()
            extraneous = tuple(sorted(given))
            type_errors = ()
        reports.append(StepReport(
            index=index,
            action=step.action,
            membership_ok=membership_ok,
            parameters_ok=(not missing and not extraneous and not type_errors
                           and (membership_ok or step.action in kb)),
            missing_params=missing,
            type_errors=type_errors,
            extraneous_params=extraneous))
    return ValidationReport(
        format_ok=True,
        step_reports=tuple(reports),
        sequence_matches_declared=(
            sequence.actions in parent.possible_subtask_sequences))


def format_failure_report(error):
    return ValidationReport(format_ok=False, format_category=error.category,
                            format_detail=error.detail)


def feedback_paragraph(report):
    """The machine-generated error paragraph appended to a retried prompt."""
    lines = [c.FEEDBACK_HEADER]
    if not report.format_ok:
        detail = ': {}'.format(report.format_detail) if report.format_detail \
            else ''
        lines.append('- the response is not in the required format ({}){}'.format(
            report.format_category, detail))
    for step in report.hard_failures():
        prefix = '- step {} ({})'.format(step.index + 1, step.action)
        if not step.membership_ok:
            lines.append('{}: {!r} is not one of possible_subtasks'.format(
                prefix, step.action))
        if step.missing_params:
            lines.append('{}: missing parameters {}'.format(
                prefix, ', '.join(step.missing_params)))
        if step.extraneous_params:
            lines.append('{}: unexpected parameters {}'.format(
                prefix, ', '.join(step.extraneous_params)))
        for type_error in step.type_errors:
            lines.append('{}: wrong type for {}'.format(prefix, type_error))
    lines.append('Answer again with exactly one JSON object in the required'
                 ' shape.')
    return '\n'.join(lines)


def _first_json_object(text):
    decoder = json.JSONDecoder()
    for match in re.finditer(r'\{', text):
        try:
            candidate, _ = decoder.raw_decode(text, match.start())
        except ValueError:
            continue
        if isinstance(candidate, dict):
            return candidate
    return None


def _value_text(value):
    if isinstance(value, str):
        return value
    return json.dumps(value)
