"""Knowledge base of task words.

A knowledge base (KB) is a named map of task words. Each task word says
whether it is terminal (robot-executable, ``is_func``), which parameters it
takes, which subtasks it may generate and in which sequences. Together the
words form a directed graph with two edge kinds: *generates* (parent may emit
child) and *succeeds* (one word may follow another inside a declared
sequence).

KB files are single JSON documents (``*.tnkb.json``) whose per-word field
names are the ones used in the prompt envelope, so envelopes can be assembled
straight from the task word records.
"""

import io
import json
import logging
import os
from typing import Any, Dict, NamedTuple, Optional, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    model_validator,
)

from . import base
from . import constants as c
from . import utils


logger = logging.getLogger('tnplanner.kb')


class KnowledgeBaseError(base.TNPlannerError):
    pass


class KBSyntaxError(KnowledgeBaseError):
    """The KB document is not well-formed JSON."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        super().__init__('{} (line {}, column {})'.format(message, line, column))


class SchemaError(KnowledgeBaseError):
    """A field is missing, mistyped, unknown, or breaks a task word
    invariant. ``field`` is the dotted path of the offender.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = '{}: {}'.format(field, message)
        super().__init__(message)


class UnknownTaskWord(KnowledgeBaseError):

    def __init__(self, name, suggestion=None):
        self.name = name
        self.suggestion = suggestion
        message = 'Unknown task word {!r}'.format(name)
        if suggestion:
            message = '{}; did you mean {!r}?'.format(message, suggestion)
        super().__init__(message)


class ParameterSpec(BaseModel):
    """One declared parameter. Serialized with the ``type`` key."""

    model_config = ConfigDict(extra='forbid', frozen=True,
                              populate_by_name=True)

    name: str = Field(min_length=1)
    type_tag: str = Field(alias='type')
    description: str = ''

    @model_validator(mode='after')
    def _check_type_tag(self):
        if self.type_tag not in c.PARAMETER_TYPES:
            raise ValueError('parameter {!r} has type {!r}; expected one of'
                             ' {}'.format(self.name, self.type_tag,
                                          '/'.join(c.PARAMETER_TYPES)))
        return self


class TaskWordSpec(BaseModel):
    """One node of the knowledge graph."""

    model_config = ConfigDict(extra='forbid', frozen=True,
                              populate_by_name=True)

    name: str = Field(min_length=1)
    is_terminal: bool = Field(alias='is_func')
    introduction: str = ''
    parameters: Tuple[ParameterSpec, ...] = ()
    possible_subtasks: Tuple[str, ...] = ()
    subtask_descriptions: Tuple[str, ...] = ()
    subtask_parameters: Dict[str, Tuple[ParameterSpec, ...]] = Field(
        default_factory=dict)
    possible_subtask_sequences: Tuple[Tuple[str, ...], ...] = ()
    rules: str = ''

    @field_serializer('is_terminal')
    def _serialize_is_func(self, value):
        return int(value)

    @model_validator(mode='after')
    def _check_invariants(self):
        problems = word_problems(self)
        if problems:
            raise ValueError(problems[0])
        return self

    @property
    def parameter_names(self):
        return tuple(p.name for p in self.parameters)


class KBMetadata(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str = Field(min_length=1)
    version: str = '1'
    domain: str = ''
    root: Optional[str] = None


class KnowledgeBase(BaseModel):
    """Immutable after load; safe to share between concurrent planners."""

    model_config = ConfigDict(frozen=True)

    metadata: KBMetadata
    task_words: Dict[str, TaskWordSpec]

    @model_validator(mode='after')
    def _check_keys(self):
        for key, spec in self.task_words.items():
            if key != spec.name:
                raise ValueError('task word stored under {!r} is named'
                                 ' {!r}'.format(key, spec.name))
        return self

    @property
    def name(self):
        return self.metadata.name

    def __contains__(self, name):
        return name in self.task_words

    def __len__(self):
        return len(self.task_words)

    def terminal_words(self):
        return sorted(n for n, s in self.task_words.items() if s.is_terminal)


class _KBDocument(BaseModel):
    model_config = ConfigDict(extra='forbid')

    metadata: KBMetadata
    task_words: Dict[str, Dict[str, Any]]


class SubtaskGraph(NamedTuple):
    """The directed graph over task words, with lexicographically ordered
    nodes and edges.
    """

    nodes: Tuple[str, ...]
    generates_edges: Tuple[Tuple[str, str], ...]
    succeeds_edges: Tuple[Tuple[str, str], ...]
    terminals: Tuple[str, ...] = ()

    def to_dot(self, name='knowledge_base'):
        """Render as Graphviz DOT: solid arrows for *generates*, dashed for
        *succeeds*, boxes for terminal words.
        """
        lines = ['digraph {} {{'.format(json.dumps(name))]
        for node in self.nodes:
            shape = 'box' if node in self.terminals else 'ellipse'
            lines.append('  {} [shape={}];'.format(json.dumps(node), shape))
        for parent, child in self.generates_edges:
            lines.append('  {} -> {};'.format(json.dumps(parent),
                                              json.dumps(child)))
        for earlier, later in self.succeeds_edges:
            lines.append('  {} -> {} [style=dashed];'.format(
                json.dumps(earlier), json.dumps(later)))
        lines.append('}')
        return '\n'.join(lines) + '\n'


class Diagnostic(NamedTuple):
    severity: str
    word: str
    message: str

    def __str__(self):
        return '{}: {}: {}'.format(self.severity, self.word, self.message)

    def sort_key(self):
        return (0 if self.severity == c.SEVERITY_ERROR else 1, self.word,
                self.message)


def word_problems(spec):
    """Invariant violations local to one task word, as messages."""
    problems = []
    names = [p.name for p in spec.parameters]
    for dup in sorted({n for n in names if names.count(n) > 1}):
        problems.append('parameter {!r} is declared more than once in task'
                        ' word {!r}'.format(dup, spec.name))
    if spec.is_terminal and (spec.possible_subtasks or
                             spec.possible_subtask_sequences):
        problems.append('terminal task word {!r} lists possible'
                        ' subtasks'.format(spec.name))
    if len(spec.subtask_descriptions) != len(spec.possible_subtasks):
        problems.append(
            'task word {!r} has {} subtask descriptions for {} possible'
            ' subtasks'.format(spec.name, len(spec.subtask_descriptions),
                               len(spec.possible_subtasks)))
    for sequence in spec.possible_subtask_sequences:
        for member in sequence:
            if member not in spec.possible_subtasks:
                problems.append(
                    'sequence member {!r} of task word {!r} is not one of its'
                    ' possible subtasks'.format(member, spec.name))
    for subtask, params in sorted(spec.subtask_parameters.items()):
        sub_names = [p.name for p in params]
        for dup in sorted({n for n in sub_names if sub_names.count(n) > 1}):
            problems.append(
                'parameter {!r} of subtask {!r} is declared more than once in'
                ' task word {!r}'.format(dup, subtask, spec.name))
    return problems


def load_knowledge_base(source):
    """Parse a KB from a path or a readable byte/text stream. Parsing is
    strict: unknown fields anywhere are rejected.
    """
    if hasattr(source, 'read'):
        raw = source.read()
        origin = getattr(source, 'name', '<stream>')
    else:
        origin = os.fspath(source)
        with io.open(origin, 'rb') as f:
            raw = f.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode('utf8')
        except UnicodeDecodeError as exc:
            raise KBSyntaxError('KB document is not UTF-8: {}'.format(exc),
                                line=1, column=exc.start + 1) from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise KBSyntaxError(exc.msg, line=exc.lineno,
                            column=exc.colno) from exc
    if not isinstance(data, dict):
        raise SchemaError('KB document must be a JSON object')
    try:
        document = _KBDocument.model_validate(data)
    except ValidationError as exc:
        raise _schema_error(exc) from exc
    task_words = {}
    for key, raw_word in document.task_words.items():
        prefix = ('task_words', key)
        if 'name' in raw_word:
            raise SchemaError('Extra inputs are not permitted; the task word'
                              ' name is the map key', _dotted(prefix + ('name',)))
        try:
            task_words[key] = TaskWordSpec.model_validate(
                dict(raw_word, name=key))
        except ValidationError as exc:
            raise _schema_error(exc, prefix) from exc
    kb = KnowledgeBase(metadata=document.metadata, task_words=task_words)
    logger.info('Loaded knowledge base %s (%s task words) from %s',
                kb.name, len(kb), origin)
    return kb


def dump_knowledge_base(kb):
    """Canonical text of ``kb``; loading it back and dumping again yields the
    same bytes.
    """
    words = {}
    for name, spec in kb.task_words.items():
        words[name] = spec.model_dump(mode='json', by_alias=True,
                                      exclude={'name'})
    return utils.pretty_json({
        'metadata': kb.metadata.model_dump(mode='json', exclude_none=True),
        'task_words': words,
    })


def lookup(kb, name):
    try:
        return kb.task_words[name]
    except KeyError:
        raise UnknownTaskWord(
            name, utils.nearest_match(name, kb.task_words)) from None


def subtask_parameters_for(kb, parent, child):
    """Parameters ``child`` takes when generated by ``parent``: the parent's
    override if it declares one, else the child's own declaration.
    """
    if child in parent.subtask_parameters:
        return parent.subtask_parameters[child]
    if child in kb.task_words:
        return kb.task_words[child].parameters
    return ()


def build_subtask_graph(kb):
    generates = set()
    succeeds = set()
    for name, spec in kb.task_words.items():
        for child in spec.possible_subtasks:
            generates.add((name, child))
        for sequence in spec.possible_subtask_sequences:
            for earlier, later in zip(sequence, sequence[1:]):
                succeeds.add((earlier, later))
    return SubtaskGraph(
        nodes=tuple(sorted(kb.task_words)),
        generates_edges=tuple(sorted(generates)),
        succeeds_edges=tuple(sorted(succeeds)),
        terminals=tuple(kb.terminal_words()))


def expansion_candidates(spec):
    """Sequences a non-terminal word may expand into: its declared sequences,
    or each possible subtask alone when none are declared.
    """
    if spec.possible_subtask_sequences:
        return [tuple(s) for s in spec.possible_subtask_sequences]
    return [(s,) for s in spec.possible_subtasks]


def derivation_heights(kb):
    """Least fixpoint of the number of expansion levels each word needs to
    reach an all-terminal frontier. Terminal words have height 0; words that
    cannot terminate are absent.
    """
    heights = {n: 0 for n, s in kb.task_words.items() if s.is_terminal}
    changed = True
    while changed:
        changed = False
        for name in sorted(kb.task_words):
            spec = kb.task_words[name]
            if spec.is_terminal:
                continue
            best = None
            for candidate in expansion_candidates(spec):
                if candidate and all(m in heights for m in candidate):
                    height = 1 + max(heights[m] for m in candidate)
                    best = height if best is None else min(best, height)
            if best is not None and best < heights.get(name, best + 1):
                heights[name] = best
                changed = True
    return heights


def can_terminate(kb, name):
    lookup(kb, name)
    return name in derivation_heights(kb)


def validate_knowledge_base(kb):
    """Return diagnostics in stable order; an empty list means valid."""
    diagnostics = set()

    def error(word, message):
        diagnostics.add(Diagnostic(c.SEVERITY_ERROR, word, message))

    def warning(word, message):
        diagnostics.add(Diagnostic(c.SEVERITY_WARNING, word, message))

    heights = derivation_heights(kb)
    for name in sorted(kb.task_words):
        spec = kb.task_words[name]
        for problem in word_problems(spec):
            error(name, problem)
        referenced = set(spec.possible_subtasks) | set(spec.subtask_parameters)
        for ref in sorted(referenced - set(kb.task_words)):
            error(name, 'references undeclared task word {!r}'.format(ref))
        for ref in sorted(set(spec.subtask_parameters) -
                          set(spec.possible_subtasks)):
            warning(name, 'declares parameters for {!r}, which is not a'
                          ' possible subtask'.format(ref))
        if not spec.is_terminal and name not in heights:
            error(name, '{} cannot terminate'.format(name))
        if spec.possible_subtask_sequences:
            used = {m for s in spec.possible_subtask_sequences for m in s}
            for subtask in spec.possible_subtasks:
                if subtask not in used:
                    warning(name, 'possible subtask {!r} is used in no'
                                  ' sequence'.format(subtask))
        if not spec.introduction.strip():
            warning(name, 'introduction is empty')
    root = kb.metadata.root
    if root is not None:
        if root not in kb.task_words:
            error(root, 'root task word is not declared')
        elif kb.task_words[root].is_terminal:
            error(root, 'root task word must not be terminal')
    result = sorted(diagnostics, key=Diagnostic.sort_key)
    for diagnostic in result:
        logger.debug('%s', diagnostic)
    return result


def has_errors(diagnostics):
    return any(d.severity == c.SEVERITY_ERROR for d in diagnostics)


def _dotted(loc):
    return '.'.join(str(part) for part in loc)


def _schema_error(exc, prefix=()):
    first = exc.errors()[0]
    return SchemaError(first['msg'], _dotted(prefix + tuple(first['loc'])) or
                       None)
