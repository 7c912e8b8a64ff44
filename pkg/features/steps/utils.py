"""Utilities for Steps files."""

import contextlib
import functools
import io
import json
import logging
import os

from tnplanner import cli
from tnplanner import constants as c
from tnplanner import knowledge_base as kbase
from tnplanner import llm_backend
from tnplanner import prompt_engine as pe
from tnplanner import tree_engine
from tnplanner import utils as tnutils


logger = logging.getLogger('tnplanner.steps.utils')

FIXTURES_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures')

# Prompt used to consume a scripted response before a scenario starts.
WARM_UP_PROMPT = 'warm-up'


class TNPlannerStepsError(Exception):
    pass


def fixture_path(*parts):
    return os.path.join(FIXTURES_PATH, *parts)


def kb_path(name):
    return fixture_path('kb', name + c.KB_EXTENSION)


@functools.lru_cache(maxsize=None)
def load_kb(name):
    return kbase.load_knowledge_base(kb_path(name))


def kb_names(names):
    """``"manager, desk_lamp"`` -> ``['manager', 'desk_lamp']``."""
    return [n.strip() for n in names.split(',') if n.strip()]


def backend_config(kind='oracle', **kwargs):
    return llm_backend.BackendConfig(kind=kind, **kwargs)


def oracle_backend(kbs, transcript=None, max_retries=c.DEFAULT_MAX_RETRIES):
    return llm_backend.OracleBackend(
        backend_config(max_retries=max_retries), transcript, kbs)


def replay_backend(script, mode='ordinal', transcript=None,
                   max_retries=c.DEFAULT_MAX_RETRIES):
    return llm_backend.ReplayBackend(
        backend_config('replay', script=fixture_path('scripts', script),
                       replay_key=mode, max_retries=max_retries),
        transcript)


def run_cli(argv):
    """Call ``tnplan`` in-process; return ``(status, stdout, stderr)``."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            status = cli.main(argv)
        except SystemExit as exc:
            status = exc.code
    logger.debug('tnplan %s exited %s', ' '.join(argv), status)
    return status, out.getvalue(), err.getvalue()


def classify_response(kb, parent, text):
    """Label a model response the way the validation gates see it:
    ``accept``, ``format:<category>`` or ``reject:<first problem>``.
    """
    try:
        sequence = pe.parse_output(text)
    except pe.FormatError as exc:
        return 'format:{}'.format(exc.category)
    report = pe.validate_sequence(kb, kbase.lookup(kb, parent), sequence)
    if report.ok:
        return 'accept'
    step = report.hard_failures()[0]
    if not step.membership_ok:
        return 'reject:membership'
    if step.missing_params:
        return 'reject:missing'
    if step.extraneous_params:
        return 'reject:extraneous'
    return 'reject:type'


def steps_from_table(table):
    """Rows of ``part_a | part_b`` as AssembleParts steps."""
    return [tree_engine.ExecutableStep(
        c.ASSEMBLE_PARTS, {'part_a': row['part_a'], 'part_b': row['part_b']})
        for row in table]


def read_json(path):
    with open(path, encoding='utf8') as f:
        return json.load(f)


def edit_transcript_response(path, sequence, old, new):
    """Replace ``old`` with ``new`` in the response of entry ``sequence``,
    leaving the recorded prompt and its digest alone.
    """
    records = tnutils.read_json_lines(path)
    record = records[sequence - 1]
    if old not in record['response']:
        raise TNPlannerStepsError('{!r} does not occur in response {}'.format(
            old, sequence))
    record['response'] = record['response'].replace(old, new)
    tnutils.write_json_lines(path, records)


def drop_last_transcript_entry(path):
    records = tnutils.read_json_lines(path)
    tnutils.write_json_lines(path, records[:-1])


# Randomized knowledge bases
# ------------------------------------------------------------------------------

PARAMETER_SAMPLES = {'int': '3', 'float': '0.5', 'str': 'part'}


def random_kb_document(rng, max_words=8, max_depth=4):
    """A random grounding KB document of at most ``max_words`` task words.
    Every non-terminal word sits on a level no higher than ``max_depth`` and
    only ever generates words from lower levels, so the derivation height of
    any word is at most its level. Returns ``(document, root)``.
    """
    n_terminals = rng.randint(1, 3)
    n_words = rng.randint(n_terminals + 1, max_words)
    by_level = {0: []}
    words = {}
    for index in range(1, n_terminals + 1):
        name = 'T{}'.format(index)
        parameters = []
        for number in range(1, rng.randint(0, 2) + 1):
            type_tag = rng.choice(c.PARAMETER_TYPES)
            parameters.append({
                'name': 'p{}'.format(number),
                'type': type_tag,
                'description': PARAMETER_SAMPLES[type_tag]})
        words[name] = {'is_func': 1, 'introduction': 'Execute {}.'.format(name),
                       'parameters': parameters}
        by_level[0].append(name)
    top = 0
    root = None
    for index in range(1, n_words - n_terminals + 1):
        name = 'N{}'.format(index)
        level = rng.randint(1, min(max_depth, top + 1))
        lower = [w for lv in range(level) for w in by_level[lv]]
        sequences = []
        for _ in range(rng.randint(1, 2)):
            sequence = [rng.choice(by_level[level - 1])]
            sequence += [rng.choice(lower) for _ in range(rng.randint(0, 2))]
            if sequence not in sequences:
                sequences.append(sequence)
        subtasks = []
        for member in (m for s in sequences for m in s):
            if member not in subtasks:
                subtasks.append(member)
        words[name] = {
            'is_func': 0,
            'introduction': 'Plan {}.'.format(name),
            'possible_subtasks': subtasks,
            'subtask_descriptions': ['Do {}.'.format(s) for s in subtasks],
            'possible_subtask_sequences': sequences,
        }
        by_level.setdefault(level, []).append(name)
        if level > top or root is None:
            top, root = level, name
    document = {'metadata': {'name': 'random'}, 'task_words': words}
    return document, root


def random_knowledge_base(rng, max_words=8, max_depth=4):
    document, root = random_kb_document(rng, max_words, max_depth)
    kb = kbase.load_knowledge_base(io.StringIO(json.dumps(document)))
    return kb, root


def set_env(context, name, value):
    """Set an environment variable for the rest of the scenario."""
    context.scenario.saved_env.setdefault(name, os.environ.get(name))
    os.environ[name] = value
