"""Command-line interface: ``tnplan <command> [options]``.

Exit codes are 0 on success, 1 on a planning or validation failure and 2 on
bad usage or unreadable input.
"""

import argparse
import json
import logging
import os
import sys

from . import base
from . import constants as c
from . import eval_harness
from . import knowledge_base as kbase
from . import llm_backend
from . import orchestration
from . import prompt_engine as pe
from . import tree_engine
from . import utils


logger = logging.getLogger('tnplanner.cli')

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Named flags that map straight onto RunConfig settings.
RUN_SETTINGS = (
    'kb_paths', 'backend', 'endpoint', 'model', 'script', 'replay_key',
    'max_depth', 'max_nodes', 'max_expansions', 'max_retries', 'robots',
    'out', 'policy', 'examples', 'workers', 'repeats', 'verdicts',
)

# Settings recorded in session.json so that a replay rebuilds the same
# prompts.
SESSION_SETTINGS = (
    'max_depth', 'max_nodes', 'max_expansions', 'max_retries', 'policy',
    'example_repetitions', 'workers', 'strict_aliases',
)


def configure_logging(verbosity=0, log_path=None):
    """Console handler at a level picked by ``-v``/``-q``, plus a DEBUG file
    handler when the command has an output directory.
    """
    level = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}.get(
        max(-1, min(verbosity, 2)), logging.DEBUG)
    package_logger = logging.getLogger('tnplanner')
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()
    package_logger.setLevel(logging.DEBUG)
    package_logger.propagate = False
    formatter = logging.Formatter(LOG_FORMAT)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(formatter)
    package_logger.addHandler(console)
    if log_path:
        file_handler = logging.FileHandler(log_path, mode='w',
                                           encoding='utf8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        package_logger.addHandler(file_handler)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '-D', '--define', dest='userdata', action='append', default=[],
        metavar='NAME=VALUE', help='Set any configuration value')
    common.add_argument('-v', '--verbose', action='count', default=0)
    common.add_argument('-q', '--quiet', action='count', default=0)

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument('--kb', dest='kb_paths', action='append',
                     help='Knowledge base path; repeat it, Manager KB first')
    run.add_argument('--backend', choices=c.BACKEND_KINDS)
    run.add_argument('--endpoint')
    run.add_argument('--model')
    run.add_argument('--script', help='Replay script path')
    run.add_argument('--replay-key', dest='replay_key',
                     choices=c.REPLAY_KEY_MODES)
    run.add_argument('--max-depth', dest='max_depth', type=int)
    run.add_argument('--max-nodes', dest='max_nodes', type=int)
    run.add_argument('--max-expansions', dest='max_expansions', type=int)
    run.add_argument('--retries', dest='max_retries', type=int)
    run.add_argument('--robots', help='Robot fleet path')
    run.add_argument('--out', help='Output directory')
    run.add_argument('--policy', choices=c.POLICIES)
    run.add_argument('--examples', help='Few-shot example text path')
    run.add_argument('--workers', type=int)

    parser = argparse.ArgumentParser(
        prog='tnplan',
        description='Hierarchical task planning with an LLM over a knowledge'
                    ' base of task words')
    subparsers = parser.add_subparsers(dest='command', required=True)

    p_validate = subparsers.add_parser(
        'kb-validate', parents=[common], help='Check knowledge bases')
    p_validate.add_argument('paths', nargs='+')

    p_graph = subparsers.add_parser(
        'kb-graph', parents=[common],
        help='Print the task word graph of a knowledge base as DOT')
    p_graph.add_argument('path')
    p_graph.add_argument('--out', help='Write <name>.dot here instead')

    p_plan = subparsers.add_parser(
        'plan', parents=[common, run], help='Plan one instruction')
    p_plan.add_argument('--instruction', required=True)
    p_plan.add_argument('--state', default='')

    p_eval = subparsers.add_parser(
        'eval', parents=[common, run],
        help='Score repeated generations over test cases')
    p_eval.add_argument('cases')
    p_eval.add_argument('--repeats', type=int)
    p_eval.add_argument('--verdicts', help='External verdict labels path')

    p_replay = subparsers.add_parser(
        'replay', parents=[common],
        help='Re-run a recorded session and compare the trees')
    p_replay.add_argument('transcript')
    p_replay.add_argument('--out', help='Where to write the replayed run')
    return parser


def get_config(args):
    """``-D`` settings first, named flags override them."""
    kwargs = utils.parse_k_v_attributes(args.userdata)
    for name in RUN_SETTINGS:
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    if 'kb_paths' in kwargs and not isinstance(kwargs['kb_paths'], str):
        kwargs['kb_paths'] = tuple(kwargs['kb_paths'])
    kwargs.setdefault('verbosity', args.verbose - args.quiet)
    return base.RunConfig(**kwargs)


def error_line(exc):
    line = '{}: {}'.format(type(exc).__name__, exc)
    label = exc.stage_label() if isinstance(exc, base.TNPlannerError) else None
    if label:
        line = '{}: {}'.format(label, line)
    return line


def load_knowledge_bases(paths, check=True):
    """Load every KB; with ``check`` refuse any with Error diagnostics before
    a single backend call is made.
    """
    kbs = [kbase.load_knowledge_base(p) for p in paths]
    if check:
        for kb in kbs:
            diagnostics = kbase.validate_knowledge_base(kb)
            for diagnostic in diagnostics:
                if diagnostic.severity == c.SEVERITY_WARNING:
                    logger.warning('%s: %s', kb.name, diagnostic)
            if kbase.has_errors(diagnostics):
                raise kbase.KnowledgeBaseError(
                    'Knowledge base {} is invalid: {}'.format(
                        kb.name, '; '.join(
                            str(d) for d in diagnostics
                            if d.severity == c.SEVERITY_ERROR)))
    return kbs


def cmd_kb_validate(args):
    configure_logging(args.verbose - args.quiet)
    status = c.EXIT_OK
    for path in args.paths:
        kb = kbase.load_knowledge_base(path)
        diagnostics = kbase.validate_knowledge_base(kb)
        for diagnostic in diagnostics:
            print(diagnostic)
        if kbase.has_errors(diagnostics):
            status = c.EXIT_DOMAIN_FAILURE
    return status


def cmd_kb_graph(args):
    configure_logging(args.verbose - args.quiet)
    kb = kbase.load_knowledge_base(args.path)
    dot = kbase.build_subtask_graph(kb).to_dot(kb.name)
    if args.out:
        path = base.RunConfig(out=args.out).get_graph_path(kb.name)
        utils.write_text(path, dot)
        print(path)
    else:
        sys.stdout.write(dot)
    return c.EXIT_OK


def cmd_plan(args):
    config = get_config(args).validate()
    configure_logging(config.verbosity, log_path(config))
    kbs = load_knowledge_bases(config.kb_paths)
    write_session(config, args.instruction, args.state)
    transcript = llm_backend.Transcript(config.get_transcript_path())
    backend = llm_backend.get_backend(
        llm_backend.BackendConfig.from_run_config(config), transcript, kbs)
    roots = run_pipeline(config, kbs, backend, args.instruction, args.state)
    utils.write_text(config.get_tree_path(), tree_engine.dump_forest(roots))
    steps = orchestration.write_plan(config.get_plan_path(), roots)
    for index, step in enumerate(steps, 1):
        print('{}. [{}] {} {}'.format(index, step.robot, step.action,
                                      utils.canonical_json(step.parameters)))
    return c.EXIT_OK


def cmd_eval(args):
    config = get_config(args).validate(require_kb=False)
    configure_logging(config.verbosity, log_path(config))
    cases = eval_harness.load_cases(args.cases)
    transcript = llm_backend.Transcript(config.get_transcript_path())
    report, records = eval_harness.run_eval(
        cases, config, repeats=config.repeats, verdicts_path=config.verdicts,
        transcript=transcript)
    eval_harness.write_trial_records(config.get_trials_path(), records)
    label = config.model if config.backend == 'http' else config.backend
    sys.stdout.write(eval_harness.write_report(config, report, label))
    return c.EXIT_OK


def cmd_replay(args):
    """Regenerate a recorded ``plan`` session from its transcript and compare
    the trees byte for byte.
    """
    session_dir = os.path.dirname(os.path.abspath(args.transcript))
    recorded = base.RunConfig(out=session_dir)
    try:
        with open(recorded.get_session_path(), encoding='utf8') as f:
            session = json.load(f)
        stored_text = utils.read_text(recorded.get_tree_path())
        stored = tree_engine.load_forest(recorded.get_tree_path())
        transcript = llm_backend.Transcript.load(args.transcript)
    except (OSError, ValueError) as exc:
        raise base.ConfigError(
            'Unable to read the recorded session in {}: {}'.format(
                session_dir, exc)) from exc
    settings = {k: session[k] for k in SESSION_SETTINGS if k in session}
    config = base.RunConfig(
        kb_paths=tuple(session['kb_paths']), robots=session.get('robots'),
        examples=session.get('examples'), backend='replay',
        script=args.transcript, replay_key='digest',
        out=args.out or os.path.join(session_dir, 'replay'),
        verbosity=args.verbose - args.quiet, **settings).validate()
    configure_logging(config.verbosity, log_path(config))
    kbs = load_knowledge_bases(config.kb_paths)
    backend = llm_backend.ReplayBackend(
        llm_backend.BackendConfig.from_run_config(config),
        llm_backend.Transcript(config.get_transcript_path()),
        records=llm_backend.script_from_transcript(transcript))
    try:
        roots = run_pipeline(config, kbs, backend, session['instruction'],
                             session.get('state', ''))
    except base.TNPlannerError as exc:
        node = None
        if exc.tree:
            node = tree_engine.diff_forests(stored, exc.tree,
                                            compare_robots=False)
        # A rejected response leaves its node unexpanded.
        node = node or exc.node
        if node is None:
            raise
        print('Replay diverged at node {} ({})'.format(node.id, node.action))
        print(error_line(exc), file=sys.stderr)
        return c.EXIT_DOMAIN_FAILURE
    regenerated = tree_engine.dump_forest(roots)
    utils.write_text(config.get_tree_path(), regenerated)
    if regenerated == stored_text:
        print('Replay matches {}'.format(recorded.get_tree_path()))
        return c.EXIT_OK
    node = tree_engine.diff_forests(stored, roots)
    if node is None:
        print('Replay diverged: the regenerated tree differs from {}'.format(
            recorded.get_tree_path()))
    else:
        print('Replay diverged at node {} ({})'.format(node.id, node.action))
    return c.EXIT_DOMAIN_FAILURE


def log_path(config):
    """The log file path, creating the output directory first."""
    os.makedirs(config.out, exist_ok=True)
    return config.get_log_path()


def run_pipeline(config, kbs, backend, instruction, state):
    robots = orchestration.load_fleet(config.robots) if config.robots else None
    examples = pe.load_examples(config.examples) if config.examples else None
    manager, planners, allocator = orchestration.build_pipeline(
        kbs, backend, config, robots=robots, examples=examples)
    manager.validate()
    return orchestration.generate_task_tree(
        instruction, state, manager, planners, allocator,
        workers=config.workers)


def write_session(config, instruction, state):
    session = {
        'instruction': instruction,
        'state': state,
        'kb_paths': [os.path.abspath(p) for p in config.kb_paths],
        'robots': os.path.abspath(config.robots) if config.robots else None,
        'examples': (os.path.abspath(config.examples) if config.examples
                     else None),
    }
    for name in SESSION_SETTINGS:
        session[name] = getattr(config, name)
    utils.write_text(config.get_session_path(), utils.pretty_json(session))


COMMANDS = {
    'kb-validate': cmd_kb_validate,
    'kb-graph': cmd_kb_graph,
    'plan': cmd_plan,
    'eval': cmd_eval,
    'replay': cmd_replay,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (base.ConfigError, kbase.KBSyntaxError, kbase.SchemaError,
            OSError) as exc:
        print(error_line(exc), file=sys.stderr)
        return c.EXIT_USAGE
    except base.TNPlannerError as exc:
        print(error_line(exc), file=sys.stderr)
        return c.EXIT_DOMAIN_FAILURE
