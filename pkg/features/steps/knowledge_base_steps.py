"""Steps for the Knowledge Base Feature."""

import io
import json
import logging

from behave import when, then, given

from features.steps import utils
from tnplanner import knowledge_base as kbase


logger = logging.getLogger('tnplanner.steps.kb')


BROKEN_DOCUMENTS = {
    'a trailing comma': '{"metadata": {"name": "broken"},}',
    'an unknown task word field': {
        'Grasp': {'is_func': 1, 'colour': 'red'}},
    'a parameter of type bool': {
        'Grasp': {'is_func': 1, 'parameters': [
            {'name': 'force', 'type': 'bool'}]}},
    'a terminal word with subtasks': {
        'Grasp': {'is_func': 1, 'possible_subtasks': ['Grasp'],
                  'subtask_descriptions': ['Grasp again.']}},
    'too few subtask descriptions': {
        'Pick': {'is_func': 0, 'possible_subtasks': ['Grasp']},
        'Grasp': {'is_func': 1}},
    'a sequence outside its subtasks': {
        'Pick': {'is_func': 0, 'possible_subtasks': ['Grasp'],
                 'subtask_descriptions': ['Grasp it.'],
                 'possible_subtask_sequences': [['Drop']]},
        'Grasp': {'is_func': 1}},
    'a duplicated parameter': {
        'Grasp': {'is_func': 1, 'parameters': [
            {'name': 'force', 'type': 'float'},
            {'name': 'force', 'type': 'int'}]}},
}


# Givens
# ------------------------------------------------------------------------------

@given('the knowledge base {name}')
def step_impl(context, name):
    context.scenario.kb = utils.load_kb(name)


@given('a knowledge base document with {problem}')
def step_impl(context, problem):
    document = BROKEN_DOCUMENTS[problem]
    if not isinstance(document, str):
        document = json.dumps({'metadata': {'name': 'broken'},
                               'task_words': document})
    context.scenario.document = document


# Whens
# ------------------------------------------------------------------------------

@when('the knowledge base is validated')
def step_impl(context):
    context.scenario.diagnostics = kbase.validate_knowledge_base(
        context.scenario.kb)


@when('the knowledge base is dumped, loaded and dumped again')
def step_impl(context):
    first = kbase.dump_knowledge_base(context.scenario.kb)
    reloaded = kbase.load_knowledge_base(io.StringIO(first))
    context.scenario.dumps = (first, kbase.dump_knowledge_base(reloaded))


@when('task word {name} is looked up')
def step_impl(context, name):
    try:
        kbase.lookup(context.scenario.kb, name)
    except kbase.UnknownTaskWord as exc:
        context.scenario.error = exc
    else:
        context.scenario.error = None


@when('the subtask graph is built')
def step_impl(context):
    context.scenario.graph = kbase.build_subtask_graph(context.scenario.kb)


@when('the document is loaded')
def step_impl(context):
    try:
        kbase.load_knowledge_base(io.StringIO(context.scenario.document))
    except kbase.KnowledgeBaseError as exc:
        context.scenario.error = exc
    else:
        context.scenario.error = None


# Thens
# ------------------------------------------------------------------------------

@then('there are no diagnostics')
def step_impl(context):
    assert context.scenario.diagnostics == [], [
        str(d) for d in context.scenario.diagnostics]


@then('there is exactly {count:d} Error diagnostic')
def step_impl(context, count):
    errors = [d for d in context.scenario.diagnostics
              if d.severity == 'Error']
    assert len(errors) == count, [str(d) for d in errors]


@then('the diagnostics include "{text}"')
def step_impl(context, text):
    rendered = [str(d) for d in context.scenario.diagnostics]
    assert text in rendered, rendered


@then('task word {name} cannot terminate')
def step_impl(context, name):
    assert not kbase.can_terminate(context.scenario.kb, name)


@then('the derivation heights are')
def step_impl(context):
    heights = kbase.derivation_heights(context.scenario.kb)
    for row in context.table:
        assert heights[row['word']] == int(row['height']), (
            row['word'], heights.get(row['word']))


@then('both dumps are byte-identical')
def step_impl(context):
    first, second = context.scenario.dumps
    assert first == second
    assert first.endswith('\n')


@then('every is_func in the dump is 0 or 1')
def step_impl(context):
    document = json.loads(context.scenario.dumps[0])
    for spec in document['task_words'].values():
        assert spec['is_func'] in (0, 1) and not isinstance(
            spec['is_func'], bool), spec['is_func']


@then('UnknownTaskWord is raised suggesting {suggestion}')
def step_impl(context, suggestion):
    error = context.scenario.error
    assert error is not None
    assert error.suggestion == suggestion, error.suggestion
    assert 'did you mean' in str(error)


@then('{child} generated by {parent} takes part_a "{part_a}" and part_b'
      ' "{part_b}"')
def step_impl(context, child, parent, part_a, part_b):
    kb = context.scenario.kb
    params = kbase.subtask_parameters_for(kb, kbase.lookup(kb, parent), child)
    assert [(p.name, p.description) for p in params] == [
        ('part_a', part_a), ('part_b', part_b)], params


@then('the graph has a generates edge from {parent} to {child}')
def step_impl(context, parent, child):
    assert (parent, child) in context.scenario.graph.generates_edges


@then('the graph has a succeeds edge from {earlier} to {later}')
def step_impl(context, earlier, later):
    assert (earlier, later) in context.scenario.graph.succeeds_edges


@then('the graph has no succeeds edge from {earlier} to {later}')
def step_impl(context, earlier, later):
    assert (earlier, later) not in context.scenario.graph.succeeds_edges


@then('the DOT text draws {word} as a box')
def step_impl(context, word):
    dot = context.scenario.graph.to_dot(context.scenario.kb.name)
    assert '"{}" [shape=box];'.format(word) in dot, dot


@then('{error_name} is raised mentioning "{text}"')
def step_impl(context, error_name, text):
    error = context.scenario.error
    assert error is not None, 'nothing was raised'
    assert type(error).__name__ == error_name, type(error).__name__
    assert text in str(error), str(error)
