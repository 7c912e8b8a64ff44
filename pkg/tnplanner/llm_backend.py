"""LLM backends.

This module contains three interchangeable completion backends with one
interface: ``HTTPBackend`` (a chat-completion endpoint), ``ReplayBackend``
(scripted responses keyed by prompt digest or call ordinal) and
``OracleBackend`` (a rule-based expander that answers correctly from the
knowledge base). Every call is logged to a ``Transcript``.
"""

import collections
import json
import logging
import os
import threading
import time
from typing import Any, Dict, Optional

import requests
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from . import base
from . import constants as c
from . import knowledge_base as kbase
from . import prompt_engine as pe
from . import utils


logger = logging.getLogger('tnplanner.llm')


class BackendError(base.TNPlannerError):
    pass


class TransportError(BackendError):
    pass


class ReplayExhausted(BackendError):
    pass


class OracleError(BackendError):
    pass


class ValidationExhausted(BackendError):
    """Every attempt was rejected. ``outcomes`` holds one
    ``ValidationReport`` per attempt, in order.
    """

    def __init__(self, outcomes):
        self.outcomes = tuple(outcomes)
        last = self.outcomes[-1] if self.outcomes else None
        if last is not None and not last.format_ok:
            detail = 'format error ({})'.format(last.format_category)
        elif last is not None:
            detail = '{} failing step(s)'.format(len(last.hard_failures()))
        else:
            detail = 'no attempts'
        super().__init__('Response rejected after {} attempt(s); last: {}'.format(
            len(self.outcomes), detail))


class AttemptCapReached(ValidationExhausted):
    """The caller's cap on calls ran out before ``max_retries`` did."""


class BackendConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: str
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = c.DEFAULT_API_KEY_ENV
    script: Optional[str] = None
    replay_key: str = c.DEFAULT_REPLAY_KEY
    max_retries: int = Field(default=c.DEFAULT_MAX_RETRIES, ge=0)
    timeout: float = Field(default=c.DEFAULT_TIMEOUT, gt=0)
    transport_retries: int = Field(default=c.DEFAULT_TRANSPORT_RETRIES, ge=0)
    retry_wait: float = Field(default=c.DEFAULT_RETRY_WAIT, ge=0)
    sampling: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def _check_kind(self):
        if self.kind not in c.BACKEND_KINDS:
            raise ValueError('unknown backend kind {!r}'.format(self.kind))
        if self.kind == 'http' and not (self.endpoint and self.model):
            raise ValueError('the http backend needs an endpoint and a model')
        if self.kind == 'replay' and not self.script:
            raise ValueError('the replay backend needs a script path')
        if self.replay_key not in c.REPLAY_KEY_MODES:
            raise ValueError('unknown replay key mode {!r}'.format(
                self.replay_key))
        return self

    @classmethod
    def from_run_config(cls, config):
        try:
            return cls(
                kind=config.backend,
                endpoint=config.endpoint,
                model=config.model,
                api_key_env=config.api_key_env,
                script=config.script,
                replay_key=config.replay_key,
                max_retries=config.max_retries,
                timeout=config.timeout,
                transport_retries=config.transport_retries,
                retry_wait=config.retry_wait,
                sampling=config.sampling or {})
        except ValidationError as exc:
            raise base.ConfigError(
                'Invalid backend configuration: {}'.format(
                    exc.errors()[0]['msg'])) from exc


class TranscriptEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sequence: int
    prompt: str
    response: str
    backend: str
    timestamp: str
    attempt: int
    prompt_digest: str


class ScriptRecord(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    key: str
    response: str


class Transcript:
    """Append-only log of every completion. Sequence numbers are assigned
    under a lock so concurrent expansions never share one. When ``path`` is
    given the file is started afresh and each entry is appended as one JSON
    line.
    """

    def __init__(self, path=None):
        self.path = path
        self.entries = []
        self._lock = threading.Lock()
        if path:
            utils.write_text(path, '')

    def append(self, prompt, response, backend, attempt):
        with self._lock:
            entry = TranscriptEntry(
                sequence=len(self.entries) + 1,
                prompt=prompt,
                response=response,
                backend=backend,
                timestamp=utils.now_iso(),
                attempt=attempt,
                prompt_digest=utils.content_digest(prompt))
            self.entries.append(entry)
            if self.path:
                with open(self.path, 'a', encoding='utf8') as f:
                    f.write(utils.canonical_json(entry.model_dump()) + '\n')
        return entry

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(list(self.entries))

    @classmethod
    def load(cls, path):
        transcript = cls()
        transcript.entries = [TranscriptEntry.model_validate(r)
                              for r in utils.read_json_lines(path)]
        return transcript


class Backend:
    """Shared behaviour; subclasses implement ``_complete``."""

    kind = None

    def __init__(self, config, transcript=None):
        self.config = config
        self.transcript = transcript if transcript is not None else Transcript()

    def complete(self, prompt, remaining_depth=None, attempt=1):
        """Return the raw response text for ``prompt``. ``remaining_depth`` is
        how many more tree levels may be created below the node being
        expanded; only the oracle looks at it.
        """
        response = self._complete(prompt, remaining_depth)
        self.transcript.append(prompt, response, self.kind, attempt)
        return response

    def complete_validated(self, prompt, validator, remaining_depth=None,
                           on_attempt=None, max_attempts=None):
        """Call ``complete`` until ``validator`` accepts the response, at most
        ``max_retries`` extra times. Each retry resends the original prompt
        with a paragraph describing what was wrong with the previous answer.
        ``max_attempts`` caps the number of calls further; running into that
        cap raises ``AttemptCapReached``. Returns ``(text, attempts)``.
        """
        allowed = self.config.max_retries + 1
        capped = max_attempts is not None and max_attempts < allowed
        if capped:
            allowed = max_attempts
        outcomes = []
        current = prompt
        for attempt in range(1, allowed + 1):
            text = self.complete(current, remaining_depth=remaining_depth,
                                 attempt=attempt)
            try:
                report = validator(text)
            except pe.FormatError as exc:
                report = pe.format_failure_report(exc)
            outcomes.append(report)
            if on_attempt is not None:
                on_attempt(text, report)
            if report.ok:
                return text, attempt
            logger.info('Attempt %s rejected (%s)', attempt,
                        report.format_category or '{} failing step(s)'.format(
                            len(report.hard_failures())))
            current = '{}\n{}\n'.format(prompt.rstrip('\n'),
                                        pe.feedback_paragraph(report))
        if capped:
            raise AttemptCapReached(outcomes)
        raise ValidationExhausted(outcomes)

    def _complete(self, prompt, remaining_depth):
        raise NotImplementedError


class HTTPBackend(Backend):
    """Chat-completion request with a single user message; the answer is
    read from ``choices[0].message.content``.
    """

    kind = 'http'

    def _complete(self, prompt, remaining_depth):
        body = dict(self.config.sampling)
        body['model'] = self.config.model
        body['messages'] = [{'role': 'user', 'content': prompt}]
        headers = {'Content-Type': 'application/json'}
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers['Authorization'] = 'Bearer {}'.format(api_key)
        else:
            logger.warning('Environment variable %s is not set; sending the'
                           ' request without credentials',
                           self.config.api_key_env)
        url = self.config.endpoint
        max_attempts = self.config.transport_retries
        attempt = 0
        while True:
            try:
                r = requests.post(url, json=body, headers=headers,
                                  timeout=self.config.timeout)
            except requests.RequestException as exc:
                if attempt < max_attempts:
                    logger.warning('Trying again to POST to %s; request failed'
                                   ' with %s', url, exc)
                    attempt += 1
                    time.sleep(self.config.retry_wait)
                    continue
                raise TransportError(
                    'Request to {} failed: {}'.format(url, exc)) from exc
            if r.ok:
                return _choice_content(r)
            elif (r.status_code in c.RETRYABLE_STATUS_CODES and
                  attempt < max_attempts):
                logger.warning('Trying again to POST to %s; endpoint returned'
                               ' status code %s', url, r.status_code)
                attempt += 1
                time.sleep(self.config.retry_wait)
            else:
                logger.warning('Unable to complete via POST to %s; endpoint'
                               ' returned status code %s and message %s', url,
                               r.status_code, r.text)
                raise TransportError('Endpoint {} returned status {}'.format(
                    url, r.status_code))


class ReplayBackend(Backend):
    """Serve scripted responses. In ``digest`` mode the key is the sha256 of
    the prompt and records sharing a key are consumed in file order; in
    ``ordinal`` mode the n-th call takes the record keyed ``"n"``.
    """

    kind = 'replay'

    def __init__(self, config, transcript=None, records=None):
        super().__init__(config, transcript)
        if records is None:
            records = load_script(config.script)
        self._pending = collections.defaultdict(collections.deque)
        for record in records:
            self._pending[record.key].append(record.response)
        self._calls = 0
        self._lock = threading.Lock()

    def _complete(self, prompt, remaining_depth):
        with self._lock:
            self._calls += 1
            if self.config.replay_key == 'ordinal':
                key = str(self._calls)
            else:
                key = utils.content_digest(prompt)
            queue = self._pending.get(key)
            if queue:
                return queue.popleft()
            left = sum(len(q) for q in self._pending.values())
        if left:
            logger.warning('No scripted response for key %s; %s response(s)'
                           ' left under other keys', key, left)
        raise ReplayExhausted(
            'No scripted response left for call {} (key {})'.format(
                self._calls, key))


class OracleBackend(Backend):
    """Answer every envelope correctly by construction: pick the first
    candidate sequence whose members can all reach terminal words within the
    remaining depth and fill in the parameters from the envelope.
    """

    kind = 'oracle'

    def __init__(self, config, transcript=None, knowledge_bases=()):
        super().__init__(config, transcript)
        self.knowledge_bases = tuple(knowledge_bases)
        self._heights = [kbase.derivation_heights(kb)
                         for kb in self.knowledge_bases]

    def _complete(self, prompt, remaining_depth):
        try:
            envelope = pe.envelope_from_prompt(prompt)
        except pe.PromptEngineError as exc:
            raise OracleError(str(exc)) from exc
        kb, heights = self._knowledge_for(envelope)
        spec = kb.task_words[envelope.task]
        candidates = kbase.expansion_candidates(spec)
        if not candidates:
            raise OracleError('Task word {!r} has nothing to expand'
                              ' into'.format(envelope.task))
        limit = None if remaining_depth is None else remaining_depth - 1
        chosen = candidates[0]
        for candidate in candidates:
            if all(m in heights and (limit is None or heights[m] <= limit)
                   for m in candidate):
                chosen = candidate
                break
        steps = []
        for member in chosen:
            parameters = {}
            for param in kbase.subtask_parameters_for(kb, spec, member):
                value = envelope.task_parameters.get(param.name,
                                                     param.description)
                if not utils.coerces_to(value, param.type_tag):
                    value = '0' if param.type_tag == 'int' else '0.0'
                parameters[param.name] = value
            steps.append({'action': member, 'parameters': parameters})
        return utils.canonical_json({c.OUTPUT_TOP_KEY: steps})

    def _knowledge_for(self, envelope):
        """The KB declaring ``envelope.task`` as non-terminal, preferring the
        one whose declaration matches the envelope when several do.
        """
        matches = []
        for kb, heights in zip(self.knowledge_bases, self._heights):
            spec = kb.task_words.get(envelope.task)
            if spec is not None and not spec.is_terminal:
                matches.append((kb, heights))
        if not matches:
            raise OracleError('No knowledge base expands task word {!r}'.format(
                envelope.task))
        for kb, heights in matches:
            spec = kb.task_words[envelope.task]
            if (spec.possible_subtasks == envelope.possible_subtasks and
                    spec.possible_subtask_sequences ==
                    envelope.possible_subtask_sequences and
                    spec.introduction == envelope.introduction):
                return kb, heights
        return matches[0]


def load_script(path):
    try:
        with open(path, encoding='utf8') as f:
            data = json.load(f)
    except (OSError, ValueError) as exc:
        raise base.ConfigError(
            'Unable to read replay script {}: {}'.format(path, exc)) from exc
    if not isinstance(data, list):
        raise base.ConfigError(
            'Replay script {} must be a JSON array'.format(path))
    try:
        return [ScriptRecord.model_validate(r) for r in data]
    except ValidationError as exc:
        raise base.ConfigError('Invalid replay script {}: {}'.format(
            path, exc.errors()[0]['msg'])) from exc


def script_from_transcript(transcript):
    """Digest-keyed script that replays ``transcript`` exactly."""
    return [ScriptRecord(key=e.prompt_digest, response=e.response)
            for e in transcript]


def get_backend(config, transcript=None, knowledge_bases=()):
    if config.kind == 'http':
        return HTTPBackend(config, transcript)
    if config.kind == 'replay':
        return ReplayBackend(config, transcript)
    return OracleBackend(config, transcript, knowledge_bases)


def _choice_content(response):
    try:
        content = response.json()['choices'][0]['message']['content']
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError('Unexpected chat-completion response body') \
            from exc
    return content or ''

