"""Base classes shared by every tnplanner module: the root error class and the
configuration base that turns keyword arguments into validated settings.
"""
# pylint: disable=too-many-instance-attributes

import json
import os

from . import constants as c
from . import layout


ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


class TNPlannerError(Exception):
    """Root of every error raised by tnplanner. ``stage`` is filled in by the
    planning pipeline so callers can tell where a failure happened, and
    ``node`` names the tree node that was being expanded.
    """

    stage = None
    node = None

    def stage_label(self):
        if self.stage is None:
            return None
        return 'stage {} ({})'.format(
            c.PIPELINE_STAGES.index(self.stage) + 1, self.stage)


class ConfigError(TNPlannerError):
    pass


class Base:
    """Base class for configuration-carrying tnplanner objects. Should only
    hold common functionality for configuring state.
    """

    expected_args = (
        ('kb_paths', ()),
        ('backend', c.DEFAULT_BACKEND),
        ('endpoint', c.DEFAULT_ENDPOINT),
        ('model', c.DEFAULT_MODEL),
        ('api_key_env', c.DEFAULT_API_KEY_ENV),
        ('script', None),
        ('replay_key', c.DEFAULT_REPLAY_KEY),
        ('max_retries', c.DEFAULT_MAX_RETRIES),
        ('timeout', c.DEFAULT_TIMEOUT),
        ('transport_retries', c.DEFAULT_TRANSPORT_RETRIES),
        ('retry_wait', c.DEFAULT_RETRY_WAIT),
        ('sampling', None),
        ('examples', None),
        ('example_repetitions', c.DEFAULT_EXAMPLE_REPETITIONS),
        ('max_depth', c.DEFAULT_MAX_DEPTH),
        ('max_nodes', c.DEFAULT_MAX_NODES),
        ('max_expansions', c.DEFAULT_MAX_EXPANSIONS),
        ('robots', None),
        ('policy', c.DEFAULT_POLICY),
        ('out', c.DEFAULT_OUTPUT_DIR),
        ('repeats', c.DEFAULT_REPEATS),
        ('verdicts', None),
        ('workers', c.DEFAULT_WORKERS),
        ('strict_aliases', False),
        ('verbosity', 0),
    )

    def set_path_getters(self):
        """Create functions as attributes on this instance which return the
        paths of output files, given the getter names and templates defined in
        the layout module. E.g., this creates pseudo-methods like
        ``self.get_tree_path()``.
        """
        for getter_name, template in layout.OUTPUT_LAYOUT:
            def getter(*args, t=template):
                return os.path.normpath(t.format(*(self.out,) + args))
            setattr(self, getter_name, getter)

    def __init__(self, **kwargs):
        self.here = ROOT
        for kwarg, default in self.expected_args:
            setattr(self, kwarg, _coerce(kwargs.get(kwarg, default), default))
        expected_kwargs = [x[0] for x in self.expected_args]
        for k, v in kwargs.items():
            if k not in expected_kwargs:
                setattr(self, k, v)
        if isinstance(self.kb_paths, str):
            self.kb_paths = tuple(
                p for p in self.kb_paths.split(',') if p.strip())
        if isinstance(self.sampling, str):
            try:
                self.sampling = json.loads(self.sampling)
            except ValueError as exc:
                raise ConfigError(
                    'sampling must be a JSON object, got {!r}'.format(
                        self.sampling)) from exc
        self.set_path_getters()


class RunConfig(Base):
    """Everything one CLI invocation needs: KB paths (Manager first), backend
    settings, expansion limits, robot fleet path and output directory.
    """

    def validate(self, require_kb=True):
        """Raise ``ConfigError`` on anything that would fail later for a
        configuration reason rather than a planning one.
        """
        if self.backend not in c.BACKEND_KINDS:
            raise ConfigError('Unknown backend {!r}; expected one of {}'.format(
                self.backend, ', '.join(c.BACKEND_KINDS)))
        if self.replay_key not in c.REPLAY_KEY_MODES:
            raise ConfigError('Unknown replay key mode {!r}'.format(
                self.replay_key))
        if self.policy not in c.POLICIES:
            raise ConfigError('Unknown allocation policy {!r}'.format(
                self.policy))
        for name in ('max_depth', 'max_nodes', 'max_expansions', 'repeats',
                     'workers', 'example_repetitions', 'timeout'):
            if getattr(self, name) <= 0:
                raise ConfigError('{} must be positive'.format(name))
        for name in ('max_retries', 'transport_retries'):
            if getattr(self, name) < 0:
                raise ConfigError('{} must not be negative'.format(name))
        if self.backend == 'http' and not (self.endpoint and self.model):
            raise ConfigError('The http backend needs an endpoint and a model')
        if self.backend == 'replay' and not self.script:
            raise ConfigError('The replay backend needs a script path')
        if require_kb and not self.kb_paths:
            raise ConfigError('At least one knowledge base path is required')
        paths = list(self.kb_paths)
        for name in ('robots', 'verdicts', 'examples'):
            if getattr(self, name):
                paths.append(getattr(self, name))
        if self.backend == 'replay':
            paths.append(self.script)
        for path in paths:
            if not os.path.isfile(path):
                raise ConfigError('No such file: {}'.format(path))
        return self


def _coerce(value, default):
    """Userdata (``-D name=value``) arrives as text; convert it to the type of
    the default.
    """
    if not isinstance(value, str) or default is None:
        return value
    if isinstance(default, bool):
        return value.strip().lower() in ('1', 'true', 'yes', 'on')
    if isinstance(default, int):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(
                'Expected an integer, got {!r}'.format(value)) from exc
    if isinstance(default, float):
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(
                'Expected a number, got {!r}'.format(value)) from exc
    return value
