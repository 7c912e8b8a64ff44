"""Utilities for tnplanner."""

import datetime
import difflib
import hashlib
import json
import logging
import os
import re
import time


logger = logging.getLogger('tnplanner.utils')


INT_RE = re.compile(r'[+-]?[0-9]+')
FLOAT_RE = re.compile(r'[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?')


def canonical_json(obj):
    """Compact JSON with sorted keys: the envelope and digest form."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'),
                      ensure_ascii=False)


def pretty_json(obj):
    """Sorted, two-space indented JSON with a trailing newline; the on-disk
    form of every document tnplanner writes.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def content_digest(text):
    return hashlib.sha256(text.encode('utf8')).hexdigest()


def coerces_to(value, type_tag):
    """Return ``True`` if the text ``value`` is a syntactically valid literal
    for ``type_tag``: ASCII digits with an optional sign and no surrounding
    whitespace. Only the shape is checked, never units or meaning.
    """
    if type_tag == 'int':
        return bool(INT_RE.fullmatch(value))
    if type_tag == 'float':
        return bool(FLOAT_RE.fullmatch(value))
    return True


def nearest_match(name, candidates):
    """Return the candidate closest to ``name`` or ``None``."""
    matches = difflib.get_close_matches(name, sorted(candidates), n=1,
                                        cutoff=0.5)
    return matches[0] if matches else None


def unixtimestamp():
    return int(time.time())


def now_iso():
    """UTC timestamp; honours ``SOURCE_DATE_EPOCH`` so that recorded
    transcripts are reproducible byte for byte.
    """
    epoch = os.environ.get('SOURCE_DATE_EPOCH')
    seconds = int(epoch) if epoch else unixtimestamp()
    return datetime.datetime.fromtimestamp(
        seconds, tz=datetime.timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')


def read_text(path):
    with open(path, encoding='utf8') as f:
        return f.read()


def write_text(path, text):
    parent = os.path.dirname(path)
    if parent and not os.path.isdir(parent):
        os.makedirs(parent)
    with open(path, 'w', encoding='utf8') as f:
        f.write(text)


def write_json_lines(path, records):
    write_text(path, ''.join(canonical_json(r) + '\n' for r in records))


def read_json_lines(path):
    records = []
    with open(path, encoding='utf8') as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    return records


def resolve_relative(path, anchor):
    """Resolve ``path`` against the directory of the file ``anchor``."""
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(os.path.dirname(anchor), path))


def parse_k_v_attributes(attributes):
    """Parse ``-D``-style ``key=value`` strings into a dict."""
    result = {}
    for pair in attributes:
        if '=' not in pair:
            logger.warning('Ignoring malformed setting %r; expected key=value',
                           pair)
            continue
        key, value = pair.split('=', 1)
        result[key.strip()] = value.strip()
    return result
