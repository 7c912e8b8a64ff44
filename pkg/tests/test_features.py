"""Run the behave acceptance suite (features/) under pytest.

Mirrors runtests.sh / tox.ini: ``behave --tags=-wip --no-skipped``.
"""
import os
import subprocess
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_behave_features():
    env = dict(os.environ)
    env['PYTHONPATH'] = ROOT + (
        os.pathsep + env['PYTHONPATH'] if env.get('PYTHONPATH') else '')
    result = subprocess.run(
        [sys.executable, '-m', 'behave', '--tags=-wip', '--no-skipped'],
        cwd=ROOT, env=env, capture_output=True, text=True)
    assert result.returncode == 0, result.stdout[-5000:] + result.stderr[-5000:]
