import logging
import os
import shutil
import tempfile

from features.steps import utils


ROOT_PATH = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Change these to match your test environment.
# These may also be overridden as Behave userdata options, i.e.,
# ``behave -D seed=7 -D random_kbs=50``
SEED = 20230704
RANDOM_KBS = 25
PLAN_REPEATS = 10


def get_settings(userdata):
    """Test settings: the defaults above, overridden by userdata."""
    return {
        'seed': int(userdata.get('seed', SEED)),
        'random_kbs': int(userdata.get('random_kbs', RANDOM_KBS)),
        'plan_repeats': int(userdata.get('plan_repeats', PLAN_REPEATS)),
    }


def before_all(context):
    logging_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    context.config.setup_logging(format=logging_format)
    logger = logging.getLogger()
    log_filename = 'tnplanner-tests.log'
    log_path = os.path.join(ROOT_PATH, log_filename)
    file_handler = logging.FileHandler(log_path)
    file_handler.setLevel(logging.DEBUG)
    formatter = logging.Formatter(logging_format)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)


def before_scenario(context, scenario):
    """Every scenario gets its own scratch directory and a fresh copy of the
    settings. Environment variables set through ``utils.set_env`` are put
    back afterwards.
    """
    context.settings = get_settings(context.config.userdata)
    context.utils = utils
    context.scenario.tmpdir = tempfile.mkdtemp(prefix='tnplanner-')
    context.scenario.saved_env = {}


def after_scenario(context, scenario):
    shutil.rmtree(context.scenario.tmpdir, ignore_errors=True)
    for name, value in context.scenario.saved_env.items():
        if value is None:
            os.environ.pop(name, None)
        else:
            os.environ[name] = value
    # cli.main gives the package logger its own handlers; hand logging back.
    package_logger = logging.getLogger('tnplanner')
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()
    package_logger.propagate = True
