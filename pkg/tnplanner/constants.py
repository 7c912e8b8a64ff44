# Default values
# =========================================================================

DEFAULT_BACKEND = 'oracle'
DEFAULT_ENDPOINT = 'https://api.openai.com/v1/chat/completions'
DEFAULT_MODEL = 'gpt-4'
DEFAULT_API_KEY_ENV = 'TNPLANNER_API_KEY'
DEFAULT_REPLAY_KEY = 'digest'
DEFAULT_MAX_RETRIES = 2
DEFAULT_TIMEOUT = 60.0
DEFAULT_TRANSPORT_RETRIES = 2
DEFAULT_RETRY_WAIT = 1.0
DEFAULT_EXAMPLE_REPETITIONS = 1
DEFAULT_OUTPUT_DIR = 'tnplanner-out'
DEFAULT_POLICY = 'round-robin'
DEFAULT_REPEATS = 3
DEFAULT_WORKERS = 1
DEFAULT_ROBOT_ID = 'robot-1'

# Expansion limits
DEFAULT_MAX_DEPTH = 8
DEFAULT_MAX_NODES = 512
DEFAULT_MAX_EXPANSIONS = 256


# Knowledge base documents
# =========================================================================

KB_EXTENSION = '.tnkb.json'
PARAMETER_TYPES = ('int', 'str', 'float')
SEVERITY_ERROR = 'Error'
SEVERITY_WARNING = 'Warning'


# Prompt protocol
# =========================================================================

PREAMBLE_VERSION = 'v1'
PREAMBLE_TEMPLATE = 'preamble.{}.txt'
EXAMPLES_HEADER = 'EXAMPLES:'
ENVELOPE_HEADER = 'INPUT:'
GENERAL_INFO_HEADER = 'GENERAL_INFO:'
FEEDBACK_HEADER = 'YOUR PREVIOUS RESPONSE WAS REJECTED:'
OUTPUT_TOP_KEY = 'subtask_sequence'
INSTRUCTION_PARAMETER = 'task_description'

FORMAT_NO_JSON = 'no-json-found'
FORMAT_WRONG_TOP_KEY = 'wrong-top-key'
FORMAT_EMPTY_SEQUENCE = 'empty-sequence'
FORMAT_STEP_SHAPE = 'step-shape'
FORMAT_CATEGORIES = (
    FORMAT_NO_JSON,
    FORMAT_WRONG_TOP_KEY,
    FORMAT_EMPTY_SEQUENCE,
    FORMAT_STEP_SHAPE)


# LLM backends
# =========================================================================

BACKEND_KINDS = ('http', 'replay', 'oracle')
REPLAY_KEY_MODES = ('digest', 'ordinal')
RETRYABLE_STATUS_CODES = (429, 500, 502, 503, 504)


# Orchestration
# =========================================================================

POLICIES = ('round-robin', 'capability-first')
PIPELINE_STAGES = ('base_list', 'planning', 'allocation')


# Simulator
# =========================================================================

ASSEMBLE_PARTS = 'AssembleParts'
REASON_MISSING_PART = 'missing-part'
REASON_OUT_OF_STOCK = 'out-of-stock'
REASON_SELF_JOIN = 'self-join'
REASON_ALREADY_JOINED = 'already-joined'
REASON_PRECEDENCE = 'precedence'
REASON_GOAL_UNMET = 'goal-unmet'
REASON_UNKNOWN_ACTION = 'unknown-action'
REASON_BAD_PARAMETERS = 'bad-parameters'


# Evaluation
# =========================================================================

VERDICT_SIMULATOR = 'simulator'
VERDICT_EXTERNAL = 'external'
NOT_AVAILABLE = 'n/a'
REPORT_COLUMNS = (
    'FORMAT_SUCCESS_RATE',
    'PARAMETER_SUCCESS_RATE',
    'PLAN_SUCCESS_RATE')


# Exit codes
# =========================================================================

EXIT_OK = 0
EXIT_DOMAIN_FAILURE = 1
EXIT_USAGE = 2
