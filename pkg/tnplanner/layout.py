"""Fixed layout of the output directory.

Each entry is ``(getter_name, template)``; ``base.Base`` turns them into
pseudo-methods such as ``config.get_tree_path()``, with the output directory
formatted into the first ``{}``.
"""

OUTPUT_LAYOUT = (
    ('get_session_path', '{}/session.json'),
    ('get_tree_path', '{}/tree.json'),
    ('get_plan_path', '{}/plan.jsonl'),
    ('get_transcript_path', '{}/transcript.jsonl'),
    ('get_log_path', '{}/tnplanner.log'),
    ('get_graph_path', '{}/{}.dot'),
    ('get_trials_path', '{}/trials.jsonl'),
    ('get_report_path', '{}/report.json'),
    ('get_report_table_path', '{}/report.txt'),
)
