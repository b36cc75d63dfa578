"""Creator-Inspector orchestration with scripted and live agent backends."""

from .backends import (
    Backend,
    BlindInspector,
    FlakyCreator,
    GoodCreator,
    LiveBackend,
    OracleInspector,
    ScriptedCreator,
    ScriptedInspector,
    StubbornCreator,
    ToolCallingInspector,
    make_backend,
    rawf_descriptor,
)
from .pipeline import (
    CheckReport,
    ExportRecord,
    PipelineConfig,
    PipelineRun,
    RoundRecord,
    Transcript,
    classify_transition,
    creator_propose,
    ground_truth_label,
    inspector_audit,
    live_llm_call,
    predictions_table,
    run_pipeline,
    syntactic_checks,
    write_run,
)
from .protocol import (
    AuthFailure,
    BackendUnavailable,
    InspectorVerdict,
    MalformedProposal,
    MalformedVerdict,
    ModelProposal,
    PipelineState,
    RoundAborted,
    RunAborted,
    fenced_json,
    parse_proposal,
    parse_verdict,
)
