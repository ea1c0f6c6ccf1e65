"""Goal-oriented evaluation for multi-turn chatbot logs.

Segments dialogs into user goals, judges every turn with an ensemble of
teacher models, majority-votes the labels, escalates disagreements to
human adjudicators, and computes goal success rate, root-cause-of-failure
breakdowns, cohort metrics, and human-model agreement.
"""

from .dialog_model import (
    AnnotationMismatch,
    Device,
    Dialog,
    DialogAnnotation,
    ExplicitFeedback,
    FeedbackSignals,
    GoalRecord,
    Provenance,
    Quality,
    RcofCode,
    SchemaError,
    Turn,
    TurnAnnotation,
    parse_annotation,
    parse_dialog,
    serialize_annotation,
    serialize_dialog,
    validate_annotation,
)
from .metrics import (
    AgreementReport,
    GoalSet,
    agreement_stats,
    attribute_rcof,
    build_goal_set,
    compute_gsr,
    derive_goals,
    failure_breakdown,
    goal_quality,
    gsr_by_cohort,
    segment_goals,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationMismatch",
    "AgreementReport",
    "Device",
    "Dialog",
    "DialogAnnotation",
    "ExplicitFeedback",
    "FeedbackSignals",
    "GoalRecord",
    "GoalSet",
    "Provenance",
    "Quality",
    "RcofCode",
    "SchemaError",
    "Turn",
    "TurnAnnotation",
    "agreement_stats",
    "attribute_rcof",
    "build_goal_set",
    "compute_gsr",
    "derive_goals",
    "failure_breakdown",
    "goal_quality",
    "gsr_by_cohort",
    "parse_annotation",
    "parse_dialog",
    "segment_goals",
    "serialize_annotation",
    "serialize_dialog",
    "validate_annotation",
    "__version__",
]
