from hsdacs.evaluation.alignment import AlignmentGrid, alignment_grid, export_alignment, to_pgm
from hsdacs.evaluation.coverage import coverage_ratio
from hsdacs.evaluation.metrics import edit_distance, error_rate
from hsdacs.evaluation.sweep import (
    decode_dataset,
    decode_utterance,
    default_thresholds,
    side_by_side,
    sweep_report,
    sweep_thresholds,
)

__all__ = [
    "AlignmentGrid",
    "alignment_grid",
    "export_alignment",
    "to_pgm",
    "coverage_ratio",
    "edit_distance",
    "error_rate",
    "decode_dataset",
    "decode_utterance",
    "default_thresholds",
    "side_by_side",
    "sweep_report",
    "sweep_thresholds",
]
