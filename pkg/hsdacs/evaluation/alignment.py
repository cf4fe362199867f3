from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import NDArray

import hsdacs
from hsdacs.decoding.state import DecodeTrace
from hsdacs.types import ContractError, HaltingMode


@dataclass
class AlignmentGrid:
    """Applied attention weights of one decoder layer, `weights[h]` is output steps x encoder frames."""

    layer: int
    weights: NDArray[np.float64]
    n_steps: NDArray[np.int64]

    @property
    def num_heads(self) -> int:
        return int(self.weights.shape[0])


def alignment_grid(trace: DecodeTrace, layer: int) -> AlignmentGrid:
    if not 0 <= layer < trace.num_layers:
        raise ContractError(f"layer {layer} outside [0, {trace.num_layers})")
    n_steps = trace.coverage_steps[:, layer, :].T if len(trace) else np.zeros((trace.num_heads, 0), dtype=np.int64)
    grid = AlignmentGrid(layer, trace.applied_weights(layer), n_steps)
    if trace.mode == HaltingMode.HSDACS:
        check_head_synchrony(grid)
    return grid


def check_head_synchrony(grid: AlignmentGrid) -> None:
    """Every head's applied weights in a row must stop at the same column."""
    support = grid.weights > 0
    # last nonzero column + 1 per (head, row), 0 for empty rows
    ends = np.where(support.any(axis=-1), support.shape[-1] - np.argmax(support[..., ::-1], axis=-1), 0)
    if not (grid.n_steps == grid.n_steps[:1]).all() or (ends > grid.n_steps).any():
        raise ContractError(f"heads of layer {grid.layer} halted at different frames")


def to_pgm(weights: NDArray[np.float64]) -> str:
    """Plain (P2) greyscale image of one grid, linearly scaled so the largest weight is 255."""
    peak = float(weights.max()) if weights.size else 0.0
    pixels = np.zeros(weights.shape, dtype=np.int64) if peak <= 0 else np.rint(weights / peak * 255).astype(np.int64)
    rows, cols = weights.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    lines += [" ".join(str(v) for v in row) for row in pixels]
    return "\n".join(lines) + "\n"


def grid_frame(weights: NDArray[np.float64]) -> pd.DataFrame:
    """One row per output step, one column per encoder frame."""
    return pd.DataFrame(weights, columns=[str(j) for j in range(weights.shape[1])])


def _format_weight(value: float) -> str:
    return "0" if value == 0 else repr(float(value))


def export_alignment(trace: DecodeTrace, layer: int, path: str | Path) -> list[Path]:
    """
    Write one CSV and one PGM per head: `<path>.head<h>.csv` and `<path>.head<h>.pgm`.

    The CSV header row holds the encoder frame indices; weights beyond the halting
    position are written as 0.

    Raises:
        OSError: If the files cannot be written.
    """
    grid = alignment_grid(trace, layer)
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for h in range(grid.num_heads):
        csv_path = base.parent / f"{base.name}.head{h}.csv"
        frame = grid_frame(grid.weights[h]).map(_format_weight)
        frame.to_csv(csv_path, index=False, lineterminator="\n")
        pgm_path = base.parent / f"{base.name}.head{h}.pgm"
        pgm_path.write_text(to_pgm(grid.weights[h]))
        written += [csv_path, pgm_path]
    hsdacs.logger.info(f"Exported layer {layer} alignments for {grid.num_heads} heads to {base.parent}")
    return written
