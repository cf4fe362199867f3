from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

import hsdacs
from hsdacs.data.synthetic import SyntheticSample
from hsdacs.decoding.search import decode_beam, decode_greedy
from hsdacs.decoding.state import DecodeTrace
from hsdacs.decoding.step import DecodingSession
from hsdacs.evaluation.coverage import coverage_ratio
from hsdacs.evaluation.metrics import edit_distance, error_rate
from hsdacs.models.transformer import Seq2SeqModel
from hsdacs.tensor import no_grad
from hsdacs.types import DecodeOutput, HaltingMode, SweepRow

DECODE_COLUMNS = ["utt", "reference", "hypothesis", "distance", "ratio", "steps"]


def decode_utterance(
    model: Seq2SeqModel,
    features: np.ndarray,
    mode: HaltingMode | None = None,
    threshold: float | None = None,
    max_lookahead: int | None = None,
    beam: int = 1,
    max_len: int = 64,
    length_penalty: float = 1.0,
) -> tuple[list[int], DecodeTrace]:
    """Encode one utterance `[F, d_feat]` and decode it greedily (`beam == 1`) or with beam search."""
    with no_grad():
        model.eval()
        enc = model.encode(features)
    session = DecodingSession(model, enc.utterance(0), mode, threshold, max_lookahead)
    if beam == 1:
        return decode_greedy(session, max_len)
    return decode_beam(session, beam, max_len, length_penalty)


def _format_tokens(tokens: Sequence[int]) -> str:
    return " ".join(str(t) for t in tokens)


def decode_dataset(
    model: Seq2SeqModel,
    samples: Sequence[SyntheticSample],
    mode: HaltingMode | None = None,
    threshold: float | None = None,
    max_lookahead: int | None = None,
    beam: int = 1,
    max_len: int = 64,
    length_penalty: float = 1.0,
) -> tuple[DecodeOutput, pd.DataFrame]:
    """
    Decode every sample and score it.

    Utterances are decoded on `settings.max_workers` threads; results keep the
    input order.

    Returns:
        tuple[DecodeOutput, pd.DataFrame]: Aggregate error rate and mean coverage ratio,
        plus one row per utterance (reference, hypothesis, distance, ratio, steps).
    """

    def run(sample: SyntheticSample) -> tuple[list[int], DecodeTrace]:
        return decode_utterance(model, sample.features, mode, threshold, max_lookahead, beam, max_len, length_penalty)

    workers = max(1, hsdacs.settings.max_workers)
    hide = not hsdacs.settings.show_progress_bar
    if workers == 1:
        results = [run(s) for s in tqdm(samples, desc="Decoding", disable=hide)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(tqdm(executor.map(run, samples), total=len(samples), desc="Decoding", disable=hide))

    references = [[int(t) for t in s.target] for s in samples]
    hypotheses = [tokens for tokens, _ in results]
    ratios = [coverage_ratio(trace) if len(trace) else 1.0 for _, trace in results]
    table = pd.DataFrame(
        [
            {
                "utt": i,
                "reference": _format_tokens(ref),
                "hypothesis": _format_tokens(hyp),
                "distance": edit_distance(ref, hyp).distance,
                "ratio": ratio,
                "steps": len(trace),
            }
            for i, (ref, hyp, ratio, (_, trace)) in enumerate(zip(references, hypotheses, ratios, results))
        ],
        columns=DECODE_COLUMNS,
    )
    output = DecodeOutput(
        hypotheses=hypotheses,
        references=references,
        error_rate=error_rate(references, hypotheses),
        mean_ratio=float(np.mean(ratios)),
    )
    return output, table


def default_thresholds(mode: HaltingMode, num_heads: int) -> list[float]:
    """θ in {1, 3/4, 1/2, 1/4} for DACS; Θ in {H, 3H/4, H/2, H/4} for HS-DACS."""
    scale = float(num_heads) if mode == HaltingMode.HSDACS else 1.0
    return [scale * f for f in (1.0, 0.75, 0.5, 0.25)]


def sweep_thresholds(
    model: Seq2SeqModel,
    samples: Sequence[SyntheticSample],
    mode: HaltingMode,
    thresholds: Sequence[float],
    max_lookahead: int | None = None,
    max_len: int = 64,
) -> list[SweepRow]:
    """Greedy-decode `samples` once per threshold; ratio is the per-utterance mean."""
    rows = []
    for threshold in thresholds:
        output, _ = decode_dataset(model, samples, mode, threshold, max_lookahead, 1, max_len)
        row = SweepRow(threshold=float(threshold), error_rate=output.error_rate, ratio=output.mean_ratio)
        hsdacs.logger.info(f"{mode.value} threshold {threshold}: error {row.error_rate:.2f}%, r {row.ratio:.3f}")
        rows.append(row)
    return rows


def sweep_report(rows: Sequence[SweepRow], mode: HaltingMode) -> pd.DataFrame:
    label = "joint-thr" if mode == HaltingMode.HSDACS else "thr"
    return pd.DataFrame(
        {
            label: [r.threshold for r in rows],
            "err(%)": [round(r.error_rate, 2) for r in rows],
            "r": [round(r.ratio, 3) for r in rows],
        }
    )


def side_by_side(dacs_rows: Sequence[SweepRow], hsdacs_rows: Sequence[SweepRow]) -> pd.DataFrame:
    """DACS and HS-DACS sweeps next to each other, row k of one against row k of the other."""
    left = sweep_report(dacs_rows, HaltingMode.DACS).rename(columns={"err(%)": "dacs err(%)", "r": "dacs r"})
    right = sweep_report(hsdacs_rows, HaltingMode.HSDACS).rename(
        columns={"err(%)": "hsdacs err(%)", "r": "hsdacs r"}
    )
    return pd.concat([left, right], axis=1)
