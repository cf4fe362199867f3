from dataclasses import replace

import numpy as np
from numpy.typing import NDArray

from hsdacs.decoding.state import DecodeTrace, Hypothesis, StepTrace
from hsdacs.decoding.step import DecodingSession
from hsdacs.models.config import EOS_ID, SOS_ID
from hsdacs.types import ConfigError, ContractError


def _candidates(log_probs: NDArray[np.float64], width: int) -> NDArray[np.int64]:
    """Best `width` token ids, ties resolved towards the lower id; sos is never emitted."""
    scores = log_probs.copy()
    scores[SOS_ID] = -np.inf
    order = np.argsort(-scores, kind="stable")
    return order[: min(width, scores.shape[0] - 1)]


def _extend(hyp: Hypothesis, token: int, log_prob: float, new_state, new_cache, trace: StepTrace) -> Hypothesis:
    return Hypothesis(
        tokens=hyp.tokens + (int(token),),
        log_score=hyp.log_score + float(log_prob),
        halting=new_state,
        cache=new_cache,
        steps=hyp.steps + (replace(trace, token=int(token)),),
    )


def _trace_of(session: DecodingSession, hyp: Hypothesis) -> DecodeTrace:
    cfg = session.model.config
    return DecodeTrace(
        mode=session.mode,
        num_layers=cfg.num_decoder_layers,
        num_heads=cfg.num_heads,
        num_frames=session.num_frames,
        steps=list(hyp.steps),
    )


def decode_greedy(session: DecodingSession, max_len: int) -> tuple[list[int], DecodeTrace]:
    """
    Argmax decoding until eos or `max_len` output steps.

    Returns:
        tuple[list[int], DecodeTrace]: Emitted tokens (eos excluded) and the per-step record.
    """
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    hyp = Hypothesis()
    for _ in range(max_len):
        log_probs, state, cache, trace = session.step(hyp.tokens, hyp.halting, hyp.cache)
        token = int(_candidates(log_probs, 1)[0])
        hyp = _extend(hyp, token, log_probs[token], state, cache, trace)
        if token == EOS_ID:
            break
    tokens = hyp.output
    if tokens and tokens[-1] == EOS_ID:
        tokens = tokens[:-1]
    return tokens, _trace_of(session, hyp)


def _rank_key(hyp: Hypothesis, length_penalty: float = 0.0) -> tuple[float, tuple[int, ...]]:
    score = hyp.normalized_score(length_penalty) if length_penalty else hyp.log_score
    return (-score, hyp.tokens)


def decode_beam(
    session: DecodingSession, width: int, max_len: int, length_penalty: float = 1.0
) -> tuple[list[int], DecodeTrace]:
    """
    Length-normalised beam search.

    Every hypothesis carries its own halting state and decoder cache. Finished
    hypotheses compete by score divided by the number of emitted tokens (eos
    included) raised to `length_penalty`, so 0 ranks by raw log-probability.
    Equal scores go to the lexicographically lower token sequence.
    Search stops once `width` hypotheses have finished or after `max_len` steps,
    at which point unfinished hypotheses compete as they are.
    """
    if width < 1:
        raise ConfigError(f"beam width must be >= 1, got {width}")
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    if length_penalty < 0:
        raise ConfigError(f"length_penalty must be >= 0, got {length_penalty}")

    beams = [Hypothesis()]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        expanded: list[Hypothesis] = []
        for hyp in beams:
            log_probs, state, cache, trace = session.step(hyp.tokens, hyp.halting, hyp.cache)
            for token in _candidates(log_probs, width):
                expanded.append(_extend(hyp, int(token), log_probs[token], state, cache, trace))
        expanded.sort(key=_rank_key)

        beams = []
        for hyp in expanded[:width]:
            (finished if hyp.tokens[-1] == EOS_ID else beams).append(hyp)
        if not beams or len(finished) >= width:
            break

    pool = finished + beams
    best = min(pool, key=lambda h: _rank_key(h, length_penalty))
    tokens = best.output
    if tokens and tokens[-1] == EOS_ID:
        tokens = tokens[:-1]
    return tokens, _trace_of(session, best)
