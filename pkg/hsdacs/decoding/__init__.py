from hsdacs.decoding.search import decode_beam, decode_greedy
from hsdacs.decoding.state import DecodeTrace, DecoderCache, HaltingState, Hypothesis, StepTrace
from hsdacs.decoding.step import DecodingSession, decode_step_dacs, decode_step_hsdacs, decode_step_offline

__all__ = [
    "decode_beam",
    "decode_greedy",
    "DecodeTrace",
    "DecoderCache",
    "HaltingState",
    "Hypothesis",
    "StepTrace",
    "DecodingSession",
    "decode_step_dacs",
    "decode_step_hsdacs",
    "decode_step_offline",
]
