import logging

from hsdacs.settings import settings  # type: ignore[attr-defined]

logging.basicConfig(format="%(asctime)s - %(levelname)s - %(message)s", level=logging.INFO)
logger = logging.getLogger(__name__)

import hsdacs.tensor  # noqa: E402
import hsdacs.models  # noqa: E402
import hsdacs.halting  # noqa: E402
import hsdacs.decoding  # noqa: E402
import hsdacs.training  # noqa: E402
import hsdacs.data  # noqa: E402
import hsdacs.evaluation  # noqa: E402
from hsdacs.tensor import Tensor, no_grad  # noqa: E402
from hsdacs.models import ModelConfig, Seq2SeqModel  # noqa: E402
from hsdacs.types import HaltingMode  # noqa: E402

__all__ = [
    "settings",
    "logger",
    "tensor",
    "models",
    "halting",
    "decoding",
    "training",
    "data",
    "evaluation",
    "Tensor",
    "no_grad",
    "ModelConfig",
    "Seq2SeqModel",
    "HaltingMode",
]
