import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd

import hsdacs
from hsdacs.config import RunConfig, load_run_config, parse_overrides
from hsdacs.data.synthetic import DataConfig, SyntheticDataset, generate_sample
from hsdacs.evaluation.alignment import export_alignment
from hsdacs.evaluation.sweep import (
    decode_dataset,
    decode_utterance,
    default_thresholds,
    side_by_side,
    sweep_report,
    sweep_thresholds,
)
from hsdacs.models.config import ModelConfig
from hsdacs.models.transformer import Seq2SeqModel
from hsdacs.tensor.gradcheck import run_suite
from hsdacs.training.checkpoint import load_checkpoint
from hsdacs.training.trainer import Trainer, loss_log_path, model_from_checkpoint
from hsdacs.types import CheckpointError, ConfigError, DivergenceError, HaltingMode

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hsdacs", description="Streaming monotonic-attention seq2seq: train, decode, evaluate")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log debug records")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add_config_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override a config key")

    def add_decode_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--max-lookahead", type=int, help="Maximum look-ahead step M")
        p.add_argument("--max-len", type=int, help="Output step cap (default: longest target + 10)")
        add_config_args(p)

    train = sub.add_parser("train", help="Train a model and write a checkpoint plus loss log")
    add_config_args(train)
    train.add_argument("--checkpoint", type=Path, help="Checkpoint path (overrides checkpoint_path)")
    train.add_argument("--resume", action="store_true", help="Continue from the checkpoint file")

    decode = sub.add_parser("decode", help="Decode evaluation utterances")
    add_decode_args(decode)
    decode.add_argument("--mode", choices=[m.value for m in HaltingMode])
    decode.add_argument("--threshold", type=float, help="θ for dacs, Θ for hsdacs")
    decode.add_argument("--beam", type=int, default=1)
    decode.add_argument("--length-penalty", type=float, default=1.0, help="Length exponent in beam scores")
    decode.add_argument("--seed", type=int, help="Evaluation sample seed")
    decode.add_argument("--num-utts", type=int)
    decode.add_argument("--output", type=Path, help="Write the per-utterance table as TSV")

    sweep = sub.add_parser("sweep", help="Error rate and coverage ratio over halting thresholds")
    add_decode_args(sweep)
    sweep.add_argument("--mode", choices=["dacs", "hsdacs", "both"])
    sweep.add_argument("--thresholds", type=_float_list, help="Comma-separated thresholds")
    sweep.add_argument("--seed", type=int, help="Evaluation sample seed")
    sweep.add_argument("--num-utts", type=int)
    sweep.add_argument("--output", type=Path, help="Write the report as TSV")

    export = sub.add_parser("export-align", help="Write applied attention weights of one utterance")
    add_decode_args(export)
    export.add_argument("--mode", choices=[m.value for m in HaltingMode])
    export.add_argument("--threshold", type=float)
    export.add_argument("--utt-seed", type=int, default=0, help="Sample seed of the utterance")
    export.add_argument("--layer", type=int, help="Decoder layer (default: top)")
    export.add_argument("--out", type=Path, required=True, help="Output path prefix")

    check = sub.add_parser("grad-check", help="Finite-difference gradient checks")
    check.add_argument("--seed", type=int, default=0)
    return parser


################################################################################
# Commands
################################################################################
def _run_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, parse_overrides(args.set))


def _load_model(path: Path) -> Seq2SeqModel:
    return model_from_checkpoint(load_checkpoint(path)).eval()  # type: ignore[return-value]


def _data_for(model_config: ModelConfig, run: RunConfig) -> DataConfig:
    return DataConfig(**{**run.data.model_dump(), "vocab_size": model_config.vocab_size, "d_feat": model_config.d_feat})


def _warn_offline(mode: HaltingMode, args: argparse.Namespace) -> None:
    if mode == HaltingMode.OFFLINE and (
        getattr(args, "threshold", None) is not None or args.max_lookahead is not None
    ):
        hsdacs.logger.warning("offline mode ignores --threshold and --max-lookahead")
        args.threshold = None
        args.max_lookahead = None


def _emit(table: pd.DataFrame, output: Path | None) -> None:
    text = table.to_csv(sep="\t", index=False)
    sys.stdout.write(text)
    if output is not None:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text)


def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config(args)
    path = args.checkpoint if args.checkpoint is not None else Path(run.train.checkpoint_path)
    train_config = run.train.model_copy(update={"checkpoint_path": str(path)})
    dataset = SyntheticDataset.train(run.data)
    if run.data.vocab_size != run.model.vocab_size or run.data.d_feat != run.model.d_feat:
        raise ConfigError("data and model disagree on vocab_size or d_feat")

    if args.resume:
        trainer = Trainer.from_checkpoint(path, train_config, dataset)
        hsdacs.logger.info(f"Resuming from {path} at step {trainer.step}")
    else:
        trainer = Trainer(Seq2SeqModel(run.model), train_config, dataset)
    losses = trainer.fit()
    trainer.save(path)
    log_path = loss_log_path(path)
    losses.to_csv(log_path, sep="\t", index=False)
    _emit(losses, None)
    print(f"checkpoint\t{path}")
    print(f"loss_log\t{log_path}")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    run = _run_config(args)
    model = _load_model(args.checkpoint)
    mode = HaltingMode(args.mode) if args.mode else model.config.halting_mode
    _warn_offline(mode, args)
    data = _data_for(model.config, run)
    samples = list(SyntheticDataset.eval(data, args.num_utts, args.seed))
    max_len = args.max_len if args.max_len is not None else data.max_length + 10
    output, table = decode_dataset(
        model, samples, mode, args.threshold, args.max_lookahead, args.beam, max_len, args.length_penalty
    )
    _emit(table, args.output)
    print(f"error_rate\t{output.error_rate:.2f}")
    print(f"mean_ratio\t{output.mean_ratio:.4f}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    run = _run_config(args)
    model = _load_model(args.checkpoint)
    heads = model.config.num_heads
    mode_name = args.mode or model.config.halting_mode.value
    if mode_name == HaltingMode.OFFLINE.value:
        raise ConfigError("sweep needs a monotonic model; this checkpoint was trained in offline mode")
    data = _data_for(model.config, run)
    samples = list(SyntheticDataset.eval(data, args.num_utts, args.seed))
    max_len = args.max_len if args.max_len is not None else data.max_length + 10

    def rows_for(mode: HaltingMode):
        thresholds = args.thresholds if args.thresholds else default_thresholds(mode, heads)
        return sweep_thresholds(model, samples, mode, thresholds, args.max_lookahead, max_len)

    if mode_name == "both":
        if args.thresholds:
            raise ConfigError("--thresholds cannot be combined with --mode both")
        report = side_by_side(rows_for(HaltingMode.DACS), rows_for(HaltingMode.HSDACS))
    else:
        mode = HaltingMode(mode_name)
        report = sweep_report(rows_for(mode), mode)
    _emit(report, args.output)
    return EXIT_OK


def cmd_export_align(args: argparse.Namespace) -> int:
    run = _run_config(args)
    model = _load_model(args.checkpoint)
    mode = HaltingMode(args.mode) if args.mode else model.config.halting_mode
    _warn_offline(mode, args)
    layer = args.layer if args.layer is not None else model.config.num_decoder_layers - 1
    if not 0 <= layer < model.config.num_decoder_layers:
        raise ConfigError(f"--layer must lie in [0, {model.config.num_decoder_layers})")
    data = _data_for(model.config, run)
    sample = generate_sample(data, 0, seed=args.utt_seed)
    max_len = args.max_len if args.max_len is not None else data.max_length + 10
    tokens, trace = decode_utterance(model, sample.features, mode, args.threshold, args.max_lookahead, 1, max_len)
    for path in export_alignment(trace, layer, args.out):
        print(path)
    print(f"hypothesis\t{' '.join(str(t) for t in tokens)}")
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace) -> int:
    results = run_suite(seed=args.seed)
    table = pd.DataFrame(
        [
            {"check": r.name, "max_rel_error": f"{r.max_rel_error:.2e}", "coords": r.coordinates, "passed": r.passed}
            for r in results
        ]
    )
    _emit(table, None)
    failed = [r.name for r in results if not r.passed]
    if failed:
        hsdacs.logger.error(f"gradient check failed for: {', '.join(failed)}")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "decode": cmd_decode,
    "sweep": cmd_sweep,
    "export-align": cmd_export_align,
    "grad-check": cmd_grad_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(f"{parser.prog}: a command is required ({', '.join(COMMANDS)})")
        if getattr(args, "beam", 1) < 1:
            raise ConfigError("--beam must be >= 1")
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"hsdacs: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.verbose:
        hsdacs.logger.setLevel(logging.DEBUG)
    elif args.quiet:
        hsdacs.logger.setLevel(logging.WARNING)
    if args.progress:
        hsdacs.settings.configure(show_progress_bar=True)

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"hsdacs: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, CheckpointError, OSError) as e:
        print(f"hsdacs: {e}", file=sys.stderr)
        return EXIT_RUNTIME
