"""
Command-line surface: gen-data, init-centroids, train, eval, tokenize, experiment
"""

import argparse
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from src.asr.inference import recognize_corpus, tokenize_corpus
from src.asr.training import init_centroids, new_checkpoint, train_stage1, train_stage2
from src.core.config import ExperimentConfig, Settings, load_experiment_config
from src.core.errors import EXIT_OK, EXIT_USAGE, InvalidInputError, IsibError
from src.core.logger import get_logger, setup_logger
from src.eval.experiments import run_accent_adapted, run_native_only, train_tokenizers
from src.eval.metrics import score_corpus
from src.eval.report import RowKey
from src.storage.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.storage.dataset import load_dataset, save_dataset
from src.storage.reports import write_loss_log, write_report
from src.synth.datasets import CORPUS_NAMES, L1_TRAIN, L2_TEST, L2_TRAIN, SyntheticData, build_corpora, model_spec
from src.ui.console import ReportConsole

logger = get_logger(__name__)

LOSS_LOG = "loss_log.csv"


class IsibApp:
    """Resolved configuration plus the handlers behind each subcommand"""

    def __init__(self, config: ExperimentConfig, settings: Settings, ui: Optional[ReportConsole] = None):
        self.config = config
        self.settings = settings
        self.ui = ui or ReportConsole()

    @property
    def workers(self) -> int:
        return self.settings.threads

    def _data_dir(self, args: argparse.Namespace) -> str:
        return getattr(args, "data", None) or self.config.output.data_dir

    def _load(self, args: argparse.Namespace, names: Sequence[str]) -> SyntheticData:
        return load_dataset(self._data_dir(args), names)

    def gen_data(self, args: argparse.Namespace) -> int:
        data = build_corpora(self.config.data)
        root = save_dataset(data, self._data_dir(args))
        self.ui.show_summary(
            "gen-data",
            {"directory": root, **{name: f"{len(utts)} utterances" for name, utts in data.corpora.items()}},
        )
        return EXIT_OK

    def _initial(self, data: SyntheticData, init: str) -> Checkpoint:
        spec = model_spec(data.l1, data.l2, self.config.model)
        corpus = data[L1_TRAIN] if init == "l1" else data[L2_TRAIN]
        return init_centroids(new_checkpoint(spec, self.config.train.seed), corpus, self.config.train, init)

    def init_centroids(self, args: argparse.Namespace) -> int:
        data = self._load(args, [L1_TRAIN, L2_TRAIN])
        checkpoint = self._initial(data, args.init)
        out = save_checkpoint(checkpoint, args.out)
        self.ui.show_summary("init-centroids", {"checkpoint": out, "init": args.init})
        return EXIT_OK

    def train(self, args: argparse.Namespace) -> int:
        train_cfg = self.config.train
        if args.alpha is not None:
            if not 0.0 <= args.alpha <= 1.0:
                raise InvalidInputError(f"--alpha must lie in [0, 1], got {args.alpha}")
            train_cfg = train_cfg.model_copy(update={"alpha": args.alpha})

        data = self._load(args, [L1_TRAIN, L2_TRAIN])
        spec = model_spec(data.l1, data.l2, self.config.model)

        if args.checkpoint:
            checkpoint = load_checkpoint(args.checkpoint, expected=spec)
        elif args.stage == "2":
            raise InvalidInputError("--stage 2 needs --checkpoint pointing at a stage-1 checkpoint")
        else:
            checkpoint = self._initial(data, args.init)

        if args.stage in ("1", "all"):
            checkpoint = train_stage1(checkpoint, data[L1_TRAIN], data[L2_TRAIN], train_cfg, self.workers)
        if args.stage in ("2", "all"):
            checkpoint = train_stage2(
                checkpoint, data[L1_TRAIN], data[L2_TRAIN], train_cfg, expected=spec, workers=self.workers
            )

        out = save_checkpoint(checkpoint, args.out)
        log = write_loss_log(checkpoint.metadata.get("history", []), str(out / LOSS_LOG))
        self.ui.show_summary(
            "train",
            {"checkpoint": out, "loss log": log, "stage": checkpoint.stage, "alpha": train_cfg.alpha},
        )
        return EXIT_OK

    def eval(self, args: argparse.Namespace) -> int:
        data = self._load(args, [args.corpus])
        checkpoint = load_checkpoint(args.checkpoint)
        corpus = data[args.corpus]
        hyps = recognize_corpus(corpus, args.lang, checkpoint)
        self.ui.show_breakdown(score_corpus([u.labels for u in corpus], hyps))
        return EXIT_OK

    def tokenize(self, args: argparse.Namespace) -> int:
        data = self._load(args, [args.corpus])
        checkpoint = load_checkpoint(args.checkpoint)
        tokens = tokenize_corpus(data[args.corpus], checkpoint)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(" ".join(str(t) for t in seq) + "\n" for seq in tokens), encoding="utf-8")
        self.ui.show_summary("tokenize", {"tokens": out, "utterances": len(tokens)})
        return EXIT_OK

    def experiment(self, args: argparse.Namespace) -> int:
        data = build_corpora(self.config.data)
        grid = self.config.experiment
        report_dir = args.out or self.config.output.report_dir
        n_rows = len(grid.inits) * (len(grid.alphas) + int(grid.include_baseline)) * len(grid.seeds)
        written: Dict[str, Path] = {}

        with self.ui.progress("Training tokenizers", n_rows) as advance:
            runs = train_tokenizers(self.config, data, self.workers, on_row=advance)
        self._save_runs(runs.checkpoints)

        if args.scenario in ("native", "both"):
            table = run_native_only(self.config, data, runs=runs).table
            self.ui.show_table(table)
            written["native-only csv"], written["native-only json"] = write_report(table, report_dir)
        if args.scenario in ("adapted", "both"):
            with self.ui.progress("Adapting token ASR", n_rows) as advance:
                table = run_accent_adapted(self.config, data, runs, self.workers, on_row=advance)
            self.ui.show_table(table)
            written["accent-adapted csv"], written["accent-adapted json"] = write_report(table, report_dir)

        self.ui.show_summary("experiment", written)
        return EXIT_OK

    def _save_runs(self, checkpoints: Dict) -> None:
        root = Path(self.config.output.run_dir) / "experiment"
        for (row, seed), checkpoint in checkpoints.items():
            save_checkpoint(checkpoint, str(root / row_dirname(row) / f"seed{seed}"))


def row_dirname(row: RowKey) -> str:
    return row.label.replace("/", "_").replace("=", "")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isib",
        description="Differentiable k-means tokenizer with L1/L2 CTC heads on synthetic accented speech",
    )
    parser.add_argument("--config", help="experiment YAML (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, help="override the data and training seeds")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate the synthetic corpora")
    gen.add_argument("--data", help="output dataset directory")

    init = sub.add_parser("init-centroids", help="fit the codebook with k-means on encoder features")
    init.add_argument("--data", help="dataset directory")
    init.add_argument("--init", choices=["l1", "l2"], default="l1")
    init.add_argument("--out", required=True, help="checkpoint directory to write")

    train = sub.add_parser("train", help="run training stages")
    train.add_argument("--data", help="dataset directory")
    train.add_argument("--stage", choices=["1", "2", "all"], default="all")
    train.add_argument("--init", choices=["l1", "l2"], default="l1")
    train.add_argument("--alpha", type=float, help="multi-task weight of the L1 loss")
    train.add_argument("--checkpoint", help="starting checkpoint (init for stage 1, stage-1 for stage 2)")
    train.add_argument("--out", required=True, help="checkpoint directory to write")

    for name, help_text in (("eval", "word error rate of a checkpoint"), ("tokenize", "token ids per utterance")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--data", help="dataset directory")
        cmd.add_argument("--checkpoint", required=True)
        cmd.add_argument("--corpus", choices=list(CORPUS_NAMES), default=L2_TEST)
        if name == "eval":
            cmd.add_argument("--lang", choices=["l1", "l2"], default="l2", help="which head decodes")
        else:
            cmd.add_argument("--out", required=True, help="token file to write")

    exp = sub.add_parser("experiment", help="native-only and/or accent-adapted report tables")
    exp.add_argument("--scenario", choices=["native", "adapted", "both"], default="both")
    exp.add_argument("--out", help="report directory")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one command, map errors to exit codes"""
    args = build_parser().parse_args(argv)
    ui = ReportConsole()
    try:
        settings = Settings(**({"log_level": args.log_level} if args.log_level else {}))
    except ValueError as e:
        ui.show_error(f"invalid environment setting: {e}")
        return EXIT_USAGE
    try:
        setup_logger(level=settings.log_level, log_file=settings.log_file)
        config = load_experiment_config(args.config).with_seed(args.seed)
        app = IsibApp(config, settings, ui)
        handlers: Dict[str, Callable[[argparse.Namespace], int]] = {
            "gen-data": app.gen_data,
            "init-centroids": app.init_centroids,
            "train": app.train,
            "eval": app.eval,
            "tokenize": app.tokenize,
            "experiment": app.experiment,
        }
        return handlers[args.command](args)
    except IsibError as e:
        logger.debug("command failed", exc_info=True)
        ui.show_error(str(e))
        return e.exit_code
    except OSError as e:
        ui.show_error(f"{e.strerror or e}: {e.filename or ''}".strip())
        return EXIT_USAGE
