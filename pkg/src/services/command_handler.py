"""
Command Handler Service for SDT
Centralized command-line processing: training, evaluation, ablations and exports
"""
import argparse
import json
import os
from typing import Callable, Dict, List, Optional, Sequence

from src.config_pipeline import sdt_config
from src.config_pipeline.run_config import PRESETS, RunConfig, load_run_config, parse_assignments
from src.core import ConfigError, DatasetError, SDTError
from src.data import Dataset, convert_jsonl, load_dataset, save_dataset, synth_generate
from src.utils.log_service import get_logger, setup_logging

from . import export_service
from .ablation_service import ablate, compare_fusions
from .checkpoint_manager import EVAL_FILE, CheckpointManager
from .gradcheck_service import gradcheck
from .model_manager import model_manager
from .training_service import evaluate, seed_sweep, train

log = get_logger(__name__)


def _csv(value: Optional[str]) -> Optional[List[str]]:
    return [v.strip() for v in value.split(",") if v.strip()] if value else None


class CommandHandler:
    """
    Centralized command handler for the SDT command line.
    Each `handle_*` method runs one subcommand and returns a short summary.
    """

    def __init__(self, out: Callable[[str], None] = print):
        self.out = out
        self.handlers: Dict[str, Callable[[argparse.Namespace], str]] = {
            "train": self.handle_train,
            "eval": self.handle_eval,
            "ablate": self.handle_ablate,
            "gradcheck": self.handle_gradcheck,
            "synth": self.handle_synth,
            "convert": self.handle_convert,
            "dump-attn": self.handle_dump,
            "dump-gates": self.handle_dump,
            "dump-repr": self.handle_dump,
            "sweep": self.handle_sweep,
            "serve": self.handle_serve,
        }
        self.parser = self.build_parser()
        self.exit_code = 0

    # ----- parser ---------------------------------------------------------------

    @staticmethod
    def _add_config_args(parser: argparse.ArgumentParser):
        parser.add_argument("--config", help="JSON run configuration file")
        parser.add_argument("--preset", choices=sorted(PRESETS), help="dataset hyperparameter preset")
        parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                            help="override a config key, e.g. --set model.heads=4 (repeatable)")
        parser.add_argument("--dataset", help="training dataset (name under DATA_FOLDER or path)")
        parser.add_argument("--test", help="test dataset (name under DATA_FOLDER or path)")

    @staticmethod
    def _add_model_args(parser: argparse.ArgumentParser):
        parser.add_argument("--checkpoint", required=True, help="model checkpoint file")
        parser.add_argument("--dataset", required=True, help="dataset (name under DATA_FOLDER or path)")

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="sdt", description="Self-distillation transformer for emotion recognition in conversations")
        parser.add_argument("--log-level", help="override LOG_LEVEL")
        sub = parser.add_subparsers(dest="command", required=True)

        p = sub.add_parser("train", help="train one model and write a run folder")
        self._add_config_args(p)
        p.add_argument("--run-name", help="folder name under OUTPUT_FOLDER")

        p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
        self._add_model_args(p)
        p.add_argument("--workers", type=int, default=None, help="parallel evaluation threads")
        p.add_argument("--out", help="write the EvalReport JSON here")

        p = sub.add_parser("ablate", help="run the ablation grid (or the fusion comparison)")
        self._add_config_args(p)
        p.add_argument("--fusions", action="store_true", help="compare fusion variants instead")
        p.add_argument("--out", help="write the table JSON here (markdown next to it)")

        p = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--utterances", type=int, default=3)
        p.add_argument("--samples", type=int, default=8, help="entries per parameter; 0 checks all")
        p.add_argument("--tolerance", type=float, default=1e-4)

        p = sub.add_parser("synth", help="write a synthetic dataset")
        p.add_argument("--out", required=True, help="dataset directory (name under DATA_FOLDER or path)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--conversations", type=int, default=8)
        p.add_argument("--min-len", type=int, default=10)
        p.add_argument("--max-len", type=int, default=10)
        p.add_argument("--speakers", type=int, default=2)
        p.add_argument("--classes", type=int, default=6)
        p.add_argument("--separability", type=float, default=0.8)
        p.add_argument("--shift-rate", type=float, default=0.3)

        p = sub.add_parser("convert", help="convert a JSON-lines feature export")
        p.add_argument("input", help="JSON-lines file, one conversation per line")
        p.add_argument("--out", required=True, help="dataset directory (name under DATA_FOLDER or path)")
        p.add_argument("--name", help="dataset name stored in the header")
        p.add_argument("--labels", help="comma-separated class names, in index order")
        p.add_argument("--speakers", help="comma-separated speaker vocabulary")

        for name, help_text in (("dump-attn", "attention weights per block and head"),
                                ("dump-gates", "multimodal gate weights per utterance"),
                                ("dump-repr", "fused and enhanced representations per utterance")):
            p = sub.add_parser(name, help=f"export {help_text}")
            self._add_model_args(p)
            p.add_argument("--out", required=True, help="output file")
            p.add_argument("--conversation", action="append", default=[], help="restrict to these ids")

        p = sub.add_parser("sweep", help="train and evaluate over consecutive seeds")
        self._add_config_args(p)
        p.add_argument("-k", type=int, default=3, help="number of seeds")
        p.add_argument("--out", help="write the sweep JSON here")

        p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
        p.add_argument("--checkpoint", help="defaults to API_CHECKPOINT")
        p.add_argument("--host")
        p.add_argument("--port", type=int)
        return parser

    # ----- helpers --------------------------------------------------------------

    def load_config(self, args: argparse.Namespace) -> RunConfig:
        overrides = parse_assignments(args.overrides)
        if args.dataset:
            overrides["dataset_path"] = sdt_config.get_dataset_path(args.dataset)
        if args.test:
            overrides["test_path"] = sdt_config.get_dataset_path(args.test)
        config = load_run_config(args.config, args.preset, overrides)
        if not config.dataset_path:
            raise ConfigError("no training dataset: pass --dataset or set dataset_path in the config")
        return config

    @staticmethod
    def _write(path: str, payload) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)
        return path

    @staticmethod
    def _datasets(config: RunConfig):
        dataset = load_dataset(config.dataset_path)
        test = load_dataset(config.test_path) if config.test_path else None
        return dataset, test

    # ----- handlers -------------------------------------------------------------

    def handle_train(self, args: argparse.Namespace) -> str:
        """
        Train a model, writing checkpoint, manifest and loss log to the run folder.

        Returns:
            str: Run folder and best epoch; test metrics when a test set is given.
        """
        config = self.load_config(args)
        dataset, test = self._datasets(config)
        manager = CheckpointManager(run_name=args.run_name or config.run_name)
        result = train(config, dataset, run_folder=manager.run_folder)
        message = f"Run saved to {manager.run_folder} (best epoch {result.best_epoch})"
        if test is not None:
            report = evaluate(result.model, test, workers=config.eval_workers)
            manager.write_json(EVAL_FILE, report.to_dict())
            self.out(report.to_markdown(title=f"Test set: {test.header.name}"))
            message += f"; test ACC {report.accuracy:.4f}, w-F1 {report.weighted_f1:.4f}"
        return message

    def handle_eval(self, args: argparse.Namespace) -> str:
        model = model_manager.load(args.checkpoint)
        dataset = load_dataset(sdt_config.get_dataset_path(args.dataset))
        report = evaluate(model, dataset, workers=args.workers or sdt_config.eval_workers)
        self.out(report.to_markdown(title=dataset.header.name))
        if args.out:
            self._write(args.out, report.to_dict())
        return f"ACC {report.accuracy:.4f}, w-F1 {report.weighted_f1:.4f} on {report.num_utterances} utterances"

    def handle_ablate(self, args: argparse.Namespace) -> str:
        config = self.load_config(args)
        dataset, test = self._datasets(config)
        table = (compare_fusions if args.fusions else ablate)(config, dataset, test)
        markdown = table.to_markdown()
        self.out(markdown)
        if args.out:
            self._write(args.out, table.to_dict())
            with open(os.path.splitext(args.out)[0] + ".md", "w") as f:
                f.write(markdown + "\n")
        return f"{len(table.rows)} rows"

    def handle_gradcheck(self, args: argparse.Namespace) -> str:
        report = gradcheck(seed=args.seed, n=args.utterances, samples=args.samples or None,
                           tolerance=args.tolerance)
        self.out(json.dumps(report.to_dict(), indent=2))
        if not report.passed:
            self.exit_code = 1
            return f"FAILED: {report.worst} has relative error {report.max_error:.2e}"
        return f"passed: max relative error {report.max_error:.2e}"

    def handle_synth(self, args: argparse.Namespace) -> str:
        out = sdt_config.get_dataset_path(args.out)
        dataset = synth_generate(args.seed, n_conversations=args.conversations,
                                 len_range=(args.min_len, args.max_len), n_speakers=args.speakers,
                                 num_classes=args.classes, separability=args.separability,
                                 shift_rate=args.shift_rate, name=os.path.basename(out.rstrip("/")))
        save_dataset(dataset, out)
        return f"Wrote {len(dataset.conversations)} conversations ({dataset.num_utterances} utterances) to {out}"

    def handle_convert(self, args: argparse.Namespace) -> str:
        out = sdt_config.get_dataset_path(args.out)
        dataset = convert_jsonl(args.input, out, args.name, _csv(args.labels), _csv(args.speakers))
        return f"Wrote {len(dataset.conversations)} conversations to {out}"

    def handle_dump(self, args: argparse.Namespace) -> str:
        dump = {
            "dump-attn": export_service.dump_attention,
            "dump-gates": export_service.dump_gates,
            "dump-repr": export_service.dump_representations,
        }[args.command]
        model = model_manager.load(args.checkpoint)
        dataset: Dataset = load_dataset(sdt_config.get_dataset_path(args.dataset))
        conversations = dataset.conversations
        if args.conversation:
            wanted = set(args.conversation)
            conversations = [c for c in conversations if c.id in wanted]
            if not conversations:
                raise DatasetError(f"no conversation matches {sorted(wanted)}")
        rows = export_service.collect(dump, model, conversations)
        if args.command == "dump-repr":
            export_service.write_jsonl(rows, args.out)
        else:
            export_service.write_json(rows, args.out)
        return f"Wrote {len(rows)} rows to {args.out}"

    def handle_sweep(self, args: argparse.Namespace) -> str:
        config = self.load_config(args)
        dataset, test = self._datasets(config)
        sweep = seed_sweep(config, k=args.k, dataset=dataset, test_dataset=test)
        summary = sweep.to_dict()
        self.out(json.dumps(summary, indent=2))
        if args.out:
            self._write(args.out, summary)
        return f"ACC {sweep.mean_accuracy:.4f}, w-F1 {sweep.mean_weighted_f1:.4f} over {len(sweep.seeds)} seeds"

    def handle_serve(self, args: argparse.Namespace) -> str:
        from src.api import run

        if args.checkpoint:
            sdt_config.set("API_CHECKPOINT", os.path.abspath(args.checkpoint))
        run(host=args.host, port=args.port)
        return "Server stopped"

    # ----- entry point ----------------------------------------------------------

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """
        Parse `argv`, run the subcommand and return the process exit code.

        Errors raised by the library are logged and turned into exit code 1.
        """
        args = self.parser.parse_args(argv)
        setup_logging("SDT", level=args.log_level or sdt_config.get("LOG_LEVEL"),
                      log_file=sdt_config.get("LOG_FILE"))
        sdt_config.ensure_directories()
        self.exit_code = 0
        try:
            message = self.handlers[args.command](args)
        except SDTError as e:
            log.error(f"{args.command} failed: {str(e)}")
            return 1
        except OSError as e:
            log.error(f"{args.command} failed: {str(e)}")
            return 1
        log.info(message)
        return self.exit_code
