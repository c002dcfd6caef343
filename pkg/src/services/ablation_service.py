"""
Ablation Service for SDT
Runs the component, loss and modality ablation grid and the fusion comparison
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from src.analysis import EvalReport
from src.config_pipeline.run_config import FUSIONS, RunConfig, apply_overrides, parse_config
from src.data import Dataset, load_dataset
from src.utils.log_service import get_logger

from .model_manager import model_manager
from .training_service import evaluate, train

log = get_logger(__name__)

# (row name, overrides), in reporting order
ABLATION_ROWS: List[Tuple[str, Dict[str, object]]] = [
    ("SDT", {}),
    ("w/o positional embeddings", {"model.no_pe": True}),
    ("w/o speaker embeddings", {"model.no_se": True}),
    ("w/o intra-modal transformers", {"model.no_intra": True}),
    ("w/o inter-modal transformers", {"model.no_inter": True}),
    ("w/o L_CE", {"no_ce": True}),
    ("w/o L_KL", {"no_kl": True}),
    ("Text", {"model.modalities": ["t"]}),
    ("Audio", {"model.modalities": ["a"]}),
    ("Visual", {"model.modalities": ["v"]}),
    ("Text + Audio", {"model.modalities": ["t", "a"]}),
    ("Text + Visual", {"model.modalities": ["t", "v"]}),
    ("Audio + Visual", {"model.modalities": ["a", "v"]}),
]


@dataclass
class AblationRow:
    name: str
    report: EvalReport
    num_parameters: int


@dataclass
class AblationTable:
    rows: List[AblationRow]

    def to_markdown(self) -> str:
        lines = ["| Setting | ACC | w-F1 | Parameters |", "|---|---|---|---|"]
        for row in self.rows:
            lines.append(f"| {row.name} | {100 * row.report.accuracy:.2f} | "
                         f"{100 * row.report.weighted_f1:.2f} | {row.num_parameters} |")
        return "\n".join(lines)

    def to_dict(self) -> List[dict]:
        return [
            {"name": r.name, "accuracy": r.report.accuracy, "weighted_f1": r.report.weighted_f1,
             "num_parameters": r.num_parameters}
            for r in self.rows
        ]


def ablation_configs(base: RunConfig, rows: Optional[List[Tuple[str, Dict[str, object]]]] = None) -> List[Tuple[str, RunConfig]]:
    """One RunConfig per row: the base config with that row's overrides, same seed."""
    base_data = base.model_dump()
    return [(name, parse_config(RunConfig, apply_overrides(base_data, overrides)))
            for name, overrides in (rows or ABLATION_ROWS)]


def _run_grid(configs: List[Tuple[str, RunConfig]], dataset: Dataset,
              test_dataset: Optional[Dataset]) -> AblationTable:
    target = test_dataset or dataset
    table = AblationTable(rows=[])
    for name, config in configs:
        log.info(f"Ablation row '{name}'")
        result = train(config, dataset)
        report = evaluate(result.model, target, workers=config.eval_workers)
        table.rows.append(AblationRow(name=name, report=report, num_parameters=result.model.num_parameters()))
    return table


def ablate(base: RunConfig, dataset: Optional[Dataset] = None,
           test_dataset: Optional[Dataset] = None) -> AblationTable:
    """
    Train and evaluate every ablation row with the base seed.

    Args:
        base (RunConfig): The full-model configuration.
        dataset (Dataset, optional): Training pool (base.dataset_path if omitted).
        test_dataset (Dataset, optional): Evaluation set (base.test_path, else the training pool).
    """
    dataset = dataset or load_dataset(base.dataset_path)
    if test_dataset is None and base.test_path:
        test_dataset = load_dataset(base.test_path)
    return _run_grid(ablation_configs(base), dataset, test_dataset)


def compare_fusions(base: RunConfig, dataset: Optional[Dataset] = None,
                    test_dataset: Optional[Dataset] = None) -> AblationTable:
    """Same run with every fusion variant (gated, add, concat, unicat)."""
    dataset = dataset or load_dataset(base.dataset_path)
    if test_dataset is None and base.test_path:
        test_dataset = load_dataset(base.test_path)
    rows = [(fusion, {"model.fusion": fusion}) for fusion in FUSIONS]
    return _run_grid(ablation_configs(base, rows), dataset, test_dataset)


def parameter_deltas(base: RunConfig) -> Dict[str, int]:
    """Analytic parameter count of every ablation row relative to the full model."""
    full = model_manager.analytic_parameter_count(base.model)
    return {name: model_manager.analytic_parameter_count(cfg.model) - full
            for name, cfg in ablation_configs(base)}
