"""
Training Service for SDT
Training loop with early stopping, evaluation, prediction and seed sweeps
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.analysis import EvalReport, compute_report, emotional_shift_split
from src.config_pipeline.run_config import RunConfig
from src.core import Adam, NumericalError, Tensor, TrainingAborted, make_streams, no_grad
from src.data import Batch, Conversation, Dataset, collate, load_dataset, make_batches
from src.model import LossReport, SDTModel, StudentOutput, compute_losses, export_gates
from src.utils.log_service import get_logger

from .checkpoint_manager import CheckpointManager
from .model_manager import model_manager

log = get_logger(__name__)


@dataclass
class TrainResult:
    model: SDTModel
    history: List[LossReport]
    best_epoch: int = 0
    best_val_f1: Optional[float] = None
    val_history: List[float] = field(default_factory=list)
    run_folder: Optional[str] = None

    def loss_rows(self) -> List[dict]:
        return [r.to_json_row(epoch=i + 1) for i, r in enumerate(self.history)]


@dataclass
class ConversationPrediction:
    id: str
    probs: np.ndarray
    predictions: np.ndarray
    gates: List[dict]


def split_train_val(conversations: Sequence[Conversation], val_fraction: float,
                    rng: np.random.Generator) -> Tuple[List[Conversation], List[Conversation]]:
    """Hold out round(val_fraction * n) conversations, keeping at least one for training."""
    n = len(conversations)
    n_val = min(int(round(val_fraction * n)), n - 1)
    if n_val <= 0:
        return list(conversations), []
    order = rng.permutation(n)
    held = set(order[:n_val].tolist())
    train = [c for i, c in enumerate(conversations) if i not in held]
    val = [c for i, c in enumerate(conversations) if i in held]
    return train, val


def _batch_loss(model: SDTModel, batch: Batch, training: bool, rng, gammas) -> LossReport:
    report, _ = model.compute_loss(batch.features, batch.speakers, batch.mask, batch.labels,
                                   training=training, rng=rng, gammas=gammas)
    return report


def train(config: RunConfig, dataset: Optional[Dataset] = None, run_folder: Optional[str] = None,
          on_epoch: Optional[Callable[[int, LossReport], None]] = None) -> TrainResult:
    """
    Train one model.

    Args:
        config (RunConfig): Model, optimizer and schedule settings.
        dataset (Dataset, optional): Training pool; loaded from config.dataset_path if omitted.
        run_folder (str, optional): Where checkpoint, manifest and loss log are written.
        on_epoch (callable, optional): Called with (epoch, averaged LossReport).

    Returns:
        TrainResult: The best-validation model (last epoch without validation)
        and the per-epoch loss history.

    Raises:
        TrainingAborted: When a loss component or gradient becomes non-finite.
    """
    if dataset is None:
        dataset = load_dataset(config.dataset_path)
    streams = make_streams(config.seed)
    model_cfg = model_manager.fit_to_dataset(config.model, dataset.header)
    model = model_manager.build(model_cfg, config.seed)
    train_convs, val_convs = split_train_val(dataset.conversations, config.val_fraction, streams["split"])
    gammas = config.effective_gammas

    manager = CheckpointManager(run_folder=run_folder) if run_folder else None
    if manager:
        manager.reset_loss_log()
        manager.write_manifest(config, {"train_conversations": len(train_convs),
                                        "val_conversations": len(val_convs)})

    log.info(f"Training for up to {config.epochs} epochs on {len(train_convs)} conversations "
             f"({len(val_convs)} held out), seed {config.seed}")
    optimizer = Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    result = TrainResult(model=model, history=[], run_folder=manager.run_folder if manager else None)
    best_state, stale = None, 0

    for epoch in range(1, config.epochs + 1):
        reports, weights = [], []
        for b, batch in enumerate(make_batches(train_convs, config.batch_size, rng=streams["shuffle"])):
            optimizer.zero_grad()
            try:
                report = _batch_loss(model, batch, True, streams["dropout"], gammas)
                report.objective.backward()
            except NumericalError as e:
                log.error(f"Non-finite value at epoch {epoch}, batch {b}: {e}")
                raise TrainingAborted(epoch, b, e.op) from e
            optimizer.step()
            report.objective = None
            reports.append(report)
            weights.append(batch.num_utterances)

        epoch_report = LossReport.average(reports, weights)
        result.history.append(epoch_report)
        if manager:
            manager.append_loss(epoch_report.to_json_row(epoch))
        if on_epoch:
            on_epoch(epoch, epoch_report)

        if val_convs:
            val_f1 = evaluate(model, val_convs, label_names=dataset.header.label_names).weighted_f1
            result.val_history.append(val_f1)
            if result.best_val_f1 is None or val_f1 > result.best_val_f1:
                result.best_val_f1, result.best_epoch, stale = val_f1, epoch, 0
                best_state = model.state_dict()
            else:
                stale += 1
            log.info(f"Epoch {epoch}: loss {epoch_report.total:.4f}, val w-F1 {val_f1:.4f}")
            if stale >= config.patience:
                log.info(f"Early stopping at epoch {epoch}; best epoch {result.best_epoch}")
                break
        else:
            result.best_epoch = epoch
            log.info(f"Epoch {epoch}: loss {epoch_report.total:.4f}")

    if best_state is not None:
        model.load_state_dict(best_state)
    if manager:
        manager.save_model(model.config, model.state_dict())
    return result


# ----- inference ----------------------------------------------------------------

def _predict_batch(model: SDTModel, batch: Batch) -> List[ConversationPrediction]:
    with no_grad():
        out = model.forward(batch.features, batch.speakers, batch.mask)
    preds = out.predictions()
    results = []
    for i, conv_id in enumerate(batch.ids):
        n = int(batch.lengths[i])
        gates = []
        if out.gates is not None:
            gates = export_gates(out.gates[:, i], model.modalities, n)
        results.append(ConversationPrediction(id=conv_id, probs=out.probs.data[i, :n].copy(),
                                              predictions=preds[i, :n].copy(), gates=gates))
    return results


def predict(model: SDTModel, conversation: Conversation) -> ConversationPrediction:
    """Teacher probabilities, argmax labels and multimodal gate summary (dropout off, no students)."""
    return _predict_batch(model, collate([conversation]))[0]


def predict_all(model: SDTModel, conversations: Sequence[Conversation], workers: int = 1) -> List[ConversationPrediction]:
    """One prediction per conversation, in input order; `workers > 1` uses a thread pool."""
    if workers <= 1:
        return [predict(model, c) for c in conversations]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: predict(model, c), conversations))


def evaluate(model: SDTModel, data, workers: int = 1, label_names: Optional[Sequence[str]] = None) -> EvalReport:
    """
    Evaluate teacher-head argmax predictions.

    Args:
        model (SDTModel): Trained model.
        data: A Dataset or a list of conversations.
        workers (int): Threads evaluating conversations; results are reduced in
            dataset order, so the report does not depend on this value.
        label_names: Class names (taken from the dataset header when available).
    """
    if isinstance(data, Dataset):
        label_names = label_names or data.header.label_names
        conversations = data.conversations
    else:
        conversations = list(data)
    if label_names is None:
        label_names = [f"class{k}" for k in range(model.config.num_classes)]

    predictions = predict_all(model, conversations, workers)
    y_true = np.concatenate([c.labels for c in conversations])
    y_pred = np.concatenate([p.predictions for p in predictions])
    shift = emotional_shift_split(conversations, [p.predictions for p in predictions])
    return compute_report(y_true, y_pred, label_names, shift=shift)


def conversation_losses(model: SDTModel, batch: Batch, gammas: Optional[Tuple[float, float, float]] = None) -> List[LossReport]:
    """
    One LossReport per conversation of `batch`, averaged over that
    conversation's real utterances (dropout off, students on).
    """
    gammas = tuple(gammas or model.config.gammas)
    with no_grad():
        out = model.forward(batch.features, batch.speakers, batch.mask, students=True)
        reports = []
        for i in range(batch.size):
            n = int(batch.lengths[i])
            students = {
                m: StudentOutput(probs=Tensor(s.probs.data[i, :n]), probs_tau=Tensor(s.probs_tau.data[i, :n]),
                                 logits=Tensor(s.logits.data[i, :n]))
                for m, s in out.students.items()
            }
            reports.append(compute_losses(
                Tensor(out.teacher.probs.data[i, :n]), Tensor(out.teacher.logits.data[i, :n]), students,
                batch.labels[i, :n], None, gammas, model.config.temperature,
            ))
    return reports


# ----- seed sweeps --------------------------------------------------------------

@dataclass
class SweepReport:
    seeds: List[int]
    accuracy: List[float]
    weighted_f1: List[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracy))

    @property
    def mean_weighted_f1(self) -> float:
        return float(np.mean(self.weighted_f1))

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": float(np.std(self.accuracy)),
            "mean_weighted_f1": self.mean_weighted_f1,
            "std_weighted_f1": float(np.std(self.weighted_f1)),
        }


def seed_sweep(config: RunConfig, k: int = 3, dataset: Optional[Dataset] = None,
               test_dataset: Optional[Dataset] = None) -> SweepReport:
    """
    Train k runs with seeds seed..seed+k-1 and evaluate each on the test set
    (the training pool when no test set is given).
    """
    if dataset is None:
        dataset = load_dataset(config.dataset_path)
    if test_dataset is None and config.test_path:
        test_dataset = load_dataset(config.test_path)
    target = test_dataset or dataset
    sweep = SweepReport(seeds=[], accuracy=[], weighted_f1=[])
    for seed in range(config.seed, config.seed + k):
        run = config.model_copy(update={"seed": seed})
        result = train(run, dataset)
        report = evaluate(result.model, target, workers=config.eval_workers)
        sweep.seeds.append(seed)
        sweep.accuracy.append(report.accuracy)
        sweep.weighted_f1.append(report.weighted_f1)
        log.info(f"Seed {seed}: ACC {report.accuracy:.4f}, w-F1 {report.weighted_f1:.4f}")
    return sweep

