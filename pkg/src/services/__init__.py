from .model_manager import ModelManager, model_manager
from .checkpoint_manager import CheckpointManager, save_checkpoint, load_checkpoint
from .training_service import (
    TrainResult,
    ConversationPrediction,
    SweepReport,
    train,
    evaluate,
    predict,
    predict_all,
    conversation_losses,
    seed_sweep,
    split_train_val,
)
from .ablation_service import ABLATION_ROWS, AblationTable, ablate, ablation_configs, compare_fusions, parameter_deltas
from .gradcheck_service import GradcheckReport, gradcheck
from .export_service import dump_attention, dump_gates, dump_representations
from .command_handler import CommandHandler

__all__ = [
    "ModelManager",
    "model_manager",
    "CheckpointManager",
    "save_checkpoint",
    "load_checkpoint",
    "TrainResult",
    "ConversationPrediction",
    "SweepReport",
    "train",
    "evaluate",
    "predict",
    "predict_all",
    "conversation_losses",
    "seed_sweep",
    "split_train_val",
    "ABLATION_ROWS",
    "AblationTable",
    "ablate",
    "ablation_configs",
    "compare_fusions",
    "parameter_deltas",
    "GradcheckReport",
    "gradcheck",
    "dump_attention",
    "dump_gates",
    "dump_representations",
    "CommandHandler",
]
