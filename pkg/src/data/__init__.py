from .dataset import (
    Utterance,
    Conversation,
    DatasetHeader,
    IndexEntry,
    Dataset,
    load_dataset,
    save_dataset,
    read_header,
    validate_conversation,
)
from .synth import synth_generate, class_means
from .batching import Batch, collate, make_batches, PAD_LABEL, PAD_SPEAKER
from .convert import read_jsonl, records_to_dataset, convert_jsonl

__all__ = [
    "Utterance",
    "Conversation",
    "DatasetHeader",
    "IndexEntry",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "read_header",
    "validate_conversation",
    "synth_generate",
    "class_means",
    "Batch",
    "collate",
    "make_batches",
    "PAD_LABEL",
    "PAD_SPEAKER",
    "read_jsonl",
    "records_to_dataset",
    "convert_jsonl",
]
