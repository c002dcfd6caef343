"""
Converter from the JSON-lines interchange format to a dataset directory.

One conversation per line:

    {"id": "dia_12",
     "utterances": [{"speaker": "Ross", "label": "joy",
                     "text": [...], "audio": [...], "visual": [...]}, ...]}

`label` is a class name (or an index into `label_names`); `speaker` is any
string or integer. Speakers absent from a supplied vocabulary get the UNK index
len(vocab).
"""
import json
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src.core import DatasetError
from src.utils.log_service import get_logger

from .dataset import Conversation, Dataset, DatasetHeader, Utterance, save_dataset

log = get_logger(__name__)


def read_jsonl(path: str) -> List[dict]:
    records = []
    with open(path, "r") as f:
        for i, line in enumerate(f):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DatasetError(f"line {i + 1} is not valid JSON: {e}", len(records)) from None
    return records


def _label_index(raw, label_names: List[str], record: int) -> int:
    if isinstance(raw, int) and not isinstance(raw, bool):
        index = raw
    elif raw in label_names:
        index = label_names.index(raw)
    else:
        raise DatasetError(f"unknown label {raw!r}", record)
    if not 0 <= index < len(label_names):
        raise DatasetError(f"label index {index} outside [0, {len(label_names)})", record)
    return index


def records_to_dataset(records: Sequence[dict], name: str, label_names: Optional[Sequence[str]] = None,
                       speaker_vocab: Optional[Sequence[str]] = None) -> Dataset:
    """
    Args:
        label_names: Class names; derived from the string labels in sorted order if omitted.
        speaker_vocab: Fixed vocabulary (e.g. the training set's); built from the records if omitted.
    """
    if not records:
        raise DatasetError("dataset must contain ≥1 conversation")
    if label_names is None:
        found = {u.get("label") for r in records for u in r.get("utterances", [])}
        if any(not isinstance(x, str) for x in found):
            raise DatasetError("integer labels need explicit label_names")
        label_names = sorted(found)
    label_names = list(label_names)

    grow_vocab = speaker_vocab is None
    vocab: List[str] = [] if speaker_vocab is None else [str(s) for s in speaker_vocab]
    lookup: Dict[str, int] = {s: i for i, s in enumerate(vocab)}

    dims: Optional[Dict[str, int]] = None
    conversations = []
    for i, record in enumerate(records):
        raw_utterances = record.get("utterances")
        if not raw_utterances:
            raise DatasetError("conversation has no utterances", i)
        utterances = []
        for j, raw in enumerate(raw_utterances):
            try:
                feats = {m: np.asarray(raw[key], dtype=np.float64)
                         for m, key in (("t", "text"), ("a", "audio"), ("v", "visual"))}
                speaker_name = str(raw["speaker"])
                label_raw = raw["label"]
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetError(f"utterance {j} is malformed: {e}", i) from None
            if dims is None:
                dims = {m: f.shape[0] for m, f in feats.items()}
            if speaker_name not in lookup:
                if grow_vocab:
                    lookup[speaker_name] = len(vocab)
                    vocab.append(speaker_name)
            speaker = lookup.get(speaker_name, len(vocab))
            utterances.append(Utterance(text=feats["t"], audio=feats["a"], visual=feats["v"],
                                        speaker=speaker, label=_label_index(label_raw, label_names, i)))
        conversations.append(Conversation(id=str(record.get("id", f"{name}_{i:04d}")), utterances=utterances))

    try:
        header = DatasetHeader(name=name, d_t=dims["t"], d_a=dims["a"], d_v=dims["v"],
                               num_classes=len(label_names), label_names=label_names, speaker_vocab=vocab)
    except ValidationError as e:
        raise DatasetError(f"invalid header: {e}") from None
    return Dataset(header=header, conversations=conversations)


def convert_jsonl(path: str, out_dir: str, name: Optional[str] = None,
                  label_names: Optional[Sequence[str]] = None,
                  speaker_vocab: Optional[Sequence[str]] = None) -> Dataset:
    """Read `path`, build the dataset and write it to `out_dir`."""
    dataset = records_to_dataset(read_jsonl(path), name or out_dir.rstrip("/").split("/")[-1],
                                 label_names, speaker_vocab)
    save_dataset(dataset, out_dir)
    log.info(f"Converted {len(dataset.conversations)} conversations from {path}")
    return dataset
