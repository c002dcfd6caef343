"""
Conversation dataset types and the on-disk format.

A dataset is a directory holding

    header.json  name, d_t, d_a, d_v, num_classes, label_names, speaker_vocab and
                 an index with one entry per conversation:
                 {id, num_utterances, offset, speakers, labels}
    data.bin     little-endian float64 values, conversation by conversation,
                 utterance by utterance, each utterance stored as its text, audio
                 and visual features back to back. `offset` is the byte offset of
                 a conversation's first value.
"""
import json
import os
from dataclasses import dataclass
from typing import Dict, List, NamedTuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.core import DatasetError, DimensionError
from src.utils.log_service import get_logger

log = get_logger(__name__)

FORMAT_NAME = "sdt-conversations"
FORMAT_VERSION = 1
HEADER_FILE = "header.json"
DATA_FILE = "data.bin"
LE_FLOAT64 = np.dtype("<f8")


@dataclass
class Utterance:
    text: np.ndarray
    audio: np.ndarray
    visual: np.ndarray
    speaker: int
    label: int

    def feature(self, modality: str) -> np.ndarray:
        return {"t": self.text, "a": self.audio, "v": self.visual}[modality]


@dataclass
class Conversation:
    id: str
    utterances: List[Utterance]

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> np.ndarray:
        return np.array([u.speaker for u in self.utterances], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=np.int64)

    def features(self, modality: str) -> np.ndarray:
        """[N, d_m] feature matrix of one modality; DimensionError if widths differ."""
        rows = [np.asarray(u.feature(modality), dtype=np.float64) for u in self.utterances]
        shapes = sorted({r.shape for r in rows})
        if len(shapes) != 1 or len(shapes[0]) != 1:
            raise DimensionError(f"conversation {self.id!r}: {modality} features have shapes {shapes}")
        return np.stack(rows)


class IndexEntry(BaseModel):
    id: str
    num_utterances: int
    offset: int
    speakers: List[int]
    labels: List[int]


class DatasetHeader(BaseModel):
    format: str = FORMAT_NAME
    version: int = FORMAT_VERSION
    name: str
    d_t: int
    d_a: int
    d_v: int
    num_classes: int
    label_names: List[str]
    speaker_vocab: List[str] = Field(default_factory=list)
    index: List[IndexEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "DatasetHeader":
        if min(self.d_t, self.d_a, self.d_v) < 1:
            raise ValueError("feature dimensions must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if len(self.label_names) != self.num_classes:
            raise ValueError(f"{len(self.label_names)} label names for {self.num_classes} classes")
        return self

    @property
    def feature_dims(self) -> Dict[str, int]:
        return {"t": self.d_t, "a": self.d_a, "v": self.d_v}

    @property
    def utterance_width(self) -> int:
        return self.d_t + self.d_a + self.d_v


class Dataset(NamedTuple):
    header: DatasetHeader
    conversations: List[Conversation]

    @property
    def num_utterances(self) -> int:
        return sum(len(c) for c in self.conversations)


def validate_conversation(conv: Conversation, header: DatasetHeader, record: int):
    """Raises DatasetError (with the record index) on empty, mis-sized or mislabeled data."""
    if not conv.utterances:
        raise DatasetError(f"conversation {conv.id!r} has no utterances", record)
    dims = header.feature_dims
    for j, u in enumerate(conv.utterances):
        for m, dim in dims.items():
            if np.shape(u.feature(m)) != (dim,):
                raise DatasetError(
                    f"utterance {j} modality {m} has shape {np.shape(u.feature(m))}, expected ({dim},)", record
                )
        if not 0 <= u.label < header.num_classes:
            raise DatasetError(f"utterance {j} has unknown label {u.label}", record)
        if u.speaker < 0:
            raise DatasetError(f"utterance {j} has negative speaker index {u.speaker}", record)


def save_dataset(dataset: Dataset, path: str) -> str:
    """Write `dataset` to directory `path` (created if needed) and return it."""
    header, conversations = dataset
    if not conversations:
        raise DatasetError("dataset must contain ≥1 conversation")
    os.makedirs(path, exist_ok=True)
    index, offset = [], 0
    with open(os.path.join(path, DATA_FILE), "wb") as f:
        for i, conv in enumerate(conversations):
            validate_conversation(conv, header, i)
            rows = np.stack([np.concatenate([u.text, u.audio, u.visual]) for u in conv.utterances])
            payload = rows.astype(LE_FLOAT64).tobytes()
            f.write(payload)
            index.append(IndexEntry(
                id=conv.id, num_utterances=len(conv), offset=offset,
                speakers=conv.speakers.tolist(), labels=conv.labels.tolist(),
            ))
            offset += len(payload)
    header = header.model_copy(update={"index": index})
    with open(os.path.join(path, HEADER_FILE), "w") as f:
        json.dump(header.model_dump(), f, indent=2)
    log.info(f"Saved dataset '{header.name}' with {len(conversations)} conversations to {path}")
    return path


def read_header(path: str) -> DatasetHeader:
    header_path = os.path.join(path, HEADER_FILE)
    try:
        with open(header_path, "r") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise DatasetError(f"no {HEADER_FILE} in {path}") from None
    except json.JSONDecodeError as e:
        raise DatasetError(f"{header_path} is not valid JSON: {e}") from None
    try:
        header = DatasetHeader.model_validate(raw)
    except ValidationError as e:
        raise DatasetError(f"invalid header: {e}") from None
    if header.format != FORMAT_NAME or header.version != FORMAT_VERSION:
        raise DatasetError(f"unsupported format {header.format} v{header.version}")
    return header


def load_dataset(path: str) -> Dataset:
    """
    Load and cross-check a dataset directory.

    Raises:
        DatasetError: On an empty index, a mis-sized record, a label outside
            [0, C) or trailing bytes in data.bin; the message names the record.
    """
    header = read_header(path)
    if not header.index:
        raise DatasetError("dataset must contain ≥1 conversation")
    try:
        values = np.fromfile(os.path.join(path, DATA_FILE), dtype=LE_FLOAT64)
    except OSError as e:
        raise DatasetError(f"cannot read {DATA_FILE}: {e}") from None

    width = header.utterance_width
    item = LE_FLOAT64.itemsize
    conversations, expected = [], 0
    for i, entry in enumerate(header.index):
        n = entry.num_utterances
        if n < 1:
            raise DatasetError(f"conversation {entry.id!r} has no utterances", i)
        if len(entry.speakers) != n or len(entry.labels) != n:
            raise DatasetError(f"expected {n} speakers and labels", i)
        if entry.offset != expected:
            raise DatasetError(f"offset {entry.offset} does not follow previous record ({expected})", i)
        start = entry.offset // item
        block = values[start:start + n * width]
        if block.size != n * width:
            raise DatasetError(f"data.bin ends inside the record ({block.size} of {n * width} values)", i)
        rows = block.reshape(n, width).astype(np.float64)
        utterances = [
            Utterance(
                text=rows[j, :header.d_t],
                audio=rows[j, header.d_t:header.d_t + header.d_a],
                visual=rows[j, header.d_t + header.d_a:],
                speaker=int(entry.speakers[j]),
                label=int(entry.labels[j]),
            )
            for j in range(n)
        ]
        conv = Conversation(id=entry.id, utterances=utterances)
        validate_conversation(conv, header, i)
        conversations.append(conv)
        expected += n * width * item
    if expected != values.size * item:
        raise DatasetError(f"data.bin holds {values.size * item} bytes, index covers {expected}")
    log.info(f"Loaded dataset '{header.name}': {len(conversations)} conversations")
    return Dataset(header=header.model_copy(update={"index": []}), conversations=conversations)
