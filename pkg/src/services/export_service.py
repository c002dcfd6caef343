"""
Export Service for SDT
Attention weights, multimodal gates and utterance representations as JSON
"""
import json
import os
from typing import Iterable, List, Sequence

from src.core import no_grad
from src.data import Conversation, collate
from src.model import SDTModel, export_gates, pair_label
from src.utils.log_service import get_logger

log = get_logger(__name__)


def _forward(model: SDTModel, conversation: Conversation):
    batch = collate([conversation])
    with no_grad():
        return model.forward(batch.features, batch.speakers, batch.mask)


def dump_attention(model: SDTModel, conversation: Conversation) -> List[dict]:
    """
    One row per (block, layer, head): {block: "a→t", layer, head, rows: T_q x T_k}.
    `block` names the source and target modality of the transformer.
    """
    out = _forward(model, conversation)
    rows = []
    for pair, layers in out.attention.items():
        for layer, weights in enumerate(layers):
            for head in range(weights.shape[1]):
                rows.append({
                    "conversation": conversation.id,
                    "block": pair_label(pair),
                    "layer": layer,
                    "head": head,
                    "rows": weights[0, head].tolist(),
                })
    return rows


def dump_gates(model: SDTModel, conversation: Conversation) -> List[dict]:
    """{utterance, w_text, w_audio, w_visual} per utterance; empty unless fusion is gated."""
    out = _forward(model, conversation)
    if out.gates is None:
        log.warning(f"Model uses '{model.config.fusion}' fusion; no multimodal gates to export")
        return []
    rows = export_gates(out.gates[:, 0], model.modalities, len(conversation))
    for row in rows:
        row["conversation"] = conversation.id
    return rows


def dump_representations(model: SDTModel, conversation: Conversation) -> List[dict]:
    """
    Per utterance: speaker, label, prediction, the fused vector and the
    enhanced vectors per modality, for external projection and plotting.
    """
    out = _forward(model, conversation)
    preds = out.predictions()[0]
    reps = out.representations
    rows = []
    for i, u in enumerate(conversation.utterances):
        rows.append({
            "conversation": conversation.id,
            "utterance": i,
            "speaker": u.speaker,
            "label": u.label,
            "prediction": int(preds[i]),
            "fused": reps.fused.data[0, i].tolist(),
            "enhanced": {m: reps.enhanced[m].data[0, i].tolist() for m in model.modalities},
        })
    return rows


def collect(dump, model: SDTModel, conversations: Sequence[Conversation]) -> List[dict]:
    rows = []
    for conv in conversations:
        rows.extend(dump(model, conv))
    return rows


def write_json(rows: List[dict], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(rows, f)
    log.info(f"Wrote {len(rows)} rows to {path}")
    return path


def write_jsonl(rows: Iterable[dict], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    count = 0
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
            count += 1
    log.info(f"Wrote {count} rows to {path}")
    return path
