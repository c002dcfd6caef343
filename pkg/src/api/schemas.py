from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class UtteranceIn(BaseModel):
    text: List[float]
    audio: List[float]
    visual: List[float]
    speaker: int = Field(default=0, ge=0)


class PredictRequest(BaseModel):
    id: str = "request"
    utterances: List[UtteranceIn] = Field(min_length=1)


class UtterancePrediction(BaseModel):
    utterance: int
    label: int
    probs: List[float]
    gates: Optional[Dict[str, float]] = None


class PredictResponse(BaseModel):
    id: str
    predictions: List[UtterancePrediction]


class ModelInfo(BaseModel):
    checkpoint: str
    num_parameters: int
    config: dict


class HealthResponse(BaseModel):
    status: str
    checkpoint: Optional[str] = None
