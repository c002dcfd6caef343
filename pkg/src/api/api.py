import numpy as np
import uvicorn
from fastapi import Depends, FastAPI, HTTPException

from src.config_pipeline import sdt_config
from src.core import DatasetError, DimensionError, SDTError
from src.data import Conversation, Utterance, load_dataset
from src.model import SDTModel
from src.services.model_manager import model_manager
from src.services.training_service import evaluate, predict
from src.utils.log_service import get_logger, setup_logging

from .schemas import HealthResponse, ModelInfo, PredictRequest, PredictResponse, UtterancePrediction

app = FastAPI(title="SDT emotion recognition")
logger = get_logger(__name__)


def get_model() -> SDTModel:
    """
    Loads the checkpoint named by API_CHECKPOINT (cached by the model manager).

    Raises:
        HTTPException: 503 if no checkpoint is configured or it cannot be read.
    """
    path = sdt_config.get("API_CHECKPOINT")
    if not path:
        raise HTTPException(status_code=503, detail="No checkpoint configured (set API_CHECKPOINT)")
    try:
        return model_manager.load(path)
    except (OSError, SDTError) as e:
        logger.error(f"Cannot load checkpoint {path}: {str(e)}")
        raise HTTPException(status_code=503, detail=f"Checkpoint error: {str(e)}")


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", checkpoint=sdt_config.get("API_CHECKPOINT"))


@app.get("/model", response_model=ModelInfo)
def model_info(model: SDTModel = Depends(get_model)):
    """Configuration and parameter count of the served model."""
    return ModelInfo(checkpoint=str(sdt_config.get("API_CHECKPOINT")), num_parameters=model.num_parameters(),
                     config=model.config.model_dump())


@app.post("/predict", response_model=PredictResponse)
def predict_conversation(request: PredictRequest, model: SDTModel = Depends(get_model)):
    """
    Classifies every utterance of one conversation.

    Args:
        request (PredictRequest): Per-utterance text/audio/visual features and speaker index.

    Returns:
        PredictResponse: Class probabilities, argmax label and multimodal gate
        weights per utterance.

    Raises:
        HTTPException: 422 if feature sizes do not match the model.
    """
    logger.info(f"Predicting conversation {request.id} ({len(request.utterances)} utterances)")
    conversation = Conversation(id=request.id, utterances=[
        Utterance(text=np.asarray(u.text), audio=np.asarray(u.audio), visual=np.asarray(u.visual),
                  speaker=u.speaker, label=0)
        for u in request.utterances
    ])
    try:
        result = predict(model, conversation)
    except DimensionError as e:
        raise HTTPException(status_code=422, detail=f"Feature error: {str(e)}")
    except SDTError as e:
        logger.error(f"Error in predict: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Prediction error: {str(e)}")

    predictions = []
    for i, label in enumerate(result.predictions.tolist()):
        gates = None
        if result.gates:
            gates = {k: v for k, v in result.gates[i].items() if k != "utterance"}
        predictions.append(UtterancePrediction(utterance=i, label=label, probs=result.probs[i].tolist(), gates=gates))
    return PredictResponse(id=request.id, predictions=predictions)


@app.post("/evaluate/{name}")
def evaluate_dataset(name: str, model: SDTModel = Depends(get_model)):
    """
    Evaluates the served model on a dataset directory under DATA_FOLDER.

    Returns:
        dict: The EvalReport (accuracy, weighted F1, per-class metrics,
        confusion matrix, emotional-shift split).
    """
    logger.info(f"Evaluating dataset: {name}")
    try:
        dataset = load_dataset(sdt_config.get_dataset_path(name))
        return evaluate(model, dataset, workers=sdt_config.eval_workers).to_dict()
    except DatasetError as e:
        raise HTTPException(status_code=404, detail=f"Dataset error: {str(e)}")
    except SDTError as e:
        logger.error(f"Error in evaluate: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Evaluation error: {str(e)}")


def run(host: str = None, port: int = None):
    """
    Runs the FastAPI server using uvicorn on API_HOST:API_PORT unless overridden.
    """
    setup_logging("SDT-API")
    uvicorn.run(app, host=host or sdt_config.get("API_HOST"), port=port or sdt_config.get("API_PORT"))
