"""Next-event models for soccer and the Monte Carlo match simulator built on them."""

from .cascade import ModelCascade, load_cascade, sample_event, save_cascade
from .events import Event, PredictedEvent, apply_prediction, default_vocabulary, encode_state
from .ingest import Corpus, parse_events, read_corpus, write_corpus
from .sim import BatchConfig, SimulationResult, simulate_batch, simulate_match
from .train import FineTuneSpec, build_pairs, finetune, select_finetune_pairs, train_base

__version__ = "0.1.0"

__all__ = [
    "BatchConfig",
    "Corpus",
    "Event",
    "FineTuneSpec",
    "ModelCascade",
    "PredictedEvent",
    "SimulationResult",
    "apply_prediction",
    "build_pairs",
    "default_vocabulary",
    "encode_state",
    "finetune",
    "load_cascade",
    "parse_events",
    "read_corpus",
    "sample_event",
    "save_cascade",
    "select_finetune_pairs",
    "simulate_batch",
    "simulate_match",
    "train_base",
    "write_corpus",
]
