"""Dense retriever domain adaptation with pseudo-relevance labels."""

import json
import os

from ._core import (
    Bm25Index,
    ConfigError,
    Encoder,
    Error,
    IoError,
    ParseError,
    ProtocolError,
    RemoteScorer,
    TrainingError,
    cosine_lr,
    lexical_overlap,
    marginmse_loss,
    ndcg_at_k,
    preset,
    ranknet_loss,
    remote_healthy,
    t5_relevance,
    tokenize,
    truncate_words,
    write_fixture,
)
from . import _core

__all__ = [
    "Bm25Index",
    "ConfigError",
    "Encoder",
    "Error",
    "IoError",
    "ParseError",
    "ProtocolError",
    "RemoteScorer",
    "TrainingError",
    "cosine_lr",
    "lexical_overlap",
    "marginmse_loss",
    "ndcg_at_k",
    "preset",
    "ranknet_loss",
    "remote_healthy",
    "resolve_config",
    "run_pipeline",
    "t5_relevance",
    "tokenize",
    "truncate_words",
    "write_fixture",
]


def _paths(obj):
    if isinstance(obj, dict):
        return {k: _paths(v) for k, v in obj.items()}
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    return obj


def resolve_config(config=None):
    """Full configuration with defaults filled in."""
    return json.loads(_core._resolve_config(json.dumps(_paths(config or {}))))


def run_pipeline(config, variant="a", force=False):
    """Runs every stage for `variant` ("a", "b" or "c") and returns the report."""
    return json.loads(_core._run_pipeline(json.dumps(_paths(config)), variant, force))
