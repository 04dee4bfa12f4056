"""
Command dependencies.

This module resolves what the commands share: the effective run
configuration (file plus flag overrides), the data splits and the trained
models loaded from their checkpoints.
"""

import json
import logging
import os
from argparse import Namespace
from typing import Any, Dict, Optional, Tuple

from pydantic import ValidationError

from scoreag.core.exception_handlers import CheckpointError, ConfigurationError
from scoreag.io import checkpoint
from scoreag.models.classifier import Classifier
from scoreag.models.score_model import ScoreModel
from scoreag.schemas.config import RunConfig
from scoreag.services.data_service import Dataset, load_splits

# Set up logger
logger = logging.getLogger(__name__)

SCORE_CHECKPOINT = "score_model.ckpt"
CLASSIFIER_CHECKPOINT = "classifier.ckpt"


def read_config_file(path: str) -> Dict[str, Any]:
    """
    Raises:
        ConfigurationError: If the file is missing or not a JSON object
    """
    if not os.path.isfile(path):
        raise ConfigurationError(f"Config file not found: {path}", path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot parse config {path}: {str(e)}", path)
    if not isinstance(payload, dict):
        raise ConfigurationError(f"Config {path} must be a JSON object", path)
    return payload


def _set(payload: Dict[str, Any], section: str, key: str, value: Any) -> None:
    payload.setdefault(section, {})[key] = value


def apply_overrides(payload: Dict[str, Any], args: Namespace) -> Dict[str, Any]:
    """Fold command-line flags into the raw config document."""
    payload = json.loads(json.dumps(payload))
    if getattr(args, "s_x", None) is not None:
        _set(payload, "task", "s_x", args.s_x)
        _set(payload, "eval", "defense_s_x", args.s_x)
    if getattr(args, "s_y", None) is not None:
        _set(payload, "task", "s_y", args.s_y)
    if getattr(args, "target_class", None) is not None:
        _set(payload, "task", "target_class", args.target_class)
        _set(payload, "baseline", "target_class", args.target_class)
    if getattr(args, "steps", None) is not None:
        _set(payload, "sampler", "n_steps", args.steps)
    if getattr(args, "weights", None) is not None:
        _set(payload, "task", "weights", args.weights)
    if getattr(args, "baseline_attack", None) is not None:
        _set(payload, "baseline", "attack", args.baseline_attack)
    if getattr(args, "epsilon", None) is not None:
        _set(payload, "baseline", "epsilon", args.epsilon)
    if getattr(args, "eval_attack", None) is not None:
        _set(payload, "eval", "attack", args.eval_attack)
    if getattr(args, "eval_defense", None) is not None:
        _set(payload, "eval", "defense", args.eval_defense)
    if getattr(args, "seed", None) is not None:
        payload["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        payload["out_dir"] = args.out_dir
    return payload


def get_config(args: Namespace) -> RunConfig:
    """
    Effective run configuration for a command.

    Raises:
        ConfigurationError: For a missing or invalid config file
    """
    payload = read_config_file(args.config) if getattr(args, "config", None) else {}
    payload = apply_overrides(payload, args)
    try:
        config = RunConfig.model_validate(payload)
    except ValidationError as e:
        errors = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigurationError(
            f"Invalid run configuration: {'; '.join(errors)}",
            getattr(args, "config", None),
            {"errors": errors},
        )
    logger.debug(f"Effective config: {config.model_dump(mode='json')}")
    return config


def get_splits(config: RunConfig) -> Tuple[Dataset, Dataset]:
    return load_splits(config.data, config.seed)


def checkpoint_path(config: RunConfig, kind: str) -> str:
    if kind == ScoreModel.model_kind:
        return config.score_model.checkpoint or os.path.join(config.out_dir, SCORE_CHECKPOINT)
    return config.classifier.checkpoint or os.path.join(config.out_dir, CLASSIFIER_CHECKPOINT)


def _load(config: RunConfig, kind: str):
    path = checkpoint_path(config, kind)
    model = checkpoint.load(path)
    if model.model_kind != kind:
        raise CheckpointError(f"Expected a {kind} checkpoint, found {model.model_kind}", path)
    return model


def get_score_model(config: RunConfig) -> ScoreModel:
    model = _load(config, ScoreModel.model_kind).use_weights(config.task.weights)
    if model.schedule != config.schedule:
        logger.warning("Checkpoint noise schedule differs from the config; using the checkpoint's")
    return model


def get_classifier(config: RunConfig) -> Classifier:
    return _load(config, Classifier.model_kind)


def get_optional_score_model(config: RunConfig) -> Optional[ScoreModel]:
    needs = config.eval.attack in ("gas", "gat") or config.eval.defense == "gap"
    return get_score_model(config) if needs else None
