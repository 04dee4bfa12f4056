"""
Stable fingerprints of run configurations.

The hash is taken over the canonical JSON form of the effective config
(sorted keys, compact separators) so it changes exactly when a setting does.
"""

import hashlib
import json
from typing import Any, Dict

from pydantic import BaseModel


def canonical_json(payload: Any) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: Any) -> str:
    """
    SHA-256 of the canonical JSON of a config.

    Args:
        config: Pydantic model or JSON-compatible mapping

    Returns:
        Hex digest
    """
    hasher = hashlib.sha256()
    hasher.update(canonical_json(config).encode("utf-8"))
    return hasher.hexdigest()


def effective_config(config: BaseModel) -> Dict[str, Any]:
    """Config with every default filled in, as persisted in manifests."""
    return config.model_dump(mode="json")
