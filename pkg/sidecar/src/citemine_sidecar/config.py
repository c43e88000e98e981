"""Configuration for the sidecar service and the fine-tuning script."""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_EMBED_MODEL = "NeuML/pubmedbert-base-embeddings"
DEFAULT_QUERY_MODEL = "doc2query/all-t5-base-v1"


@dataclass(frozen=True)
class SidecarConfig:
    embed_model_id: str = DEFAULT_EMBED_MODEL
    query_model_id: str = DEFAULT_QUERY_MODEL
    port: int = 8099
    batch_size: int = 32

    def __post_init__(self):
        if not 1024 <= self.port <= 65535:
            raise ValueError("port must be in [1024, 65535]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    base_model_id: str = "builtin:bow:64"
    steps: int = 20
    batch_size: int = 16
    output_dir: str = "checkpoints"
    lr: float = 2e-5
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
