"""Model sidecar for the citemine pipeline.

Serves /embed and /generate_query over HTTP and ships a contrastive
fine-tuning script for the mined triplet files. Builtin model ids
(builtin:hash:*, builtin:bow:*, builtin:rule) run CPU-only with no
downloads so every contract is exercisable in CI.
"""

__version__ = "0.1.0"

from .config import SidecarConfig, TrainConfig
from .service import create_app
from .train import finetune

__all__ = ["SidecarConfig", "TrainConfig", "create_app", "finetune", "__version__"]
