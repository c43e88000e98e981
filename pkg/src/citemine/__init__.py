"""Citation-aware hard-negative mining for biomedical dense retrieval.

Pipeline stages: crawl 2-hop citation neighborhoods from PubMed, embed the
candidate pools, mine hard negatives by diverse stochastic traversal of
the pairwise cosine graph, and emit contrastive training triplets.
Companion tooling: TREC-style ranking metrics, a contrastive-loss
diagnostic, and an exact flat inner-product index with a latency
benchmark harness.
"""

__version__ = "0.1.0"

from .errors import CiteMineError
from .mining import MiningConfig, TrainingTriplet, emit_triplets, mine_hard_negatives
from .neighborhood import CitationRecord, NeighborhoodConfig, Rejected, build_neighborhood
from .pubmed import FetchPolicy, PubmedClient
from .vectorspace import Embedding, SimilarityGraph, build_similarity_graph, normalize

__all__ = [
    "CiteMineError",
    "CitationRecord",
    "Embedding",
    "FetchPolicy",
    "MiningConfig",
    "NeighborhoodConfig",
    "PubmedClient",
    "Rejected",
    "SimilarityGraph",
    "TrainingTriplet",
    "build_neighborhood",
    "build_similarity_graph",
    "emit_triplets",
    "mine_hard_negatives",
    "normalize",
    "__version__",
]
