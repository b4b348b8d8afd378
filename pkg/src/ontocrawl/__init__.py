"""ontocrawl: concept hierarchies crawled out of a knowledge oracle."""

from .crawler import Crawler, CrawlConfig, CrawlStats
from .hierarchy import Concept, ConceptHierarchy, normalize_name
from .insertion import Placement, insert, record_rediscovery
from .llm_backend import (
    ChatCompletionOracle,
    CompletionParams,
    CostLedger,
    ResponseCache,
)
from .oracle import (
    GroundTruthTaxonomy,
    KnowledgeOracle,
    MockOracle,
    NoiseModel,
    OracleContext,
    QueryLog,
)
from .verification import Verdict, verify

__version__ = "0.1.0"

__all__ = [
    "Concept",
    "ConceptHierarchy",
    "normalize_name",
    "KnowledgeOracle",
    "OracleContext",
    "QueryLog",
    "GroundTruthTaxonomy",
    "NoiseModel",
    "MockOracle",
    "ChatCompletionOracle",
    "CompletionParams",
    "CostLedger",
    "ResponseCache",
    "Verdict",
    "verify",
    "Placement",
    "insert",
    "record_rediscovery",
    "Crawler",
    "CrawlConfig",
    "CrawlStats",
    "__version__",
]
