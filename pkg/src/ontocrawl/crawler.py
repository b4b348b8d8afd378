"""Breadth-first concept crawl: existence, listing, verification, insertion.

The frontier is the set of unexplored concepts above the depth cutoff,
visited shallowest-first with discovery order as the tiebreak.  Every listed
candidate is either recognized as an existing concept (rediscovery: a new
edge, no re-verification) or verified and classified into the hierarchy.  A
checkpoint is written after every exploration; an unrecoverable oracle
failure aborts the run resumably.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import insertion
from .errors import CheckpointError, ConfigError, CrawlAbortedError, TransportError
from .hierarchy import ConceptHierarchy, normalize_name
from .llm_backend import CostLedger
from .oracle import KnowledgeOracle, OracleContext, QueryLog
from .verification import verify

logger = logging.getLogger(__name__)

CHECKPOINT_WRAPPER_VERSION = 1


@dataclass
class CrawlConfig:
    """Everything a crawl run needs to be reproduced.

    ``oracle`` is "llm" or "mock:<fixture path>".  ``params`` holds overrides
    for the completion parameters (model, temperature, top_p, max_tokens).
    """

    seed_name: str
    exploration_depth: int | None = None
    ft: int = 20
    n_samples: int = 100
    max_concepts: int | None = None
    oracle: str = "llm"
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not isinstance(self.seed_name, str) or not self.seed_name.strip():
            raise ConfigError("seed_name must be a non-empty string")
        if self.exploration_depth is not None and self.exploration_depth < 1:
            raise ConfigError("exploration_depth must be >= 1 or unbounded (None)")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if not 1 <= self.ft <= self.n_samples:
            raise ConfigError(
                f"ft must lie within [1, n_samples]; got ft={self.ft}, "
                f"n_samples={self.n_samples}"
            )
        if self.max_concepts is not None and self.max_concepts < 1:
            raise ConfigError("max_concepts must be >= 1 or unbounded (None)")
        if self.oracle != "llm" and not self.oracle.startswith("mock:"):
            raise ConfigError(
                f"oracle must be 'llm' or 'mock:<fixture path>', got {self.oracle!r}"
            )

    def to_dict(self) -> dict:
        return {
            "seed_name": self.seed_name,
            "exploration_depth": self.exploration_depth,
            "ft": self.ft,
            "n_samples": self.n_samples,
            "max_concepts": self.max_concepts,
            "oracle": self.oracle,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrawlConfig":
        known = {
            "seed_name",
            "exploration_depth",
            "ft",
            "n_samples",
            "max_concepts",
            "oracle",
            "params",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "seed_name" not in data:
            raise ConfigError("config needs a seed_name")
        cfg = cls(
            seed_name=data["seed_name"],
            exploration_depth=data.get("exploration_depth"),
            ft=data.get("ft", 20),
            n_samples=data.get("n_samples", 100),
            max_concepts=data.get("max_concepts"),
            oracle=data.get("oracle", "llm"),
            params=dict(data.get("params", {})),
        )
        cfg.validate()
        return cfg


@dataclass
class CrawlStats:
    """Final run summary (rendered by the export module)."""

    seed: str
    exploration_depth: int | None
    ft: int
    n_concepts: int
    n_dismissed: int
    n_subsumptions: int
    n_subsumptions_insertion: int
    prompts_per_concept: float
    cost_dollars: float
    concepts_at_or_below_cutoff: int
    concepts_above_cutoff: int
    depth_histogram: dict[int, int]
    outdegree_histogram: dict[int, int]
    max_outdegree: int
    avg_outdegree: float


class Crawler:
    """Drives one crawl; checkpointable after every exploration step."""

    def __init__(
        self,
        config: CrawlConfig,
        oracle: KnowledgeOracle,
        *,
        query_log: QueryLog | None = None,
        ledger: CostLedger | None = None,
        checkpoint_path: str | Path | None = None,
        rejection_path: str | Path | None = None,
    ):
        config.validate()
        self.config = config
        self.oracle = oracle
        self.query_log = query_log
        self.ledger = ledger if ledger is not None else CostLedger()
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.rejection_path = Path(rejection_path) if rejection_path else None
        self.hierarchy = ConceptHierarchy(config.seed_name)
        self.discovered_from: dict[int, str | None] = {self.hierarchy.seed_id: None}
        self.rejections: list[dict] = []
        self.explorations = 0
        self.probes_issued = 0
        self.probe_baseline = 0
        if self.rejection_path is not None:
            self.rejection_path.parent.mkdir(parents=True, exist_ok=True)
            self.rejection_path.write_text("", encoding="utf-8")

    # ------------------------------------------------------------------

    def _at_capacity(self) -> bool:
        cap = self.config.max_concepts
        return cap is not None and len(self.hierarchy) >= cap

    def step(self) -> bool:
        """Explore one frontier concept; False when the crawl is finished."""
        if self._at_capacity():
            return False
        cid = self.hierarchy.next_unexplored(self.config.exploration_depth)
        if cid is None:
            return False
        concept = self.hierarchy.concept(cid)
        c_name = concept.canonical_name
        if self.query_log is not None:
            self.query_log.record(op="explore", concept=c_name, depth=concept.depth)

        explore_ctx = self._context(
            parent_name=self.discovered_from.get(cid),
            names=[self.config.seed_name, self.discovered_from.get(cid), c_name],
        )
        try:
            if self.oracle.has_subconcepts(explore_ctx, c_name):
                candidates = self.oracle.list_subconcepts(
                    explore_ctx, c_name, self.config.ft, self.config.n_samples
                )
                self._process_candidates(cid, c_name, candidates)
        except TransportError:
            self._write_checkpoint()
            raise
        self.hierarchy.mark_explored(cid)
        self.explorations += 1
        self._write_checkpoint()
        return True

    def run(self) -> None:
        """Crawl to completion or abort resumably on an unrecoverable failure."""
        try:
            while self.step():
                pass
        except TransportError as exc:
            path = str(self.checkpoint_path) if self.checkpoint_path else None
            raise CrawlAbortedError(
                f"crawl aborted by oracle failure: {exc}", checkpoint_path=path
            ) from exc

    # ------------------------------------------------------------------

    def _context(
        self, parent_name: str | None, names: list[str | None]
    ) -> OracleContext:
        descriptions: dict[str, str] = {}
        for name in names:
            if not name:
                continue
            cid = self.hierarchy.find_by_name(name)
            if cid is not None:
                desc = self.hierarchy.concept(cid).description
                if desc:
                    descriptions[name] = desc
        return OracleContext(
            seed_name=self.config.seed_name,
            parent_name=parent_name,
            descriptions=descriptions,
        )

    def _process_candidates(
        self, cid: int, c_name: str, candidates: list[str]
    ) -> None:
        # Dedupe by normalized name, keeping the first surface form.
        seen: set[str] = set()
        names: list[str] = []
        for cand in candidates:
            cand = cand.strip()
            key = normalize_name(cand)
            if not key or key in seen:
                continue
            seen.add(key)
            names.append(cand)
        if not names:
            return

        base_ctx = self._context(parent_name=c_name, names=[self.config.seed_name, c_name])
        descriptions = self.oracle.describe(base_ctx, names)

        for cand in names:
            if self._at_capacity():
                return
            existing = self.hierarchy.find_by_name(cand)
            if existing is not None:
                ctx = self._candidate_ctx(base_ctx, cand, descriptions)
                insertion.record_rediscovery(
                    self.hierarchy, self.oracle, ctx, existing, cid
                )
                continue
            ctx = self._candidate_ctx(base_ctx, cand, descriptions)
            verdict = verify(self.oracle, ctx, cand, c_name)
            if not verdict.accepted:
                self._reject(cand, c_name, verdict)
                continue
            final_name = verdict.new_name if verdict.new_name else cand
            existing = self.hierarchy.find_by_name(final_name)
            if existing is not None:
                insertion.record_rediscovery(
                    self.hierarchy, self.oracle, ctx, existing, cid
                )
                continue
            placement = insertion.insert(
                self.hierarchy,
                self.oracle,
                ctx,
                final_name,
                descriptions.get(cand) or None,
                cid,
                query_log=self.query_log,
            )
            self.probes_issued += placement.probes_issued
            self.probe_baseline += placement.probes_issued + placement.probes_saved
            if placement.concept_id is not None:
                self.discovered_from[placement.concept_id] = c_name

    def _candidate_ctx(
        self, base_ctx: OracleContext, cand: str, descriptions: dict[str, str]
    ) -> OracleContext:
        merged = dict(base_ctx.descriptions)
        if descriptions.get(cand):
            merged[cand] = descriptions[cand]
        return OracleContext(
            seed_name=base_ctx.seed_name,
            parent_name=base_ctx.parent_name,
            descriptions=merged,
        )

    def _reject(self, name: str, parent: str, verdict) -> None:
        record = {
            "name": name,
            "parent": parent,
            "reason": verdict.reason,
            "transcript": [[step, answer] for step, answer in verdict.transcript],
        }
        self.rejections.append(record)
        if self.rejection_path is not None:
            with self.rejection_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    # ------------------------------------------------------------------
    # checkpointing

    def to_checkpoint_dict(self) -> dict:
        return {
            "version": CHECKPOINT_WRAPPER_VERSION,
            "config": self.config.to_dict(),
            "hierarchy": self.hierarchy.to_json_dict(),
            "frontier": [
                c.id for c in self.hierarchy.concepts() if not c.explored
            ],
            "discovered_from": {
                str(k): v for k, v in self.discovered_from.items()
            },
            "edge_origins": [
                [child, parent, self.hierarchy.edge_origin(child, parent)]
                for child, parent in self.hierarchy.direct_edges()
            ],
            "ledger": self.ledger.to_dict(),
            "counters": {
                "explorations": self.explorations,
                "rejections": len(self.rejections),
                "probes_issued": self.probes_issued,
                "probe_baseline": self.probe_baseline,
            },
            "rejections": self.rejections,
        }

    def _write_checkpoint(self) -> None:
        if self.checkpoint_path is not None:
            save_checkpoint(self.to_checkpoint_dict(), self.checkpoint_path)

    @classmethod
    def from_checkpoint(
        cls,
        data: dict,
        oracle: KnowledgeOracle,
        *,
        query_log: QueryLog | None = None,
        checkpoint_path: str | Path | None = None,
        rejection_path: str | Path | None = None,
    ) -> "Crawler":
        if not isinstance(data, dict) or data.get("version") != CHECKPOINT_WRAPPER_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {data.get('version')!r}"
                if isinstance(data, dict)
                else "checkpoint must be a JSON object"
            )
        try:
            config = CrawlConfig.from_dict(data["config"])
        except ConfigError as exc:
            raise CheckpointError(f"checkpoint config invalid: {exc}") from exc
        crawler = cls(
            config,
            oracle,
            query_log=query_log,
            ledger=CostLedger.from_dict(data.get("ledger", {})),
            checkpoint_path=checkpoint_path,
            rejection_path=rejection_path,
        )
        crawler.hierarchy = ConceptHierarchy.from_json_dict(data["hierarchy"])
        stored_frontier = set(data.get("frontier", []))
        actual_frontier = {
            c.id for c in crawler.hierarchy.concepts() if not c.explored
        }
        if stored_frontier != actual_frontier:
            raise CheckpointError("frontier disagrees with explored flags")
        crawler.discovered_from = {
            int(k): v for k, v in data.get("discovered_from", {}).items()
        }
        current_edges = set(crawler.hierarchy.direct_edges())
        for child, parent, origin in data.get("edge_origins", []):
            if (child, parent) in current_edges:
                crawler.hierarchy.set_edge_origin(child, parent, origin)
        counters = data.get("counters", {})
        crawler.explorations = int(counters.get("explorations", 0))
        crawler.probes_issued = int(counters.get("probes_issued", 0))
        crawler.probe_baseline = int(counters.get("probe_baseline", 0))
        crawler.rejections = list(data.get("rejections", []))
        return crawler


def save_checkpoint(data: dict, path: str | Path) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, ensure_ascii=False)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
