"""Placement of a verified concept into the hierarchy by enhanced traversal.

The top search walks downward from the seed to find the most specific
existing concepts subsuming the new one; a concept is only probed when all of
its direct parents already tested positive, so one failed test prunes the
whole cone below it.  The discovering edge and everything above it come for
free (imposed transitivity) and are never re-verified.  The bottom search is
symmetric and runs only inside the region below all found parents.  A concept
appearing on both sides is a synonym candidate and is resolved by an
interchangeability question, falling back to a direction question.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import CycleError, OracleParseError
from .hierarchy import ConceptHierarchy, normalize_name
from .oracle import KnowledgeOracle, OracleContext, QueryLog

logger = logging.getLogger(__name__)

ORIGIN_LISTING = "listing"
ORIGIN_INSERTION = "insertion"


@dataclass
class Placement:
    """Result of inserting (or absorbing) one concept."""

    concept_id: int | None = None
    parents: set[int] = field(default_factory=set)
    children: set[int] = field(default_factory=set)
    synonym_of: int | None = None
    probes_issued: int = 0
    probes_saved: int = 0
    dropped_edges: list[tuple[str, str]] = field(default_factory=list)


class _ProbeSession:
    """Counts probes and injects the probed concept's description per query."""

    def __init__(
        self,
        h: ConceptHierarchy,
        oracle: KnowledgeOracle,
        ctx: OracleContext,
        name: str,
        query_log: QueryLog | None,
    ):
        self.h = h
        self.oracle = oracle
        self.ctx = ctx
        self.name = name
        self.query_log = query_log
        self.issued = 0

    def _ctx_for(self, other: str) -> OracleContext:
        concept_id = self.h.find_by_name(other)
        desc = None
        if concept_id is not None:
            desc = self.h.concept(concept_id).description
        if not desc:
            return self.ctx
        merged = {**dict(self.ctx.descriptions), other: desc}
        return OracleContext(
            seed_name=self.ctx.seed_name,
            parent_name=self.ctx.parent_name,
            descriptions=merged,
        )

    def probe_up(self, cid: int) -> bool:
        """Does the existing concept ``cid`` subsume the new one?"""
        other = self.h.concept(cid).canonical_name
        self.issued += 1
        return self.oracle.is_subcategory_of(self._ctx_for(other), self.name, other)

    def probe_down(self, cid: int) -> bool:
        """Is the existing concept ``cid`` below the new one?"""
        other = self.h.concept(cid).canonical_name
        self.issued += 1
        return self.oracle.is_subcategory_of(self._ctx_for(other), other, self.name)


def _decide_wave(
    h: ConceptHierarchy,
    targets: set[int],
    status: dict[int, bool],
    probe,
    neighbors_up,
) -> int:
    """Decide membership for ``targets`` (and any nodes they depend on).

    ``neighbors_up`` maps a node to the nodes whose positivity it requires
    (parents for the top search, children for the bottom search); a negative
    neighbor settles the node without a probe.  Probes for nodes that become
    ready simultaneously are issued in id order.  Returns probes skipped.
    """
    saved = 0
    pending = {t for t in targets if t not in status}
    while pending:
        # A node's verdict may hinge on neighbors nobody has looked at yet.
        stack = list(pending)
        while stack:
            x = stack.pop()
            for n in neighbors_up(x):
                if n not in status and n not in pending:
                    pending.add(n)
                    stack.append(n)
        autos = [
            x
            for x in sorted(pending)
            if any(status.get(n) is False for n in neighbors_up(x))
        ]
        if autos:
            for x in autos:
                status[x] = False
                saved += 1
                pending.discard(x)
            continue
        ready = [
            x
            for x in sorted(pending)
            if all(status.get(n) is True for n in neighbors_up(x))
        ]
        if not ready:
            raise AssertionError("traversal stalled; dependency graph is cyclic")
        for x in ready:
            status[x] = probe(x)
            pending.discard(x)
    return saved


def top_search(
    h: ConceptHierarchy,
    session: _ProbeSession,
    entry: int,
) -> tuple[set[int], int]:
    """Most specific existing concepts subsuming the new one, plus probes saved.

    The seed, the discovering concept and all of its superconcepts are taken
    as subsumers without a query.
    """
    status: dict[int, bool] = {h.seed_id: True, entry: True}
    for a in h.ancestors(entry):
        status[a] = True
    saved = len(status)  # granted positives are skipped tests

    def parents_of(x: int) -> set[int]:
        return h.direct_parents(x)

    expanded: set[int] = set()
    while True:
        frontier = sorted(
            x for x, pos in status.items() if pos and x not in expanded
        )
        if not frontier:
            break
        for d in frontier:
            expanded.add(d)
            kids = h.direct_children(d)
            saved += _decide_wave(h, kids, status, session.probe_up, parents_of)

    positives = {x for x, pos in status.items() if pos}
    minimal = {
        x
        for x in positives
        if not any(status.get(k) is True for k in h.direct_children(x))
    }
    return minimal, saved


def bottom_search(
    h: ConceptHierarchy,
    session: _ProbeSession,
    parents: set[int],
) -> tuple[set[int], int]:
    """Most general existing concepts below the new one.

    Candidates are confined to the reflexive descendants of every found
    parent (anything else would contradict an accepted superconcept); the
    seed is never a candidate.  A concept is probed only once all of its
    direct children tested positive, mirroring the top search.
    """
    region: set[int] | None = None
    for p in parents:
        cone = h.descendants(p) | {p}
        region = cone if region is None else (region & cone)
    region = (region or set()) - {h.seed_id}
    if not region:
        return set(), 0

    status: dict[int, bool] = {}
    for cid in h.ids():
        if cid not in region:
            status[cid] = False

    def children_of(x: int) -> set[int]:
        return h.direct_children(x)

    saved = _decide_wave(h, set(region), status, session.probe_down, children_of)

    positives = {x for x in region if status.get(x) is True}
    maximal = {
        x
        for x in positives
        if not any(status.get(p) is True for p in h.direct_parents(x))
    }
    return maximal, saved


def insert(
    h: ConceptHierarchy,
    oracle: KnowledgeOracle,
    ctx: OracleContext,
    name: str,
    description: str | None,
    entry: int,
    *,
    query_log: QueryLog | None = None,
) -> Placement:
    """Classify ``name`` against the hierarchy and wire it in.

    ``entry`` is the concept whose listing produced the name; the edge to it
    is trusted.  Returns the placement, including probe accounting
    (``probes_saved`` is measured against the brute-force classifier that
    asks both directions for every existing concept).
    """
    pre_n = len(h)
    session = _ProbeSession(h, oracle, ctx, name, query_log)

    if query_log is not None:
        with query_log.tagged(phase="top"):
            parents, _ = top_search(h, session, entry)
    else:
        parents, _ = top_search(h, session, entry)
    if query_log is not None:
        with query_log.tagged(phase="bottom"):
            children, _ = bottom_search(h, session, parents)
    else:
        children, _ = bottom_search(h, session, parents)

    placement = Placement(probes_issued=session.issued)

    for d in sorted(parents & children):
        d_name = h.concept(d).canonical_name
        if oracle.interchangeable(ctx, name, d_name):
            return _absorb(h, placement, name, description, d, parents, children, pre_n, session)
        try:
            sub, _sup = oracle.subcategory_direction(ctx, name, d_name)
        except OracleParseError:
            logger.warning(
                "direction between %r and %r unparseable; keeping the "
                "top-search edge",
                name,
                d_name,
            )
            children.discard(d)
            placement.dropped_edges.append((d_name, name))
            continue
        if normalize_name(sub) == normalize_name(d_name):
            parents.discard(d)
            placement.dropped_edges.append((name, d_name))
        else:
            children.discard(d)
            placement.dropped_edges.append((d_name, name))

    if not parents:
        # Pathological oracle answers removed every superconcept; the
        # discovering edge is the one assertion we never give up.
        parents = {entry}

    ordered = sorted(parents)
    first = entry if entry in parents else ordered[0]
    first_origin = ORIGIN_LISTING if first == entry else ORIGIN_INSERTION
    cid = h.add_concept(name, [first], description=description, origin=first_origin)
    for p in ordered:
        if p != first:
            h.add_subsumption(cid, p, origin=ORIGIN_INSERTION)
    for e in sorted(children):
        try:
            h.add_subsumption(e, cid, origin=ORIGIN_INSERTION)
        except CycleError as exc:
            child_name = h.concept(e).canonical_name
            logger.error(
                "dropping contradictory edge %r below %r: %s", child_name, name, exc
            )
            placement.dropped_edges.append((child_name, name))

    placement.concept_id = cid
    placement.parents = set(parents)
    placement.children = set(h.direct_children(cid))
    placement.probes_saved = 2 * pre_n - session.issued
    return placement


def _absorb(
    h: ConceptHierarchy,
    placement: Placement,
    name: str,
    description: str | None,
    target: int,
    parents: set[int],
    children: set[int],
    pre_n: int,
    session: _ProbeSession,
) -> Placement:
    """The new name denotes an existing concept: merge names, keep new edges."""
    if h.find_by_name(name) != target:
        h.add_synonym_name(target, name)
    concept = h.concept(target)
    if description and not concept.description:
        concept.description = description
    for p in sorted(parents - {target}):
        try:
            h.add_subsumption(target, p, origin=ORIGIN_INSERTION)
        except CycleError as exc:
            logger.error("dropping contradictory synonym edge: %s", exc)
            placement.dropped_edges.append(
                (concept.canonical_name, h.concept(p).canonical_name)
            )
    for e in sorted(children - {target}):
        try:
            h.add_subsumption(e, target, origin=ORIGIN_INSERTION)
        except CycleError as exc:
            logger.error("dropping contradictory synonym edge: %s", exc)
            placement.dropped_edges.append(
                (h.concept(e).canonical_name, concept.canonical_name)
            )
    placement.synonym_of = target
    placement.probes_issued = session.issued
    placement.probes_saved = 2 * pre_n - session.issued
    return placement


def record_rediscovery(
    h: ConceptHierarchy,
    oracle: KnowledgeOracle,
    ctx: OracleContext,
    existing: int,
    entry: int,
) -> str:
    """A listing returned a name that already exists: assert existing <= entry.

    Returns one of "self", "edge_added", "implied", "merged", "dropped".
    Cycles escalate to synonym resolution; a refused merge keeps the earlier
    relation and drops the new edge.
    """
    if existing == entry:
        return "self"
    try:
        changed = h.add_subsumption(existing, entry, origin=ORIGIN_LISTING)
        return "edge_added" if changed else "implied"
    except CycleError:
        e_name = h.concept(existing).canonical_name
        n_name = h.concept(entry).canonical_name
        if oracle.interchangeable(ctx, e_name, n_name):
            try:
                h.merge_synonyms(existing, entry)
                return "merged"
            except CycleError as exc:
                logger.error(
                    "synonym merge of %r and %r impossible: %s", e_name, n_name, exc
                )
                return "dropped"
        logger.warning(
            "dropping rediscovered edge %r under %r: contradicts existing order",
            e_name,
            n_name,
        )
        return "dropped"
