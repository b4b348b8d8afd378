"""Concept hierarchy: a rooted DAG of subsumptions with synonym classes.

The persistent representation is the transitive reduction (direct edges,
child -> parent).  The reflexive-transitive closure is derived state, kept
incrementally up to date on every edge addition so that subsumption queries
are O(1) set lookups.  Depth is the shortest edge distance from the seed in
the reduction.  One concept may carry several names (a canonical name plus
synonyms); name lookups are whitespace- and case-insensitive.

Not thread safe: one writer at a time, readers must not overlap mutations.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import (
    CheckpointError,
    CycleError,
    IntegrityError,
    InvalidInputError,
    NotFoundError,
)

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def normalize_name(name: str) -> str:
    """Collapse whitespace runs and case-fold; the key used for name equality."""
    return " ".join(name.split()).casefold()


@dataclass
class Concept:
    """One node of the hierarchy.  ``canonical_name`` keeps its original casing."""

    id: int
    canonical_name: str
    synonym_names: set[str] = field(default_factory=set)
    description: str | None = None
    explored: bool = False
    depth: int = 0

    def all_names(self) -> list[str]:
        return [self.canonical_name, *sorted(self.synonym_names)]


class ConceptHierarchy:
    """Rooted DAG of concepts ordered by subsumption (child below parent)."""

    def __init__(self, seed_name: str):
        if not isinstance(seed_name, str) or not seed_name.strip():
            raise InvalidInputError("seed name must be a non-empty string")
        self._concepts: dict[int, Concept] = {}
        self._parents: dict[int, set[int]] = {}
        self._children: dict[int, set[int]] = {}
        # Strict closure sets: _up[c] = all d != c with c below d.
        self._up: dict[int, set[int]] = {}
        self._down: dict[int, set[int]] = {}
        self._edge_origin: dict[tuple[int, int], str | None] = {}
        self._names: dict[str, int] = {}
        self._next_id = 0
        self.seed_id = self._register(seed_name, description=None)

    # ------------------------------------------------------------------
    # basic access

    def __len__(self) -> int:
        return len(self._concepts)

    def __contains__(self, cid: int) -> bool:
        return cid in self._concepts

    def ids(self) -> list[int]:
        return sorted(self._concepts)

    def concepts(self) -> Iterator[Concept]:
        for cid in sorted(self._concepts):
            yield self._concepts[cid]

    def concept(self, cid: int) -> Concept:
        self._require(cid)
        return self._concepts[cid]

    def find_by_name(self, name: str) -> int | None:
        return self._names.get(normalize_name(name))

    def direct_parents(self, cid: int) -> set[int]:
        self._require(cid)
        return set(self._parents[cid])

    def direct_children(self, cid: int) -> set[int]:
        self._require(cid)
        return set(self._children[cid])

    def ancestors(self, cid: int) -> set[int]:
        """All strict superconcepts in the closure."""
        self._require(cid)
        return set(self._up[cid])

    def descendants(self, cid: int) -> set[int]:
        """All strict subconcepts in the closure."""
        self._require(cid)
        return set(self._down[cid])

    def direct_edges(self) -> list[tuple[int, int]]:
        """All reduction edges as (child, parent), sorted."""
        return sorted(self._edge_origin)

    def edge_origin(self, child: int, parent: int) -> str | None:
        return self._edge_origin.get((child, parent))

    def set_edge_origin(self, child: int, parent: int, origin: str | None) -> None:
        if (child, parent) not in self._edge_origin:
            raise NotFoundError(f"no direct edge {(child, parent)}")
        self._edge_origin[(child, parent)] = origin

    def is_subsumed(self, c: int, d: int) -> bool:
        """Reflexive closure query: is c at or below d?"""
        self._require(c)
        self._require(d)
        return c == d or d in self._up[c]

    def depth_of(self, cid: int) -> int:
        self._require(cid)
        return self._concepts[cid].depth

    # ------------------------------------------------------------------
    # mutation

    def add_concept(
        self,
        name: str,
        parents: Iterable[int],
        *,
        description: str | None = None,
        origin: str | None = None,
    ) -> int:
        """Create a concept attached below every id in ``parents`` (at least one)."""
        parents = list(parents)
        if not parents:
            raise InvalidInputError("a new concept needs at least one parent")
        for p in parents:
            self._require(p)
        cid = self._register(name, description)
        try:
            for p in parents:
                self.add_subsumption(cid, p, origin=origin)
        except CycleError:
            # A fresh node cannot close a cycle through parent edges alone.
            self._unregister(cid)
            raise
        return cid

    def add_synonym_name(self, cid: int, name: str) -> None:
        """Attach an extra surface name to an existing concept."""
        self._require(cid)
        key = self._check_new_name(name)
        self._concepts[cid].synonym_names.add(name.strip())
        self._names[key] = cid

    def add_subsumption(self, child: int, parent: int, *, origin: str | None = None) -> bool:
        """Assert child below parent.

        Returns True when the reduction changed, False when the edge was already
        implied by the closure (absorbed).  Raises CycleError (with the offending
        path) when the opposite relation already holds.
        """
        self._require(child)
        self._require(parent)
        if child == parent:
            raise CycleError(
                f"self-subsumption of {self._concepts[child].canonical_name!r}",
                path=[child, child],
            )
        if child in self._up[parent]:
            path = self._reduction_path(parent, child)
            names = " < ".join(self._concepts[i].canonical_name for i in path)
            raise CycleError(f"edge would close a cycle: {names}", path=path)
        if parent in self._up[child]:
            return False

        self._parents[child].add(parent)
        self._children[parent].add(child)
        self._edge_origin[(child, parent)] = origin

        gained_up = {parent} | self._up[parent]
        for x in (child, *self._down[child]):
            self._up[x] |= gained_up
        gained_down = {child} | self._down[child]
        for y in (parent, *self._up[parent]):
            self._down[y] |= gained_down

        # The new edge may make previously direct edges redundant; only edges
        # from the child's cone up into the parent's cone can be affected.
        low = {child} | self._down[child]
        high = {parent} | self._up[parent]
        for u, v in sorted(self._edge_origin):
            if (u, v) == (child, parent) or u not in low or v not in high:
                continue
            if self._reachable_without(u, v):
                self._drop_edge(u, v)
        self._recompute_depths()
        return True

    def merge_synonyms(self, a: int, b: int) -> int:
        """Collapse two concepts that denote the same thing.

        The earlier-discovered id survives; names, descriptions and edges are
        unioned, the reduction re-minimized, depths recomputed.  Raises
        CycleError when the union would create a cycle among the remaining
        concepts (the pair is then not a pure synonym).
        """
        self._require(a)
        self._require(b)
        if a == b:
            raise InvalidInputError("cannot merge a concept with itself")
        survivor, loser = (a, b) if a < b else (b, a)

        merged_edges: dict[tuple[int, int], str | None] = {}
        for (u, v), org in self._edge_origin.items():
            u2 = survivor if u == loser else u
            v2 = survivor if v == loser else v
            if u2 == v2:
                continue
            if (u2, v2) in merged_edges and merged_edges[(u2, v2)] is not None:
                continue
            merged_edges[(u2, v2)] = org

        cycle = self._find_cycle(set(self._concepts) - {loser}, merged_edges)
        if cycle is not None:
            names = " < ".join(self._concepts[i].canonical_name for i in cycle)
            raise CycleError(f"merge would close a cycle: {names}", path=cycle)

        s, l = self._concepts[survivor], self._concepts[loser]
        s.synonym_names |= {l.canonical_name} | l.synonym_names
        s.description = s.description or l.description
        s.explored = s.explored or l.explored
        for key, cid in list(self._names.items()):
            if cid == loser:
                self._names[key] = survivor
        del self._concepts[loser]

        self._rebuild_from_edges(merged_edges)
        return survivor

    def mark_explored(self, cid: int) -> None:
        self._require(cid)
        self._concepts[cid].explored = True

    def next_unexplored(self, exploration_depth: int | None = None) -> int | None:
        """Breadth-first frontier choice: shallowest unexplored concept strictly
        above the cutoff, ties broken by discovery order."""
        best: tuple[int, int] | None = None
        for cid, c in self._concepts.items():
            if c.explored:
                continue
            if exploration_depth is not None and c.depth >= exploration_depth:
                continue
            key = (c.depth, cid)
            if best is None or key < best:
                best = key
        return None if best is None else best[1]

    # ------------------------------------------------------------------
    # serialization

    def to_json_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "seed": self.seed_id,
            "concepts": [
                {
                    "id": c.id,
                    "canonical_name": c.canonical_name,
                    "synonyms": sorted(c.synonym_names),
                    "description": c.description,
                    "explored": c.explored,
                    "depth": c.depth,
                }
                for c in self.concepts()
            ],
            "direct_edges": [list(e) for e in self.direct_edges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ConceptHierarchy":
        if not isinstance(data, dict):
            raise CheckpointError("hierarchy document must be a JSON object")
        if data.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported hierarchy version {data.get('version')!r}"
            )
        try:
            concepts = data["concepts"]
            edges = data["direct_edges"]
            seed = data["seed"]
        except KeyError as exc:
            raise CheckpointError(f"hierarchy document missing field {exc}") from None
        if not concepts:
            raise CheckpointError("hierarchy document has no concepts")

        by_id = sorted(concepts, key=lambda c: c["id"])
        if by_id[0]["id"] != seed:
            raise CheckpointError("seed must be the earliest concept")
        h = cls(by_id[0]["canonical_name"])
        h.seed_id = seed
        h._concepts.clear()
        h._parents.clear()
        h._children.clear()
        h._up.clear()
        h._down.clear()
        h._names.clear()
        for rec in by_id:
            cid = rec["id"]
            concept = Concept(
                id=cid,
                canonical_name=rec["canonical_name"],
                synonym_names=set(rec.get("synonyms", [])),
                description=rec.get("description"),
                explored=bool(rec.get("explored", False)),
                depth=int(rec.get("depth", 0)),
            )
            h._concepts[cid] = concept
            h._parents[cid] = set()
            h._children[cid] = set()
            h._up[cid] = set()
            h._down[cid] = set()
            for name in concept.all_names():
                key = normalize_name(name)
                if not key or key in h._names:
                    raise CheckpointError(f"duplicate or empty name {name!r}")
                h._names[key] = cid
        h._next_id = by_id[-1]["id"] + 1
        edge_map: dict[tuple[int, int], str | None] = {}
        for pair in edges:
            child, parent = int(pair[0]), int(pair[1])
            if child not in h._concepts or parent not in h._concepts:
                raise CheckpointError(f"edge {pair} references unknown concept")
            edge_map[(child, parent)] = None
        try:
            h._rebuild_from_edges(edge_map, reduce=False)
        except (CycleError, IntegrityError) as exc:
            raise CheckpointError(f"hierarchy document is not a valid DAG: {exc}") from exc
        stored_depths = {rec["id"]: rec["depth"] for rec in by_id}
        for cid, c in h._concepts.items():
            if c.depth != stored_depths[cid]:
                raise CheckpointError(
                    f"stored depth of concept {cid} disagrees with the edges"
                )
        h.verify_integrity()
        return h

    @classmethod
    def from_json(cls, text: str) -> "ConceptHierarchy":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"hierarchy document is not valid JSON: {exc}") from exc
        return cls.from_json_dict(data)

    # ------------------------------------------------------------------
    # integrity (debug/verify path: full recomputation, compared to live state)

    def verify_integrity(self) -> None:
        up, down = self._closure_by_bfs(self._edge_adjacency())
        if up != self._up or down != self._down:
            raise IntegrityError("incremental closure disagrees with BFS recomputation")
        for cid in self._concepts:
            if cid in self._up[cid]:
                raise IntegrityError("closure contains a cycle")
        for u, v in self._edge_origin:
            if self._reachable_without(u, v):
                raise IntegrityError(f"direct edge {(u, v)} is implied by other edges")
        depths = self._depths_by_bfs()
        for cid, c in self._concepts.items():
            if depths.get(cid) != c.depth:
                raise IntegrityError(f"stored depth of {cid} is stale")
        for key, cid in self._names.items():
            names = {normalize_name(n) for n in self._concepts[cid].all_names()}
            if key not in names:
                raise IntegrityError("name index points at a concept lacking the name")

    # ------------------------------------------------------------------
    # internals

    def _register(self, name: str, description: str | None) -> int:
        key = self._check_new_name(name)
        cid = self._next_id
        self._next_id += 1
        self._concepts[cid] = Concept(
            id=cid, canonical_name=name.strip(), description=description
        )
        self._parents[cid] = set()
        self._children[cid] = set()
        self._up[cid] = set()
        self._down[cid] = set()
        self._names[key] = cid
        return cid

    def _unregister(self, cid: int) -> None:
        for key in [k for k, v in self._names.items() if v == cid]:
            del self._names[key]
        for p in self._parents[cid]:
            self._children[p].discard(cid)
            self._edge_origin.pop((cid, p), None)
        del self._concepts[cid], self._parents[cid], self._children[cid]
        del self._up[cid], self._down[cid]

    def _check_new_name(self, name: str) -> str:
        if not isinstance(name, str) or not name.strip():
            raise InvalidInputError("concept name must be a non-empty string")
        key = normalize_name(name)
        if key in self._names:
            raise InvalidInputError(f"name {name!r} already present")
        return key

    def _require(self, cid: int) -> None:
        if cid not in self._concepts:
            raise NotFoundError(f"no concept with id {cid!r}")

    def _edge_adjacency(self) -> dict[int, set[int]]:
        return {cid: set(self._parents[cid]) for cid in self._concepts}

    def _reachable_without(self, u: int, v: int) -> bool:
        """Is v reachable upward from u without using the direct edge (u, v)?"""
        seen = {u}
        queue = deque([u])
        while queue:
            x = queue.popleft()
            for p in self._parents[x]:
                if x == u and p == v:
                    continue
                if p == v:
                    return True
                if p not in seen:
                    seen.add(p)
                    queue.append(p)
        return False

    def _reduction_path(self, src: int, dst: int) -> list[int]:
        """Shortest upward path src -> dst over direct edges (both inclusive)."""
        prev: dict[int, int] = {src: src}
        queue = deque([src])
        while queue:
            x = queue.popleft()
            if x == dst:
                break
            for p in self._parents[x]:
                if p not in prev:
                    prev[p] = x
                    queue.append(p)
        if dst not in prev:
            raise IntegrityError("expected path missing from reduction")
        path = [dst]
        while path[-1] != src:
            path.append(prev[path[-1]])
        return list(reversed(path))

    def _drop_edge(self, u: int, v: int) -> None:
        self._parents[u].discard(v)
        self._children[v].discard(u)
        self._edge_origin.pop((u, v), None)

    def _closure_by_bfs(
        self, parents: dict[int, set[int]]
    ) -> tuple[dict[int, set[int]], dict[int, set[int]]]:
        up: dict[int, set[int]] = {}
        for cid in parents:
            seen: set[int] = set()
            queue = deque(parents[cid])
            while queue:
                x = queue.popleft()
                if x in seen:
                    continue
                seen.add(x)
                queue.extend(parents[x])
            up[cid] = seen
        down: dict[int, set[int]] = {cid: set() for cid in parents}
        for cid, anc in up.items():
            for a in anc:
                down[a].add(cid)
        return up, down

    def _depths_by_bfs(self) -> dict[int, int]:
        depths = {self.seed_id: 0}
        queue = deque([self.seed_id])
        while queue:
            x = queue.popleft()
            for ch in self._children[x]:
                if ch not in depths:
                    depths[ch] = depths[x] + 1
                    queue.append(ch)
        return depths

    def _recompute_depths(self) -> None:
        depths = self._depths_by_bfs()
        if len(depths) != len(self._concepts):
            missing = set(self._concepts) - set(depths)
            raise IntegrityError(f"concepts unreachable from the seed: {sorted(missing)}")
        for cid, d in depths.items():
            self._concepts[cid].depth = d

    def _find_cycle(
        self, nodes: set[int], edges: dict[tuple[int, int], str | None]
    ) -> list[int] | None:
        """Kahn's algorithm; on failure returns one cycle as an id path."""
        out: dict[int, set[int]] = {n: set() for n in nodes}
        indeg: dict[int, int] = {n: 0 for n in nodes}
        for child, parent in edges:
            out[child].add(parent)
            indeg[parent] += 1
        queue = deque(n for n in nodes if indeg[n] == 0)
        seen = 0
        while queue:
            x = queue.popleft()
            seen += 1
            for y in out[x]:
                indeg[y] -= 1
                if indeg[y] == 0:
                    queue.append(y)
        if seen == len(nodes):
            return None
        remaining = {n for n in nodes if indeg[n] > 0}
        # Kahn leaves behind both the cycle and everything downstream of it;
        # peel nodes without a successor in the set so every walk can go on.
        changed = True
        while changed:
            changed = False
            for n in list(remaining):
                if not (out[n] & remaining):
                    remaining.discard(n)
                    changed = True
        start = min(remaining)
        path, cur = [start], start
        while True:
            cur = min(out[cur] & remaining)
            if cur in path:
                return path[path.index(cur):] + [cur]
            path.append(cur)

    def _rebuild_from_edges(
        self, edges: dict[tuple[int, int], str | None], *, reduce: bool = True
    ) -> None:
        """Replace adjacency with ``edges``, recompute closure/depths, re-minimize."""
        for cid in self._concepts:
            self._parents[cid] = set()
            self._children[cid] = set()
        self._edge_origin = dict(edges)
        for child, parent in edges:
            self._parents[child].add(parent)
            self._children[parent].add(child)
        cycle = self._find_cycle(set(self._concepts), self._edge_origin)
        if cycle is not None:
            names = " < ".join(self._concepts[i].canonical_name for i in cycle)
            raise CycleError(f"edge set contains a cycle: {names}", path=cycle)
        self._up, self._down = self._closure_by_bfs(self._edge_adjacency())
        if reduce:
            for u, v in sorted(self._edge_origin):
                if self._reachable_without(u, v):
                    self._drop_edge(u, v)
        elif any(self._reachable_without(u, v) for u, v in sorted(self._edge_origin)):
            raise IntegrityError("stored direct edges are not a transitive reduction")
        self._recompute_depths()
