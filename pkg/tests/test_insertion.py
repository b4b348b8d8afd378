"""Enhanced-traversal placement: probe pruning, synonyms, rediscoveries."""

from __future__ import annotations

import pytest

from ontocrawl import (
    ConceptHierarchy,
    GroundTruthTaxonomy,
    MockOracle,
    OracleContext,
    QueryLog,
    insert,
    record_rediscovery,
)
from ontocrawl.errors import OracleParseError
from ontocrawl.insertion import ORIGIN_INSERTION, ORIGIN_LISTING
from support import edge_names, hierarchy_from_taxonomy

FARM = GroundTruthTaxonomy.from_json_dict(
    {
        "root": "Livestock",
        "edges": [
            ["Goats", "Livestock"],
            ["Cattle", "Livestock"],
            ["Dairy Goats", "Goats"],
            ["Milk Goats", "Goats"],
        ],
        "synonyms": [["Milk Goats", "Dairy Goats"]],
    }
)


def probe_pairs(log: QueryLog, phase: str) -> list[tuple[str, str]]:
    return [
        (rec["d"], rec["c"])
        for rec in log.records
        if rec["op"] == "is_subcategory_of" and rec.get("phase") == phase
    ]


def mk(taxonomy):
    log = QueryLog()
    oracle = MockOracle(taxonomy, query_log=log)
    ctx = OracleContext(seed_name=taxonomy.root)
    return oracle, ctx, log


def test_first_insert_into_a_bare_seed_needs_no_probes(goats):
    h = ConceptHierarchy("Goats")
    oracle, ctx, log = mk(goats)
    placement = insert(
        h, oracle, ctx, "Dairy Goats", "Kept for milk.", h.seed_id, query_log=log
    )
    assert placement.parents == {h.seed_id}
    assert placement.children == set()
    assert placement.probes_issued == 0
    assert placement.probes_saved == 2  # both directions against the seed
    assert h.edge_origin(placement.concept_id, h.seed_id) == ORIGIN_LISTING
    assert h.concept(placement.concept_id).description == "Kept for milk."


def test_insertion_rewires_an_existing_child_below_the_newcomer(goats):
    h = ConceptHierarchy("Goats")
    saanen = h.add_concept("Saanen", [h.seed_id])
    oracle, ctx, log = mk(goats)
    placement = insert(h, oracle, ctx, "Dairy Goats", None, h.seed_id, query_log=log)
    assert placement.children == {saanen}
    assert placement.probes_issued == 2
    assert h.direct_parents(saanen) == {placement.concept_id}
    assert edge_names(h) == {("Dairy Goats", "Goats"), ("Saanen", "Dairy Goats")}
    assert h.edge_origin(saanen, placement.concept_id) == ORIGIN_INSERTION


def test_top_search_finds_a_second_parent_with_one_probe(goats):
    h = ConceptHierarchy("Goats")
    dairy = h.add_concept("Dairy Goats", [h.seed_id])
    mini = h.add_concept("Mini. Goats", [h.seed_id])
    oracle, ctx, log = mk(goats)
    placement = insert(h, oracle, ctx, "Nigerian Dwarf", None, dairy, query_log=log)
    assert placement.parents == {dairy, mini}
    assert placement.probes_issued == 1
    assert probe_pairs(log, "top") == [("Nigerian Dwarf", "Mini. Goats")]
    nd = placement.concept_id
    assert h.edge_origin(nd, dairy) == ORIGIN_LISTING
    assert h.edge_origin(nd, mini) == ORIGIN_INSERTION


def test_failed_probes_prune_their_whole_cone(goats):
    """One negative answer spares every concept underneath it."""
    h = hierarchy_from_taxonomy(goats, skip=("Nigora",))
    fiber = h.find_by_name("Fiber Goats")
    oracle, ctx, log = mk(goats)
    placement = insert(h, oracle, ctx, "Nigora", None, fiber, query_log=log)
    assert placement.parents == {fiber}
    assert placement.children == set()
    # Up: the seed's other children in id order, then Fiber's child.  The
    # subtrees under the negatives (seven concepts) are never touched.
    assert probe_pairs(log, "top") == [
        ("Nigora", "Dairy Goats"),
        ("Nigora", "Meat Goats"),
        ("Nigora", "Mini. Goats"),
        ("Nigora", "Show Goats"),
        ("Nigora", "Cashmere"),
    ]
    assert probe_pairs(log, "bottom") == [("Cashmere", "Nigora")]
    assert placement.probes_issued == 6
    assert placement.probes_issued + placement.probes_saved == 2 * 13


def test_bottom_search_skips_parents_of_negative_children(goats):
    h = ConceptHierarchy("Goats")
    dairy = h.add_concept("Dairy Goats", [h.seed_id])
    h.add_concept("Saanen", [dairy])
    oracle, ctx, log = mk(goats)
    placement = insert(h, oracle, ctx, "Meat Goats", None, h.seed_id, query_log=log)
    assert placement.parents == {h.seed_id}
    assert placement.children == set()
    assert probe_pairs(log, "top") == [("Meat Goats", "Dairy Goats")]
    # Saanen answers below-no, so Dairy Goats is never probed downward.
    assert probe_pairs(log, "bottom") == [("Saanen", "Meat Goats")]
    assert placement.probes_issued == 2


def test_synonym_discovered_on_both_sides_is_absorbed():
    h = ConceptHierarchy("Livestock")
    goats = h.add_concept("Goats", [h.seed_id])
    h.add_concept("Cattle", [h.seed_id])
    dairy = h.add_concept("Dairy Goats", [goats])
    oracle, ctx, log = mk(FARM)
    placement = insert(h, oracle, ctx, "Milk Goats", "Milkers.", goats, query_log=log)
    assert placement.synonym_of == dairy
    assert placement.concept_id is None
    assert len(h) == 4  # no new node
    assert h.find_by_name("Milk Goats") == dairy
    assert "Milk Goats" in h.concept(dairy).all_names()
    assert placement.probes_issued == 3
    assert placement.probes_issued + placement.probes_saved == 2 * 4
    assert log.count(op="interchangeable") == 1


class ScriptedOracle:
    """Minimal oracle for forcing contradictory probe answers."""

    def __init__(self, subsumptions, direction=None):
        self.subsumptions = set(subsumptions)
        self.direction = direction

    def is_subcategory_of(self, ctx, d, c):
        return (d, c) in self.subsumptions

    def interchangeable(self, ctx, d1, d2):
        return False

    def subcategory_direction(self, ctx, d1, d2):
        if self.direction is None:
            raise OracleParseError("no direction scripted")
        return self.direction


def contradictory_setup():
    # The oracle claims Mid is both above and below the newcomer.
    h = ConceptHierarchy("Root")
    mid = h.add_concept("Mid", [h.seed_id])
    probes = {("New", "Mid"), ("Mid", "New")}
    ctx = OracleContext(seed_name="Root")
    return h, mid, probes, ctx


def test_direction_question_can_keep_the_upward_edge():
    h, mid, probes, ctx = contradictory_setup()
    oracle = ScriptedOracle(probes, direction=("New", "Mid"))
    placement = insert(h, oracle, ctx, "New", None, h.seed_id)
    assert placement.parents == {mid}
    assert placement.dropped_edges == [("Mid", "New")]
    assert edge_names(h) == {("Mid", "Root"), ("New", "Mid")}
    # The surviving first edge did not come from the listing.
    assert h.edge_origin(placement.concept_id, mid) == ORIGIN_INSERTION


def test_direction_question_can_keep_the_downward_edge():
    h, mid, probes, ctx = contradictory_setup()
    oracle = ScriptedOracle(probes, direction=("Mid", "New"))
    placement = insert(h, oracle, ctx, "New", None, h.seed_id)
    assert placement.parents == {h.seed_id}  # fell back to the discovering edge
    assert placement.children == {mid}
    assert placement.dropped_edges == [("New", "Mid")]
    assert edge_names(h) == {("New", "Root"), ("Mid", "New")}
    assert h.edge_origin(placement.concept_id, h.seed_id) == ORIGIN_LISTING


def test_unparseable_direction_keeps_the_top_edge():
    h, mid, probes, ctx = contradictory_setup()
    oracle = ScriptedOracle(probes, direction=None)
    placement = insert(h, oracle, ctx, "New", None, h.seed_id)
    assert placement.parents == {mid}
    assert placement.children == set()
    assert placement.dropped_edges == [("Mid", "New")]
    assert edge_names(h) == {("Mid", "Root"), ("New", "Mid")}


def test_rediscovery_of_the_listing_concept_itself(goats):
    h = hierarchy_from_taxonomy(goats)
    oracle, ctx, _ = mk(goats)
    dairy = h.find_by_name("Dairy Goats")
    assert record_rediscovery(h, oracle, ctx, dairy, dairy) == "self"


def test_rediscovery_adds_a_missing_edge(goats):
    h = hierarchy_from_taxonomy(goats, skip=("Nigerian Dwarf",))
    nd = h.add_concept("Nigerian Dwarf", [h.find_by_name("Dairy Goats")])
    mini = h.find_by_name("Mini. Goats")
    oracle, ctx, _ = mk(goats)
    assert record_rediscovery(h, oracle, ctx, nd, mini) == "edge_added"
    assert h.edge_origin(nd, mini) == ORIGIN_LISTING
    assert record_rediscovery(h, oracle, ctx, nd, mini) == "implied"


def test_rediscovery_of_an_ancestor_merges_true_synonyms():
    h = ConceptHierarchy("Livestock")
    milk = h.add_concept("Milk Goats", [h.seed_id])
    dairy = h.add_concept("Dairy Goats", [milk])
    oracle, ctx, _ = mk(FARM)
    assert record_rediscovery(h, oracle, ctx, milk, dairy) == "merged"
    assert len(h) == 2
    survivor = h.find_by_name("Milk Goats")
    assert survivor == h.find_by_name("Dairy Goats") == milk


def test_rediscovery_merge_refused_by_a_bystander_is_dropped():
    # Cattle sits between the two synonym surfaces; merging would trap it in
    # a cycle, so the new edge is dropped and nothing changes.
    h = ConceptHierarchy("Livestock")
    milk = h.add_concept("Milk Goats", [h.seed_id])
    cattle = h.add_concept("Cattle", [milk])
    dairy = h.add_concept("Dairy Goats", [cattle])
    before = h.direct_edges()
    oracle, ctx, _ = mk(FARM)
    assert record_rediscovery(h, oracle, ctx, milk, dairy) == "dropped"
    assert h.direct_edges() == before
    assert len(h) == 4
    h.verify_integrity()


def test_rediscovery_of_a_non_synonym_ancestor_is_dropped(goats):
    h = hierarchy_from_taxonomy(goats)
    dairy = h.find_by_name("Dairy Goats")
    saanen = h.find_by_name("Saanen")
    before = h.direct_edges()
    oracle, ctx, _ = mk(goats)
    assert record_rediscovery(h, oracle, ctx, dairy, saanen) == "dropped"
    assert h.direct_edges() == before


def test_probe_accounting_balances_over_a_full_build(goats):
    """Replaying the whole reference taxonomy through insert(), every
    placement satisfies probes_issued + probes_saved == 2 * |hierarchy|."""
    h = ConceptHierarchy("Goats")
    oracle, ctx, log = mk(goats)
    plan = [
        ("Dairy Goats", "Goats"),
        ("Meat Goats", "Goats"),
        ("Fiber Goats", "Goats"),
        ("Mini. Goats", "Goats"),
        ("Show Goats", "Goats"),
        ("Nigerian Dwarf", "Dairy Goats"),
        ("Saanen", "Dairy Goats"),
        ("Toggenburg", "Dairy Goats"),
        ("Dwarf Nigerian", "Mini. Goats"),
        ("Mini. Nubian", "Mini. Goats"),
        ("Cashmere", "Fiber Goats"),
        ("Nigora", "Fiber Goats"),
        ("Boer", "Meat Goats"),
    ]
    total_issued = 0
    for name, entry_name in plan:
        entry = h.find_by_name(entry_name)
        pre_n = len(h)
        placement = insert(
            h, oracle, ctx, name, goats.description_for(name), entry, query_log=log
        )
        assert placement.probes_issued + placement.probes_saved == 2 * pre_n
        total_issued += placement.probes_issued
        h.verify_integrity()
    assert len(h) == 14
    assert edge_names(h) == {
        (c, p) for c, p in goats.edges
    }
    assert total_issued == log.count(op="is_subcategory_of")
    # Well under the brute-force bound of n(n-1) both-direction probes.
    assert total_issued < 14 * 13


class RecordingOracle:
    """Passes queries through, remembering the context of each probe."""

    def __init__(self, inner):
        self._inner = inner
        self.probe_contexts: list[tuple[OracleContext, str, str]] = []

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def is_subcategory_of(self, ctx, d, c):
        self.probe_contexts.append((ctx, d, c))
        return self._inner.is_subcategory_of(ctx, d, c)


def test_probes_carry_the_existing_concepts_description(goats):
    h = ConceptHierarchy("Goats")
    h.add_concept(
        "Dairy Goats", [h.seed_id], description=goats.description_for("Dairy Goats")
    )
    oracle = RecordingOracle(MockOracle(goats))
    ctx = OracleContext(
        seed_name="Goats", descriptions={"Boer": goats.description_for("Boer")}
    )
    insert(h, oracle, ctx, "Boer", goats.description_for("Boer"), h.seed_id)
    probed = [rec for rec in oracle.probe_contexts if rec[2] == "Dairy Goats"]
    assert probed, "expected an upward probe against Dairy Goats"
    probe_ctx = probed[0][0]
    assert probe_ctx.descriptions["Dairy Goats"] == goats.description_for("Dairy Goats")
    assert probe_ctx.descriptions["Boer"] == goats.description_for("Boer")
