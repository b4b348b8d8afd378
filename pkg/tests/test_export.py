"""OWL and DOT emission, run statistics, and their text rendering."""

from __future__ import annotations

import random

import pytest

from ontocrawl import ConceptHierarchy, CostLedger, CrawlConfig
from ontocrawl.crawler import CrawlStats
from ontocrawl.errors import ExportError
from ontocrawl.export import (
    compute_stats,
    render_stats_text,
    stats_to_json_dict,
    to_dot,
    to_owl_rdfxml,
)
from ontocrawl.insertion import ORIGIN_INSERTION, ORIGIN_LISTING

import daggen
from owl_check import doc_matches_hierarchy, parse_owl
from support import build_hierarchy, hierarchy_from_taxonomy


# ---------------------------------------------------------------------------
# OWL


def test_singleton_hierarchy_exports_one_class():
    h = ConceptHierarchy("Goats")
    xml = to_owl_rdfxml(h)
    assert xml.startswith('<?xml version="1.0" encoding="UTF-8"?>\n')
    doc = parse_owl(xml)
    assert doc.base_iri == "http://example.org/hierarchy"
    assert doc.classes == ["Goats"]
    assert doc.subclass_of == set()
    doc_matches_hierarchy(doc, h)


def test_reference_taxonomy_round_trips_through_owl(goats):
    h = hierarchy_from_taxonomy(goats)
    doc = parse_owl(to_owl_rdfxml(h, base_iri="http://example.org/goats"))
    assert doc.base_iri == "http://example.org/goats"
    assert len(doc.classes) == 14
    assert len(doc.subclass_of) == 14
    assert doc.comments["Boer"] == goats.descriptions["Boer"]
    doc_matches_hierarchy(doc, h)


def test_synonym_names_become_equivalent_alias_classes():
    h = ConceptHierarchy("Livestock")
    dairy = h.add_concept("Dairy Goats", [h.seed_id], description="Kept for milk.")
    h.add_synonym_name(dairy, "Milk Goats")
    doc = parse_owl(to_owl_rdfxml(h))
    assert doc.classes == ["Livestock", "Dairy Goats"]
    assert doc.equivalents == {"Dairy Goats": {"Milk Goats"}}
    assert doc.aliases == ["Milk Goats"]
    doc_matches_hierarchy(doc, h)


def test_owl_iris_are_percent_encoded():
    h = ConceptHierarchy("Music")
    h.add_concept("AC/DC", [h.seed_id])
    h.add_concept("Mini. Goats", [h.seed_id])
    xml = to_owl_rdfxml(h)
    assert "#AC%2FDC" in xml
    assert "#Mini.%20Goats" in xml
    doc = parse_owl(xml)
    assert doc.classes == ["Music", "AC/DC", "Mini. Goats"]
    doc_matches_hierarchy(doc, h)


def test_owl_export_is_deterministic(goats):
    once = to_owl_rdfxml(hierarchy_from_taxonomy(goats))
    again = to_owl_rdfxml(hierarchy_from_taxonomy(goats))
    assert once == again


def test_owl_rejects_characters_xml_cannot_carry():
    h = ConceptHierarchy("Seed")
    h.add_concept("Bad\x07Name", [h.seed_id])
    with pytest.raises(ExportError, match="cannot carry"):
        to_owl_rdfxml(h)

    h2 = ConceptHierarchy("Seed")
    cid = h2.add_concept("Fine Name", [h2.seed_id])
    h2.concept(cid).description = "control \x01 character"
    with pytest.raises(ExportError, match="description"):
        to_owl_rdfxml(h2)


@pytest.mark.parametrize("seed", [11, 22, 33])
def test_random_dags_round_trip_through_owl(seed):
    rng = random.Random(seed)
    n = rng.randint(5, 40)
    edges = daggen.random_dag(rng, n)
    h = build_hierarchy(edges, n)
    doc_matches_hierarchy(parse_owl(to_owl_rdfxml(h)), h)


# ---------------------------------------------------------------------------
# DOT


def test_dot_output_shape_and_determinism(goats):
    h = hierarchy_from_taxonomy(goats)
    dot = to_dot(h)
    assert dot == to_dot(h)
    lines = dot.splitlines()
    assert lines[0] == "digraph hierarchy {"
    assert lines[-1] == "}"
    assert '  c0 [label="Goats"];' in lines
    assert "  c0 -> c1;" in lines
    # Edges come out sorted by (parent, child).
    def ids(ln: str) -> tuple[int, int]:
        left, _, right = ln.strip().rstrip(";").partition(" -> ")
        return int(left[1:]), int(right[1:])

    edge_lines = [ln for ln in lines if "->" in ln]
    assert edge_lines == sorted(edge_lines, key=ids)
    assert len(edge_lines) == 14


def test_dot_escapes_quotes_and_backslashes():
    h = ConceptHierarchy("Seed")
    cid = h.add_concept('Say "Cheese"', [h.seed_id])
    h.add_synonym_name(cid, "Back\\slash")
    dot = to_dot(h, graph_name="g")
    assert dot.splitlines()[0] == "digraph g {"
    assert '[label="Say \\"Cheese\\"\\n(= Back\\\\slash)"];' in dot


# ---------------------------------------------------------------------------
# statistics


def test_stats_for_a_singleton_run():
    h = ConceptHierarchy("Goats")
    stats = compute_stats(h, CostLedger(), 0)
    assert stats.seed == "Goats"
    assert stats.exploration_depth is None and stats.ft == 0
    assert stats.n_concepts == 1
    assert stats.n_subsumptions == 0
    assert stats.prompts_per_concept == 0.0
    assert stats.depth_histogram == {0: 1}
    assert stats.outdegree_histogram == {0: 1}
    assert stats.concepts_at_or_below_cutoff == 1
    assert stats.concepts_above_cutoff == 0


def test_stats_counts_by_hand():
    h = ConceptHierarchy("S")
    a = h.add_concept("A", [h.seed_id], origin=ORIGIN_LISTING)
    b = h.add_concept("B", [h.seed_id], origin=ORIGIN_LISTING)
    h.add_concept("C", [a], origin=ORIGIN_LISTING)
    d = h.add_concept("D", [a], origin=ORIGIN_LISTING)
    h.add_subsumption(d, b, origin=ORIGIN_INSERTION)
    ledger = CostLedger(requests=10, dollars=0.1234)
    config = CrawlConfig(seed_name="S", exploration_depth=1, ft=20)
    stats = compute_stats(h, ledger, 3, config=config)
    assert stats.n_concepts == 5
    assert stats.n_dismissed == 3
    assert stats.n_subsumptions == 5
    assert stats.n_subsumptions_insertion == 1
    assert stats.prompts_per_concept == 2.0
    assert stats.cost_dollars == 0.12
    assert stats.depth_histogram == {0: 1, 1: 2, 2: 2}
    assert stats.outdegree_histogram == {0: 2, 1: 1, 2: 2}
    assert stats.max_outdegree == 2
    assert stats.avg_outdegree == 1.0
    assert stats.concepts_at_or_below_cutoff == 3
    assert stats.concepts_above_cutoff == 2
    # Every reduction edge is someone's outgoing child edge.
    assert sum(k * v for k, v in stats.outdegree_histogram.items()) == 5


def full_run_stats() -> CrawlStats:
    return CrawlStats(
        seed="Goats",
        exploration_depth=None,
        ft=20,
        n_concepts=24,
        n_dismissed=15,
        n_subsumptions=24,
        n_subsumptions_insertion=1,
        prompts_per_concept=22.25,
        cost_dollars=0.11,
        concepts_at_or_below_cutoff=24,
        concepts_above_cutoff=0,
        depth_histogram={0: 1, 1: 7, 2: 14, 3: 2},
        outdegree_histogram={0: 17, 1: 2, 2: 1, 4: 2, 5: 1, 7: 1},
        max_outdegree=7,
        avg_outdegree=1.0,
    )


def test_stats_text_rendering_golden():
    expected = "\n".join(
        [
            "Seed   Cutoff  ft  Concepts  Dismissed  Subsumptions  Ins.subs"
            "  Prompts/concept  Cost$  WithinCutoff  BeyondCutoff",
            "Goats  none    20  24        15         24            1       "
            "  22.25            0.11   24            0",
            "",
            "Concepts per depth:",
            "  depth 0: 1",
            "  depth 1: 7",
            "  depth 2: 14",
            "  depth 3: 2",
            "",
            "Concepts per outdegree (max 7, avg 1.00):",
            "  outdegree 0: 17",
            "  outdegree 1: 2",
            "  outdegree 2: 1",
            "  outdegree 4: 2",
            "  outdegree 5: 1",
            "  outdegree 7: 1",
        ]
    ) + "\n"
    assert render_stats_text(full_run_stats()) == expected


def test_stats_text_shows_a_numeric_cutoff():
    stats = full_run_stats()
    stats.exploration_depth = 3
    lines = render_stats_text(stats).splitlines()
    assert lines[1].split()[1] == "3"


def test_stats_json_dict_stringifies_histogram_keys():
    data = stats_to_json_dict(full_run_stats())
    assert data["depth_histogram"] == {"0": 1, "1": 7, "2": 14, "3": 2}
    assert data["outdegree_histogram"]["7"] == 1
    assert data["seed"] == "Goats"
    assert data["exploration_depth"] is None
    assert data["prompts_per_concept"] == 22.25
    assert set(data) == {
        "seed",
        "exploration_depth",
        "ft",
        "n_concepts",
        "n_dismissed",
        "n_subsumptions",
        "n_subsumptions_insertion",
        "prompts_per_concept",
        "cost_dollars",
        "concepts_at_or_below_cutoff",
        "concepts_above_cutoff",
        "depth_histogram",
        "outdegree_histogram",
        "max_outdegree",
        "avg_outdegree",
    }
