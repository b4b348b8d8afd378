from pathlib import Path

import pytest

from ontocrawl import GroundTruthTaxonomy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def goats_path() -> Path:
    return FIXTURES / "goats.json"


@pytest.fixture()
def goats(goats_path) -> GroundTruthTaxonomy:
    return GroundTruthTaxonomy.load(goats_path)
