from pathlib import Path

import pytest

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"


@pytest.fixture
def problems_dir() -> Path:
    return PROBLEMS
