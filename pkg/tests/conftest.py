from __future__ import annotations

import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bfham.analysis import Analysis, classify_constraints  # noqa: E402
from bfham.models import BUILTINS, builtin  # noqa: E402


@lru_cache(maxsize=None)
def analysis_of(name: str) -> Analysis:
    """One shared analysis per builtin; bracket and projection caches persist across tests."""
    return Analysis(builtin(name))


@lru_cache(maxsize=None)
def classification_of(name: str):
    return classify_constraints(analysis_of(name))


@pytest.fixture(params=BUILTINS)
def builtin_name(request) -> str:
    return request.param
