from __future__ import annotations

import pytest

from bitrank.evaluators.base import MemoCache
from bitrank.evaluators.synthetic import SyntheticEvaluator, SyntheticModel
from bitrank.space import SearchSpace


@pytest.fixture
def space() -> SearchSpace:
    return SearchSpace()


@pytest.fixture
def model() -> SyntheticModel:
    return SyntheticModel()


@pytest.fixture
def memo(model) -> MemoCache:
    return MemoCache(SyntheticEvaluator(model), model.geometry)
