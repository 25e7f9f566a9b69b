import numpy as np
import pytest

from detmap.ranking_metrics import RelevanceMatrix


def two_tie_groups_instance():
    """One query over 100 items: relevant at ranks 1 and 6, ranks 1-2 and 5-7 tied."""
    d = np.arange(100, dtype=float)
    d[1] = d[0]
    d[5] = d[6] = d[4]
    rel = np.zeros(100, bool)
    rel[[0, 5]] = True
    return d[None, :], RelevanceMatrix(rel[None, :], np.zeros((1, 100), bool))


@pytest.fixture
def two_tie_groups():
    return two_tie_groups_instance()
