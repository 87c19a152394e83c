import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ergmflow import ModelSpec, TermSpec, synthetic_generate


@pytest.fixture(scope="session")
def adequacy_data():
    """100-node self-fit dataset with wide volume spread (seed 2024)."""
    model = ModelSpec(terms=(
        TermSpec("sum"), TermSpec("nonzero"), TermSpec("mutual_min"),
        TermSpec("dyad", "log_distance"),
        TermSpec("node_out", "log_population"),
        TermSpec("node_in", "log_population"),
        TermSpec("dyad", "political_dissim")))
    theta = np.array([-9.6, 0.4, 0.1, -0.55, 0.65, 0.65, -1.0])
    current, lagged, nodes, dyads = synthetic_generate(100, model, theta, seed=2024)
    return model, theta, current, lagged, nodes, dyads


@pytest.fixture(scope="session")
def coverage_data():
    """Sparse 200-node dataset whose nonzero stratum is exhausted by a 20%
    tie/no-tie sample (seed 555)."""
    model = ModelSpec(terms=(
        TermSpec("sum"), TermSpec("nonzero"), TermSpec("mutual_min"),
        TermSpec("dyad", "log_distance"),
        TermSpec("node_out", "log_population"),
        TermSpec("node_in", "log_population")))
    theta = np.array([-11.4, 0.4, 0.15, -0.5, 0.6, 0.6])
    current, lagged, nodes, dyads = synthetic_generate(200, model, theta, seed=555)
    return model, theta, current, lagged, nodes, dyads


@pytest.fixture(scope="session")
def knockout_data():
    """50-node dataset with a strongly negative dissimilarity effect (seed 31)."""
    model = ModelSpec(terms=(
        TermSpec("sum"), TermSpec("nonzero"),
        TermSpec("dyad", "political_dissim"),
        TermSpec("node_out", "log_population"),
        TermSpec("node_in", "log_population")))
    theta = np.array([-10.3, 0.5, -1.5, 0.55, 0.55])
    current, lagged, nodes, dyads = synthetic_generate(50, model, theta, seed=31)
    return model, theta, current, lagged, nodes, dyads


@pytest.fixture(scope="session")
def small_data():
    """40-node dataset with a lagged term, for generic estimator tests."""
    model = ModelSpec(terms=(
        TermSpec("sum"), TermSpec("nonzero"), TermSpec("mutual_min"),
        TermSpec("dyad", "political_dissim"), TermSpec("lagged_log_flow")))
    theta = np.array([-0.9, 0.3, 0.1, -0.8, 0.25])
    current, lagged, nodes, dyads = synthetic_generate(40, model, theta, seed=12)
    return model, theta, current, lagged, nodes, dyads
