import pytest

from localhealth.data import build_dataset
from localhealth.synthgen import SignalConfig, generate_corpus, generate_universe


@pytest.fixture(scope="session")
def small_dataset():
    """48-BG synthetic dataset shared by read-only tests."""
    universe = generate_universe(48, seed=11)
    signal = SignalConfig(n_bgs=48, tweets_per_cell=(30, 60))
    archive, outcomes, counts = generate_corpus(universe, signal, seed=11)
    return build_dataset(iter(archive), outcomes, counts, universe)
