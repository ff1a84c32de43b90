import numpy as np
import pytest

from emoctc import dataset


@pytest.fixture(scope="session")
def small_corpus():
    """12 utterances, 3 per class, deterministic."""
    return dataset.generate_synthetic_corpus(seed=3, n_per_class=3)


@pytest.fixture(scope="session")
def small_corpus_dir(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    dataset.save_manifest(small_corpus, str(out))
    return out


def random_posterior(rng, T, k):
    """Row-stochastic T x (k+1) matrix."""
    Y = rng.random((T, k + 1)) + 1e-3
    return Y / Y.sum(axis=1, keepdims=True)
