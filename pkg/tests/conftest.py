import pytest
import torch

from vccsa.data import load_corpus
from vccsa.synthgen import GeneratorConfig, generate_corpus


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    generate_corpus(GeneratorConfig(n_videos=12, comments_per_video=5, seed=7), out)
    return out


@pytest.fixture
def small_corpus(small_corpus_dir):
    return load_corpus(small_corpus_dir)
