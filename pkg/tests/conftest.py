from pathlib import Path

import pytest

from archevo.genome import parse_genome

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# fixture corpus: file name -> segmentation mode it is normally run under
CORPUS = {
    "yolov3.yaml": "split",
    "evolved_deep_spp.yaml": "split",
    "evolved_v10_scaled.yaml": "whole",
    "evolved_slim_spp.yaml": "whole",
}


@pytest.fixture(scope="session")
def corpus_texts():
    return {name: (CONFIGS / name).read_text() for name in CORPUS}


@pytest.fixture(scope="session")
def corpus_genomes(corpus_texts):
    return {name: parse_genome(text, CORPUS[name]) for name, text in corpus_texts.items()}


@pytest.fixture(scope="session")
def yolov3_text(corpus_texts):
    return corpus_texts["yolov3.yaml"]


@pytest.fixture(scope="session")
def yolov3(corpus_genomes):
    return corpus_genomes["yolov3.yaml"]


@pytest.fixture()
def seed_path():
    return str(CONFIGS / "yolov3.yaml")
