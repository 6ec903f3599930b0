import numpy as np
import pytest

from aspectgate.corpus import build_random_table, make_aspect_groups, parse_semeval_xml

from helpers import TOY_SENTENCES, build_xml


@pytest.fixture(scope="session")
def toy_xml_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "toy_train.xml"
    path.write_text(build_xml(TOY_SENTENCES), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def toy_records(toy_xml_path):
    result = parse_semeval_xml(toy_xml_path)
    assert len(result.records) == len(TOY_SENTENCES)
    return result.records


@pytest.fixture(scope="session")
def toy_groups(toy_records):
    return make_aspect_groups(toy_records)


@pytest.fixture(scope="session")
def toy_table(toy_records):
    # small dimension keeps the unit tests quick; the fixed 300-d table is
    # exercised by the embedding-table tests themselves
    return build_random_table(toy_records, seed=11, dim=24)


@pytest.fixture
def rng():
    return np.random.RandomState(1234)
