import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def corpus():
    from tillst import corpus_path

    return corpus_path


@pytest.fixture(scope="session")
def load_corpus():
    from tillst import corpus_path
    from tillst.parser import parse_program

    def load(name):
        with open(corpus_path(name), encoding="utf-8") as fh:
            return parse_program(fh.read())

    return load
