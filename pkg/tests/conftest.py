import pytest

from epi_estimator.core import CaseRecord, RateModel
from epi_estimator.simulate import simulate_until
from epi_estimator.utils import write_case_table


def case(id, i=None, r=None, **extra):
    return CaseRecord(id=id, infection_time=i, removal_time=r, **extra)


@pytest.fixture
def chain_outbreak():
    """Five overlapping complete cases; every non-index case has a live infector."""
    return [
        case(0, 0.0, 3.0),
        case(1, 1.0, 4.0),
        case(2, 2.5, 5.0),
        case(3, 3.5, 6.0),
        case(4, 4.5, 7.0),
    ]


@pytest.fixture
def simulated_outbreak():
    """A complete SIR outbreak of at least 15 cases in a population of 60."""
    model = RateModel.homogeneous(2.0, 1.0, 60)
    log = simulate_until(model, lambda run: run.n >= 15, max_tries=500, rng_seed=7)
    return log.cases


@pytest.fixture
def case_file(tmp_path):
    """Writes cases to a CaseTable CSV and returns its path."""

    def write(cases, name="cases.csv"):
        path = tmp_path / name
        write_case_table(cases, str(path))
        return str(path)

    return write
