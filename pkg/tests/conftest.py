import numpy as np
import pytest

from sanas.audio import FeatureNormalizer, ToyConfig, make_toy_dataset, split_records, to_sequences


@pytest.fixture(scope="session")
def toy_records():
    cfg = ToyConfig(classes=4, streams_per_class=100, min_dur=3.0, max_dur=3.0)
    records = make_toy_dataset(cfg, np.random.default_rng(0))
    return split_records(records, np.random.default_rng([0, 1]))


@pytest.fixture(scope="session")
def toy_data(toy_records):
    norm = FeatureNormalizer.fit([r.samples for r in toy_records["train"]])
    return {k: to_sequences(v, norm) for k, v in toy_records.items()}


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
