import json

import numpy as np
import pytest

from distgp.harness.truth import generate_dataset, sample_truth
from distgp.kernel.basis import kl_basis
from distgp.kernel.eigen import spline_eigensystem
from distgp.kernel.measures import InputMeasure


@pytest.fixture
def spline():
    return spline_eigensystem(200)


@pytest.fixture
def unit():
    return InputMeasure.uniform(0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_problem(spline, unit):
    """Spline truth, a 200-sample dataset and an E=8 KL basis."""
    truth = sample_truth(spline, 100, seed=7)
    data = generate_dataset(truth, unit, 200, 0.01, seed=8)
    return truth, data, kl_basis(spline, 8)


@pytest.fixture
def write_config(tmp_path):
    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path

    return _write


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, header, rows):
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
        return path

    return _write
