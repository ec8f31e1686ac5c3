import numpy as np
import pytest
from scipy.stats import qmc

from megaquant.errors import CapabilityError, DomainError
from megaquant.sobol import MAX_DIMENSION, sobol_points, sobol_sample

from util import star_discrepancy_estimate


def test_index_zero_is_origin():
    for dim in (1, 2, 5, 13):
        assert np.all(sobol_sample(dim, 0) == 0.0)


def test_dimension_one_first_points():
    # radical-inverse brute force: points 1..3 of the base-2 van der Corput
    # sequence are {0.5, 0.75, 0.25} in some order
    pts = {float(sobol_sample(1, i)[0]) for i in (1, 2, 3)}
    assert pts == {0.5, 0.75, 0.25}


@pytest.mark.parametrize("dim", [1, 2, 3, 5, 8, 12, 21])
def test_matches_published_reference_implementation(dim):
    mine = sobol_points(dim, 256)
    ref = qmc.Sobol(dim, scramble=False).random(256)
    assert np.abs(mine - ref).max() < 1e-9


def test_skip_equals_offset_indexing():
    direct = np.array([sobol_sample(4, i) for i in range(10, 20)])
    skipped = sobol_points(4, 10, skip=10)
    assert np.array_equal(direct, skipped)


def test_deterministic():
    assert np.array_equal(sobol_points(6, 64), sobol_points(6, 64))


def test_low_discrepancy_beats_uniform_random():
    sob = star_discrepancy_estimate(sobol_points(5, 1024), seed=3)
    rng = np.random.default_rng(0)
    random_discrepancies = [
        star_discrepancy_estimate(rng.random((1024, 5)), seed=3)
        for _ in range(20)
    ]
    assert sob < np.mean(random_discrepancies)


def test_capability_and_domain_errors():
    with pytest.raises(CapabilityError):
        sobol_sample(MAX_DIMENSION + 1, 0)
    with pytest.raises(DomainError):
        sobol_sample(0, 0)
    with pytest.raises(DomainError):
        sobol_sample(3, -1)
