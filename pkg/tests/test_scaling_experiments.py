import math

import numpy as np
import pytest

from nodalfield.errors import ParameterError, RegimeError
from nodalfield.field_sampler import derive_seeds
from nodalfield.scaling_experiments import (
    critical_study, depletion_ratios, geometric_grid, log_scale, resolution_check, scaling_row,
    spread, subcritical_study, successive_changes,
)
from nodalfield.torus_spectrum import FieldParams


def test_log_scale():
    assert log_scale(math.e**2) == pytest.approx(1.0)


def test_geometric_grid():
    assert geometric_grid(400, 25600, 4) == pytest.approx([400, 1600, 6400, 25600])
    assert geometric_grid(5, 5, 1) == [5.0]
    for bad in [(0, 10, 3), (10, 5, 3), (1, 10, 0)]:
        with pytest.raises(ParameterError):
            geometric_grid(*bad)


def test_subcritical_rejects_critical_s():
    with pytest.raises(RegimeError):
        subcritical_study(2, 1.0, [100], 2)


def test_rows_are_positive_and_normalized():
    rows = subcritical_study(2, 0.0, [100, 200], 4, rho=5.0)
    for r in rows:
        assert r.seeds == 4 and r.mean_N > 0
        assert r.normalized == pytest.approx(r.mean_N / r.L)
        assert 0 < r.small_fraction <= 1
    crit = critical_study(2, [100], 4)
    (c,) = crit
    assert c.normalized == pytest.approx(c.mean_N * math.sqrt(log_scale(100)) / 100)
    assert c.normalized_rho <= c.normalized


def test_common_random_numbers_across_s():
    a = subcritical_study(2, 0.0, [150], 3)
    b = critical_study(2, [150], 3, rho=None)
    assert a[0].seeds == b[0].seeds
    assert derive_seeds(0, 150, 3) == derive_seeds(0, 150, 3)


def test_workers_do_not_change_results():
    p = FieldParams(2, 0.5, 200)
    seeds = derive_seeds(4, 200, 6)
    assert scaling_row(p, seeds, rho=8.0) == scaling_row(p, seeds, rho=8.0, workers=4)


def test_three_dimensional_row():
    r = scaling_row(FieldParams(3, 0.0, 30), derive_seeds(0, 30, 2))
    assert r.n == 3 and r.mean_N > 0


def test_sequence_helpers():
    class R:
        def __init__(self, x, L=1.0, N=1.0):
            self.normalized, self.L, self.mean_N = x, L, N

    assert successive_changes([R(1.0), R(1.1), R(0.99)]) == pytest.approx([0.1, 0.1])
    assert spread([2.0, 1.0, 4.0]) == 4.0
    crit, sub = [R(0, 100.0, 1.0)], [R(0, 100.0, 2.0)]
    assert depletion_ratios(crit, sub) == pytest.approx([0.5 * math.sqrt(log_scale(100))])
    with pytest.raises(ParameterError):
        depletion_ratios([R(0, 50.0)], sub)


def test_resolution_check_small():
    check = resolution_check(FieldParams(2, 1, 400), range(4))
    assert check.coarse.shape == (4,)
    assert check.mean_relative_change == pytest.approx(
        np.mean(np.abs(check.fine - check.coarse) / check.coarse))
