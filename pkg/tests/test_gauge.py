import itertools
import math

import numpy as np
import pytest

from lvggm.core import Atom, AtomicPSD, DomainError
from lvggm.gauge import (
    CapacityError, GaugeSpec, lambda_plus_max, omega_value, polar, polar_exact, polar_tpi, polar_weighted,
)

from conftest import random_symmetric


def brute_polar(Y, k):
    best = 0.0
    for I in itertools.combinations(range(Y.shape[0]), k):
        best = max(best, np.linalg.eigvalsh(Y[np.ix_(I, I)])[-1])
    return best


def test_gauge_spec_validation():
    with pytest.raises(ValueError):
        GaugeSpec()
    with pytest.raises(ValueError):
        GaugeSpec(k=2, w=(1.0,))
    with pytest.raises(ValueError):
        GaugeSpec.weighted([2.0, 1.0])
    with pytest.raises(ValueError):
        GaugeSpec.fixed(0)
    assert GaugeSpec.sqrt_weights(4).weight(4) == 2.0
    with pytest.raises(DomainError):
        GaugeSpec.fixed(2).weight(3)


def test_omega_value_examples():
    e = np.eye(4)
    assert omega_value(AtomicPSD([Atom((0,), e[0], 2.0)]), GaugeSpec.fixed(1)) == 2.0
    u = np.ones(4) / 2
    L = AtomicPSD([Atom((0,), e[0], 1.0), Atom((0, 1, 2, 3), u, 3.0)])
    assert omega_value(L, GaugeSpec.sqrt_weights(4)) == pytest.approx(7.0)
    assert omega_value(AtomicPSD((), 4), GaugeSpec.fixed(2)) == 0.0
    with pytest.raises(DomainError):
        omega_value(L, GaugeSpec.fixed(2))


def test_polar_exact_examples():
    r = polar_exact(-np.eye(3), 2)
    assert r.value == 0.0 and r.u is None
    r = polar_exact(np.diag([3.0, -5.0, 2.0]), 2)
    assert r.value == pytest.approx(3.0) and r.support == (0, 1)
    u = np.array([0.0, 0.6, 0.0, 0.8, 0.0])
    r = polar_exact(np.outer(u, u), 3)
    assert r.value == pytest.approx(1.0) and r.support == (0, 1, 3)
    np.testing.assert_allclose(np.abs(r.u), np.abs(u), atol=1e-12)


def test_polar_exact_budget():
    with pytest.raises(CapacityError):
        polar_exact(np.eye(30), 15, budget=1000)
    with pytest.raises(ValueError):
        polar_exact(np.eye(3), 4)


def test_polar_exact_matches_brute_force(rng):
    for _ in range(20):
        Y = random_symmetric(rng, 7)
        for k in (1, 3, 5, 7):
            r = polar_exact(Y, k)
            assert r.value == pytest.approx(brute_polar(Y, k), abs=1e-12)
            if r.u is not None:
                assert r.u @ Y @ r.u == pytest.approx(r.value, abs=1e-9)
                assert np.linalg.norm(r.u) == pytest.approx(1.0)
                assert set(np.flatnonzero(r.u)) <= set(r.support)


def test_polar_full_support_is_top_eigenvalue(rng):
    Y = random_symmetric(rng, 6)
    assert polar_exact(Y, 6).value == pytest.approx(lambda_plus_max(Y), abs=1e-10)
    assert polar_tpi(Y, 6).value == pytest.approx(lambda_plus_max(Y), abs=1e-10)


def test_polar_tpi_examples():
    r = polar_tpi(np.diag([1.0, 2.0, 3.0]), 2)
    assert r.value == pytest.approx(3.0)
    np.testing.assert_allclose(np.abs(r.u), [0, 0, 1], atol=1e-12)
    e1 = np.zeros(4)
    e1[0] = 1
    r = polar_tpi(np.outer(e1, e1), 1)
    assert r.value == pytest.approx(1.0) and r.support == (0,)
    assert polar_tpi(-np.eye(4), 2).value == 0.0


def test_polar_tpi_is_a_lower_bound_and_usually_exact(rng):
    hits = 0
    for _ in range(100):
        Y = random_symmetric(rng, 8)
        exact = polar_exact(Y, 3).value
        tpi = polar_tpi(Y, 3).value
        assert tpi <= exact + 1e-10
        hits += tpi >= exact - 1e-9
        assert polar_tpi(Y, 3).heuristic
    assert hits >= 90


def test_polar_tpi_is_deterministic(rng):
    Y = random_symmetric(rng, 20)
    a, b = polar_tpi(Y, 5, seed=3), polar_tpi(Y, 5, seed=3)
    assert a.value == b.value and a.support == b.support


def test_polar_weighted_examples():
    w = [math.sqrt(k) for k in range(1, 4)]
    r = polar_weighted(np.eye(3), w)
    assert r.value == pytest.approx(1.0) and r.sparsity_level == 1
    u = np.zeros(6)
    u[:4] = 0.5
    w6 = [math.sqrt(k) for k in range(1, 7)]
    r = polar_weighted(np.outer(u, u), w6)
    assert r.value == pytest.approx(0.5) and r.sparsity_level == 4
    assert polar_weighted(-np.eye(3), w).value == 0.0


def test_polar_weighted_matches_level_scan(rng):
    for _ in range(10):
        Y = random_symmetric(rng, 6)
        w = np.sqrt(np.arange(1, 7))
        expected = max(brute_polar(Y, k) / w[k - 1] for k in range(1, 7))
        assert polar_weighted(Y, w).value == pytest.approx(expected, abs=1e-12)


def test_polar_dispatch(rng):
    Y = random_symmetric(rng, 6)
    assert polar(Y, GaugeSpec.fixed(3), exact=True).value == pytest.approx(brute_polar(Y, 3))
    assert polar(Y, GaugeSpec.fixed(10)).sparsity_level == 6  # k capped at p
    assert polar(Y, GaugeSpec.sqrt_weights(6), exact=True).value >= 0.0


def test_duality_inequality(rng):
    for _ in range(50):
        Y = random_symmetric(rng, 6)
        k = int(rng.integers(1, 7))
        atoms = []
        for _ in range(3):
            sup = tuple(sorted(rng.choice(6, size=k, replace=False)))
            u = np.zeros(6)
            u[list(sup)] = rng.standard_normal(k)
            atoms.append(Atom(sup, u, float(rng.uniform(0, 2))))
        Z = AtomicPSD(atoms)
        lhs = np.sum(Y * Z.dense())
        assert lhs <= polar_exact(Y, k).value * omega_value(Z, GaugeSpec.fixed(k)) + 1e-9
