import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dualscore.errors import InvalidCandidateError, InvalidInputError
from dualscore.optimize import (
    SearchConfig, de_minimize, minimize, project_to_constraint, random_minimize, tpe_minimize,
)

METHODS = {"de": de_minimize, "tpe": tpe_minimize, "random": random_minimize}
E1 = np.array([1.0, 0.0, 0.0])


def sphere_quadratic(xi):
    return float(np.sum((project_to_constraint(xi) - E1) ** 2))


class Recorder:
    """Wraps an objective and keeps every candidate it was shown."""

    def __init__(self, f):
        self.f = f
        self.seen = []

    def __call__(self, xi):
        self.seen.append((np.array(xi), self.f(xi)))
        return self.seen[-1][1]


class TestProjection:
    @pytest.mark.parametrize("v, want", [
        ([0.0, -2.0], [0.0, 1.0]),
        ([3.0, 4.0], [0.6, 0.8]),
        ([-1.0, -1.0, -1.0], np.ones(3) / np.sqrt(3)),
        ([-7e-300, -7e-300, -7e-300], np.ones(3) / np.sqrt(3)),
        ([0.0, 0.0, -1e300], [0.0, 0.0, 1.0]),
    ])
    def test_examples(self, v, want):
        np.testing.assert_allclose(project_to_constraint(v), want, rtol=1e-15)

    @pytest.mark.parametrize("v", [[0.0, 0.0], [np.nan, 1.0], [np.inf, 0.0]])
    def test_invalid(self, v):
        with pytest.raises(InvalidCandidateError):
            project_to_constraint(v)

    @given(v=arrays(float, st.integers(1, 8), elements=st.floats(-1e3, 1e3)).filter(
        lambda a: np.abs(a).max() > 1e-6))
    def test_sign_and_norm(self, v):
        xi = project_to_constraint(v)
        assert np.linalg.norm(xi) == pytest.approx(1.0, abs=1e-12)
        assert xi[np.flatnonzero(xi)[0]] > 0
        np.testing.assert_array_equal(project_to_constraint(-v), xi)
        np.testing.assert_allclose(project_to_constraint(3.7 * v), xi, rtol=1e-14, atol=1e-15)

    def test_idempotent(self):
        xi = project_to_constraint([0.2, -0.9, 0.4])
        np.testing.assert_array_equal(project_to_constraint(xi), xi)


class TestSearchConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(dimension=0), dict(dimension=2, budget=0), dict(dimension=2, method="cma"),
        dict(dimension=2, seed=-1), dict(dimension=2, method="de", params={"gamma": 0.2}),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidInputError):
            SearchConfig(**kwargs)


@pytest.mark.parametrize("method", sorted(METHODS))
class TestCommonContract:
    def test_trace_non_increasing(self, method):
        res = METHODS[method](sphere_quadratic, SearchConfig(3, 150, 4, method))
        values = [v for _, v in res.trace]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert res.best_value == min(values)
        assert res.evaluations == len(res.trace) <= 150

    def test_deterministic(self, method):
        cfg = SearchConfig(3, 100, 12, method)
        a, b = METHODS[method](sphere_quadratic, cfg), METHODS[method](sphere_quadratic, cfg)
        np.testing.assert_array_equal(a.best_xi, b.best_xi)
        assert a.trace == b.trace

    def test_candidates_are_feasible_and_best_is_real(self, method):
        rec = Recorder(sphere_quadratic)
        res = METHODS[method](rec, SearchConfig(3, 80, 1, method))
        assert len(rec.seen) == res.evaluations
        for xi, _ in rec.seen:
            assert np.linalg.norm(xi) == pytest.approx(1.0, abs=1e-12)
            assert xi[np.flatnonzero(xi)[0]] > 0
        assert res.best_value == min(v for _, v in rec.seen)
        assert any(np.array_equal(xi, res.best_xi) for xi, _ in rec.seen)

    def test_infinite_values_tolerated(self, method):
        f = lambda xi: np.inf if xi[0] < 0.5 else sphere_quadratic(xi)  # noqa: E731
        res = METHODS[method](f, SearchConfig(3, 60, 2, method))
        assert res.evaluations == 60

    def test_dispatch(self, method):
        cfg = SearchConfig(3, 30, 5, method)
        assert minimize(sphere_quadratic, cfg).trace == METHODS[method](sphere_quadratic, cfg).trace


class TestDE:
    def test_sphere_quadratic(self):
        res = de_minimize(sphere_quadratic, SearchConfig(3, 600, 0, "de"))
        assert res.best_value < 1e-3

    def test_budget_below_one_generation(self):
        res = de_minimize(sphere_quadratic, SearchConfig(3, 5, 0, "de"))
        assert res.evaluations == 5

    def test_population_override(self):
        rec = Recorder(sphere_quadratic)
        de_minimize(rec, SearchConfig(3, 40, 0, "de", {"popsize": 7}))
        # the initial population is drawn as one batch of 7
        assert len(rec.seen) == 40


class TestTPE:
    def test_sphere_quadratic(self):
        res = tpe_minimize(sphere_quadratic, SearchConfig(3, 600, 0, "tpe"))
        assert res.best_value < 1e-2

    @pytest.mark.parametrize("budget", [1, 10, 24])
    def test_startup_is_random_search(self, budget):
        a = tpe_minimize(sphere_quadratic, SearchConfig(3, budget, 8, "tpe"))
        b = random_minimize(sphere_quadratic, SearchConfig(3, budget, 8, "random"))
        assert a.trace == b.trace
        np.testing.assert_array_equal(a.best_xi, b.best_xi)


class TestRandom:
    def test_budget_one(self):
        rec = Recorder(sphere_quadratic)
        res = random_minimize(rec, SearchConfig(3, 1, 3, "random"))
        assert res.evaluations == 1
        np.testing.assert_array_equal(res.best_xi, rec.seen[0][0])
        assert res.best_value == rec.seen[0][1]

    def test_nested_budgets(self):
        values = [random_minimize(sphere_quadratic, SearchConfig(3, b, 6, "random")).best_value
                  for b in (1, 5, 25, 125)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_not_better_than_de(self):
        rand = [random_minimize(sphere_quadratic, SearchConfig(3, 600, s, "random")).best_value
                for s in range(5)]
        de = [de_minimize(sphere_quadratic, SearchConfig(3, 600, s, "de")).best_value for s in range(5)]
        assert np.mean(rand) >= np.mean(de)
