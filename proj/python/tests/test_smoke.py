import math
from fractions import Fraction

import pytest

import sflow


def test_wiener_refinement_and_window():
    coarse = sflow.wiener_increments(3, 0, 0.0, 1.0, 2)
    fine = sflow.wiener_increments(3, 0, 0.0, 1.0, 4)
    assert len(coarse) == 4 and len(fine) == 16
    for k in range(4):
        assert sum(fine[4 * k:4 * k + 4]) == coarse[k]
    assert sum(coarse) == sflow.wiener_at(3, 0, 1.0) - sflow.wiener_at(3, 0, 0.0)


def test_dyadic_time():
    t = sflow.DyadicTime(6, 3)
    assert (t.num, t.level) == (3, 2)
    assert float(t) == 0.75
    assert sflow.DyadicTime.nearest(0.74, 2) == t


def test_linear_flow_composes():
    xs = [0.0, 1.0, -2.0]
    mid = sflow.linear_evolve(1.0, 0.5, 8, 4, 0, -1.0, 0.5, xs)
    end = sflow.linear_evolve(1.0, 0.5, 8, 4, 0, 0.5, 2.0, mid)
    direct = sflow.linear_evolve(1.0, 0.5, 8, 4, 0, -1.0, 2.0, xs)
    for a, b in zip(end, direct):
        assert abs(a - b) <= 1e-12 * max(1.0, abs(b))
    # Affine in x with slope exp(-3).
    assert (direct[1] - direct[0]) == pytest.approx(math.exp(-3.0), rel=1e-9)


def test_linear_pullback_converges():
    r = sflow.linear_pullback(1.0, 0.2, 8, 1, 0, 0.0, count=6, n_particles=256)
    assert r["converged"]
    assert r["failure"] == ""
    assert len(r["particles"]) == 256
    assert all(b < a for a, b in zip(r["spreads"], r["spreads"][1:]))


def test_energy_distance():
    a = [[0.0], [1.0]]
    assert sflow.energy_distance(a, a) == 0.0
    assert sflow.energy_distance([[0.0]], [[3.0]]) == pytest.approx(6.0)
    with pytest.raises(sflow.PreconditionError):
        sflow.energy_distance([[0.0]], [[0.0, 1.0]])


def test_finite_oracles():
    unique, family = sflow.finite_stationary("noisy-two-state")
    assert unique
    assert family == [[Fraction(3, 5), Fraction(2, 5)]]
    assert all(sflow.counterexample_verdicts().values())
    with pytest.raises(sflow.ConfigError):
        sflow.finite_stationary("nothing")


def test_run_experiment():
    assert "oracle" in sflow.experiment_kinds()
    summary = sflow.run_experiment({"kind": "noise", "seed": 5})
    assert summary["passed"]
    assert summary["kind"] == "noise"
    with pytest.raises(sflow.ConfigError):
        sflow.run_experiment({"kind": "noise", "seed": 5, "bogus": 1})
