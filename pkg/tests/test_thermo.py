import math

import numpy as np
import pytest

import carnotdim as cd
from carnotdim import thermo
from carnotdim.errors import ValidationError

from conftest import fib2_system, moran_system


def test_weight_table_mid_and_sides():
    wt = thermo.WeightTable(np.array([0.25]), np.array([0.36]), distortion=1.5)
    assert np.isclose(wt.w_mid[0], 0.3)
    assert wt.side("lower")[0] == 0.25
    assert wt.side("upper")[0] == 0.36
    assert wt.side("mid")[0] == wt.w_mid[0]
    with pytest.raises(ValidationError):
        thermo.WeightTable(np.array([0.5]), np.array([0.4]), distortion=1.0)


def test_exact_weights_for_similarities():
    sys_ = moran_system([0.5, 0.25, 0.125])
    wt = thermo.ensure_weights(sys_)
    assert wt.exact
    assert np.allclose(wt.w_lo, [0.5, 0.25, 0.125])
    assert np.allclose(wt.w_up, wt.w_lo)
    assert wt.distortion == 1.0


def test_partition_sum_closed_forms():
    sys_ = moran_system([0.25, 0.25, 0.25, 0.25])
    # Z_n(1) = (4 * 1/4)^n = 1 for all n
    for n in (1, 2, 3):
        assert np.isclose(thermo.partition_sum(sys_, 1.0, n), 1.0)
    # Z_n(0) = number of admissible words
    assert np.isclose(thermo.partition_sum(sys_, 0.0, 3), sys_.count_words(3))
    fib = fib2_system()
    assert np.isclose(thermo.partition_sum(fib, 0.0, 5), fib.count_words(5))


def test_pressure_monotone_and_convex():
    sys_ = moran_system([0.5, 0.3, 0.2])
    ts = np.linspace(0.0, 2.0, 9)
    vals = [thermo.pressure_bracket(sys_, t).upper for t in ts]
    assert all(a > b for a, b in zip(vals, vals[1:]))          # decreasing
    second = np.diff(vals, 2)
    assert (second >= -1e-9).all()                              # convex
    # P(0) = log(number of maps) for a maximal system
    assert np.isclose(vals[0], math.log(3))


def test_pressure_exact_path_is_tight():
    sys_ = moran_system([0.5, 0.3])
    pb = thermo.pressure_bracket(sys_, 0.7)
    assert pb.lower == pb.upper
    assert pb.method == "exact"


def test_bowen_dim_moran_oracle():
    # 2^-h + 4^-h = 1  =>  h = log2(golden ratio) = 0.694241...
    sys_ = moran_system([0.5, 0.25])
    db = cd.bowen_dim(sys_, tol=1e-9)
    root = math.log2((1 + math.sqrt(5)) / 2)
    assert db.h_lo - 1e-9 <= root <= db.h_hi + 1e-9
    assert db.h_hi - db.h_lo <= 1e-9 + 1e-15


def test_bowen_dim_single_map_is_zero():
    sys_ = moran_system([0.5])
    db = cd.bowen_dim(sys_)
    assert db.h_hi <= 1e-6


def test_similarity_dimension_matches_bowen():
    ratios = [0.4, 0.3, 0.2]
    assert np.isclose(thermo.similarity_dimension(ratios),
                      cd.bowen_dim(moran_system(ratios), tol=1e-10).mid,
                      atol=1e-8)


def test_shell_family_geometric_theta():
    # one map of scale 2^-k in shell k: Z_1(t) = sum 2^-kt, threshold t = 0
    fam = thermo.ShellFamily(
        log_weights=[np.array([-k * math.log(2.0)]) for k in range(1, 9)],
        counts=None, tail="geometric")
    est = cd.theta_estimate(fam)
    assert est.lo <= 0.0 + 1e-9
    assert est.hi <= 0.5
    # 4^k maps of scale 2^-k per shell: sum 4^k 2^-kt finite iff t > 2
    fam2 = thermo.ShellFamily(
        log_weights=[np.array([-k * math.log(2.0)]) for k in range(1, 9)],
        counts=[np.array([4.0 ** k]) for k in range(1, 9)],
        tail="geometric")
    est2 = cd.theta_estimate(fam2)
    assert est2.lo <= 2.0 <= est2.hi
    assert abs(est2.estimate - 2.0) < 1e-6


def test_shell_family_power_theta():
    # shell k holds k^3 maps of weight k^-2: sum k^3 k^-2t ~ finite iff t > 2,
    # and log S_k = 3 log k - 2t log k crosses slope -1 at t = 2
    fam = thermo.ShellFamily(
        log_weights=[np.array([-2.0 * math.log(k)]) for k in range(1, 11)],
        counts=[np.array([float(k ** 3)]) for k in range(1, 11)],
        tail="power")
    est = cd.theta_estimate(fam)
    assert est.lo <= 2.0 <= est.hi
    assert abs(est.estimate - 2.0) < 1e-6


def test_theta_needs_enough_shells():
    fam = thermo.ShellFamily(log_weights=[np.array([-1.0])] * 3,
                             counts=None, tail="geometric")
    with pytest.raises(ValidationError):
        cd.theta_estimate(fam)


def test_eigenmeasure_children_sum_to_parent():
    sys_ = fib2_system()
    t = 0.8
    m = cd.transfer_eigenmeasure(sys_, t, depth=5)
    assert np.isclose(m.masses.sum(), 1.0)
    # consistency: mass([w]) = sum of masses of admissible extensions
    m4 = cd.transfer_eigenmeasure(sys_, t, depth=4)
    for w in sys_.admissible_words(4):
        children = sum(m.mass(w + (b,)) for b in sys_.successors(w[-1]))
        assert np.isclose(m4.mass(w), children, rtol=1e-12)


def test_gibbs_exact_for_similarities():
    sys_ = fib2_system()
    m = cd.transfer_eigenmeasure(sys_, 0.7, depth=6)
    lo, hi = cd.gibbs_check(m, sys_, 0.7)
    assert hi / lo <= 1.0 + 1e-9


def test_measure_dimension_bernoulli():
    sys_ = moran_system([0.5, 0.5])
    # uniform: h = log 2, chi = log 2 -> dimension 1
    mu = thermo.InvariantMeasureSpec.bernoulli([0.5, 0.5])
    assert np.isclose(cd.measure_dimension(sys_, mu), 1.0)
    # biased: (0.9, 0.1) -> h/chi = H(0.9)/log 2
    mu2 = thermo.InvariantMeasureSpec.bernoulli([0.9, 0.1])
    H = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    assert np.isclose(cd.measure_dimension(sys_, mu2), H / math.log(2.0))


def test_measure_dimension_markov():
    sys_ = fib2_system()
    P = np.array([[0.5, 0.5], [1.0, 0.0]])
    mu = thermo.InvariantMeasureSpec.markov(P)
    pi = mu.pi
    assert np.allclose(pi @ P, pi)
    h = -(pi[0] * (0.5 * math.log(0.5) * 2))
    chi = -(pi[0] * math.log(0.5) + pi[1] * math.log(1.0 / 3.0))
    assert np.isclose(cd.measure_dimension(sys_, mu), h / chi)


def test_measure_dimension_rejects_bad_support():
    sys_ = fib2_system()
    # Bernoulli with mass on edge 1 needs the (1,1) transition, which A forbids
    mu = thermo.InvariantMeasureSpec.bernoulli([0.5, 0.5])
    with pytest.raises(ValidationError):
        cd.measure_dimension(sys_, mu)


def test_dirac_measure_has_dimension_zero():
    sys_ = moran_system([0.5, 0.5])
    mu = thermo.InvariantMeasureSpec.bernoulli([1.0, 0.0])
    assert cd.measure_dimension(sys_, mu) == 0.0


def test_subsystem_with_dimension_converges():
    gen = cd.power_law_weights(0.5, 2.0)
    res = cd.subsystem_with_dimension(gen, 0.6, tol=1e-4, budget=100_000)
    assert not res.exhausted
    assert res.dim.h_hi <= 0.6 + 1e-12
    assert res.dim.h_lo >= 0.6 - 1e-4 - 1e-12
    # the dimension trace is nondecreasing as edges are added
    hs = [h for _, h in res.trace]
    assert all(a <= b + 1e-12 for a, b in zip(hs, hs[1:]))


def test_subsystem_unreachable_target_flags_exhaustion():
    # sum_k 0.5 k^-2 = pi^2/12 < 1, so dimension 1 is unreachable
    gen = cd.power_law_weights(0.5, 2.0)
    res = cd.subsystem_with_dimension(gen, 1.0, tol=1e-4, budget=5000)
    assert res.exhausted
    assert res.dim.h_hi < 1.0


def test_perron_eigenvalue_known_matrix():
    M = np.array([[1.0, 1.0], [1.0, 0.0]])
    lam, v = thermo.perron_eigenvalue(M)
    assert np.isclose(lam, (1 + math.sqrt(5)) / 2, atol=1e-10)
    assert np.allclose(M @ v, lam * v, atol=1e-9)
