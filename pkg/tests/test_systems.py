import math

import numpy as np
import pytest

import carnotdim as cd
from carnotdim import groups as G
from carnotdim import systems, thermo
from carnotdim.errors import ValidationError


@pytest.fixture(scope="module")
def g():
    return cd.heisenberg(1)


# ---------------------------------------------------------------------------
# Continued-fraction systems
# ---------------------------------------------------------------------------

def test_cf_alphabet_matches_lattice_shell(g):
    params = cd.CfSystemParams(0.5, 6.0)
    Z, T, norms = systems.cf_alphabet(g, params)
    Zs, Ts = cd.lattice_shell_array(g, 3.0, np.nextafter(6.0, np.inf))
    assert Z.shape[0] == Zs.shape[0]
    got = {(int(z[0]), int(z[1]), int(t[0])) for z, t in zip(Z, T)}
    want = {(int(z[0]), int(z[1]), int(t[0])) for z, t in zip(Zs, Ts)}
    assert got == want
    assert (norms >= 3.0 - 1e-12).all() and (norms <= 6.0 + 1e-12).all()
    # deterministic ordering: norms nondecreasing
    assert (np.diff(norms) >= -1e-12).all()


def test_cf_weights_are_pointwise_derivative_bounds(g):
    sys_ = cd.build_cf_system(g, cd.CfSystemParams(0.5, 5.0))
    table = sys_.weights
    rng = np.random.default_rng(0)
    v = sys_.vertices[0]
    Z, T = v.sample(g, 64, rng)
    for k in range(0, sys_.n_edges, 5):
        chain = sys_.edges[k].chain
        deriv = chain.deriv_norm_many(Z, T)
        # phi_gamma(p) = J(gamma * p): the derivative norm is d(gamma*p, o)^-2
        gz = chain.primitives[1].point  # the Translate(gamma) primitive
        MZ, MT = G.mul_many(g, np.tile(gz.z, (64, 1)), np.tile(gz.t, (64, 1)),
                            Z, T)
        oracle = G.norm_many(g, MZ, MT) ** -2.0
        assert np.abs(deriv / oracle - 1.0).max() < 1e-12
        assert (deriv >= table.w_lo[k] * (1 - 1e-12)).all()
        assert (deriv <= table.w_up[k] * (1 + 1e-12)).all()


def test_cf_images_contained_in_domain(g):
    sys_ = cd.build_cf_system(g, cd.CfSystemParams(0.5, 5.0))
    rng = np.random.default_rng(1)
    v = sys_.vertices[0]
    Z, T = v.sample(g, 256, rng)
    for e in sys_.edges[::7]:
        IZ, IT = e.chain.apply_many(Z, T)
        norms = G.norm_many(g, IZ, IT)
        # images land in B(o, 1/(delta - 1/2)) strictly inside B(o, 1/2)
        assert norms.max() <= 1.0 / 2.5 + 1e-12


def test_cf_shell_family_theta(g):
    fam = cd.cf_shell_family(g, 0.5, 30.0, n_shells=6)
    assert fam.tail == "geometric"
    est = cd.theta_estimate(fam)
    # at this truncation the bracket is loose but must already contain Q/2
    assert est.lo <= 2.0 <= est.hi


def test_cf_empty_alphabet_rejected(g):
    with pytest.raises(ValidationError):
        cd.build_cf_system(g, cd.CfSystemParams(0.5, 2.9))


def test_cf_requires_complex_heisenberg():
    hq = cd.quaternionic_heisenberg(1)
    with pytest.raises(ValidationError):
        systems.cf_alphabet(hq, cd.CfSystemParams(0.5, 5.0))


# ---------------------------------------------------------------------------
# Sphere packing
# ---------------------------------------------------------------------------

def test_sphere_packing_separation_and_maximality(g):
    radius, sep = 1.0, 0.25
    Z, T = cd.sphere_packing(g, radius, sep, seed=0, oversample=64)
    assert Z.shape[0] > 10
    # all points on the sphere
    norms = G.norm_many(g, Z, T)
    assert np.abs(norms - radius).max() < 1e-6
    # pairwise separation via brute force
    D = systems._cross_dist(g, Z, T, Z, T)
    np.fill_diagonal(D, np.inf)
    assert D.min() >= sep * (1 - 1e-9)
    # greedy insertion over a dense candidate set is near-maximal
    frac = systems.packing_maximality(g, Z, T, radius, sep, trials=2000)
    assert frac > 0.95


def test_sphere_packing_count_scales_like_Q_minus_1(g):
    """Doubling the radius at fixed separation multiplies counts by ~2^(Q-1)."""
    sep = 0.3
    n1 = cd.sphere_packing(g, 1.0, sep, seed=2)[0].shape[0]
    n2 = cd.sphere_packing(g, 2.0, sep, seed=2)[0].shape[0]
    rate = math.log2(n2 / n1)
    assert abs(rate - (g.Q - 1)) < 0.45


def test_sphere_packing_validation(g):
    with pytest.raises(ValidationError):
        cd.sphere_packing(g, 1.0, 3.0, seed=0)   # separation >= diameter


# ---------------------------------------------------------------------------
# Cantor systems
# ---------------------------------------------------------------------------

def test_cantor_generic_two_points(g):
    # anchors on the x-axis: no twist term, so gauge distances stay small
    pts = [cd.gpoint([3.0, 0.0], [0.0]), cd.gpoint([3.5, 0.0], [0.0])]
    params = cd.CantorSystemParams(points=pts, radii=[0.03, 0.03],
                                   domain_center=cd.gpoint([3.25, 0.0], [0.0]),
                                   domain_radius=1.0)
    sys_ = cd.build_cantor_system(g, params, seed=0)
    assert sys_.n_edges == 2
    # each map fixes its anchor point
    for e, p in zip(sys_.edges, pts):
        q = e.chain.apply(p)
        assert cd.gauge_dist(g, q, p) < 1e-9
    # images are contained and disjoint
    rng = np.random.default_rng(3)
    v = sys_.vertices[0]
    Z, T = v.sample(g, 400, rng)
    images = [e.chain.apply_many(Z, T) for e in sys_.edges]
    for IZ, IT in images:
        assert v.contains(g, IZ, IT, pad=1e-9).all()
    D = systems._cross_dist(g, images[0][0], images[0][1],
                            images[1][0], images[1][1])
    assert D.min() > 0
    db = cd.bowen_dim(sys_)
    assert 0 < db.h_hi < g.Q


def test_cantor_domain_must_avoid_pole(g):
    pts = [cd.gpoint([0.5, 0.0], [0.0])]
    params = cd.CantorSystemParams(points=pts, radii=[0.05],
                                   domain_center=cd.origin(g),
                                   domain_radius=1.0)
    with pytest.raises(ValidationError):
        cd.build_cantor_system(g, params)


def test_cantor_params_validation():
    with pytest.raises(ValidationError):
        cd.CantorSystemParams().mode
    with pytest.raises(ValidationError):
        cd.CantorSystemParams(epsilon=0.9, shells=3).mode
    with pytest.raises(ValidationError):
        cd.CantorSystemParams(epsilon=2.0, shells=0).mode


def test_cantor_shell_mode_structure(g):
    params = cd.CantorSystemParams(epsilon=2.0, shells=3, separation_scale=8.0)
    sys_ = cd.build_cantor_system(g, params, seed=0)
    shells = sys_.cantor_shells
    assert set(shells) == {1, 2, 3}
    # later shells carry more points (larger spheres, finer separation)
    counts = [int((shells == n).sum()) for n in (1, 2, 3)]
    assert counts[0] < counts[1] < counts[2]
    v = sys_.vertices[0]
    assert v.inner_radius > 0
    # map images of sampled annulus points stay inside the annulus
    rng = np.random.default_rng(5)
    Z, T = v.sample(g, 100, rng)
    for k in range(0, sys_.n_edges, 50):
        IZ, IT = sys_.edges[k].chain.apply_many(Z, T)
        assert v.contains(g, IZ, IT, pad=1e-9).all()
    fam = cd.cantor_shell_family(sys_)
    assert fam.tail == "power"
    assert fam.n_shells == 3


def test_cantor_theta_bracket(g):
    """Shell construction with epsilon = 2: theta bracket straddles Q - 1/2."""
    params = cd.CantorSystemParams(epsilon=2.0, shells=6, separation_scale=8.0)
    sys_ = cd.build_cantor_system(g, params, seed=0)
    fam = cd.cantor_shell_family(sys_)
    est = cd.theta_estimate(fam)
    assert est.lo <= 3.5 <= est.hi


def test_cantor_shell_family_requires_shell_mode(g):
    pts = [cd.gpoint([3.0, 0.0], [0.0])]
    params = cd.CantorSystemParams(points=pts, radii=[0.05],
                                   domain_center=cd.gpoint([3.0, 0.0], [0.0]),
                                   domain_radius=1.0)
    sys_ = cd.build_cantor_system(g, params)
    with pytest.raises(ValidationError):
        cd.cantor_shell_family(sys_)


# ---------------------------------------------------------------------------
# Self-similar systems
# ---------------------------------------------------------------------------

def test_build_self_similar_fixed_point_radius(g):
    maps = [(cd.gpoint([1.0, 0.0], [0.0]), 0.5),
            (cd.gpoint([0.0, 1.0], [0.0]), 0.25)]
    sys_ = cd.build_self_similar(g, maps)
    R = sys_.vertices[0].radius
    # R is (just above) the fixed point of R -> max(||p|| + s R)
    assert R >= max(1.0 + 0.5 * R * (1 - 1e-6), 1.0 + 0.25 * R * (1 - 1e-6))
    # images of the vertex ball stay inside it
    rng = np.random.default_rng(4)
    v = sys_.vertices[0]
    Z, T = v.sample(g, 500, rng)
    for e in sys_.edges:
        IZ, IT = e.chain.apply_many(Z, T)
        assert v.contains(g, IZ, IT, pad=1e-6).all()


def test_build_self_similar_rejects_expanding():
    g = cd.heisenberg(1)
    with pytest.raises(ValidationError):
        cd.build_self_similar(g, [(cd.origin(g), 1.2)])


def test_similarity_shell_family_and_theta():
    # shell k: 3^k maps of scale 3^-k  =>  threshold t = 1
    fam = cd.similarity_shell_family(
        [[3.0 ** -k] for k in range(1, 9)])
    fam = thermo.ShellFamily(log_weights=fam.log_weights,
                             counts=[np.array([3.0 ** k]) for k in range(1, 9)],
                             tail="geometric")
    est = cd.theta_estimate(fam)
    assert abs(est.estimate - 1.0) < 1e-6
    with pytest.raises(ValidationError):
        cd.similarity_shell_family([[1.5]])


def test_power_law_weights_stream():
    gen = cd.power_law_weights(0.5, 2.0)
    w = [next(gen) for _ in range(5)]
    assert np.allclose(w, [0.5 * k ** -2.0 for k in range(1, 6)])
    assert all(0 < x < 1 for x in w)
    with pytest.raises(ValidationError):
        next(cd.power_law_weights(0.5, -1.0))
