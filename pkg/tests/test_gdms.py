import numpy as np
import pytest

import carnotdim as cd
from carnotdim.errors import BudgetError, ValidationError

from conftest import fib2_system, moran_system


def test_word_counts_fibonacci():
    sys_ = fib2_system()
    # golden-mean shift: |E_A^n| follows the Fibonacci recursion
    counts = [sys_.count_words(n) for n in range(1, 8)]
    assert counts[0] == 2 and counts[1] == 3
    for a, b, c in zip(counts, counts[1:], counts[2:]):
        assert c == a + b
    words = list(sys_.admissible_words(4))
    assert len(words) == sys_.count_words(4)
    # edge 1 (scale 1/3) cannot follow itself
    assert all((1, 1) not in zip(w, w[1:]) for w in words)


def test_word_budget_enforced():
    sys_ = moran_system([0.5, 0.5, 0.5, 0.5])
    with pytest.raises(BudgetError):
        list(sys_.admissible_words(12, budget=1000))


def test_inadmissible_word_rejected():
    sys_ = fib2_system()
    with pytest.raises(ValidationError):
        sys_.word_map((1, 1))


def test_word_map_composition():
    sys_ = moran_system([0.5, 0.25])
    w = (0, 1, 0)
    chain = sys_.word_map(w)
    p = cd.origin(sys_.group)
    expected = p
    # apply innermost edge first
    for a in reversed(w):
        expected = sys_.edges[a].chain.apply(expected)
    got = chain.apply(p)
    assert np.allclose(got.z, expected.z) and np.allclose(got.t, expected.t)


def test_coding_point_error_bound_decays():
    sys_ = moran_system([0.5, 0.4])
    p1, b1 = sys_.coding_point((0,))
    p5, b5 = sys_.coding_point((0, 1, 0, 1, 0))
    assert b5 < b1
    assert np.isclose(b5 / b1, sys_.contraction ** 4)
    # the coding point of w is inside the image phi_{w_1}(X)
    v = sys_.vertices[0]
    assert cd.gauge_dist(sys_.group, p1, v.center) <= v.radius * (1 + 1e-9)


def test_limit_set_cloud_deterministic_counts_and_containment():
    sys_ = moran_system([0.5, 0.5, 0.5, 0.5])
    cloud = sys_.limit_set_cloud(depth=8)
    assert len(cloud) == 4 ** 8
    v = sys_.vertices[0]
    inside = v.contains(sys_.group, cloud.Z, cloud.T, pad=1e-6)
    assert inside.all()
    assert np.allclose(cloud.err, sys_.contraction ** 8 * 2 * v.radius)


def test_limit_set_chaos_close_to_deterministic():
    sys_ = moran_system([0.5, 0.5])
    det = sys_.limit_set_cloud(depth=10)
    chaos = sys_.limit_set_cloud(depth=10, mode="chaos", samples=2000, seed=1)
    g = sys_.group
    # every chaos point is near some deterministic point (one-sided Hausdorff)
    for k in range(0, len(chaos), 100):
        D = cd.groups.dist_many(g, det.Z, det.T,
                                np.tile(chaos.Z[k], (len(det), 1)),
                                np.tile(chaos.T[k], (len(det), 1)))
        assert D.min() <= 2 * chaos.err[0] + 1e-9


def test_finite_irreducibility():
    sys_ = fib2_system()
    kind, phi = sys_.finite_irreducibility()
    assert kind == "irreducible"
    # every pair (i, j) is connected by some witness word
    for i in range(sys_.n_edges):
        for j in range(sys_.n_edges):
            assert any(all(sys_.admissible_pair(a, b)
                           for a, b in zip((i,) + w + (j,), w + (j,)))
                       for w in phi)
    # maximal single-vertex systems are trivially irreducible with Phi = {()}
    kind2, phi2 = moran_system([0.5, 0.5]).finite_irreducibility()
    assert kind2 == "irreducible" and phi2 == ((),)


def test_reducible_detected():
    g = cd.heisenberg(1)
    maps = [(cd.gpoint([0.0, 0.0], [0.0]), 0.5),
            (cd.gpoint([1.0, 0.0], [0.0]), 0.5)]
    A = np.array([[1, 1], [0, 1]], bool)  # edge 1 can never reach edge 0
    sys_ = cd.build_self_similar(g, maps, incidence=A)
    kind, witness = sys_.finite_irreducibility()
    assert kind == "reducible"


def test_maximalize_preserves_words():
    # well-separated images so the hat vertices are disjoint balls
    g = cd.heisenberg(1)
    maps = [(cd.gpoint([-2.0, 0.0], [0.0]), 0.1),
            (cd.gpoint([2.0, 0.0], [0.0]), 0.1)]
    sys_ = cd.build_self_similar(g, maps,
                                 incidence=np.array([[1, 1], [1, 0]], bool))
    hat = sys_.maximalize()
    assert hat.is_maximal
    assert len(hat.vertices) == sys_.n_edges
    # hat edges = admissible pairs of the original system
    assert hat.n_edges == int(sys_.adjacency().sum())
    # admissible word counts agree one level down
    assert hat.count_words(3) == sys_.count_words(4)


def test_validation_catches_escaping_images():
    g = cd.heisenberg(1)
    v = cd.VertexSet(id="X", center=cd.origin(g), radius=1.0)
    # translate by 5 with scale 0.5 maps B(o,1) far outside itself
    chain = cd.ConformalChain(g, [cd.Translate(cd.gpoint([5.0, 0.0], [0.0])),
                                  cd.Dilate(0.5)])
    edge = cd.EdgeMap(id="bad", src="X", dst="X", chain=chain)
    with pytest.raises(ValidationError):
        cd.GdmsSpec(g, [v], [edge], validate="sampled")


def test_point_cloud_io(tmp_path):
    sys_ = moran_system([0.5, 0.5])
    cloud = sys_.limit_set_cloud(depth=3)
    csv = tmp_path / "cloud.csv"
    cloud.to_csv(csv)
    lines = csv.read_text().strip().split("\n")
    assert lines[0] == "z1,z2,t1,err"
    assert len(lines) == len(cloud) + 1
    ply = tmp_path / "cloud.ply"
    cloud.to_ply(ply)
    text = ply.read_text()
    assert text.startswith("ply\nformat ascii 1.0\n")
    assert f"element vertex {len(cloud)}" in text
