"""Graph directed Markov systems: alphabets, words, coding map, limit sets.

A system is a directed multigraph whose vertices carry compact gauge balls
(optionally with a concentric open hole removed, i.e. an annulus) and whose
edges carry contracting conformal chains mapping the target-vertex set into
the source-vertex set.  An incidence matrix restricts which edges may
follow which; "maximal" incidence allows every composable pair.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetError, ValidationError
from . import groups as G
from .groups import GPoint, GroupSpec
from .conformal import ConformalChain, compose_all

Word = Tuple[int, ...]  # edge indices; () is the empty word

DEFAULT_WORD_BUDGET = 1_000_000


@dataclass(frozen=True)
class VertexSet:
    """Closed gauge ball (center, radius), minus the open concentric ball of
    inner_radius when inner_radius > 0 (an annulus)."""

    id: str
    center: GPoint
    radius: float
    inner_radius: float = 0.0

    def __post_init__(self):
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValidationError(f"vertex {self.id!r}: radius must be positive")
        if not (0 <= self.inner_radius < self.radius):
            raise ValidationError(f"vertex {self.id!r}: need 0 <= inner_radius < radius")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, g: GroupSpec, Z, T, pad: float = 1e-9) -> np.ndarray:
        d = G.dist_many(g, self.center.z, self.center.t, Z, T)
        ok = d <= self.radius + pad
        if self.inner_radius > 0:
            ok &= d >= self.inner_radius - pad
        return ok

    def sample(self, g: GroupSpec, k: int, rng: np.random.Generator):
        if self.inner_radius == 0:
            return G.sample_ball(g, self.center, self.radius, k, rng)
        frac = self.inner_radius / self.radius
        out_Z = np.empty((0, g.m1)); out_T = np.empty((0, g.m2))
        while out_Z.shape[0] < k:
            m = max(2 * (k - out_Z.shape[0]), 64)
            Z, T = G.sample_box(g, m, rng, 1.0)
            norms = G.norm_many(g, Z, T)
            keep = (norms <= 1.0) & (norms >= frac)
            Z, T = Z[keep], T[keep]
            out_Z = np.concatenate([out_Z, Z]); out_T = np.concatenate([out_T, T])
        Z, T = G.dilate_many(g, self.radius, out_Z[:k], out_T[:k])
        return G.mul_many(g, self.center.z, self.center.t, Z, T)


@dataclass(frozen=True)
class EdgeMap:
    id: str
    src: str  # i(e): the vertex the image lands in
    dst: str  # t(e): the domain vertex
    chain: ConformalChain


class GdmsSpec:
    """Immutable graph directed Markov system."""

    def __init__(self, group: GroupSpec, vertices: Sequence[VertexSet],
                 edges: Sequence[EdgeMap], incidence: Optional[np.ndarray] = None,
                 contraction: Optional[float] = None, weights=None,
                 validate: str = "sampled", samples: int = 1000, seed: int = 0):
        self.group = group
        self.vertices: Tuple[VertexSet, ...] = tuple(vertices)
        self.edges: Tuple[EdgeMap, ...] = tuple(edges)
        if not self.vertices or not self.edges:
            raise ValidationError("a system needs at least one vertex and one edge")
        self.vertex_index: Dict[str, int] = {v.id: k for k, v in enumerate(self.vertices)}
        if len(self.vertex_index) != len(self.vertices):
            raise ValidationError("duplicate vertex ids")
        self.edge_index: Dict[str, int] = {e.id: k for k, e in enumerate(self.edges)}
        if len(self.edge_index) != len(self.edges):
            raise ValidationError("duplicate edge ids")
        for e in self.edges:
            if e.src not in self.vertex_index or e.dst not in self.vertex_index:
                raise ValidationError(f"edge {e.id!r} references unknown vertices")
        self.src_idx = np.array([self.vertex_index[e.src] for e in self.edges])
        self.dst_idx = np.array([self.vertex_index[e.dst] for e in self.edges])

        if incidence is not None:
            A = np.asarray(incidence)
            if A.shape != (len(self.edges), len(self.edges)):
                raise ValidationError("incidence matrix must be |E| x |E|")
            A = A.astype(bool)
            bad = A & (self.dst_idx[:, None] != self.src_idx[None, :])
            if bad.any():
                a, b = np.argwhere(bad)[0]
                raise ValidationError(
                    f"incidence allows {self.edges[a].id!r}->{self.edges[b].id!r} "
                    "but t(a) != i(b)")
            self.incidence = A
        else:
            self.incidence = None  # maximal: admissible iff t(a) == i(b)

        self.weights = weights  # optional thermo.WeightTable, attached by builders
        self.max_diam = max(v.diameter for v in self.vertices)

        self._validate_geometry()
        if validate == "sampled":
            est = self._validate_sampled(samples, seed, contraction)
            self.contraction = contraction if contraction is not None else est
        elif validate == "none":
            if contraction is None:
                raise ValidationError("validate='none' requires an explicit contraction bound")
            self.contraction = contraction
        else:
            raise ValidationError(f"unknown validation mode {validate!r}")
        if not (0 < self.contraction < 1):
            raise ValidationError(
                f"contraction bound must be in (0,1), got {self.contraction:g}")

    # -- validation --------------------------------------------------------

    def _validate_geometry(self):
        g = self.group
        for a in range(len(self.vertices)):
            for b in range(a + 1, len(self.vertices)):
                va, vb = self.vertices[a], self.vertices[b]
                d = G.gauge_dist(g, va.center, vb.center)
                if d <= va.radius + vb.radius:
                    raise ValidationError(
                        f"vertex sets {va.id!r} and {vb.id!r} are not disjoint")

    def _validate_sampled(self, samples: int, seed: int, contraction) -> float:
        """Sampled containment and contraction check; returns a Lipschitz estimate."""
        g = self.group
        rng = np.random.default_rng(seed)
        lip = 0.0
        cache = {}
        for e in self.edges:
            v_dom = self.vertices[self.vertex_index[e.dst]]
            v_img = self.vertices[self.vertex_index[e.src]]
            key = e.dst
            if key not in cache:
                cache[key] = v_dom.sample(g, samples, rng)
            Z, T = cache[key]
            FZ, FT = e.chain.apply_many(Z, T)
            if not np.isfinite(FZ).all() or not np.isfinite(FT).all():
                raise ValidationError(f"edge {e.id!r}: map blows up on its domain")
            ok = v_img.contains(g, FZ, FT)
            if not ok.all():
                d = G.dist_many(g, v_img.center.z, v_img.center.t, FZ, FT)
                raise ValidationError(
                    f"edge {e.id!r}: image escapes X_{e.src!r} "
                    f"(worst distance {float(d.max()):g} > radius {v_img.radius:g})")
            # Lipschitz from consecutive sample pairs.
            half = Z.shape[0] // 2
            dp = G.dist_many(g, Z[:half], T[:half], Z[half:2 * half], T[half:2 * half])
            dF = G.dist_many(g, FZ[:half], FT[:half], FZ[half:2 * half], FT[half:2 * half])
            mask = dp > 1e-9
            if mask.any():
                ratio = float((dF[mask] / dp[mask]).max())
                lip = max(lip, ratio)
                if contraction is not None and ratio > contraction + 1e-9:
                    raise ValidationError(
                        f"edge {e.id!r}: sampled Lipschitz {ratio:g} exceeds the "
                        f"declared contraction bound {contraction:g}")
        est = min(lip * 1.05, 0.999999)
        if lip >= 1.0:
            raise ValidationError(f"system is not contracting (sampled Lipschitz {lip:g})")
        return est

    # -- basic structure ---------------------------------------------------

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_maximal(self) -> bool:
        return self.incidence is None

    def admissible_pair(self, a: int, b: int) -> bool:
        if self.incidence is None:
            return self.dst_idx[a] == self.src_idx[b]
        return bool(self.incidence[a, b])

    def successors(self, a: int) -> np.ndarray:
        if self.incidence is None:
            return np.flatnonzero(self.src_idx == self.dst_idx[a])
        return np.flatnonzero(self.incidence[a])

    def adjacency(self) -> np.ndarray:
        if self.incidence is None:
            return self.dst_idx[:, None] == self.src_idx[None, :]
        return self.incidence

    # -- words -------------------------------------------------------------

    def count_words(self, n: int) -> int:
        if n == 0:
            return 1
        adj = self.adjacency()
        c = np.ones(self.n_edges, dtype=float)
        for _ in range(n - 1):
            c = adj @ c
        return int(round(float(c.sum())))

    def admissible_words(self, n: int, budget: int = DEFAULT_WORD_BUDGET) -> Iterator[Word]:
        """Words of E_A^n in lexicographic edge order."""
        if n < 0:
            raise ValidationError("word length must be >= 0")
        count = self.count_words(n)
        if count > budget:
            raise BudgetError(f"E_A^{n} has ~{count} words (budget {budget})",
                              estimate=count, budget=budget)
        if n == 0:
            yield ()
            return
        succ = [self.successors(a) for a in range(self.n_edges)]

        def rec(prefix: List[int]):
            if len(prefix) == n:
                yield tuple(prefix)
                return
            options = range(self.n_edges) if not prefix else succ[prefix[-1]]
            for b in options:
                prefix.append(int(b))
                yield from rec(prefix)
                prefix.pop()

        yield from rec([])

    def check_word(self, word: Word):
        for a, b in zip(word, word[1:]):
            if not self.admissible_pair(a, b):
                raise ValidationError(
                    f"word is not admissible at {self.edges[a].id!r}->{self.edges[b].id!r}")

    def word_map(self, word: Word) -> ConformalChain:
        """The composed chain phi_w = phi_{w1} o ... o phi_{wn}."""
        if not word:
            raise ValidationError("word_map needs a nonempty word")
        self.check_word(word)
        return compose_all([self.edges[a].chain for a in word])

    def coding_point(self, word: Word, anchor: Optional[GPoint] = None):
        """(phi_w(anchor), error bound) with the bound s^n * max diam(X_v)."""
        if not word:
            raise ValidationError("coding_point needs a nonempty word")
        self.check_word(word)
        v_dom = self.vertices[self.dst_idx[word[-1]]]
        if anchor is None:
            anchor = v_dom.center
        else:
            ok = v_dom.contains(self.group, anchor.z[None, :], anchor.t[None, :])
            if not ok[0]:
                raise ValidationError("anchor lies outside the domain vertex set")
        point = self.word_map(word).apply(anchor)
        bound = self.contraction ** len(word) * self.max_diam
        return point, bound

    # -- limit set ---------------------------------------------------------

    def limit_set_cloud(self, depth: int, mode: str = "deterministic",
                        samples: int = 10000, seed: int = 0,
                        markov: Optional[np.ndarray] = None,
                        budget: int = DEFAULT_WORD_BUDGET) -> "PointCloud":
        if depth < 0:
            raise ValidationError("depth must be >= 0")
        g = self.group
        if depth == 0:
            Z = np.stack([v.center.z for v in self.vertices])
            T = np.stack([v.center.t for v in self.vertices])
            err = np.full(Z.shape[0], self.max_diam)
            return PointCloud(g, Z, T, err)
        bound = self.contraction ** depth * self.max_diam
        if mode == "deterministic":
            count = self.count_words(depth)
            if count > budget:
                raise BudgetError(f"deterministic cloud needs {count} words (budget {budget})",
                                  estimate=count, budget=budget)
            centers_Z = np.stack([v.center.z for v in self.vertices])
            centers_T = np.stack([v.center.t for v in self.vertices])
            # level-k block for edge a = {phi_w(center) : w in E_A^k, w_1 = a}
            blocks = []
            for a, e in enumerate(self.edges):
                d = self.dst_idx[a]
                blocks.append(e.chain.apply_many(centers_Z[d][None, :],
                                                 centers_T[d][None, :]))
            for _ in range(depth - 1):
                new_blocks = []
                for a in range(self.n_edges):
                    succ = self.successors(a)
                    Zs = np.concatenate([blocks[b][0] for b in succ], axis=0)
                    Ts = np.concatenate([blocks[b][1] for b in succ], axis=0)
                    new_blocks.append(self.edges[a].chain.apply_many(Zs, Ts))
                blocks = new_blocks
            Z = np.concatenate([blk[0] for blk in blocks], axis=0)
            T = np.concatenate([blk[1] for blk in blocks], axis=0)
            return PointCloud(g, Z, T, np.full(Z.shape[0], bound))
        elif mode == "chaos":
            rng = np.random.default_rng(seed)
            words = self._sample_words(depth, samples, rng, markov)
            # evaluate phi_w(center) by applying edges from the innermost position out
            dst_last = self.dst_idx[words[:, -1]]
            Z = np.stack([v.center.z for v in self.vertices])[dst_last]
            T = np.stack([v.center.t for v in self.vertices])[dst_last]
            for j in range(depth - 1, -1, -1):
                col = words[:, j]
                for a in np.unique(col):
                    mask = col == a
                    Za, Ta = self.edges[int(a)].chain.apply_many(Z[mask], T[mask])
                    Z[mask] = Za; T[mask] = Ta
            return PointCloud(g, Z, T, np.full(Z.shape[0], bound))
        raise ValidationError(f"unknown limit-set mode {mode!r}")

    def _sample_words(self, depth: int, samples: int, rng: np.random.Generator,
                      markov: Optional[np.ndarray]) -> np.ndarray:
        nE = self.n_edges
        words = np.empty((samples, depth), dtype=np.int64)
        if markov is None:
            succ = [self.successors(a) for a in range(nE)]
            for a, s in enumerate(succ):
                if s.size == 0:
                    raise ValidationError(f"edge {self.edges[a].id!r} has no successors")
            words[:, 0] = rng.integers(0, nE, size=samples)
            for j in range(1, depth):
                prev = words[:, j - 1]
                for a in np.unique(prev):
                    mask = prev == a
                    words[mask, j] = rng.choice(succ[int(a)], size=int(mask.sum()))
        else:
            P = np.asarray(markov, float)
            if P.shape != (nE, nE):
                raise ValidationError("Markov matrix must be |E| x |E|")
            if not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
                raise ValidationError("Markov matrix rows must be stochastic")
            adj = self.adjacency()
            if ((P > 0) & ~adj).any():
                raise ValidationError("Markov matrix support violates the incidence")
            pi = stationary_distribution(P)
            words[:, 0] = rng.choice(nE, size=samples, p=pi)
            for j in range(1, depth):
                prev = words[:, j - 1]
                for a in np.unique(prev):
                    mask = prev == a
                    words[mask, j] = rng.choice(nE, size=int(mask.sum()), p=P[int(a)])
        return words

    # -- irreducibility and maximalization ---------------------------------

    def finite_irreducibility(self, max_pairs: int = 4_000_000):
        """Strong-connectivity test with a BFS witness set Phi.

        Returns ("irreducible", Phi) where Phi is a tuple of words such that
        for all edges i, j some w in Phi makes i w j admissible, or
        ("reducible", (i, j)) exhibiting an unconnectable edge pair.
        """
        nE = self.n_edges
        if self.is_maximal and len(self.vertices) == 1:
            return ("irreducible", ((),))
        if nE * nE > max_pairs:
            raise BudgetError(f"irreducibility witness over {nE}^2 pairs exceeds budget",
                              estimate=nE * nE, budget=max_pairs)
        succ = [self.successors(a) for a in range(nE)]
        phi = set()
        for i in range(nE):
            # BFS over edges reachable after i
            parent = {int(b): None for b in succ[i]}
            frontier = deque(int(b) for b in succ[i])
            seen = set(parent)
            while frontier:
                x = frontier.popleft()
                for y in succ[x]:
                    y = int(y)
                    if y not in seen:
                        seen.add(y); parent[y] = x
                        frontier.append(y)
            for j in range(nE):
                if j not in seen:
                    return ("reducible", (self.edges[i].id, self.edges[j].id))
            for j in range(nE):
                # reconstruct the connecting word between i and j (exclusive)
                path = []
                x = j
                while parent[x] is not None:
                    x = parent[x]
                    path.append(x)
                phi.add(tuple(reversed(path)))
        return ("irreducible", tuple(sorted(phi)))

    def maximalize(self) -> "GdmsSpec":
        """Hat construction: vertices = old edges, edges = admissible pairs."""
        g = self.group
        new_vertices = []
        enclosing = {}
        for a, e in enumerate(self.edges):
            v_dom = self.vertices[self.dst_idx[a]]
            center = e.chain.apply(v_dom.center)
            try:
                _, w_up = e.chain.deriv_norm_sup(v_dom.center, v_dom.radius, "bracketed")
            except Exception:
                _, w_up = e.chain.deriv_norm_sup(v_dom.center, v_dom.radius, "sampled",
                                                 k=2048, seed=7, distortion=1.5)
            radius = w_up * v_dom.radius
            enclosing[a] = VertexSet(id=f"v[{e.id}]", center=center, radius=radius)
            new_vertices.append(enclosing[a])
        new_edges = []
        for a in range(self.n_edges):
            for b in self.successors(a):
                new_edges.append(EdgeMap(id=f"{self.edges[a].id}|{self.edges[int(b)].id}",
                                         src=f"v[{self.edges[a].id}]",
                                         dst=f"v[{self.edges[int(b)].id}]",
                                         chain=self.edges[a].chain))
        return GdmsSpec(g, new_vertices, new_edges, incidence=None,
                        contraction=self.contraction, validate="none")

    def __repr__(self):
        inc = "maximal" if self.is_maximal else "explicit"
        return (f"GdmsSpec({len(self.vertices)} vertices, {self.n_edges} edges, "
                f"{inc}, s={self.contraction:g})")


def stationary_distribution(P: np.ndarray, iters: int = 100_000,
                            tol: float = 1e-14) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix by power iteration."""
    P = np.asarray(P, float)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(iters):
        nxt = pi @ P
        if np.abs(nxt - pi).max() < tol:
            return nxt / nxt.sum()
        pi = nxt
    return pi / pi.sum()


@dataclass
class PointCloud:
    """Limit-set sample: coordinates plus per-point error bounds."""

    group: GroupSpec
    Z: np.ndarray
    T: np.ndarray
    err: np.ndarray

    def __len__(self):
        return self.Z.shape[0]

    def header(self) -> List[str]:
        g = self.group
        return ([f"z{j+1}" for j in range(g.m1)] +
                [f"t{j+1}" for j in range(g.m2)] + ["err"])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.header()) + "\n")
            for k in range(len(self)):
                row = [f"{v:.17g}" for v in self.Z[k]] + \
                      [f"{v:.17g}" for v in self.T[k]] + [f"{self.err[k]:.17g}"]
                fh.write(",".join(row) + "\n")

    def to_ply(self, path):
        """ASCII PLY of the first three coordinates."""
        coords = np.concatenate([self.Z, self.T], axis=1)
        if coords.shape[1] < 3:
            coords = np.pad(coords, ((0, 0), (0, 3 - coords.shape[1])))
        with open(path, "w") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(self)}\n")
            fh.write("property double x\nproperty double y\nproperty double z\n")
            fh.write("end_header\n")
            for k in range(len(self)):
                fh.write(" ".join(f"{v:.17g}" for v in coords[k, :3]) + "\n")
