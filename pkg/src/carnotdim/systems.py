"""Builders for concrete conformal systems.

* Continued fractions on the complex Heisenberg group: inversion composed
  with translation by a deep lattice point, acting on the closed ball of
  radius 1/2 around the identity.
* Conformal Cantor systems: inversion-conjugated similarities anchored at a
  prescribed (or shell-packed) point configuration away from the identity.
* Self-similar iterated function systems built from translations, rotations
  and dilations, with exact weights.

Each builder returns a GdmsSpec with an attached WeightTable and, for
infinite-alphabet families, a ShellFamily for theta estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetError, ValidationError
from . import groups as G
from .groups import DEFAULT_LATTICE_BUDGET, GPoint, GroupSpec
from .conformal import ConformalChain, Dilate, Invert, Rotate, Translate
from .gdms import EdgeMap, GdmsSpec, VertexSet
from .thermo import ShellFamily, WeightTable, estimate_distortion


# ---------------------------------------------------------------------------
# Continued fractions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CfSystemParams:
    """Truncated continued-fraction alphabet: lattice points gamma with
    Delta = 5/2 + epsilon <= ||gamma|| <= radius."""

    epsilon: float
    radius: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValidationError("epsilon must be >= 0")
        if self.radius <= self.delta:
            raise ValidationError(
                f"truncation radius must exceed {self.delta:g} = 5/2 + epsilon")

    @property
    def delta(self) -> float:
        return 2.5 + self.epsilon


def cf_alphabet(g: GroupSpec, params: CfSystemParams,
                budget: int = DEFAULT_LATTICE_BUDGET):
    """Lattice alphabet as float arrays (Z, T, norms), sorted by (norm, coords)."""
    if g.iwasawa_kind != "heis_c":
        raise ValidationError("continued fractions require a complex Heisenberg group")
    Z, T = G.lattice_shell_array(g, params.delta,
                                 np.nextafter(params.radius, np.inf), budget)
    if Z.shape[0] == 0:
        raise ValidationError("empty continued-fraction alphabet")
    Zf, Tf = Z.astype(float), T.astype(float)
    norms = G.norm_many(g, Zf, Tf)
    coords = np.concatenate([Z, T], axis=1)
    order = np.lexsort(np.concatenate([coords.T[::-1], norms[None, :]], axis=0))
    return Zf[order], Tf[order], norms[order]


def build_cf_system(g: GroupSpec, params: CfSystemParams,
                    budget: int = DEFAULT_LATTICE_BUDGET,
                    distortion_seed: int = 0) -> GdmsSpec:
    """Maximal IFS of maps (inversion o translation-by-gamma) on B(o, 1/2).

    For every alphabet point the pole sits at distance ||gamma|| >= 5/2 from
    the center, so sup-norm brackets are exact:
    w_lo = (||gamma|| + 1/2)^-2, w_up = (||gamma|| - 1/2)^-2.  Containment
    in the domain ball holds exactly (images lie within 1/(2 + epsilon) of
    the center), so no sampled validation is needed.
    """
    Z, T, norms = cf_alphabet(g, params, budget)
    o = G.origin(g)
    vertex = VertexSet(id="X", center=o, radius=0.5)
    edges = []
    for k in range(Z.shape[0]):
        gamma = G.gpoint(Z[k], T[k])
        coords = [int(round(v)) for v in np.concatenate([Z[k], T[k]])]
        chain = ConformalChain(g, [Invert(), Translate(gamma)])
        edges.append(EdgeMap(id="g" + ",".join(str(c) for c in coords),
                             src="X", dst="X", chain=chain))
    w_lo = 1.0 / (norms + 0.5) ** 2
    w_up = 1.0 / (norms - 0.5) ** 2
    contraction = float(w_up.max())
    sys = GdmsSpec(g, [vertex], edges, incidence=None, contraction=contraction,
                   validate="none")
    distortion = estimate_distortion(sys, w_up, seed=distortion_seed)
    sys.weights = WeightTable(w_lo, w_up, distortion=distortion,
                              lower_is_inf=True, exact=False)
    return sys


def cf_shell_family(g: GroupSpec, epsilon: float, r_max: float,
                    n_shells: int = 8, bins: int = 512,
                    budget: int = DEFAULT_LATTICE_BUDGET) -> ShellFamily:
    """Shell decomposition of the full (untruncated) alphabet up to r_max.

    Shell boundaries are geometric between Delta and r_max; within a shell
    the mid weights (||gamma||^2 - 1/4)^-1 are compressed into a log-binned
    norm histogram so that deep truncations never materialize the lattice.
    """
    params = CfSystemParams(epsilon, r_max)
    if n_shells < 2:
        raise ValidationError("need at least 2 shells")
    radii = np.geomspace(params.delta, r_max, n_shells + 1)
    log_weights: List[np.ndarray] = []
    counts: List[np.ndarray] = []
    for k in range(n_shells):
        hi = np.nextafter(radii[k + 1], np.inf) if k == n_shells - 1 else radii[k + 1]
        edges_k, counts_k = G.lattice_norm_histogram(g, radii[k], hi, bins=bins,
                                                     budget=budget)
        keep = counts_k > 0
        if not keep.any():
            raise ValidationError(f"shell {k} of the lattice alphabet is empty")
        centers = np.sqrt(edges_k[:-1] * edges_k[1:])[keep]
        log_weights.append(-np.log(centers ** 2 - 0.25))
        counts.append(counts_k[keep])
    return ShellFamily(log_weights=log_weights, counts=counts, tail="geometric")


# ---------------------------------------------------------------------------
# Conformal Cantor systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CantorSystemParams:
    """Either an explicit configuration (points + radii + domain ball) or a
    shell construction (epsilon > 1, number of shells)."""

    points: Optional[Sequence[GPoint]] = None
    radii: Optional[Sequence[float]] = None
    domain_center: Optional[GPoint] = None
    domain_radius: Optional[float] = None
    epsilon: Optional[float] = None
    shells: Optional[int] = None
    # scales the canonical shell separation (n+2)^-epsilon; > 1 thins the
    # packing uniformly across shells, preserving the count growth exponent
    separation_scale: float = 1.0

    @property
    def mode(self) -> str:
        generic = self.points is not None
        shell = self.epsilon is not None
        if generic == shell:
            raise ValidationError(
                "specify either explicit points/radii or epsilon/shells, not both")
        if generic:
            if self.radii is None or self.domain_center is None or self.domain_radius is None:
                raise ValidationError("explicit mode needs points, radii and a domain ball")
            if len(self.points) != len(self.radii):
                raise ValidationError("points/radii length mismatch")
            return "generic"
        if self.epsilon <= 1:
            raise ValidationError("shell construction needs epsilon > 1")
        if self.shells is None or self.shells < 1:
            raise ValidationError("shell construction needs >= 1 shells")
        return "shell"


def _inversion_anchored_chain(g: GroupSpec, p: GPoint, r: float) -> ConformalChain:
    """translate(p) o dilate(r) o translate(J(p)^{-1}) o J  -- fixes p."""
    J = ConformalChain(g, [Invert()])
    Jp = J.apply(p)
    return ConformalChain(g, [Translate(p), Dilate(r),
                              Translate(G.group_inv(g, Jp)), Invert()])


def inversion_image_diameter(g: GroupSpec, vertex: VertexSet, samples: int = 2048,
                             seed: int = 0) -> float:
    """Sampled diameter of J(X) for a vertex set X avoiding the identity."""
    rng = np.random.default_rng(seed)
    Z, T = vertex.sample(g, samples, rng)
    J = ConformalChain(g, [Invert()])
    JZ, JT = J.apply_many(Z, T)
    half = Z.shape[0] // 2
    d = G.dist_many(g, JZ[:half], JT[:half], JZ[half:2 * half], JT[half:2 * half])
    ref = G.dist_many(g, JZ, JT, JZ[:1].repeat(Z.shape[0], 0),
                      JT[:1].repeat(Z.shape[0], 0))
    return float(max(d.max(), 2 * ref.max()))


def sphere_packing(g: GroupSpec, radius: float, separation: float, seed: int,
                   oversample: int = 16, max_points: int = 2_000_000):
    """Greedy packing of the gauge sphere of the given radius at the given
    gauge separation.

    Candidates are seeded sphere samples inserted in order whenever they
    keep all pairwise gauge distances >= separation; a horizontal-coordinate
    grid (cell size = separation) limits each insertion to a constant number
    of exact distance checks, since |z(p) - z(q)| <= d(p, q).
    """
    if not (0 < separation < 2 * radius):
        raise ValidationError("separation must be in (0, 2*radius)")
    rng = np.random.default_rng(seed)
    area = (radius / separation) ** (g.Q - 1)
    n_cand = int(min(max(oversample * area, 1024), max_points))
    Z, T = G.sample_sphere(g, G.origin(g), radius, n_cand, rng)
    # gauge distance dominates |z1 - z2| componentwise; conflicting pairs also
    # satisfy |t1 - t2| <= sep^2 + 2 * radius * sep (twist bound), so a grid on
    # (z / sep, t / (sep^2 + 2 R sep)) confines conflicts to the 3^(m1+m2) block
    bnorm = max(float(np.linalg.norm(Bi, 2)) for Bi in g.B)
    h_t = separation ** 2 + bnorm * radius * separation
    keys = np.concatenate([np.floor(Z / separation), np.floor(T / h_t)],
                          axis=1).astype(np.int64)
    dims = g.m1 + g.m2
    deltas = np.stack(np.meshgrid(*([[-1, 0, 1]] * dims), indexing="ij"),
                      axis=-1).reshape(-1, dims)
    B = [[list(row) for row in Bi] for Bi in g.B]  # python floats: fast scalar math
    sep4 = separation ** 4
    cell = {}
    accepted: List[int] = []
    Zl, Tl = Z.tolist(), T.tolist()
    keyl = [tuple(k) for k in keys.tolist()]
    deltal = [tuple(d) for d in deltas.tolist()]
    m1, m2 = g.m1, g.m2
    for i in range(n_cand):
        key = keyl[i]
        zi, ti = Zl[i], Tl[i]
        ok = True
        for dk in deltal:
            bucket = cell.get(tuple(a + b for a, b in zip(key, dk)))
            if not bucket:
                continue
            for j in bucket:
                zj, tj = Zl[j], Tl[j]
                z2 = 0.0
                for a in range(m1):
                    v = zj[a] - zi[a]
                    z2 += v * v
                t2 = 0.0
                for s in range(m2):
                    tau = tj[s] - ti[s]
                    Bs = B[s]
                    for a in range(m1):
                        row = Bs[a]
                        zja = zj[a]
                        for b in range(m1):
                            tau -= row[b] * zi[b] * zja
                    t2 += tau * tau
                if z2 * z2 + t2 < sep4:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            cell.setdefault(key, []).append(i)
            accepted.append(i)
    if not accepted:
        raise ValidationError("packing produced no points")
    idx = np.asarray(accepted)
    return Z[idx], T[idx]


def packing_maximality(g: GroupSpec, Z: np.ndarray, T: np.ndarray, radius: float,
                       separation: float, trials: int = 10_000, seed: int = 1):
    """Fraction of fresh sphere samples within `separation` of a packed point."""
    rng = np.random.default_rng(seed)
    QZ, QT = G.sample_sphere(g, G.origin(g), radius, trials, rng)
    covered = 0
    block = 256
    for s in range(0, trials, block):
        qz, qt = QZ[s:s + block], QT[s:s + block]
        dmin = np.full(qz.shape[0], np.inf)
        for c in range(0, Z.shape[0], 4096):
            cz, ct = Z[c:c + 4096], T[c:c + 4096]
            d = _cross_dist(g, qz, qt, cz, ct)
            dmin = np.minimum(dmin, d.min(axis=1))
        covered += int((dmin < separation).sum())
    return covered / trials


def _cross_dist(g: GroupSpec, Z1, T1, Z2, T2):
    """Pairwise gauge distances, shape (len(Z1), len(Z2))."""
    Z, T = G.mul_many(g, -Z1[:, None, :], -T1[:, None, :], Z2[None, :, :], T2[None, :, :])
    return G.norm_many(g, Z, T)


def build_cantor_system(g: GroupSpec, params: CantorSystemParams,
                        seed: int = 0, validate: str = "sampled",
                        samples: int = 1000) -> GdmsSpec:
    """Cantor-type maximal IFS of inversion-anchored similarities.

    Explicit mode takes the point/radius configuration as given (sampled
    validation catches escapes).  Shell mode places the points by greedy
    packing of the gauge spheres of radii d_n = sum_{j<=n} j^-epsilon at
    separation (n+2)^-epsilon, with map radii separation_n / (10 d0) where
    d0 bounds the diameter of the inverted domain; the domain is the
    annulus around the shells, which keeps the inversion pole (the
    identity) outside.
    """
    mode = params.mode
    if mode == "generic":
        center, radius = params.domain_center, params.domain_radius
        vertex = VertexSet(id="X", center=center, radius=radius)
        if G.gauge_norm(g, center) <= radius:
            raise ValidationError("domain must not contain the identity (inversion pole)")
        pts = list(params.points)
        radii = [float(r) for r in params.radii]
        shell_of = None
    else:
        eps, n_shells = float(params.epsilon), int(params.shells)
        d = np.cumsum(np.arange(1, n_shells + 1, dtype=float) ** -eps)
        inner = d[0] - 0.1
        outer = d[-1] + 0.1
        vertex = VertexSet(id="X", center=G.origin(g), radius=outer,
                           inner_radius=inner)
        d0 = 2.0 / inner  # diam J(X) <= 2 / inner for the annulus around o
        if params.separation_scale < 1.0:
            raise ValidationError("separation_scale must be >= 1")
        pts, radii, shell_of = [], [], []
        for n in range(1, n_shells + 1):
            sep = params.separation_scale * (n + 2.0) ** -eps
            Zp, Tp = sphere_packing(g, float(d[n - 1]), sep, seed=seed + n)
            if Zp.shape[0] < 1:
                raise ValidationError(f"shell {n} packing produced < 1 point")
            r_n = sep / (10.0 * d0)
            for k in range(Zp.shape[0]):
                pts.append(G.gpoint(Zp[k], Tp[k]))
                radii.append(r_n)
                shell_of.append(n)
    edges = []
    for k, (p, r) in enumerate(zip(pts, radii)):
        if not (0 < r < 1):
            raise ValidationError(f"map radius {r:g} out of (0,1)")
        chain = _inversion_anchored_chain(g, p, r)
        edges.append(EdgeMap(id=f"c{k}", src="X", dst="X", chain=chain))
    sys = GdmsSpec(g, [vertex], edges, incidence=None, validate=validate,
                   samples=samples, seed=seed,
                   contraction=None if validate == "sampled" else 0.9)
    if shell_of is not None:
        sys.cantor_shells = np.asarray(shell_of)
    return sys


def cantor_shell_family(sys: GdmsSpec) -> ShellFamily:
    """Per-shell mid-weight compression of a shell-mode Cantor system."""
    shells = getattr(sys, "cantor_shells", None)
    if shells is None:
        raise ValidationError("system was not built in shell mode")
    from .thermo import ensure_weights
    table = ensure_weights(sys)
    logw = np.log(table.w_mid)
    ns = np.unique(shells)
    log_weights = [logw[shells == n] for n in ns]
    return ShellFamily(log_weights=log_weights, counts=None, tail="power",
                       labels=np.log(ns + 2.0))


# ---------------------------------------------------------------------------
# Self-similar systems
# ---------------------------------------------------------------------------

def build_self_similar(g: GroupSpec, maps: Sequence[Tuple],
                       incidence: Optional[np.ndarray] = None) -> GdmsSpec:
    """Maximal (or explicitly restricted) similarity IFS from
    (translation point, scale[, rotation]) triples, with exact weights.

    The single vertex ball around the identity is auto-fitted: the radius is
    the fixed point of R -> max_e (||p_e|| + s_e R), found by <= 50
    inflation steps.
    """
    if not maps:
        raise ValidationError("need at least one map")
    chains = []
    scales = []
    offsets = []
    for spec in maps:
        if len(spec) == 2:
            p, s = spec
            theta = None
        elif len(spec) == 3:
            p, s, theta = spec
        else:
            raise ValidationError("map spec must be (point, scale[, rotation])")
        if not (0 < s < 1):
            raise ValidationError(f"scale {s:g} is not contractive")
        prims = [Translate(p)]
        if theta is not None:
            prims.append(Rotate(theta=float(theta)) if np.isscalar(theta)
                         else Rotate(matrix=theta))
        prims.append(Dilate(float(s)))
        chains.append(ConformalChain(g, prims))
        scales.append(float(s))
        offsets.append(G.gauge_norm(g, p))
    scales = np.asarray(scales)
    offsets = np.asarray(offsets)
    R = float(offsets.max())
    for _ in range(50):
        R_new = float((offsets + scales * R).max())
        if R_new <= R * (1 + 1e-12):
            break
        R = R_new
    R = max(R * (1 + 1e-9), 1e-6)
    vertex = VertexSet(id="X", center=G.origin(g), radius=R)
    edges = [EdgeMap(id=f"s{k}", src="X", dst="X", chain=c)
             for k, c in enumerate(chains)]
    sys = GdmsSpec(g, [vertex], edges, incidence=incidence,
                   contraction=float(scales.max()), validate="none")
    sys.weights = WeightTable(scales.copy(), scales.copy(), distortion=1.0,
                              lower_is_inf=True, exact=True)
    return sys


def similarity_shell_family(scales_by_shell: Sequence[Sequence[float]],
                            tail: str = "geometric") -> ShellFamily:
    """ShellFamily for an infinite similarity generator listed shell by shell."""
    log_weights = []
    for shell in scales_by_shell:
        s = np.asarray(shell, float)
        if (s <= 0).any() or (s >= 1).any():
            raise ValidationError("similarity scales must lie in (0,1)")
        log_weights.append(np.log(s))
    return ShellFamily(log_weights=log_weights, counts=None, tail=tail)


def power_law_weights(c: float, exponent: float, start: int = 1):
    """Infinite decreasing weight stream w_k = c * k^-exponent (clipped below 1)."""
    if exponent <= 0 or c <= 0:
        raise ValidationError("need positive c and exponent")
    k = start
    while True:
        w = c * float(k) ** -exponent
        if w < 1.0:
            yield w
        k += 1
