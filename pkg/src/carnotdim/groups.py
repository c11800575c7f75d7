"""Step-2 Carnot group arithmetic, gauge metric, and integer-lattice operations.

A step-2 Carnot group is coordinatized as R^{m1} x R^{m2} with product

    (z, t) * (w, s) = (z + w, t + s + ((B^i z) . w)_{i=1..m2})

for skew-symmetric structure matrices B^1..B^{m2}.  The complex and
quaternionic Heisenberg groups are the special cases carrying the gauge
metric d(p, q) = ||p^{-1} * q|| with ||(z; t)|| = (|z|^4 + |t|^2)^{1/4},
which is a genuine metric there (Iwasawa groups); on other step-2 groups
the same expression is only a quasi-norm and metric axioms are not assumed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import BudgetError, UnsupportedError, ValidationError

DEFAULT_TOL = 1e-9
DEFAULT_LATTICE_BUDGET = 200_000_000


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """Immutable description of a step-2 Carnot group."""

    m1: int
    m2: int
    B: np.ndarray  # shape (m2, m1, m1), each slice skew-symmetric
    iwasawa_kind: Optional[str] = None  # None | "heis_c" | "heis_q"
    n: Optional[int] = None  # Heisenberg rank when iwasawa_kind is set
    integer_structure: bool = False

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValidationError("m1 and m2 must be >= 1")
        B = np.asarray(self.B, dtype=np.float64)
        if B.shape != (self.m2, self.m1, self.m1):
            raise ValidationError(
                f"structure matrices must have shape ({self.m2},{self.m1},{self.m1}), "
                f"got {B.shape}")
        if not np.isfinite(B).all():
            raise ValidationError("structure matrices must be finite")
        for i in range(self.m2):
            if not np.array_equal(B[i].T, -B[i]):
                raise ValidationError(f"structure matrix B^{i+1} is not skew-symmetric")
        object.__setattr__(self, "B", _readonly(B))
        object.__setattr__(self, "integer_structure",
                           bool(np.array_equal(B, np.round(B))))
        if self.iwasawa_kind == "heis_c":
            if self.n is None or self.m1 != 2 * self.n or self.m2 != 1:
                raise ValidationError("complex Heisenberg requires m1=2n, m2=1")
        elif self.iwasawa_kind == "heis_q":
            if self.n is None or self.m1 != 4 * self.n or self.m2 != 3:
                raise ValidationError("quaternionic Heisenberg requires m1=4n, m2=3")
        elif self.iwasawa_kind is not None:
            raise ValidationError(f"unknown iwasawa_kind {self.iwasawa_kind!r}")

    @property
    def Q(self) -> int:
        """Homogeneous dimension m1 + 2*m2."""
        return self.m1 + 2 * self.m2

    @property
    def N(self) -> int:
        """Topological dimension m1 + m2."""
        return self.m1 + self.m2

    @property
    def is_iwasawa(self) -> bool:
        return self.iwasawa_kind is not None

    def __repr__(self):
        kind = self.iwasawa_kind or "step2"
        return f"GroupSpec({kind}, m1={self.m1}, m2={self.m2})"


def heisenberg(n: int = 1) -> GroupSpec:
    """Complex Heisenberg group Heis^n in real coordinates (x_1..x_n, y_1..y_n; t)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    eye = np.eye(n)
    B = np.zeros((1, 2 * n, 2 * n))
    B[0, :n, n:] = 2 * eye
    B[0, n:, :n] = -2 * eye
    return GroupSpec(m1=2 * n, m2=1, B=B, iwasawa_kind="heis_c", n=n)


def quaternionic_heisenberg(n: int = 1) -> GroupSpec:
    """Quaternionic Heisenberg group Heis^n_H, coordinates (x, y, z, w; t, u, v)."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    eye = np.eye(n)
    B = np.zeros((3, 4 * n, 4 * n))

    def put(i, row, col, sign):
        B[i, row * n:(row + 1) * n, col * n:(col + 1) * n] = 2 * sign * eye

    # t'' = t + t' + 2(x'.y - x.y' + w'.z - w.z')  =>  B^1 p = (2y, -2x, -2w, 2z)
    put(0, 0, 1, +1); put(0, 1, 0, -1); put(0, 2, 3, -1); put(0, 3, 2, +1)
    # u'' = u + u' + 2(x'.z - x.z' + y'.w - y.w')  =>  B^2 p = (2z, 2w, -2x, -2y)
    put(1, 0, 2, +1); put(1, 1, 3, +1); put(1, 2, 0, -1); put(1, 3, 1, -1)
    # v'' = v + v' + 2(x'.w - x.w' + z'.y - z.y')  =>  B^3 p = (2w, -2z, 2y, -2x)
    put(2, 0, 3, +1); put(2, 1, 2, -1); put(2, 2, 1, +1); put(2, 3, 0, -1)
    return GroupSpec(m1=4 * n, m2=3, B=B, iwasawa_kind="heis_q", n=n)


def step2(B_list) -> GroupSpec:
    """Generic step-2 group from a list of m2 skew-symmetric m1 x m1 matrices."""
    B = np.asarray(B_list, dtype=np.float64)
    if B.ndim == 2:
        B = B[None, :, :]
    if B.ndim != 3:
        raise ValidationError("B must be a matrix or a list of matrices")
    return GroupSpec(m1=B.shape[1], m2=B.shape[0], B=B)


# ---------------------------------------------------------------------------
# Points
# ---------------------------------------------------------------------------

class _Infinity:
    """Tagged point at infinity.  Valid only in cross ratios and pole contexts."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "GPoint(infinity)"


INFINITY = _Infinity()


def is_infinity(p) -> bool:
    return p is INFINITY or isinstance(p, _Infinity)


@dataclass(frozen=True, eq=False)
class GPoint:
    """A group element: horizontal part z (length m1) and vertical part t (length m2)."""

    z: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=np.float64))
        t = np.atleast_1d(np.asarray(self.t, dtype=np.float64))
        if z.ndim != 1 or t.ndim != 1:
            raise ValidationError("GPoint coordinates must be 1-d")
        if not (np.isfinite(z).all() and np.isfinite(t).all()):
            raise ValidationError("GPoint coordinates must be finite")
        object.__setattr__(self, "z", _readonly(z))
        object.__setattr__(self, "t", _readonly(t))

    def __repr__(self):
        zs = ",".join(f"{v:g}" for v in self.z)
        ts = ",".join(f"{v:g}" for v in self.t)
        return f"GPoint({zs};{ts})"


def gpoint(z, t) -> GPoint:
    return GPoint(np.atleast_1d(np.asarray(z, float)), np.atleast_1d(np.asarray(t, float)))


def origin(g: GroupSpec) -> GPoint:
    return GPoint(np.zeros(g.m1), np.zeros(g.m2))


@dataclass(frozen=True, eq=False)
class LatticePoint:
    """An integer-lattice element; only meaningful when integer_structure holds."""

    z: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z))
        t = np.atleast_1d(np.asarray(self.t))
        if not (np.issubdtype(z.dtype, np.integer) and np.issubdtype(t.dtype, np.integer)):
            raise ValidationError("LatticePoint coordinates must be integers")
        z = z.astype(np.int64); t = t.astype(np.int64)
        z.setflags(write=False); t.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", t)

    def to_gpoint(self) -> GPoint:
        return GPoint(self.z.astype(float), self.t.astype(float))

    def __repr__(self):
        zs = ",".join(str(int(v)) for v in self.z)
        ts = ",".join(str(int(v)) for v in self.t)
        return f"LatticePoint({zs};{ts})"


def _check_point(g: GroupSpec, p: GPoint, name="point"):
    if is_infinity(p):
        raise ValidationError(f"{name} may not be the point at infinity here")
    if p.z.shape != (g.m1,) or p.t.shape != (g.m2,):
        raise ValidationError(
            f"{name} has shape ({p.z.shape[0]},{p.t.shape[0]}), "
            f"group expects ({g.m1},{g.m2})")


# ---------------------------------------------------------------------------
# Batched core (arrays Z of shape (..., m1), T of shape (..., m2))
# ---------------------------------------------------------------------------

def mul_many(g: GroupSpec, Z1, T1, Z2, T2):
    """Batched group product; broadcasts over leading axes."""
    Z1 = np.asarray(Z1, float); Z2 = np.asarray(Z2, float)
    T1 = np.asarray(T1, float); T2 = np.asarray(T2, float)
    Z = Z1 + Z2
    # ((B^i z).w)_a-sum: sum_{a,b} B[i,a,b] z_b w_a
    bil = np.einsum("iab,...b,...a->...i", g.B, Z1, Z2)
    T = T1 + T2 + bil
    return Z, T


def inv_many(g: GroupSpec, Z, T):
    return -np.asarray(Z, float), -np.asarray(T, float)


def dilate_many(g: GroupSpec, r, Z, T):
    Z = np.asarray(Z, float); T = np.asarray(T, float)
    r = np.asarray(r, float)
    if r.ndim:
        return r[..., None] * Z, (r * r)[..., None] * T
    return r * Z, (r * r) * T


def norm_many(g: GroupSpec, Z, T):
    Z = np.asarray(Z, float); T = np.asarray(T, float)
    z2 = np.einsum("...i,...i->...", Z, Z)
    t2 = np.einsum("...i,...i->...", T, T)
    return (z2 * z2 + t2) ** 0.25


def dist_many(g: GroupSpec, Z1, T1, Z2, T2):
    Zi, Ti = mul_many(g, -np.asarray(Z1, float), -np.asarray(T1, float), Z2, T2)
    return norm_many(g, Zi, Ti)


# ---------------------------------------------------------------------------
# Point-level operations
# ---------------------------------------------------------------------------

def group_mul(g: GroupSpec, p: GPoint, q: GPoint) -> GPoint:
    """Group product p * q."""
    _check_point(g, p, "p"); _check_point(g, q, "q")
    Z, T = mul_many(g, p.z, p.t, q.z, q.t)
    return GPoint(Z, T)


def group_inv(g: GroupSpec, p: GPoint) -> GPoint:
    """Group inverse, the Euclidean negative."""
    _check_point(g, p, "p")
    return GPoint(-p.z, -p.t)


def dilate(g: GroupSpec, r: float, p: GPoint) -> GPoint:
    """Group dilation delta_r(z; t) = (r z; r^2 t)."""
    if not (np.isfinite(r) and r > 0):
        raise ValidationError(f"dilation factor must be positive and finite, got {r}")
    _check_point(g, p, "p")
    return GPoint(r * p.z, r * r * p.t)


def gauge_norm(g: GroupSpec, p: GPoint) -> float:
    """Gauge (Koranyi) norm (|z|^4 + |t|^2)^{1/4}."""
    _check_point(g, p, "p")
    return float(norm_many(g, p.z, p.t))


def gauge_dist(g: GroupSpec, p: GPoint, q: GPoint) -> float:
    """Gauge distance ||p^{-1} * q||; a metric on Iwasawa groups."""
    _check_point(g, p, "p"); _check_point(g, q, "q")
    return float(dist_many(g, p.z, p.t, q.z, q.t))


def cross_ratio(g: GroupSpec, p1, p2, p3, p4) -> float:
    """Cross ratio [p1:p2:p3:p4] = d(p1,p3) d(p2,p4) / (d(p1,p4) d(p2,p3)).

    Any one argument may be the tagged point at infinity; distances
    involving it are deleted from the formula.  Conventions: a/0 = +inf,
    a/+inf = 0.  More than two coincident points is an error.
    """
    pts = [p1, p2, p3, p4]
    n_inf = sum(is_infinity(p) for p in pts)
    if n_inf > 1:
        raise ValidationError("at most one cross-ratio argument may be infinity")
    for p in pts:
        if not is_infinity(p):
            _check_point(g, p)

    def d(a, b):
        if is_infinity(a) or is_infinity(b):
            return None  # deleted factor
        return gauge_dist(g, a, b)

    # Reject configurations with three or more coincident finite points.
    finite = [p for p in pts if not is_infinity(p)]
    for i in range(len(finite)):
        coincident = 1
        for j in range(len(finite)):
            if j != i and gauge_dist(g, finite[i], finite[j]) == 0.0:
                coincident += 1
        if coincident > 2:
            raise ValidationError("more than two coincident points in cross ratio")

    num_terms = [d(p1, p3), d(p2, p4)]
    den_terms = [d(p1, p4), d(p2, p3)]
    num = math.prod(v for v in num_terms if v is not None)
    den = math.prod(v for v in den_terms if v is not None)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


# ---------------------------------------------------------------------------
# Integer lattice
# ---------------------------------------------------------------------------

def lattice_A2(g: GroupSpec) -> float:
    """Max gauge norm over the unit coordinate box K0 = [-1/2, 1/2]^{m1+m2}.

    The gauge norm is monotone in |z| and |t| separately, so the maximum
    over the box is attained at a corner; corner enumeration is exact.
    """
    z2 = g.m1 * 0.25
    t2 = g.m2 * 0.25
    return (z2 * z2 + t2) ** 0.25


def lattice_A1(g: GroupSpec) -> float:
    """Minimum nonzero gauge norm on the integer lattice (1 for Iwasawa groups)."""
    if not g.integer_structure:
        raise UnsupportedError("group has no integer structure")
    best = math.inf
    for Z, T in _lattice_blocks(g, 0.0, np.nextafter(1.0, 2.0), DEFAULT_LATTICE_BUDGET):
        norms = norm_many(g, Z.astype(float), T.astype(float))
        nz = norms[norms > 0]
        if nz.size:
            best = min(best, float(nz.min()))
    return 1.0 if best is math.inf else best


def _round_half_toward_zero(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float)
    return np.where(x >= 0, np.ceil(x - 0.5), np.floor(x + 0.5))


def lattice_round(g: GroupSpec, p: GPoint) -> LatticePoint:
    """Nearest lattice point in the tiling sense: p lies in gamma * K0.

    Rounds z componentwise (ties toward zero), then picks each t-component
    so that |t_i - (B^i gamma_z).(z - gamma_z) - gamma_t_i| <= 1/2.
    Guarantees gauge_dist(p, gamma) <= A2.
    """
    if not g.integer_structure:
        raise UnsupportedError("lattice_round requires integral structure matrices")
    _check_point(g, p, "p")
    gz = _round_half_toward_zero(p.z)
    w = p.z - gz
    shift = np.einsum("iab,b,a->i", g.B, gz, w)
    gt = _round_half_toward_zero(p.t - shift)
    return LatticePoint(gz.astype(np.int64), gt.astype(np.int64))


def lattice_round_many(g: GroupSpec, Z, T):
    """Batched lattice_round; returns integer arrays (Zg, Tg)."""
    if not g.integer_structure:
        raise UnsupportedError("lattice_round requires integral structure matrices")
    Z = np.asarray(Z, float); T = np.asarray(T, float)
    Zg = _round_half_toward_zero(Z)
    W = Z - Zg
    shift = np.einsum("iab,...b,...a->...i", g.B, Zg, W)
    Tg = _round_half_toward_zero(T - shift)
    return Zg.astype(np.int64), Tg.astype(np.int64)


def _z_candidates(m1: int, zmax: int) -> np.ndarray:
    """All integer z vectors with |z_j| <= zmax, in lexicographic order."""
    rng = np.arange(-zmax, zmax + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng] * m1), indexing="ij")
    return np.stack([grid.ravel() for grid in grids], axis=-1)


def _lattice_blocks(g: GroupSpec, r_lo: float, r_hi: float, budget: int):
    """Yield (Z, T) int64 blocks of lattice points with r_lo <= norm < r_hi.

    Scans the bounding box |z_j| <= r_hi, |t_j| <= r_hi^2 in lexicographic
    order over (z, t).  The vertical scan is collapsed analytically when
    m2 == 1; otherwise the t-box is enumerated and filtered.
    """
    if r_lo < 0 or r_hi <= r_lo:
        raise ValidationError("need 0 <= r_lo < r_hi")
    zmax = max(int(math.ceil(r_hi)) - 1, 0)
    tmax = max(int(math.ceil(r_hi * r_hi)) - 1, 0)
    n_z = (2 * zmax + 1) ** g.m1
    n_t = (2 * tmax + 1) ** g.m2
    if g.m2 == 1:
        cost = n_z * (2 * tmax + 1)
    else:
        cost = n_z * n_t
    if cost > budget:
        raise BudgetError(
            f"lattice scan would visit ~{cost:.2e} candidates (budget {budget:.2e})",
            estimate=cost, budget=budget)

    lo4 = r_lo ** 4
    hi4 = r_hi ** 4
    Zs = _z_candidates(g.m1, zmax)
    z4 = (np.einsum("ki,ki->k", Zs, Zs).astype(float)) ** 2
    keep = z4 < hi4
    Zs = Zs[keep]; z4 = z4[keep]

    if g.m2 == 1:
        for k in range(Zs.shape[0]):
            zz4 = z4[k]
            cap2 = hi4 - zz4
            tcap = int(math.floor(math.sqrt(cap2)))
            while tcap * tcap >= cap2:
                tcap -= 1
            while (tcap + 1) * (tcap + 1) < cap2:
                tcap += 1
            low2 = max(lo4 - zz4, 0.0)
            tlow = int(math.ceil(math.sqrt(low2)))
            while tlow > 0 and (tlow - 1) * (tlow - 1) >= low2:
                tlow -= 1
            while tlow * tlow < low2:
                tlow += 1
            if tlow > tcap:
                continue
            if tlow == 0:
                tv = np.arange(-tcap, tcap + 1, dtype=np.int64)
            else:
                tv = np.concatenate([np.arange(-tcap, -tlow + 1, dtype=np.int64),
                                     np.arange(tlow, tcap + 1, dtype=np.int64)])
            yield np.repeat(Zs[k][None, :], tv.size, axis=0), tv[:, None]
    else:
        trng = np.arange(-tmax, tmax + 1, dtype=np.int64)
        tgrids = np.meshgrid(*([trng] * g.m2), indexing="ij")
        Ts = np.stack([grid.ravel() for grid in tgrids], axis=-1)
        t2 = np.einsum("ki,ki->k", Ts, Ts).astype(float)
        for k in range(Zs.shape[0]):
            zz4 = z4[k]
            mask = (t2 + zz4 >= lo4) & (t2 + zz4 < hi4)
            if mask.any():
                tv = Ts[mask]
                yield np.repeat(Zs[k][None, :], tv.shape[0], axis=0), tv


def lattice_shell_array(g: GroupSpec, r_lo: float, r_hi: float,
                        budget: int = DEFAULT_LATTICE_BUDGET):
    """All lattice points with r_lo <= gauge norm < r_hi as integer arrays (Z, T)."""
    if not g.integer_structure:
        raise UnsupportedError("lattice enumeration requires integral structure matrices")
    Zb, Tb = [], []
    for Z, T in _lattice_blocks(g, r_lo, r_hi, budget):
        Zb.append(Z); Tb.append(T)
    if not Zb:
        return (np.zeros((0, g.m1), dtype=np.int64), np.zeros((0, g.m2), dtype=np.int64))
    return np.concatenate(Zb, axis=0), np.concatenate(Tb, axis=0)


def lattice_shell(g: GroupSpec, r_lo: float, r_hi: float,
                  budget: int = DEFAULT_LATTICE_BUDGET) -> Iterator[LatticePoint]:
    """Iterate lattice points with r_lo <= gauge norm < r_hi (deterministic order)."""
    if not g.integer_structure:
        raise UnsupportedError("lattice enumeration requires integral structure matrices")
    for Z, T in _lattice_blocks(g, r_lo, r_hi, budget):
        for k in range(Z.shape[0]):
            yield LatticePoint(Z[k], T[k])


def lattice_norm_histogram(g: GroupSpec, r_lo: float, r_hi: float, bins: int = 4096,
                           budget: int = DEFAULT_LATTICE_BUDGET):
    """Histogram of gauge norms of lattice points in [r_lo, r_hi).

    Returns (edges, counts) with logarithmically spaced bin edges.  Used to
    compress very large shells into weight histograms for partition sums.
    """
    if not g.integer_structure:
        raise UnsupportedError("lattice enumeration requires integral structure matrices")
    lo = max(r_lo, 1.0 - 1e-12)  # minimum nonzero lattice norm is >= 1 here
    edges = np.geomspace(lo, r_hi, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    for Z, T in _lattice_blocks(g, r_lo, r_hi, budget):
        norms = norm_many(g, Z.astype(float), T.astype(float))
        h, _ = np.histogram(norms, bins=edges)
        counts += h
    return edges, counts


# ---------------------------------------------------------------------------
# Sampling helpers (shared by tests and validation)
# ---------------------------------------------------------------------------

def sample_box(g: GroupSpec, k: int, rng: np.random.Generator, scale: float = 1.0):
    """k points uniform in the coordinate box [-scale, scale]^{m1} x [-scale^2, scale^2]^{m2}."""
    Z = rng.uniform(-scale, scale, size=(k, g.m1))
    T = rng.uniform(-scale * scale, scale * scale, size=(k, g.m2))
    return Z, T


def sample_ball(g: GroupSpec, center: GPoint, radius: float, k: int,
                rng: np.random.Generator):
    """k points in the closed gauge ball B(center, radius) by rejection sampling."""
    _check_point(g, center, "center")
    out_Z = np.empty((0, g.m1)); out_T = np.empty((0, g.m2))
    while out_Z.shape[0] < k:
        m = max(2 * (k - out_Z.shape[0]), 64)
        Z, T = sample_box(g, m, rng, 1.0)
        keep = norm_many(g, Z, T) <= 1.0
        out_Z = np.concatenate([out_Z, Z[keep]]); out_T = np.concatenate([out_T, T[keep]])
    Z, T = dilate_many(g, radius, out_Z[:k], out_T[:k])
    return mul_many(g, center.z, center.t, Z, T)


def sample_sphere(g: GroupSpec, center: GPoint, radius: float, k: int,
                  rng: np.random.Generator, thickness: float = 0.05):
    """k points near the gauge sphere of given radius, radially projected onto it.

    Rejection from a thin box shell, then exact radial (dilation) projection
    (the projection makes the shell thickness harmless).
    """
    _check_point(g, center, "center")
    out_Z = np.empty((0, g.m1)); out_T = np.empty((0, g.m2))
    frac = 0.3 * (1.0 - (1.0 - thickness) ** g.Q)  # rough acceptance rate
    while out_Z.shape[0] < k:
        m = max(int(3 * (k - out_Z.shape[0]) / frac), 256)
        Z, T = sample_box(g, m, rng, 1.0)
        norms = norm_many(g, Z, T)
        keep = (norms > 1.0 - thickness) & (norms <= 1.0)
        Z, T = Z[keep], T[keep]
        if Z.shape[0]:
            r = norms[keep]
            Z, T = dilate_many(g, 1.0 / r, Z, T)
            out_Z = np.concatenate([out_Z, Z]); out_T = np.concatenate([out_T, T])
    Z, T = dilate_many(g, radius, out_Z[:k], out_T[:k])
    return mul_many(g, center.z, center.t, Z, T)
