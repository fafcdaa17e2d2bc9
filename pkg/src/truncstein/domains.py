"""Truncation domains: membership, boundary function kappa, boundary distance.

Each domain kind carries a product-form boundary function ``kappa`` whose
factors vanish on the boundary of the region. Domains are open sets:
boundary points are non-members, since the densities live on the interior
and the test functions vanish on the boundary anyway.

For ball domains with a base-support constraint (used by the product
models), the support edge is NOT part of the kappa zero set; kappa only
encodes the curved part of the boundary. The support edges are handled by
the tau weight inside the product-model operators instead.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataDomainMismatchError, EmptyDomainError

SUPPORT_KINDS = {
    "reals": (-np.inf, np.inf),
    "positive_halfline": (0.0, np.inf),
    "unit_interval": (0.0, 1.0),
}


def _rows(x, dim):
    """Coerce input to an (n, dim) float array; remember if it was a single point."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x, single


@dataclass(frozen=True)
class Domain:
    """Base truncation domain; use the factory functions to construct one."""

    dim: int
    support: tuple = field(default=(), repr=False)  # (lo, hi) per coordinate

    def contains(self, x):
        raise NotImplementedError

    def kappa(self, x):
        raise NotImplementedError

    def grad_kappa(self, x):
        raise NotImplementedError

    def boundary_distance(self, x):
        raise NotImplementedError

    def grad_boundary_distance(self, x):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def boundary_points(self, k, rng):
        """k points on the kappa zero set (closure of the curved boundary)."""
        raise NotImplementedError

    def spec(self):
        """Serializable domain description (the config-file grammar)."""
        raise NotImplementedError

    def _require_inside(self, x):
        inside = self.contains(x)
        if not np.all(inside):
            bad = np.asarray(x, dtype=float).reshape(-1, self.dim)[
                ~np.atleast_1d(inside)
            ][0]
            raise DataDomainMismatchError(
                f"point {bad.tolist()} is outside the domain"
            )

    def _support_ok(self, x):
        ok = np.ones(x.shape[0], dtype=bool)
        for i, (lo, hi) in enumerate(self.support):
            ok &= (x[:, i] > lo) & (x[:, i] < hi)
        return ok


@dataclass(frozen=True)
class RectangleDomain(Domain):
    a: np.ndarray = None
    b: np.ndarray = None

    def contains(self, x):
        x, single = _rows(x, self.dim)
        inside = np.all((x > self.a) & (x < self.b), axis=1)
        return bool(inside[0]) if single else inside

    def kappa(self, x):
        x, single = _rows(x, self.dim)
        val = np.prod((x - self.a) * (x - self.b), axis=1)
        return float(val[0]) if single else val

    def grad_kappa(self, x):
        x, single = _rows(x, self.dim)
        pair = (x - self.a) * (x - self.b)        # per-coordinate factor pair
        dpair = 2.0 * x - self.a - self.b
        grad = np.empty_like(x)
        for i in range(self.dim):
            others = np.ones(x.shape[0])
            for j in range(self.dim):
                if j != i:
                    others *= pair[:, j]
            grad[:, i] = dpair[:, i] * others
        return grad[0] if single else grad

    def boundary_distance(self, x):
        x, single = _rows(x, self.dim)
        self._require_inside(x)
        d = np.minimum(x - self.a, self.b - x).min(axis=1)
        return float(d[0]) if single else d

    def grad_boundary_distance(self, x):
        x, single = _rows(x, self.dim)
        self._require_inside(x)
        cand = np.concatenate([x - self.a, self.b - x], axis=1)  # (n, 2d)
        active = np.argmin(cand, axis=1)
        grad = np.zeros_like(x)
        rows = np.arange(x.shape[0])
        low_face = active < self.dim
        grad[rows[low_face], active[low_face]] = 1.0
        grad[rows[~low_face], active[~low_face] - self.dim] = -1.0
        return grad[0] if single else grad

    def bounding_box(self):
        return self.a.copy(), self.b.copy()

    def boundary_points(self, k, rng):
        pts = self.a + (self.b - self.a) * rng.random((k, self.dim))
        face = rng.integers(0, 2 * self.dim, size=k)
        coord = face % self.dim
        val = np.where(face < self.dim, self.a[coord], self.b[coord])
        pts[np.arange(k), coord] = val
        return pts

    def spec(self):
        return {"kind": "rectangle", "a": self.a.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class BallDomain(Domain):
    m: np.ndarray = None
    r: float = 0.0

    def contains(self, x):
        x, single = _rows(x, self.dim)
        inside = np.einsum("ij,ij->i", x - self.m, x - self.m) < self.r**2
        inside &= self._support_ok(x)
        return bool(inside[0]) if single else inside

    def kappa(self, x):
        x, single = _rows(x, self.dim)
        val = np.einsum("ij,ij->i", x - self.m, x - self.m) - self.r**2
        return float(val[0]) if single else val

    def grad_kappa(self, x):
        x, single = _rows(x, self.dim)
        grad = 2.0 * (x - self.m)
        return grad[0] if single else grad

    def boundary_distance(self, x):
        x, single = _rows(x, self.dim)
        self._require_inside(x)
        d = self.r - np.linalg.norm(x - self.m, axis=1)
        for i, (lo, hi) in enumerate(self.support):
            if np.isfinite(lo):
                d = np.minimum(d, x[:, i] - lo)
            if np.isfinite(hi):
                d = np.minimum(d, hi - x[:, i])
        return float(d[0]) if single else d

    def grad_boundary_distance(self, x):
        x, single = _rows(x, self.dim)
        self._require_inside(x)
        n = x.shape[0]
        rad = np.linalg.norm(x - self.m, axis=1)
        cands = [self.r - rad]
        grads = [np.where(rad[:, None] > 0, -(x - self.m) / np.maximum(rad, 1e-300)[:, None], 0.0)]
        for i, (lo, hi) in enumerate(self.support):
            if np.isfinite(lo):
                cands.append(x[:, i] - lo)
                g = np.zeros((n, self.dim))
                g[:, i] = 1.0
                grads.append(g)
            if np.isfinite(hi):
                cands.append(hi - x[:, i])
                g = np.zeros((n, self.dim))
                g[:, i] = -1.0
                grads.append(g)
        cands = np.stack(cands, axis=1)
        grads = np.stack(grads, axis=1)          # (n, ncand, dim)
        idx = np.argmin(cands, axis=1)
        grad = grads[np.arange(n), idx]
        return grad[0] if single else grad

    def bounding_box(self):
        lo = self.m - self.r
        hi = self.m + self.r
        for i, (slo, shi) in enumerate(self.support):
            lo[i] = max(lo[i], slo)
            hi[i] = min(hi[i], shi)
        return lo, hi

    def boundary_points(self, k, rng):
        out = np.empty((0, self.dim))
        while out.shape[0] < k:
            u = rng.standard_normal((2 * k, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            pts = self.m + self.r * u
            keep = np.ones(pts.shape[0], dtype=bool)
            for i, (lo, hi) in enumerate(self.support):
                keep &= (pts[:, i] >= lo) & (pts[:, i] <= hi)
            out = np.concatenate([out, pts[keep]], axis=0)
        return out[:k]

    def spec(self):
        names = []
        for lo, hi in self.support:
            for name, bounds in SUPPORT_KINDS.items():
                if bounds == (lo, hi):
                    names.append(name)
                    break
        return {
            "kind": "ball",
            "m": self.m.tolist(),
            "r": float(self.r),
            "support": names,
        }


@dataclass(frozen=True)
class UnionOfBallsDomain(Domain):
    centers: np.ndarray = None
    radius: float = 0.0

    def _sq_dists(self, x):
        diff = x[:, None, :] - self.centers[None, :, :]   # (n, k, d)
        return np.einsum("nkd,nkd->nk", diff, diff)

    def contains(self, x):
        x, single = _rows(x, self.dim)
        inside = np.any(self._sq_dists(x) < self.radius**2, axis=1)
        return bool(inside[0]) if single else inside

    def kappa(self, x):
        x, single = _rows(x, self.dim)
        val = np.prod(self._sq_dists(x) - self.radius**2, axis=1)
        return float(val[0]) if single else val

    def grad_kappa(self, x):
        x, single = _rows(x, self.dim)
        factors = self._sq_dists(x) - self.radius**2      # (n, k)
        nballs = self.centers.shape[0]
        grad = np.zeros_like(x)
        for i in range(nballs):
            others = np.ones(x.shape[0])
            for j in range(nballs):
                if j != i:
                    others *= factors[:, j]
            grad += 2.0 * (x - self.centers[i]) * others[:, None]
        return grad[0] if single else grad

    def boundary_distance(self, x):
        # Distance to the surface of the deepest containing ball: a lower
        # bound on the true boundary distance when balls overlap.
        x, single = _rows(x, self.dim)
        self._require_inside(x)
        depth = self.radius - np.sqrt(self._sq_dists(x))   # (n, k)
        d = depth.max(axis=1)
        return float(d[0]) if single else d

    def grad_boundary_distance(self, x):
        x, single = _rows(x, self.dim)
        self._require_inside(x)
        dist = np.sqrt(self._sq_dists(x))
        best = np.argmax(self.radius - dist, axis=1)
        diff = x - self.centers[best]
        nrm = np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), 1e-300)
        grad = -diff / nrm
        return grad[0] if single else grad

    def bounding_box(self):
        lo = self.centers.min(axis=0) - self.radius
        hi = self.centers.max(axis=0) + self.radius
        return lo, hi

    def boundary_points(self, k, rng):
        out = np.empty((0, self.dim))
        nballs = self.centers.shape[0]
        while out.shape[0] < k:
            which = rng.integers(0, nballs, size=2 * k)
            u = rng.standard_normal((2 * k, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            pts = self.centers[which] + self.radius * u
            # keep true boundary points only: not strictly inside another ball
            sq = self._sq_dists(pts)
            inside_other = np.zeros(pts.shape[0], dtype=bool)
            for i in range(nballs):
                mask = which != i
                inside_other |= mask & (sq[:, i] < self.radius**2 - 1e-12)
            out = np.concatenate([out, pts[~inside_other]], axis=0)
        return out[:k]

    def spec(self):
        return {
            "kind": "union_of_balls",
            "centers": self.centers.tolist(),
            "radius": float(self.radius),
        }


def rectangle_domain(a, b):
    """Open axis-aligned box prod_i (a_i, b_i)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError("rectangle bounds must be vectors of equal length")
    if not np.all(a < b):
        raise ConfigError("rectangle requires a_i < b_i componentwise")
    d = a.size
    return RectangleDomain(
        dim=d, support=tuple((-np.inf, np.inf) for _ in range(d)), a=a, b=b
    )


def ball_domain(m, r, support=None):
    """Open ball of radius r about m, optionally cut to a base support.

    ``support`` lists one of {"reals", "positive_halfline", "unit_interval"}
    per coordinate; the support edges are treated as base-support boundary,
    not as part of the kappa zero set.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    r = float(r)
    if r <= 0:
        raise ConfigError("ball radius must be positive")
    d = m.size
    if support is None:
        support = ["reals"] * d
    if len(support) != d:
        raise ConfigError("support must list one entry per coordinate")
    try:
        bounds = tuple(SUPPORT_KINDS[s] for s in support)
    except KeyError as exc:
        raise ConfigError(f"unknown support kind {exc.args[0]!r}") from None
    dom = BallDomain(dim=d, support=bounds, m=m, r=r)
    lo, hi = dom.bounding_box()
    if np.any(lo >= hi):
        raise EmptyDomainError("ball does not intersect the base support")
    # probe the bounding box on a fixed grid; a thin sliver that misses every
    # probe point would be rejected, which is fine for the domains we ship
    grids = np.meshgrid(*[np.linspace(l, h, 17)[1:-1] for l, h in zip(lo, hi)])
    probe = np.stack([g.ravel() for g in grids], axis=1)
    if not np.any(dom.contains(probe)):
        raise EmptyDomainError("ball/support intersection has no interior")
    return dom


def union_of_balls_domain(centers, radius):
    """Union of equal-radius open balls; kappa is the product over spheres."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radius = float(radius)
    if centers.shape[0] < 1:
        raise ConfigError("union_of_balls needs at least one center")
    if radius <= 0:
        raise ConfigError("radius must be positive")
    d = centers.shape[1]
    return UnionOfBallsDomain(
        dim=d,
        support=tuple((-np.inf, np.inf) for _ in range(d)),
        centers=centers,
        radius=radius,
    )


def domain_from_spec(spec):
    """Build a domain from its config-file description (see each ``spec()``)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("domain spec must be a mapping with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind == "rectangle":
            return rectangle_domain(spec["a"], spec["b"])
        if kind == "ball":
            return ball_domain(spec["m"], spec["r"], spec.get("support"))
        if kind == "union_of_balls":
            return union_of_balls_domain(spec["centers"], spec["radius"])
    except KeyError as exc:
        raise ConfigError(f"domain spec missing field {exc.args[0]!r}") from None
    raise ConfigError(f"unknown domain kind {kind!r}")
