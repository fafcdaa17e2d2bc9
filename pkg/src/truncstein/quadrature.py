"""Deterministic adaptive 2D quadrature over truncation domains.

Used for the MLE's normalising constant and as the population-moment oracle
in tests. The driver keeps a global heap of panels, each carrying an
embedded Gauss-Legendre 8/16 error estimate, and refines the worst panel
until the summed error meets the tolerance or the evaluation budget runs
out (in which case the result is flagged non-converged rather than raised).

Rectangles integrate directly on the box. Discs go through a polar map with
angular splits where a base-support line starts clipping the circle, so the
integrand seen by the panels stays smooth; a membership-masked box fallback
is kept for validation and for domain kinds without a transform.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from . import models
from .domains import BallDomain, RectangleDomain
from .errors import ConfigError

DEFAULT_REL_TOL = 1e-7        # normalising constants inside the MLE
ORACLE_REL_TOL = 1e-9         # population-moment oracles in tests
MAX_EVALS = 10_000_000

_NODES_LO, _WEIGHTS_LO = np.polynomial.legendre.leggauss(8)
_NODES_HI, _WEIGHTS_HI = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float
    evaluations: int
    converged: bool


_EVALS_PER_PANEL = _NODES_LO.size**2 + _NODES_HI.size**2


def _eval_panels(g, panels):
    """Embedded GL8/GL16 estimates for a batch of panels, one integrand call.

    ``panels`` is (k, 4) rows of (x0, x1, y0, y1); returns (values, errors).
    """
    k = panels.shape[0]
    cx = 0.5 * (panels[:, 0] + panels[:, 1])
    hx = 0.5 * (panels[:, 1] - panels[:, 0])
    cy = 0.5 * (panels[:, 2] + panels[:, 3])
    hy = 0.5 * (panels[:, 3] - panels[:, 2])
    chunks = []
    for nodes in (_NODES_LO, _NODES_HI):
        px = cx[:, None] + hx[:, None] * nodes          # (k, m)
        py = cy[:, None] + hy[:, None] * nodes
        xx = np.broadcast_to(px[:, :, None], (k, nodes.size, nodes.size))
        yy = np.broadcast_to(py[:, None, :], (k, nodes.size, nodes.size))
        chunks.append(np.stack([xx.ravel(), yy.ravel()], axis=1))
    n_lo = k * _NODES_LO.size**2
    vals = np.asarray(g(np.concatenate(chunks, axis=0)), dtype=float)
    f_lo = vals[:n_lo].reshape(k, _NODES_LO.size, _NODES_LO.size)
    f_hi = vals[n_lo:].reshape(k, _NODES_HI.size, _NODES_HI.size)
    area = hx * hy
    i_lo = area * np.einsum("i,kij,j->k", _WEIGHTS_LO, f_lo, _WEIGHTS_LO)
    i_hi = area * np.einsum("i,kij,j->k", _WEIGHTS_HI, f_hi, _WEIGHTS_HI)
    return i_hi, np.abs(i_hi - i_lo)


def _adapt2d(g, x0, x1, y0, y1, rel_tol, abs_tol, max_evals, init_grid=(1, 1)):
    """Globally adaptive panel subdivision of g over a rectangle in (u, v).

    ``init_grid`` seeds the heap with an nx-by-ny panel grid; integrands much
    narrower than the box need that so the embedded error estimate can see
    them at all. Up to four worst panels are refined per round to amortise
    the integrand calls.
    """
    xs = np.linspace(x0, x1, init_grid[0] + 1)
    ys = np.linspace(y0, y1, init_grid[1] + 1)
    panels = np.array(
        [
            (ax, bx, ay, by)
            for ax, bx in zip(xs[:-1], xs[1:])
            for ay, by in zip(ys[:-1], ys[1:])
        ]
    )
    pvals, perrs = _eval_panels(g, panels)
    heap = []
    counter = 0
    for row, pval, perr in zip(panels, pvals, perrs):
        heapq.heappush(heap, (-perr, counter, row, pval, perr))
        counter += 1
    value = float(pvals.sum())
    err = float(perrs.sum())
    evals = panels.shape[0] * _EVALS_PER_PANEL
    while err > max(rel_tol * abs(value), abs_tol) and evals < max_evals:
        children = []
        for _ in range(min(4, len(heap))):
            _, _, row, pval, perr = heapq.heappop(heap)
            value -= pval
            err -= perr
            px0, px1, py0, py1 = row
            mx, my = 0.5 * (px0 + px1), 0.5 * (py0 + py1)
            children += [
                (px0, mx, py0, my),
                (mx, px1, py0, my),
                (px0, mx, my, py1),
                (mx, px1, my, py1),
            ]
        children = np.asarray(children)
        cvals, cerrs = _eval_panels(g, children)
        for row, cval, cerr in zip(children, cvals, cerrs):
            heapq.heappush(heap, (-cerr, counter, row, cval, cerr))
            counter += 1
        value += float(cvals.sum())
        err += float(cerrs.sum())
        evals += children.shape[0] * _EVALS_PER_PANEL
    converged = err <= max(rel_tol * abs(value), abs_tol)
    return value, err, evals, converged


def _clip_angles(m, r, support):
    """Angles in (-pi, pi) where a support line is exactly r away from m."""
    angles = []
    for i, (lo, hi) in enumerate(support):
        if np.isfinite(lo):
            if m[i] < lo:
                raise ConfigError("polar transform needs the center inside the support")
            s = (lo - m[i]) / r
            if s >= -1.0:
                if i == 1:
                    a = float(np.arcsin(s))
                    angles += [a, -np.pi - a]
                else:
                    a = float(np.arccos(s))
                    angles += [a, -a]
        if np.isfinite(hi):
            if m[i] > hi:
                raise ConfigError("polar transform needs the center inside the support")
            s = (hi - m[i]) / r
            if s <= 1.0:
                if i == 1:
                    a = float(np.arcsin(s))
                    angles += [a, np.pi - a]
                else:
                    a = float(np.arccos(s))
                    angles += [a, -a]
    angles = [((a + np.pi) % (2 * np.pi)) - np.pi for a in angles]
    return sorted(set(angles))


def _rho_max(phi, m, r, support):
    """Radial extent of the domain from m along each angle."""
    e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    rho = np.full(np.shape(phi), r, dtype=float)
    for i, (lo, hi) in enumerate(support):
        if np.isfinite(lo):
            with np.errstate(divide="ignore"):
                bound = np.where(e[..., i] < 0, (lo - m[i]) / e[..., i], np.inf)
            rho = np.minimum(rho, bound)
        if np.isfinite(hi):
            with np.errstate(divide="ignore"):
                bound = np.where(e[..., i] > 0, (hi - m[i]) / e[..., i], np.inf)
            rho = np.minimum(rho, bound)
    return rho


def _integrate_ball_polar(f, dom, rel_tol, abs_tol, max_evals):
    m, r, support = dom.m, dom.r, dom.support

    def g(uv):
        phi = uv[:, 0]
        t = uv[:, 1]
        rho_max = _rho_max(phi, m, r, support)
        rho = t * rho_max
        x = m + rho[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return f(x) * rho * rho_max

    splits = [-np.pi] + _clip_angles(m, r, support) + [np.pi]
    total = 0.0
    err = 0.0
    evals = 0
    converged = True
    for a, b in zip(splits[:-1], splits[1:]):
        if b - a < 1e-14:
            continue
        frac = (b - a) / (2 * np.pi)
        v, e, n, ok = _adapt2d(
            g, a, b, 0.0, 1.0, rel_tol, max(abs_tol * frac, 0.0),
            max_evals - evals, init_grid=(4, 4),
        )
        total += v
        err += e
        evals += n
        converged &= ok
    return QuadResult(total, err, evals, converged)


def _integrate_masked(f, dom, rel_tol, abs_tol, max_evals):
    lo, hi = dom.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ConfigError("masked integration needs a finite bounding box")

    def g(pts):
        inside = dom.contains(pts)
        out = np.zeros(pts.shape[0])
        if np.any(inside):
            out[inside] = f(pts[inside])
        return out

    v, e, n, ok = _adapt2d(
        g, lo[0], hi[0], lo[1], hi[1], rel_tol, abs_tol, max_evals, init_grid=(4, 4)
    )
    return QuadResult(v, e, n, ok)


def integrate(f, domain, rel_tol=DEFAULT_REL_TOL, abs_tol=0.0,
              max_evals=MAX_EVALS, method="auto"):
    """Integrate the vectorised scalar function f over the domain.

    ``f`` receives an (n, 2) array of interior points, returns (n,) values.
    ``method`` is "auto" (rectangle direct, ball polar, else masked) or
    "masked" to force the indicator-masked box fallback.
    """
    if domain.dim != 2:
        raise ConfigError("quadrature supports 2-dimensional domains only")
    if not 1e-12 < rel_tol < 1e-2:
        raise ConfigError("rel_tol must lie in (1e-12, 1e-2)")
    if method == "masked":
        return _integrate_masked(f, domain, rel_tol, abs_tol, max_evals)
    if method != "auto":
        raise ConfigError(f"unknown quadrature method {method!r}")
    if isinstance(domain, RectangleDomain):
        v, e, n, ok = _adapt2d(
            f, domain.a[0], domain.b[0], domain.a[1], domain.b[1],
            rel_tol, abs_tol, max_evals, init_grid=(2, 2),
        )
        return QuadResult(v, e, n, ok)
    if isinstance(domain, BallDomain):
        try:
            return _integrate_ball_polar(f, domain, rel_tol, abs_tol, max_evals)
        except ConfigError:
            return _integrate_masked(f, domain, rel_tol, abs_tol, max_evals)
    return _integrate_masked(f, domain, rel_tol, abs_tol, max_evals)


def _kernel_quadrature(model, theta, domain, offset, rel_tol, max_evals):
    """Integrate exp(log_kernel - offset) over the domain.

    For rectangles the integration box shrinks to the probe cells carrying
    non-negligible mass (everything below e^-60 of the probe peak), which
    keeps kernels far narrower than the domain resolvable. The exponent is
    clamped at 700 so insane parameter excursions return a huge finite value
    instead of overflowing.
    """
    lo, hi = domain.bounding_box()
    gx = np.linspace(lo[0], hi[0], 41)
    gy = np.linspace(lo[1], hi[1], 41)
    grids = np.meshgrid(gx[1:-1], gy[1:-1])
    probe = np.stack([g.ravel() for g in grids], axis=1)
    probe = probe[domain.contains(probe)]
    if probe.shape[0] == 0:
        raise ConfigError("no probe points inside the domain")
    logk = models.log_kernel(model, theta, probe)
    peak = float(np.max(logk))
    shift = peak if offset is None else offset

    def f(x):
        return np.exp(
            np.minimum(models.log_kernel(model, theta, x) - shift, 700.0)
        )

    if isinstance(domain, RectangleDomain):
        live = probe[logk >= peak - 60.0]
        hx = gx[1] - gx[0]
        hy = gy[1] - gy[0]
        box_lo = np.maximum(live.min(axis=0) - [hx, hy], lo)
        box_hi = np.minimum(live.max(axis=0) + [hx, hy], hi)
        v, e, n, ok = _adapt2d(
            f, box_lo[0], box_hi[0], box_lo[1], box_hi[1],
            rel_tol, 0.0, max_evals, init_grid=(2, 2),
        )
        return QuadResult(v, e, n, ok), peak
    return integrate(f, domain, rel_tol=rel_tol, max_evals=max_evals), peak


def normalizing_constant(model, theta, domain, rel_tol=DEFAULT_REL_TOL,
                         max_evals=500_000):
    """The truncated model's normalising constant, integrated in linear space.

    This is the plain quadrature the MLE competitor consumes; the value
    underflows to zero (and the likelihood degenerates) when the kernel
    carries no representable mass on the domain, which is part of how that
    optimiser fails on extreme parameter excursions.
    """
    return _kernel_quadrature(model, theta, domain, 0.0, rel_tol, max_evals)[0]


def log_normalizing_constant(model, theta, domain, rel_tol=DEFAULT_REL_TOL,
                             max_evals=500_000):
    """log of the normalising constant, overflow-safe via a probe-peak shift.

    Unlike :func:`normalizing_constant` this survives arbitrarily extreme
    parameters; use it for diagnostics and oracles. Returns
    ``(log_c, quad_result)``; ``log_c`` is -inf when even the shifted
    integral underflows.
    """
    res, peak = _kernel_quadrature(
        model, theta, domain, None, rel_tol, max_evals
    )
    if res.value <= 0.0 or not np.isfinite(res.value):
        return -np.inf, res
    return peak + float(np.log(res.value)), res
