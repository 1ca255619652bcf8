"""The boundary-flattening map, its level curves, inversion and localization.

Theta(z) = (v_bar(z), v(z)) read as the complex number X + iY = g(z).
On valid inputs it is conformal with |det DTheta| = |grad v|^2, sends the
original boundary piece into {Y = 0}, and is inverted pointwise by Newton
iteration on g.  The localized region E is realized as the preimage of a
coordinate rectangle (-a, a) x (0, b), which crosses {Y = 0} vertically
by construction.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import AnalyticCompletion
from .geometry import Domain, as_complex, boundary_sample
from .sampling import interior_points

DET_IDENTITY_RTOL = 1e-10
ANCHOR_IMAGE_HARD = 1e-4
ANCHOR_IMAGE_SOFT = 1e-6


class MapError(RuntimeError):
    """Map construction or use failed."""


class InversionError(MapError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class LevelSetError(RuntimeError):
    """Level-curve tracing hit an inconsistency (critical point, bad seeds)."""


def worker_count():
    env = os.environ.get("HODOGRAPH_WORKERS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


class HodographMap:
    """Completion + domain + image rectangle, with verified invariants."""

    def __init__(self, completion, domain, rectangle, residual=0.0, diagnostics=None):
        self.completion = completion
        self.domain = domain
        self.rectangle = rectangle  # (a, b)
        self.residual = float(residual)
        self.diagnostics = diagnostics if diagnostics is not None else []
        self._seed_grid = None

    def theta(self, z):
        return self.completion.g(z)

    def det_jacobian(self, z):
        """det DTheta from the two gradient evaluators."""
        gb = self.completion.grad_conjugate(z)
        gv = self.completion.grad_base(z)
        return gb.real * gv.imag - gb.imag * gv.real

    def grad_norm_sq(self, z):
        return np.abs(self.completion.grad_base(z)) ** 2

    def ok(self):
        return not self.diagnostics

    def seeds(self):
        if self._seed_grid is None:
            pts = interior_points(self.domain, 256, seed=23, margin=1e-3)
            self._seed_grid = (pts, self.theta(pts))
        return self._seed_grid


def build_map(completion: AnalyticCompletion, domain: Domain, rectangle=(0.5, 0.5),
              residual=0.0, n_check=1000, strict=True) -> HodographMap:
    """Assemble the map and verify its defining identities on samples.

    Any failed check lands in the diagnostics list; with ``strict`` the
    first failure raises.  A grossly wrong anchor image is always a hard
    error since it means the upstream normalization is broken.
    """
    m = HodographMap(completion, domain, tuple(rectangle), residual)
    anchor_image = completion.g(np.array([domain.anchor]))[0]
    if abs(anchor_image) > ANCHOR_IMAGE_HARD:
        raise MapError(f"Theta(anchor) = {anchor_image:.3e}, normalization broken upstream")
    if abs(anchor_image) > max(ANCHOR_IMAGE_SOFT, 2 * residual):
        m.diagnostics.append(f"anchor image {abs(anchor_image):.2e} above tolerance")

    pts = interior_points(domain, n_check, seed=29, margin=1e-3)
    det = m.det_jacobian(pts)
    gn2 = m.grad_norm_sq(pts)
    rel = np.max(np.abs(np.abs(det) - gn2) / np.maximum(gn2, 1e-300))
    if rel > DET_IDENTITY_RTOL:
        m.diagnostics.append(f"conformal factor identity violated (rel {rel:.2e})")

    omega = boundary_sample(domain, 512).of_role("omega")
    if omega.points.size:
        boundary_y = np.max(np.abs(completion.base.value(omega.points)))
        if boundary_y > max(2 * residual, 1e-12):
            m.diagnostics.append(
                f"boundary image off {{Y=0}} by {boundary_y:.2e} (residual {residual:.2e})"
            )
        m.boundary_image_max = float(boundary_y)
    else:
        m.boundary_image_max = 0.0
    m.anchor_image = complex(anchor_image)
    m.det_identity_rel = float(rel)

    if strict and m.diagnostics:
        raise MapError("; ".join(m.diagnostics))
    return m


# ---------------------------------------------------------------------------
# level curves


@dataclass
class LevelCurve:
    level: float
    nodes: np.ndarray  # interior polyline nodes
    endpoints: tuple  # two boundary points
    endpoint_s: tuple  # their arclength coordinates
    n_crossings: int = 2

    def path(self):
        return np.concatenate([[self.endpoints[0]], self.nodes, [self.endpoints[1]]])


def _value_and_gradient(v, z):
    if hasattr(v, "value_and_gradient"):
        return v.value_and_gradient(z)
    return v.value(z), v.gradient(z)


def boundary_level_crossings(v, domain, level, n_scan=4096):
    """Arclength coordinates where the boundary trace of v crosses the level."""
    b = domain.boundary
    s = np.linspace(0.0, b.length, n_scan, endpoint=False)
    vals = v.value(b.point_at(s)) - level
    sign_change = np.nonzero(vals[:-1] * vals[1:] < 0)[0]
    crossings = []
    for i in sign_change:
        lo, hi = s[i], s[i + 1]
        flo = vals[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = v.value(b.point_at(np.array([mid])))[0] - level
            if flo * fm <= 0:
                hi = mid
            else:
                lo, flo = mid, fm
        crossings.append(0.5 * (lo + hi))
    return np.array(crossings)


def trace_level_curve(v, domain, level, max_step=1e-2, tol=1e-12):
    """Predictor-corrector trace of {v = level} between its two boundary points.

    Predictor steps along the rotated gradient J grad(v) with a curvature-
    bounded step; the corrector is Newton projection back onto the level
    set.  An empty level set returns None.
    """
    if level <= 0:
        raise ValueError("level must be positive")
    b = domain.boundary
    crossings = boundary_level_crossings(v, domain, level)
    if crossings.size == 0:
        return None
    if crossings.size != 2:
        raise LevelSetError(
            f"level {level:g} crosses the boundary {crossings.size} times; expected 2"
        )
    s_a, s_b = crossings
    z_a = b.point_at(np.array([s_a]))[0]
    z_b = b.point_at(np.array([s_b]))[0]

    # initial direction: rotated gradient J grad(v), packed v_y - i v_x,
    # oriented into the domain
    val, grad = _value_and_gradient(v, np.array([z_a]))
    grad = grad[0]
    t0 = grad.imag - 1j * grad.real
    inward = -b.normal_at(np.array([s_a]))[0]
    orient = 1.0 if (t0.real * inward.real + t0.imag * inward.imag) > 0 else -1.0

    def step_tangent(z):
        val, grad = _value_and_gradient(v, np.array([z]))
        g = grad[0]
        ng = abs(g)
        if ng < 1e-10:
            raise LevelSetError(f"critical point on level curve near {z:.6f}")
        tangent = orient * (g.imag - 1j * g.real) / ng
        gpp = v.d2holo(np.array([z]))[0]
        vxx, vxy = gpp.imag, gpp.real
        vx, vy = g.imag, g.real
        kappa = abs(vxx * vy * vy - 2 * vxy * vx * vy - vxx * vx * vx) / ng**3
        step = min(max_step, 0.2 / max(kappa, 1.0))
        return tangent, step, ng

    def correct(z):
        for _ in range(12):
            val, grad = _value_and_gradient(v, np.array([z]))
            r = val[0] - level
            if abs(r) <= tol:
                return z
            g = grad[0]
            ng2 = abs(g) ** 2
            if ng2 < 1e-20:
                raise LevelSetError(f"critical point on level curve near {z:.6f}")
            z = z - r * g / ng2
        if abs(v.value(np.array([z]))[0] - level) > 1e-8:
            raise LevelSetError(f"corrector failed near {z:.6f}")
        return z

    nodes = []
    tangent, step, _ = step_tangent(z_a + 0j)
    z = correct(z_a + 0.5 * min(step, 1e-3) * tangent)
    nodes.append(z)
    reached = False
    for it in range(40000):
        tangent, step, _ = step_tangent(z)
        near_end = abs(z - z_b) < max(1.6 * step, 0.05)
        if abs(z - z_b) < 1.6 * step:
            reached = True
            break
        z_next = correct(z + step * tangent)
        # membership is a safety net for bad data; the corrector keeps the
        # iterate on the level set, so probe it sparsely away from the end
        if (near_end or it % 4 == 0) and not domain.inside_one(z_next):
            z_next = correct(z + 0.25 * step * tangent)
            if not domain.inside_one(z_next):
                reached = abs(z - z_b) < 0.05
                break
        nodes.append(z_next)
        z = z_next
    if not reached:
        raise LevelSetError(f"level {level:g} tracing stalled at {z:.6f} short of {z_b:.6f}")

    nodes = np.array(nodes)
    return LevelCurve(float(level), nodes, (complex(z_a), complex(z_b)), (float(s_a), float(s_b)))


# ---------------------------------------------------------------------------
# injectivity


@dataclass
class InjectivityReport:
    passed: bool
    level_results: list
    collisions: list
    n_probe: int

    def min_increment(self):
        vals = [r["min_increment"] for r in self.level_results if r["min_increment"] is not None]
        return min(vals) if vals else None


def trace_levels(v, domain, levels):
    """Trace a family of level curves, one worker per curve."""
    workers = worker_count()
    runner = lambda lv: trace_level_curve(v, domain, lv)
    if workers > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(runner, levels))
    return [runner(lv) for lv in levels]


def verify_injectivity(hmap: HodographMap, levels, n_probe=10000, extra_pairs=None, seed=0,
                       curves=None):
    """Monotonicity of v_bar along level curves plus a collision probe.

    Returns a report with witnesses; failures are data for the caller, not
    exceptions.  ``extra_pairs`` lets negative controls inject explicit
    candidate collision pairs that quasi-random probing would never hit.
    ``curves`` reuses already-traced level curves aligned with ``levels``.
    """
    comp = hmap.completion
    v = comp.base
    if curves is None:
        curves = trace_levels(v, hmap.domain, levels)

    results = []
    for level, curve in zip(levels, curves):
        if curve is None:
            results.append({"level": float(level), "empty": True, "min_increment": None, "nodes": 0})
            continue
        path = curve.path()
        vbar = comp.conjugate.value(path)
        if vbar[-1] < vbar[0]:
            vbar = vbar[::-1]
        inc = np.diff(vbar)
        results.append({
            "level": float(level),
            "empty": False,
            "min_increment": float(inc.min()),
            "nodes": int(path.size),
        })

    z1 = interior_points(hmap.domain, n_probe, seed=seed * 2 + 17)
    z2 = interior_points(hmap.domain, n_probe, seed=seed * 2 + 31)
    apart = np.abs(z1 - z2) > 1e-3
    w1, w2 = hmap.theta(z1[apart]), hmap.theta(z2[apart])
    hit = np.abs(w1 - w2) < 1e-9
    collisions = [
        (complex(a), complex(b))
        for a, b in zip(z1[apart][hit][:8], z2[apart][hit][:8])
    ]
    if extra_pairs:
        for a, b in extra_pairs:
            a, b = complex(as_complex(a)), complex(as_complex(b))
            if abs(a - b) > 1e-3 and abs(hmap.theta(np.array([a]))[0] - hmap.theta(np.array([b]))[0]) < 1e-9:
                collisions.append((a, b))
    mono_ok = all(r["empty"] or r["min_increment"] > 0 for r in results)
    return InjectivityReport(mono_ok and not collisions, results, collisions, int(apart.sum()))


# ---------------------------------------------------------------------------
# inversion


def _newton_invert(comp, targets, seeds, tol=1e-10, max_iter=50):
    """Vectorized Newton solve of g(z) = w keeping the best iterate seen.

    Large charge expansions evaluate g with an absolute noise floor, so
    the residual stalls and jitters near it rather than contracting to
    machine zero; a point finishes when it clears the tolerance with
    headroom or its step stalls, and the smallest-residual iterate wins.
    """
    z = np.array(seeds, dtype=complex, copy=True)
    w = np.asarray(targets, dtype=complex)
    best_z = z.copy()
    best_r = np.abs(comp.g(z) - w)
    active = np.ones(z.shape, dtype=bool)
    stop_r = 0.05 * tol
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        r = comp.g(z[idx]) - w[idx]
        ra = np.abs(r)
        better = ra < best_r[idx]
        best_z[idx[better]] = z[idx[better]]
        best_r[idx[better]] = ra[better]
        gp = comp.gprime(z[idx])
        gp = np.where(np.abs(gp) < 1e-300, 1e-300, gp)
        step = r / gp
        stalled = np.abs(step) <= 1e-14 * (1.0 + np.abs(z[idx]))
        done = (ra <= stop_r) | stalled | ~np.isfinite(ra)
        z[idx[~done]] -= step[~done]
        active[idx[done]] = False
    ok = np.isfinite(best_r) & (best_r <= tol)
    return best_z, ok


def invert(hmap: HodographMap, targets, seed=None, tol=1e-10, max_iter=50, boundary_tol=1e-6):
    """Newton inversion of Theta; certified to land inside the domain.

    ``targets`` may be scalar or an array.  Seeds default to the interior
    grid point whose image is nearest each target, then coarse fallback
    seeds, then homotopy continuation from a deep interior point: the
    representation extends holomorphically past the boundary, so plain
    Newton can converge onto a spurious exterior branch, and only a
    certified in-domain preimage is accepted.  ``boundary_tol`` admits
    preimages within that distance of the boundary; the default absorbs
    the polyline discretization of the membership test so legitimate
    boundary preimages (for example of points on {Y=0}) certify.
    """
    if hmap.diagnostics:
        raise MapError(f"map has diagnostic failures, inversion blocked: {hmap.diagnostics}")
    w = np.atleast_1d(as_complex(targets)).astype(complex)
    scalar = np.ndim(as_complex(targets)) == 0

    def certified(z_arr):
        inside = hmap.domain.inside(z_arr)
        if boundary_tol > 0.0 and not np.all(inside):
            near = hmap.domain.boundary.distance(z_arr[~inside]) <= boundary_tol
            inside[np.nonzero(~inside)[0][near]] = True
        return inside

    if seed is not None:
        seeds = np.full(w.shape, complex(as_complex(seed)))
    else:
        grid_z, grid_w = hmap.seeds()
        nearest = np.argmin(np.abs(grid_w[None, :] - w[:, None]), axis=1)
        seeds = grid_z[nearest]

    z, conv = _newton_invert(hmap.completion, w, seeds, tol, max_iter)
    good = conv & certified(z)

    if not np.all(good):
        fallback = interior_points(hmap.domain, 8, seed=41, margin=1e-2)
        for fb in fallback:
            bad = ~good
            if not np.any(bad):
                break
            z_try, conv_try = _newton_invert(hmap.completion, w[bad], np.full(int(bad.sum()), fb), tol, max_iter)
            acc = conv_try & certified(z_try)
            idx = np.nonzero(bad)[0]
            z[idx[acc]] = z_try[acc]
            good[idx[acc]] = True

    if not np.all(good):
        # walk from a deep interior image toward each stubborn target,
        # re-seeding Newton with the previous certified preimage
        bad = np.nonzero(~good)[0]
        z0 = hmap.domain.interior_probe()
        w0 = hmap.completion.g(np.array([z0]))[0]
        z_walk = np.full(bad.size, z0, dtype=complex)
        alive = np.ones(bad.size, dtype=bool)
        for t in np.linspace(0.125, 1.0, 8):
            w_t = (1 - t) * w0 + t * w[bad]
            z_walk[alive], conv_w = _newton_invert(
                hmap.completion, w_t[alive], z_walk[alive], tol, max_iter
            )
            alive[np.nonzero(alive)[0]] &= conv_w
        acc = alive & certified(z_walk)
        z[bad[acc]] = z_walk[acc]
        good[bad[acc]] = True

    if not np.all(good):
        k = int(np.nonzero(~good)[0][0])
        if conv[k]:
            raise InversionError(f"inversion left the domain at {z[k]:.6f}", last_iterate=complex(z[k]))
        raise InversionError(f"inversion failed for target {w[k]:.6f}", last_iterate=complex(z[k]))
    return complex(z[0]) if scalar else z


# ---------------------------------------------------------------------------
# localization: E = preimage of the rectangle


@dataclass
class HodographRegion:
    """Preimage of (-a, a) x (0, b) with traced side polylines."""

    hmap: HodographMap
    a: float
    b: float
    sides: dict  # name -> complex polyline in the z-plane
    inner_ok: bool
    outer_ok: bool

    def inside(self, z):
        z = np.atleast_1d(as_complex(z))
        w = self.hmap.theta(z)
        in_rect = (np.abs(w.real) < self.a) & (w.imag > 0) & (w.imag < self.b)
        return in_rect & self.hmap.domain.inside(z)

    def contains_closure(self, z, tol=1e-6):
        z = np.atleast_1d(as_complex(z))
        w = self.hmap.theta(z)
        in_rect = (np.abs(w.real) <= self.a + tol) & (w.imag >= -tol) & (w.imag <= self.b + tol)
        near_domain = self.hmap.domain.inside(z) | (self.hmap.domain.boundary.distance(z) <= tol)
        return in_rect & near_domain

    def bounding_box(self):
        pts = np.concatenate(list(self.sides.values()))
        pad = 0.02 * max(np.ptp(pts.real), np.ptp(pts.imag), 1e-6)
        return (
            complex(pts.real.min() - pad, pts.imag.min() - pad),
            complex(pts.real.max() + pad, pts.imag.max() + pad),
        )

    def polyline(self):
        pts = np.concatenate([self.sides[k] for k in ("bottom", "right", "top", "left")])
        # sides share their corner points; drop the zero-length edges
        keep = np.concatenate([[True], np.abs(np.diff(pts)) > 1e-14])
        return pts[keep]

    def samples(self, n, seed=0):
        """Quasi-random points inside the region (rejection over the domain)."""
        pool = interior_points(self.hmap.domain, max(20 * n, 2000), seed=seed + 71, margin=1e-4)
        pool = pool[self.inside(pool)]
        if pool.size == 0:
            raise MapError("no sample points landed inside the region")
        return pool[:n]


def _rectangle_inner_ok(hmap, a, b, n_side=17):
    """Do the rectangle's interior-side edges invert into the domain?"""
    xs = np.linspace(-a, a, 2 * n_side + 1)
    ys = np.linspace(0.0, b, n_side + 1)[1:]
    targets = np.concatenate([
        xs + 1j * b,                  # top
        a + 1j * ys,                  # right
        -a + 1j * ys,                 # left
        xs * 0.5 + 1j * (0.5 * b),    # mid row for good measure
    ])
    try:
        invert(hmap, targets, tol=1e-9)
    except (InversionError, MapError):
        return False
    return True


def localize_E_r(hmap: HodographMap, rectangle=None, n_cover=10000, seed=0) -> HodographRegion:
    """Choose (a, b) and trace the preimage-of-rectangle region.

    Starts from the tight cover of the half-ball image samples (so the
    outer inclusion holds by construction) and shrinks geometrically until
    every rectangle edge inverts into the domain.  Both inclusion flags
    are reported; failure to satisfy the inner inclusion degrades to the
    largest rectangle that does invert.
    """
    dom = hmap.domain
    # clearance keeps the cover away from the residual-noise band where the
    # solved v can dip a hair below zero
    half_ball = interior_points(
        dom, n_cover, seed=seed + 53, ball_radius=0.5 * dom.clip_radius, margin=1e-3
    )
    w = hmap.theta(half_ball)
    a_min = float(np.max(np.abs(w.real))) * 1.02 + 1e-6
    b_min = float(np.max(w.imag)) * 1.02 + 1e-6

    if rectangle is not None:
        a, b = float(rectangle[0]), float(rectangle[1])
        inner = _rectangle_inner_ok(hmap, a, b)
    else:
        a, b = a_min, b_min
        inner = _rectangle_inner_ok(hmap, a, b)
        shrink = 0
        while not inner and shrink < 60:
            a *= 0.94
            b *= 0.94
            shrink += 1
            inner = _rectangle_inner_ok(hmap, a, b)

    y_floor = -2.0 * hmap.residual
    outer = bool(np.all(np.abs(w.real) < a) and np.all(w.imag < b) and np.all(w.imag > y_floor))

    n_poly = 129
    xs = np.linspace(-a, a, n_poly)
    ys = np.linspace(0.0, b, n_poly // 2)
    sides = {}
    sides["bottom"] = invert(hmap, xs + 0j, boundary_tol=max(1e-4, 10 * hmap.residual))
    sides["right"] = invert(hmap, a + 1j * ys[1:], boundary_tol=1e-6)
    sides["top"] = invert(hmap, xs[::-1] + 1j * b, boundary_tol=1e-6)
    sides["left"] = invert(hmap, -a + 1j * ys[::-1][:-1], boundary_tol=1e-6)
    return HodographRegion(hmap, a, b, sides, bool(inner), outer)


# ---------------------------------------------------------------------------
# transport of the solution of interest


class TransportedCompletion:
    """Completion of U = u o Theta^{-1} via G = g_u o g_v^{-1}.

    Derivatives come from the chain rule through the certified Newton
    inverse; every evaluation inverts its own batch of points.
    """

    def __init__(self, u_completion, hmap, boundary_tol=None):
        self.u = u_completion
        self.hmap = hmap
        if boundary_tol is None:
            boundary_tol = max(1e-4, 10 * hmap.residual)
        self.boundary_tol = boundary_tol
        self.residual = hmap.residual

    def pullback(self, w):
        return invert(self.hmap, w, boundary_tol=self.boundary_tol)

    def value(self, w):
        w_arr = np.atleast_1d(as_complex(w))
        z = invert(self.hmap, w_arr, boundary_tol=self.boundary_tol)
        out = self.u.base.value(z)
        return float(out[0]) if np.ndim(as_complex(w)) == 0 else out

    def gprime(self, w):
        w_arr = np.atleast_1d(as_complex(w))
        z = invert(self.hmap, w_arr, boundary_tol=self.boundary_tol)
        out = self.u.gprime(z) / self.hmap.completion.gprime(z)
        return complex(out[0]) if np.ndim(as_complex(w)) == 0 else out

    def gsecond(self, w):
        w_arr = np.atleast_1d(as_complex(w))
        z = invert(self.hmap, w_arr, boundary_tol=self.boundary_tol)
        gv1 = self.hmap.completion.gprime(z)
        gv2 = self.hmap.completion.gsecond(z)
        gu1 = self.u.gprime(z)
        gu2 = self.u.gsecond(z)
        out = (gu2 - (gu1 / gv1) * gv2) / gv1**2
        return complex(out[0]) if np.ndim(as_complex(w)) == 0 else out

    def gradient(self, w):
        """Gradient of U packed as U_X + i U_Y."""
        gp = self.gprime(w)
        return 1j * np.conj(gp)


def transformation_law_residual(hmap, u_completion, region=None, n=500, seed=0):
    """Max relative defect of |grad u|^2 = |det DTheta| |grad U|^2 o Theta.

    grad U is assembled by the chain rule through the certified inverse at
    the image points, so the identity is exercised end to end rather than
    algebraically collapsed.
    """
    dom = hmap.domain
    pts = interior_points(dom, 4 * n, seed=seed + 61, margin=1e-3)
    if region is not None:
        pts = pts[region.inside(pts)]
    if pts.size < n:
        raise MapError(f"not enough sample points inside the region ({pts.size})")
    pts = pts[:n]
    w = hmap.theta(pts)
    zz = invert(hmap, w, boundary_tol=1e-6)

    gu = u_completion.base.gradient(pts)
    lhs = np.abs(gu) ** 2

    # DTheta^{-T} grad u at the recovered source points
    gb = hmap.completion.grad_conjugate(zz)
    gv = hmap.completion.grad_base(zz)
    det = gb.real * gv.imag - gb.imag * gv.real
    gu_z = u_completion.base.gradient(zz)
    # solve DTheta^T m = grad u: DTheta = [[gb.re, gb.im], [gv.re, gv.im]]
    m_x = (gv.imag * gu_z.real - gv.real * gu_z.imag) / det
    m_y = (-gb.imag * gu_z.real + gb.real * gu_z.imag) / det
    rhs = np.abs(det) * (m_x**2 + m_y**2)
    return float(np.max(np.abs(lhs - rhs) / np.maximum(lhs, 1e-300)))
