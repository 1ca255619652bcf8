"""Planar domains bounded by parametrized Jordan curves.

A domain is a simply connected region of the plane together with a
distinguished boundary anchor point and a localizing ball around it.
Points are complex numbers x + iy throughout.  Boundary curves are
ordered lists of parametrized arcs; arc length, tangents, outward
normals and membership tests are all derived from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .sampling import halton, radical_inverse

CLOSURE_TOL = 1e-12
CORNER_ANGLE_TOL = 1e-9

# 16-point Gauss-Legendre rule reused for arc-length accumulation
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


def as_complex(p):
    """Coerce a point given as complex, (x, y) pair, or array thereof."""
    if isinstance(p, (complex, float, int, np.complexfloating, np.floating)):
        return complex(p)
    a = np.asarray(p)
    if a.dtype.kind == "c":
        return a
    if a.ndim >= 1 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a.astype(complex)


class Segment:
    """One parametrized boundary arc, t in [0, 1] -> complex point.

    ``point`` and ``velocity`` must accept numpy arrays.  ``role`` tags
    which part of the composite boundary the arc belongs to: "omega" for
    the original boundary piece carrying zero Dirichlet data, "cap" for
    the closing circular arc where data may live, "join" for short
    connector pieces.
    """

    def __init__(self, point, velocity=None, role="omega", name=""):
        self.point = point
        self.role = role
        self.name = name
        if velocity is None:
            h = 1e-6

            def velocity(t, _p=point, _h=h):
                t = np.asarray(t, dtype=float)
                return (_p(np.clip(t + _h, 0.0, 1.0)) - _p(np.clip(t - _h, 0.0, 1.0))) / (
                    np.clip(t + _h, 0.0, 1.0) - np.clip(t - _h, 0.0, 1.0)
                )

        self.velocity = velocity
        self._build_table()

    def _cumulative(self, n):
        t_edges = np.linspace(0.0, 1.0, n + 1)
        h = 1.0 / n
        # GL nodes mapped into every subinterval, evaluated in one batch
        tt = t_edges[:-1, None] + (0.5 * h) * (_GL_NODES[None, :] + 1.0)
        speed = np.abs(self.velocity(tt.ravel())).reshape(n, _GL_NODES.size)
        seg_len = (0.5 * h) * speed @ _GL_WEIGHTS
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        return t_edges, cum

    def _build_table(self):
        # refine until the length stabilizes; profiles with integrable
        # derivative singularities (log-type) stall around 1e-9, which is
        # still far below every consumer's tolerance
        n = 512
        t_edges, cum = self._cumulative(n)
        total = cum[-1]
        delta = np.inf
        while n < 16384:
            t2, c2 = self._cumulative(2 * n)
            delta = abs(c2[-1] - total)
            n *= 2
            t_edges, cum, total = t2, c2, c2[-1]
            if delta <= 1e-10 * max(1.0, abs(total)):
                break
        if delta > 1e-7 * max(1.0, abs(total)):
            raise GeometryError("arc-length quadrature failed to converge (non-rectifiable segment?)")
        if not np.isfinite(total) or total <= 0.0:
            raise GeometryError("segment arc length must be finite and positive")
        self._t_table = t_edges
        self._s_table = cum
        self.length = float(total)

    def param_at_length(self, s):
        """Local parameter t at arc length s from the segment start."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        return np.interp(s, self._s_table, self._t_table)

    def start(self):
        return complex(self.point(np.array([0.0]))[0])

    def end(self):
        return complex(self.point(np.array([1.0]))[0])


def line_segment(a, b, role="omega", name=""):
    a, b = complex(a), complex(b)

    def point(t):
        t = np.asarray(t, dtype=float)
        return a + (b - a) * t

    def velocity(t):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, b - a, dtype=complex)

    return Segment(point, velocity, role=role, name=name)


def arc_segment(center, radius, theta0, theta1, role="cap", name=""):
    center = complex(center)

    def point(t):
        t = np.asarray(t, dtype=float)
        th = theta0 + (theta1 - theta0) * t
        return center + radius * np.exp(1j * th)

    def velocity(t):
        t = np.asarray(t, dtype=float)
        th = theta0 + (theta1 - theta0) * t
        return 1j * radius * (theta1 - theta0) * np.exp(1j * th)

    return Segment(point, velocity, role=role, name=name)


class BoundaryCurve:
    """Closed, simple, counterclockwise-oriented chain of segments."""

    def __init__(self, segments, check=True):
        if not segments:
            raise GeometryError("boundary needs at least one segment")
        self.segments = list(segments)
        lengths = np.array([s.length for s in self.segments])
        self.offsets = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self.offsets[-1])
        self._poly_cache = {}
        if check:
            self._check_closed()
        self.ccw = self._signed_area() > 0.0
        if check and not self.ccw:
            raise GeometryError("boundary must be oriented counterclockwise")
        self.corners = self._find_corners()
        if check:
            self._check_simple()

    def _check_closed(self):
        pts = [s.start() for s in self.segments] + [self.segments[-1].end()]
        for k in range(len(self.segments)):
            nxt = self.segments[(k + 1) % len(self.segments)].start()
            gap = abs(self.segments[k].end() - nxt)
            if gap > CLOSURE_TOL:
                raise GeometryError(f"boundary not closed at junction {k} (gap {gap:.2e})")

    def _signed_area(self):
        p = self.polyline(1024)
        x, y = p.real, p.imag
        return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))

    def _find_corners(self):
        corners = []
        n = len(self.segments)
        eps = 1e-7  # stay off the junction itself: one-sided derivatives may be discontinuous there
        for k in range(n):
            a = self.segments[k]
            b = self.segments[(k + 1) % n]
            ta = a.velocity(np.array([1.0 - eps]))[0]
            tb = b.velocity(np.array([eps]))[0]
            if abs(ta) == 0 or abs(tb) == 0:
                continue
            ang = abs(np.angle(tb / ta))
            if ang > CORNER_ANGLE_TOL:
                corners.append(self.offsets[(k + 1) % n] if k + 1 < n else 0.0)
        return np.array(sorted(corners))

    def _check_simple(self):
        # proper-crossing test over all non-adjacent sampled edge pairs;
        # orientation signs are normalized so collinear neighbors at
        # roundoff scale cannot trigger false positives
        p = self.polyline(512)
        a, b = p[:-1], p[1:]
        n = a.size
        ii, jj = np.triu_indices(n, k=2)
        wrap = (ii == 0) & (jj == n - 1)
        ii, jj = ii[~wrap], jj[~wrap]
        ei = b[ii] - a[ii]
        ej = b[jj] - a[jj]

        def side(e, w):
            return np.imag(np.conj(e) * w) / (np.abs(e) * np.abs(w) + 1e-300)

        d1 = side(ei, a[jj] - a[ii])
        d2 = side(ei, b[jj] - a[ii])
        d3 = side(ej, a[ii] - a[jj])
        d4 = side(ej, b[ii] - a[jj])
        tol = 1e-10
        crossing = (d1 * d2 < -tol) & (d3 * d4 < -tol)
        if np.any(crossing):
            k = int(np.argmax(crossing))
            raise GeometryError(f"boundary self-intersects near sampled edges ({ii[k]}, {jj[k]})")

    def locate(self, s):
        """Map global arc length to (segment index, local arc length)."""
        s = np.mod(np.asarray(s, dtype=float), self.length)
        idx = np.clip(np.searchsorted(self.offsets, s, side="right") - 1, 0, len(self.segments) - 1)
        return idx, s - self.offsets[idx]

    def point_at(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx, loc = self.locate(s)
        out = np.empty(s.shape, dtype=complex)
        for k in np.unique(idx):
            seg = self.segments[k]
            m = idx == k
            out[m] = seg.point(seg.param_at_length(loc[m]))
        return out

    def tangent_at(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx, loc = self.locate(s)
        out = np.empty(s.shape, dtype=complex)
        for k in np.unique(idx):
            seg = self.segments[k]
            m = idx == k
            v = seg.velocity(seg.param_at_length(loc[m]))
            out[m] = v / np.abs(v)
        return out

    def normal_at(self, s):
        """Outward unit normal (clockwise quarter-turn of the tangent)."""
        return -1j * self.tangent_at(s)

    def polyline(self, n=2048):
        if n not in self._poly_cache:
            s = np.linspace(0.0, self.length, n + 1)
            p = self.point_at(s[:-1])
            self._poly_cache[n] = np.concatenate([p, p[:1]])
        return self._poly_cache[n]

    def bounding_box(self):
        p = self.polyline(2048)
        return (
            complex(p.real.min(), p.imag.min()),
            complex(p.real.max(), p.imag.max()),
        )

    def role_ranges(self, role):
        """Arc-length intervals [(s0, s1), ...] covered by segments of a role."""
        out = []
        for k, seg in enumerate(self.segments):
            if seg.role == role:
                out.append((float(self.offsets[k]), float(self.offsets[k + 1])))
        return out

    def distance(self, z):
        """Distance from point(s) to the sampled boundary polyline.

        Two-stage: a coarse polyline resolves far points (absolute error
        below ~1e-4), and only points near the boundary pay for the fine
        pass.  All consumers threshold distances well above that error or
        care only about the near zone.
        """
        z = np.atleast_1d(as_complex(z))
        coarse = self.polyline(128)
        d = polyline_distance(coarse, z)
        cutoff = 2.5 * self.length / 128
        near = d < cutoff
        if np.any(near):
            d[near] = polyline_distance(self.polyline(2048), z[near])
        return d

    def project(self, z, refine=40):
        """Arc-length coordinate of the boundary point nearest to z (scalar)."""
        z = complex(as_complex(z))
        n = 4096
        s_grid = np.linspace(0.0, self.length, n, endpoint=False)
        d = np.abs(self.point_at(s_grid) - z)
        s0 = s_grid[int(np.argmin(d))]
        half = self.length / n
        for _ in range(refine):
            ss = np.linspace(s0 - half, s0 + half, 9)
            dd = np.abs(self.point_at(np.mod(ss, self.length)) - z)
            s0 = ss[int(np.argmin(dd))]
            half /= 4.0
        return float(np.mod(s0, self.length))


class Domain:
    """Simply connected region with a boundary anchor and localizing ball.

    Membership uses the winding number of the sampled boundary polyline,
    which stays robust on the non-convex chord-arc shapes used in tests.
    """

    def __init__(self, boundary, anchor=0j, clip_radius=1.0, check=True, grid_check=True):
        self.boundary = boundary
        self.anchor = complex(anchor)
        self.clip_radius = float(clip_radius)
        self._poly = boundary.polyline(2048)
        self._build_edge_bins()
        if check:
            self._check_anchor()
            self._check_probes()
        if check and grid_check:
            self._check_connected()

    def _check_anchor(self):
        s = self.boundary.project(self.anchor)
        d = abs(complex(self.boundary.point_at(s)[0]) - self.anchor)
        if d > CLOSURE_TOL:
            raise GeometryError(f"anchor is off the boundary by {d:.2e}")
        self.anchor_s = s

    def interior_probe(self):
        """A point comfortably inside, found by stepping inward from the boundary."""
        L = self.boundary.length
        for frac in (0.5, 0.25, 0.75, 0.125, 0.625):
            s = frac * L
            for step in (0.2, 0.1, 0.05, 0.02):
                z = complex(self.boundary.point_at(s)[0] - step * self.clip_radius * self.boundary.normal_at(s)[0])
                disk = z + 0.25 * step * self.clip_radius * np.exp(2j * np.pi * np.arange(16) / 16)
                if bool(self.inside(np.array([z]))[0]) and np.all(self.inside(disk)):
                    return z
        raise GeometryError("could not find an interior probe point")

    def _check_probes(self):
        probe = self.interior_probe()
        disk = probe + 0.01 * self.clip_radius * np.exp(2j * np.pi * np.arange(16) / 16)
        centroid = complex(np.mean(disk))
        if not bool(self.inside(np.array([centroid]))[0]):
            raise GeometryError("interior probe disk centroid not inside")
        far = self.anchor + 2.0 * self.clip_radius * np.exp(1j * 0.37)
        lo, hi = self.boundary.bounding_box()
        if abs(far - self.anchor) > 0 and bool(self.inside(np.array([far]))[0]) and not (
            lo.real <= far.real <= hi.real and lo.imag <= far.imag <= hi.imag
        ):
            raise GeometryError("point beyond the clip ball claimed inside")
        self._probe = probe

    def _check_connected(self):
        n = 256
        r = self.clip_radius
        xs = np.linspace(self.anchor.real - r, self.anchor.real + r, n)
        ys = np.linspace(self.anchor.imag - r, self.anchor.imag + r, n)
        X, Y = np.meshgrid(xs, ys)
        Z = (X + 1j * Y).ravel()
        mask = self.inside(Z) & (np.abs(Z - self.anchor) < r)
        grid = mask.reshape(n, n)
        labels, ncomp = ndimage.label(grid)
        if ncomp > 1:
            # cells per component; tiny slivers from grid quantization are tolerated
            sizes = np.sort(np.bincount(labels.ravel())[1:])[::-1]
            if sizes.size > 1 and sizes[1] > 4:
                raise GeometryError(f"clipped region splits into {ncomp} grid components")
        if ncomp == 0:
            raise GeometryError("clipped region is empty on the 256^2 grid")

    def _build_edge_bins(self):
        # y-binned edge index so the winding test touches few edges per point
        poly = self._poly
        ay, by = poly[:-1].imag, poly[1:].imag
        self._ymin = float(min(ay.min(), by.min()))
        self._ymax = float(max(ay.max(), by.max()))
        nbins = 128
        span = max(self._ymax - self._ymin, 1e-300)
        lo = np.floor((np.minimum(ay, by) - self._ymin) / span * nbins).astype(int)
        hi = np.floor((np.maximum(ay, by) - self._ymin) / span * nbins).astype(int)
        lo = np.clip(lo, 0, nbins - 1)
        hi = np.clip(hi, 0, nbins - 1)
        self._bins = [[] for _ in range(nbins)]
        for e, (l, h) in enumerate(zip(lo, hi)):
            for b in range(l, h + 1):
                self._bins[b].append(e)
        self._bins = [np.array(b, dtype=int) for b in self._bins]
        self._nbins = nbins

    def inside(self, z):
        """Winding-number membership for an array of points."""
        z = np.atleast_1d(as_complex(z))
        poly = self._poly
        ax, ay = poly[:-1].real, poly[:-1].imag
        bx, by = poly[1:].real, poly[1:].imag
        out = np.zeros(z.shape, dtype=bool)
        y_all = z.imag
        span = max(self._ymax - self._ymin, 1e-300)
        in_band = np.isfinite(z) & (y_all >= self._ymin) & (y_all <= self._ymax)
        y_all = np.where(np.isfinite(y_all), y_all, self._ymin)
        binidx = np.clip(((y_all - self._ymin) / span * self._nbins).astype(int), 0, self._nbins - 1)
        for b in range(self._nbins):
            sel = np.nonzero(in_band & (binidx == b))[0]
            if sel.size == 0 or self._bins[b].size == 0:
                continue
            e = self._bins[b]
            x = z.real[sel, None]
            y = y_all[sel, None]
            eax, eay, ebx, eby = ax[e], ay[e], bx[e], by[e]
            left = (ebx - eax) * (y - eay) - (x - eax) * (eby - eay)
            up = (eay <= y) & (eby > y) & (left > 0)
            down = (eay > y) & (eby <= y) & (left < 0)
            wn = up.sum(axis=1) - down.sum(axis=1)
            out[sel] = wn != 0
        return out

    def inside_one(self, z):
        return bool(self.inside(np.array([complex(as_complex(z))]))[0])


@dataclass
class GraphParametrization:
    """Scalar boundary profile y = phi(x) with phi(0) = 0.

    ``tag`` records the smoothness class: "lipschitz", "c1", "c1dini" or
    "c1dmo".  ``knots`` lists x-locations where the derivative jumps
    (corners); the graph is split there so corner bookkeeping stays exact.
    """

    phi: callable
    dphi: callable = None
    tag: str = "c1"
    knots: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.tag not in ("lipschitz", "c1", "c1dini", "c1dmo"):
            raise GeometryError(f"unknown smoothness tag {self.tag!r}")
        v0 = float(self.phi(np.array([0.0]))[0])
        if abs(v0) > 1e-14:
            raise GeometryError(f"phi(0) = {v0:.2e}, must vanish")
        if self.tag != "lipschitz" and self.dphi is not None:
            xs = np.linspace(-0.4, 0.4, 100)
            if self.knots:
                for k in self.knots:
                    xs = xs[np.abs(xs - k) > 1e-3]
            h = 1e-6
            fd = (self.phi(xs + h) - self.phi(xs - h)) / (2 * h)
            if np.max(np.abs(fd - self.dphi(xs))) > 1e-6:
                raise GeometryError("derivative evaluator disagrees with finite differences")


def dmo_phi(x):
    """Boundary profile x / |log|x||^(1/2), extended by 0 at the origin.

    Defined for |x| < 1/2; the profile is C^1 with derivative vanishing
    at 0 but its gradient modulus is not Dini.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(np.abs(x) >= 0.5):
        raise ValueError("dmo_phi requires |x| < 1/2")
    out = np.zeros(x.shape)
    nz = x != 0.0
    out[nz] = x[nz] / np.sqrt(np.abs(np.log(np.abs(x[nz]))))
    return float(out[0]) if scalar else out


def dmo_dphi(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape)
    nz = x != 0.0
    L = np.abs(np.log(np.abs(x[nz])))
    out[nz] = L ** -0.5 + 0.5 * L ** -1.5
    return out


def graph_zero():
    return GraphParametrization(
        phi=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        dphi=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        tag="c1",
        name="zero",
    )


def graph_dmo():
    # profile is only defined on |x| < 1/2; clamp so the closed graph over
    # [-1/2, 1/2] evaluates its continuous limit at the endpoints
    lim = 0.5 - 1e-13

    def phi(x):
        return dmo_phi(np.clip(np.asarray(x, dtype=float), -lim, lim))

    def dphi(x):
        return dmo_dphi(np.clip(np.asarray(x, dtype=float), -lim, lim))

    # split at 0 so the non-analytic point sits on a segment junction
    return GraphParametrization(phi=phi, dphi=dphi, tag="c1dmo", knots=(0.0,), name="dmo")


def graph_corner():
    return GraphParametrization(
        phi=lambda x: np.abs(np.asarray(x, dtype=float)),
        dphi=lambda x: np.sign(np.asarray(x, dtype=float)),
        tag="lipschitz",
        knots=(0.0,),
        name="corner",
    )


def graph_polyline(xs, ys):
    """Piecewise-linear profile through knots (xs, ys) with phi(0) = 0."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)

    def phi(x):
        return np.interp(np.asarray(x, dtype=float), xs, ys)

    interior = tuple(float(x) for x in xs[1:-1])
    return GraphParametrization(phi=phi, dphi=None, tag="lipschitz", knots=interior, name="custom-polyline")


def make_graph_domain(phi: GraphParametrization, half_width, grid_check=True):
    """Domain above the graph of phi, closed through the upper unit-circle arc.

    The graph spans [-half_width, half_width]; short vertical joins connect
    its ends to the circle when the ends are strictly inside the disk.
    """
    w = float(half_width)
    if not 0.0 < w <= 1.0:
        raise GeometryError("half_width must lie in (0, 1]")
    xs = np.linspace(-w, w, 4097)
    ys = np.asarray(phi.phi(xs), dtype=float)
    if not np.all(np.isfinite(ys)):
        raise GeometryError("phi produced non-finite values")
    r2 = xs**2 + ys**2
    if np.max(r2) > 1.0 + 1e-12:
        raise GeometryError("graph exits the unit disk")
    y_join = math.sqrt(max(0.0, 1.0 - w * w))
    yl = float(phi.phi(np.array([-w]))[0])
    yr = float(phi.phi(np.array([w]))[0])
    if yr > y_join + 1e-12 or yl > y_join + 1e-12:
        raise GeometryError("graph exits the unit disk at its endpoints")

    def graph_piece(x0, x1):
        def point(t, x0=x0, x1=x1):
            t = np.asarray(t, dtype=float)
            x = x0 + (x1 - x0) * t
            return x + 1j * np.asarray(phi.phi(x), dtype=float)

        vel = None
        if phi.dphi is not None:

            def vel(t, x0=x0, x1=x1):
                t = np.asarray(t, dtype=float)
                x = x0 + (x1 - x0) * t
                return (x1 - x0) * (1.0 + 1j * np.asarray(phi.dphi(x), dtype=float))

        return Segment(point, vel, role="omega", name="graph")

    cuts = [-w] + [k for k in phi.knots if -w < k < w] + [w]
    segments = [graph_piece(a, b) for a, b in zip(cuts[:-1], cuts[1:])]

    # Joins run vertically up to the circle when the end slope keeps the
    # graph-end corner at or above ~88 degrees; steep ends instead join
    # along the graph normal.  A sharp wedge there would make the
    # auxiliary solution's gradient degenerate on a visible boundary arc.
    h = 1e-6
    if phi.dphi is not None:
        s_l = float(phi.dphi(np.array([-w + h]))[0])
        s_r = float(phi.dphi(np.array([w - h]))[0])
    else:
        s_l = float((phi.phi(np.array([-w + h]))[0] - yl) / h)
        s_r = float((yr - phi.phi(np.array([w - h]))[0]) / h)
    slope_cap = math.tan(math.radians(2.0))

    def perp_hit(z_end, slope):
        # ray from the end along the graph normal i*(1, slope), to the circle
        t = (1.0 + 1j * slope) / abs(1.0 + 1j * slope)
        d = 1j * t
        b_lin = 2.0 * (z_end.real * d.real + z_end.imag * d.imag)
        c_con = abs(z_end) ** 2 - 1.0
        disc = b_lin * b_lin - 4.0 * c_con
        t_hit = 0.5 * (-b_lin + math.sqrt(disc))
        return z_end + t_hit * d

    z_l = -w + 1j * yl
    z_r = w + 1j * yr
    right_vertical = s_r >= -slope_cap
    left_vertical = s_l <= slope_cap

    if right_vertical:
        z_circ_r = w + 1j * y_join
        if y_join - yr > 1e-9:
            seg_r = line_segment(z_r, z_circ_r, role="join", name="join-right")
        elif abs(y_join - yr) <= 1e-9:
            seg_r = None
        else:
            raise GeometryError("graph end incompatible with its vertical join")
    else:
        z_circ_r = perp_hit(z_r, s_r)
        seg_r = line_segment(z_r, z_circ_r, role="join", name="join-right")

    if left_vertical:
        z_circ_l = -w + 1j * y_join
        if y_join - yl > 1e-9:
            seg_l = line_segment(z_circ_l, z_l, role="join", name="join-left")
        elif abs(y_join - yl) <= 1e-9:
            seg_l = None
        else:
            raise GeometryError("graph end incompatible with its vertical join")
    else:
        z_circ_l = perp_hit(z_l, s_l)
        seg_l = line_segment(z_circ_l, z_l, role="join", name="join-left")

    theta_r = math.atan2(z_circ_r.imag, z_circ_r.real)
    theta_l = math.atan2(z_circ_l.imag, z_circ_l.real)
    if theta_l <= theta_r:
        theta_l += 2.0 * math.pi
    if seg_r is not None:
        segments.append(seg_r)
    segments.append(arc_segment(0.0, 1.0, theta_r, theta_l, role="cap", name="cap"))
    if seg_l is not None:
        segments.append(seg_l)

    boundary = BoundaryCurve(segments)
    return Domain(boundary, anchor=0j, clip_radius=1.0, grid_check=grid_check)


def polygon_domain(vertices, cap_edges=(), anchor=0j, clip_radius=1.0, grid_check=True):
    """Simple polygon domain; vertices must be listed counterclockwise.

    ``cap_edges`` holds indices of edges allowed to carry nonzero data;
    every other edge is treated as original boundary ("omega").
    """
    verts = [complex(as_complex(v)) for v in vertices]
    if len(verts) < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    cap = set(int(i) for i in cap_edges)
    segs = []
    n = len(verts)
    for k in range(n):
        role = "cap" if k in cap else "omega"
        segs.append(line_segment(verts[k], verts[(k + 1) % n], role=role, name=f"edge-{k}"))
    boundary = BoundaryCurve(segs)
    return Domain(boundary, anchor=anchor, clip_radius=clip_radius, grid_check=grid_check)


def ellipse_domain(semi_x=1.0, semi_y=1.0, anchor=0j, clip_radius=None, grid_check=True):
    """Ellipse through the anchor, centered directly above it."""
    center = complex(anchor) + 1j * semi_y

    def point(t):
        t = np.asarray(t, dtype=float)
        th = -0.5 * math.pi + 2.0 * math.pi * t
        return center + semi_x * np.cos(th) + 1j * semi_y * np.sin(th)

    def velocity(t):
        t = np.asarray(t, dtype=float)
        th = -0.5 * math.pi + 2.0 * math.pi * t
        return 2.0 * math.pi * (-semi_x * np.sin(th) + 1j * semi_y * np.cos(th))

    boundary = BoundaryCurve([Segment(point, velocity, role="cap", name="ellipse")])
    if clip_radius is None:
        clip_radius = max(semi_x, semi_y)
    return Domain(boundary, anchor=anchor, clip_radius=clip_radius, grid_check=grid_check)


def circle_domain(radius=1.0, anchor=0j, grid_check=True):
    return ellipse_domain(radius, radius, anchor=anchor, clip_radius=radius, grid_check=grid_check)


def half_disk_domain(grid_check=True):
    """Upper half of the unit disk: the flat-boundary reference domain."""
    return make_graph_domain(graph_zero(), 1.0, grid_check=grid_check)


@dataclass
class BoundarySamples:
    """Equispaced-by-arclength boundary quadrature points (struct of arrays)."""

    s: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    near_corner: np.ndarray
    roles: np.ndarray

    def restrict(self, mask):
        return BoundarySamples(
            self.s[mask],
            self.points[mask],
            self.tangents[mask],
            self.normals[mask],
            self.weights[mask],
            self.near_corner[mask],
            self.roles[mask],
        )

    def of_role(self, role):
        return self.restrict(self.roles == role)


def boundary_sample(domain: Domain, n: int, flag_radius=None) -> BoundarySamples:
    """Midpoint sampling of the boundary with tangents and outward normals.

    Samples sit at arclength midpoints so they never coincide with knot
    points; samples within ``flag_radius`` of a corner are flagged.
    """
    if n < 8:
        raise GeometryError("boundary_sample needs n >= 8")
    b = domain.boundary
    L = b.length
    s = (np.arange(n) + 0.5) * (L / n)
    pts = b.point_at(s)
    tans = b.tangent_at(s)
    nors = -1j * tans
    w = np.full(n, L / n)
    if flag_radius is None:
        flag_radius = 2.0 * L / n
    near = np.zeros(n, dtype=bool)
    for c in b.corners:
        d = np.abs(s - c)
        near |= np.minimum(d, L - d) < flag_radius
    idx, _ = b.locate(s)
    roles = np.array([b.segments[k].role for k in idx])
    return BoundarySamples(s, pts, tans, nors, w, near, roles)


def polyline_winding_inside(poly, z):
    """Membership by winding number against an explicit closed polyline."""
    z = np.atleast_1d(as_complex(z))
    ax, ay = poly[:-1].real, poly[:-1].imag
    bx, by = poly[1:].real, poly[1:].imag
    out = np.empty(z.shape, dtype=bool)
    chunk = max(1, int(4e6 / max(ax.size, 1)))
    for i0 in range(0, z.size, chunk):
        x = z.real[i0 : i0 + chunk, None]
        y = z.imag[i0 : i0 + chunk, None]
        left = (bx - ax) * (y - ay) - (x - ax) * (by - ay)
        up = (ay <= y) & (by > y) & (left > 0)
        down = (ay > y) & (by <= y) & (left < 0)
        out[i0 : i0 + chunk] = (up.sum(axis=1) - down.sum(axis=1)) != 0
    return out


def polyline_distance(poly, z):
    """Distance from points to an explicit polyline (zero-length edges ok)."""
    z = np.atleast_1d(as_complex(z))
    a, b = poly[:-1], poly[1:]
    ab = b - a
    ab2 = np.abs(ab) ** 2
    safe = np.where(ab2 == 0.0, 1.0, ab2)
    out = np.empty(z.shape, dtype=float)
    chunk = max(1, int(2e6 / max(a.size, 1)))
    for i0 in range(0, z.size, chunk):
        zz = z[i0 : i0 + chunk, None]
        t = np.clip((np.conj(ab)[None, :] * (zz - a[None, :])).real / safe[None, :], 0.0, 1.0)
        out[i0 : i0 + chunk] = np.abs(zz - (a[None, :] + t * ab[None, :])).min(axis=1)
    return out


def offset_polyline(poly, margin, inward=True):
    """Offset a closed CCW polyline by a small margin.

    Smooth and convex-toward-the-offset vertices use the averaged vertex
    normal; vertices that are reflex relative to the offset direction get
    a round join (an arc of radius ``margin`` around the vertex), since
    the averaged normal would fold the contour through the boundary there
    and let it enclose points on the wrong side.
    """
    closed = np.abs(poly[0] - poly[-1]) < 1e-12
    pts = poly[:-1] if closed else poly
    keep = np.abs(pts - np.roll(pts, 1)) > 1e-14
    pts = pts[keep] if np.any(~keep) else pts
    nxt = np.roll(pts, -1)
    prv = np.roll(pts, 1)
    e_out = nxt - pts
    e_in = pts - prv
    t_out = e_out / np.maximum(np.abs(e_out), 1e-300)
    t_in = e_in / np.maximum(np.abs(e_in), 1e-300)
    # inward normal of a CCW boundary is +i * tangent
    sign = 1.0 if inward else -1.0
    n_out = sign * 1j * t_out
    n_in = sign * 1j * t_in
    turn = np.angle(t_out / t_in)  # left turn > 0 at convex (CCW) vertices
    reflex = (sign * turn) < -0.1
    out = []
    for k in range(pts.size):
        if not reflex[k]:
            n_v = n_in[k] + n_out[k]
            mag = abs(n_v)
            if mag < 1e-12:
                n_v, mag = n_out[k], 1.0
            out.append(pts[k] + margin * n_v / mag)
        else:
            # round join: sweep the offset direction around the vertex
            a0 = np.angle(n_in[k])
            a1 = np.angle(n_out[k])
            sweep = (a1 - a0 + np.pi) % (2 * np.pi) - np.pi
            angles = a0 + sweep * np.linspace(0.0, 1.0, 9)
            out.extend(pts[k] + margin * np.exp(1j * angles))
    shifted = np.asarray(out, dtype=complex)
    return np.concatenate([shifted, shifted[:1]])


def chord_arc_constant(domain: Domain, n_pairs: int) -> float:
    """Sampled supremum of (shortest boundary arc length) / (chord length).

    Pairs come from a fixed Halton stream, so enlarging ``n_pairs`` only
    extends the sampled prefix and the estimate is monotone nondecreasing.
    """
    if n_pairs < 2:
        raise GeometryError("need n_pairs >= 2")
    b = domain.boundary
    L = b.length
    idx = np.arange(1, n_pairs + 1, dtype=np.int64)
    s1 = L * radical_inverse(idx, 2)
    gap = L * radical_inverse(idx, 3)
    s2 = np.mod(s1 + gap, L)
    z1 = b.point_at(s1)
    z2 = b.point_at(s2)
    chord = np.abs(z1 - z2)
    ok = chord >= 1e-12
    if not np.any(ok):
        raise GeometryError("all sampled pairs degenerate")
    arc = np.minimum(gap, L - gap)
    return float(np.max(arc[ok] / chord[ok]))
