"""Critical-set counting: argument principle, reflection, boundary measure.

Interior critical points of a harmonic function are zeros of its
completion's derivative, counted with multiplicity by the winding
integral of g''/g' and located by recursive subdivision plus Newton
polish.  Boundary behaviour is assessed separately: the gradient is
extrapolated to the boundary from inward offsets and thresholded, giving
the small-gradient arc-length table and candidate boundary singular
points.  The ledger combines both sides of the flattening map into the
counting inequality for the original function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    as_complex,
    boundary_sample,
    offset_polyline,
    polyline_distance,
    polyline_winding_inside,
)

_GL16 = np.polynomial.legendre.leggauss(16)

INTEGER_PROXIMITY = 0.05
MAX_SPLIT_LEVELS = 12
CONTOUR_FLOOR = 1e-12
NUDGE = 1e-6


class CountError(RuntimeError):
    pass


@dataclass
class CountResult:
    count: int | None
    conclusive: bool
    integral: complex
    detail: str = ""
    dilation: float = 0.0

    def __int__(self):
        if not self.conclusive:
            raise CountError(f"inconclusive count: {self.detail}")
        return self.count


def _gl_segment(f, z0, z1):
    nodes, weights = _GL16
    mid = 0.5 * (z0 + z1)
    half = 0.5 * (z1 - z0)
    zz = mid + half * nodes
    return half * np.sum(weights * f(zz))


def _adaptive_segment(f, z0, z1, tol, depth=0):
    whole = _gl_segment(f, z0, z1)
    mid = 0.5 * (z0 + z1)
    split = _gl_segment(f, z0, mid) + _gl_segment(f, mid, z1)
    if abs(whole - split) <= tol or depth >= MAX_SPLIT_LEVELS:
        return split, abs(whole - split) <= tol
    left, ok_l = _adaptive_segment(f, z0, mid, tol / 2, depth + 1)
    right, ok_r = _adaptive_segment(f, mid, z1, tol / 2, depth + 1)
    return left + right, ok_l and ok_r


def count_zeros_on_contour(gprime, gsecond, vertices):
    """Winding count of zeros of g' enclosed by a closed polyline contour.

    ``vertices`` is traversed counterclockwise and must avoid zeros of g'.
    Returns a CountResult; never silently returns a wrong integer.
    """
    vertices = np.asarray(vertices, dtype=complex)
    if abs(vertices[0] - vertices[-1]) > 1e-14:
        vertices = np.concatenate([vertices, vertices[:1]])

    def f(z):
        return gsecond(z) / gprime(z)

    # contour-proximity guard: a zero on or hugging the contour shows up
    # as a dip of |g'| relative to its typical size there (an absolute
    # floor would misfire on tiny cells around multiple zeros, where |g'|
    # is uniformly small but smooth)
    probes = []
    for z0, z1 in zip(vertices[:-1], vertices[1:]):
        probes.append(z0 + (z1 - z0) * np.linspace(0, 1, 8, endpoint=False))
    absgp = np.abs(gprime(np.concatenate(probes)))
    med = float(np.median(absgp))
    min_gp = float(np.min(absgp))
    if med == 0.0 or min_gp < max(1e-6 * med, CONTOUR_FLOOR * med, 1e-300):
        return CountResult(None, False, 0j, f"|g'| dips to {min_gp:.1e} on the contour")

    tol = 0.01 * 2 * np.pi / max(len(vertices) - 1, 1)
    total = 0j
    all_ok = True
    for z0, z1 in zip(vertices[:-1], vertices[1:]):
        part, ok = _adaptive_segment(f, z0, z1, tol)
        total += part
        all_ok = all_ok and ok
    w = total / (2j * np.pi)
    n = int(np.round(w.real))
    near = abs(w - n) <= INTEGER_PROXIMITY
    if near and all_ok and n >= 0:
        return CountResult(n, True, w)
    return CountResult(None, False, w, f"winding integral {w:.4f} not near an integer")


def _rect_vertices(rect):
    x0, x1, y0, y1 = rect
    return np.array([x0 + 1j * y0, x1 + 1j * y0, x1 + 1j * y1, x0 + 1j * y1, x0 + 1j * y0])


def count_zeros(gprime, gsecond, rect):
    """Zeros of g' (with multiplicity) inside a rectangle (x0, x1, y0, y1).

    When a zero sits on (or hugs) an edge the contour is dilated outward
    through a deterministic ladder of multiples of 1e-6, far enough that
    the quadrature can resolve the now-interior zero; after the dilation
    budget the result is an explicit inconclusive status.
    """
    x0, x1, y0, y1 = (float(v) for v in rect)
    result = None
    scale = max(x1 - x0, y1 - y0)
    for k in (0, 1, 4, 16, 64, 256):
        d = k * NUDGE * max(1.0, scale)
        result = count_zeros_on_contour(gprime, gsecond, _rect_vertices((x0 - d, x1 + d, y0 - d, y1 + d)))
        if result.conclusive:
            result.dilation = d
            if k:
                result.detail = f"contour dilated by {d:.1e}"
            break
    return result


# ---------------------------------------------------------------------------
# zero location


def _newton_polish(gprime, gsecond, z0, multiplicity=1, tol=1e-12, max_iter=80):
    z = complex(z0)
    m = max(1, int(multiplicity))
    for _ in range(max_iter):
        gp = complex(np.atleast_1d(gprime(np.array([z])))[0])
        gpp = complex(np.atleast_1d(gsecond(np.array([z])))[0])
        if gpp == 0:
            break
        step = m * gp / gpp
        z -= step
        if abs(step) <= tol:
            break
    return z


def _split_coordinate(gprime, lo, hi, other_lo, other_hi, axis, skip=0):
    """Pick a split line whose |g'| stays clear of zero.

    A zero on (or very near) the line would let the dilated child
    contours both capture it, so candidates are screened by a relative
    dip test on a dense sampling of the line.
    """
    candidates = (0.5, 0.46, 0.54, 0.42, 0.58, 0.38, 0.62, 0.34, 0.66)[skip:]
    best, best_ratio = None, -1.0
    for frac in candidates:
        c = lo + frac * (hi - lo)
        ts = np.linspace(other_lo, other_hi, 257)
        line = (c + 1j * ts) if axis == 0 else (ts + 1j * c)
        vals = np.abs(gprime(line))
        med = float(np.median(vals))
        ratio = float(np.min(vals)) / med if med > 0 else 0.0
        if ratio > 1e-3:
            return c
        if ratio > best_ratio:
            best, best_ratio = c, ratio
    return best if best is not None else lo + 0.5 * (hi - lo)


@dataclass
class LocateResult:
    points: list  # [(z, multiplicity), ...]
    conclusive: bool
    detail: str = ""

    def total(self):
        return sum(m for _, m in self.points)

    def count_points(self):
        return len(self.points)


CLUSTER_DIAMETER = 1e-5


def locate_in_rect(gprime, gsecond, rect, _count=None) -> LocateResult:
    """Subdivide until each cell isolates one zero, then polish.

    A cell smaller than the cluster diameter that still reports several
    zeros is treated as one multiple zero (multiplicity = cell count).
    """
    x0, x1, y0, y1 = (float(v) for v in rect)
    res = _count if _count is not None else count_zeros(gprime, gsecond, rect)
    if not res.conclusive:
        return LocateResult([], False, f"cell ({x0:.4g},{x1:.4g})x({y0:.4g},{y1:.4g}): {res.detail}")
    n = res.count
    if n == 0:
        return LocateResult([], True)
    # a zero found by a dilated contour may sit just outside the nominal
    # cell, but never farther out than the dilation itself
    slack = 1e-7 + res.dilation
    if n == 1 or max(x1 - x0, y1 - y0) < CLUSTER_DIAMETER:
        # polish must stay inside its own cell; a Newton iterate escaping
        # to a different basin would silently relabel another zero
        seeds = [complex(x0 + fx * (x1 - x0), y0 + fy * (y1 - y0))
                 for fx, fy in ((0.5, 0.5), (0.3, 0.3), (0.7, 0.3), (0.3, 0.7), (0.7, 0.7))]
        for z0 in seeds:
            z = _newton_polish(gprime, gsecond, z0, multiplicity=n)
            inside = (x0 - slack <= z.real <= x1 + slack) and (y0 - slack <= z.imag <= y1 + slack)
            if inside and abs(np.atleast_1d(gprime(np.array([z])))[0]) <= 1e-8:
                return LocateResult([(z, n)], True)
        if max(x1 - x0, y1 - y0) < 1e-9:
            return LocateResult([(complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)), n)], True)
        # all seeds escaped: shrink the cell around the zero and retry
    last = None
    for attempt in range(3):
        xc = _split_coordinate(gprime, x0, x1, y0, y1, axis=0, skip=attempt)
        yc = _split_coordinate(gprime, y0, y1, x0, x1, axis=1, skip=attempt)
        points = []
        total = 0
        ok = True
        for sub in ((x0, xc, y0, yc), (xc, x1, y0, yc), (x0, xc, yc, y1), (xc, x1, yc, y1)):
            sub_res = locate_in_rect(gprime, gsecond, sub)
            if not sub_res.conclusive:
                last = sub_res
                ok = False
                break
            points.extend(sub_res.points)
            total += sub_res.total()
        if ok and total == n:
            return LocateResult(_merge_points(points), True)
        if ok:
            last = LocateResult([], False, f"children sum {total} != parent {n}")
    return last if last is not None else LocateResult([], False, "subdivision failed")


def _merge_points(points, radius=1e-8):
    merged = []
    for z, m in points:
        for i, (zm, mm) in enumerate(merged):
            if abs(z - zm) < radius:
                merged[i] = (zm, mm + m)
                break
        else:
            merged.append((z, m))
    return merged


def locate_critical_points(completion, region) -> LocateResult:
    """Zeros of the completion's derivative in a rectangle or polygon region.

    ``region`` is (x0, x1, y0, y1) or an object carrying a closed
    counterclockwise ``polyline()``; polygon regions are counted through
    an inward-offset contour and located per enclosing sub-rectangle.
    """
    gp, gpp = completion.gprime, completion.gsecond
    if isinstance(region, (tuple, list)) and len(region) == 4:
        return locate_in_rect(gp, gpp, region)
    poly = region.polyline()
    count = interior_count_from_polyline(gp, gpp, poly)
    if not count.conclusive:
        return LocateResult([], False, count.detail)
    if count.count == 0:
        return LocateResult([], True)
    located = _locate_in_polygon(gp, gpp, poly, count.count)
    return located


def interior_count_from_polyline(gprime, gsecond, poly, margin=1e-3):
    """Argument-principle count over the inward offset of a closed polyline."""
    contour = offset_polyline(poly, margin, inward=True)
    res = count_zeros_on_contour(gprime, gsecond, contour)
    if res.conclusive:
        return res
    # retry with a slightly different margin before giving up
    for m2 in (margin * 2, margin * 0.5):
        res = count_zeros_on_contour(gprime, gsecond, offset_polyline(poly, m2, inward=True))
        if res.conclusive:
            return res
    return res


def _locate_in_polygon(gprime, gsecond, poly, expected, margin=1e-3, min_cell=4e-3):
    """Cover the polygon interior with dyadic cells and locate inside each."""
    lo_x, hi_x = poly.real.min(), poly.real.max()
    lo_y, hi_y = poly.imag.min(), poly.imag.max()
    cells = [(lo_x, hi_x, lo_y, hi_y)]
    inside_cells = []
    while cells:
        nxt = []
        centers = np.array([complex(0.5 * (c[0] + c[1]), 0.5 * (c[2] + c[3])) for c in cells])
        half_diag = np.array([0.5 * np.hypot(c[1] - c[0], c[3] - c[2]) for c in cells])
        d = polyline_distance(poly, centers)
        ins = polyline_winding_inside(poly, centers)
        for c, dist, is_in, hd in zip(cells, d, ins, half_diag):
            if dist > hd + margin:
                if is_in:
                    inside_cells.append(c)
                continue
            if max(c[1] - c[0], c[3] - c[2]) < min_cell:
                continue  # boundary band, handled by the Newton sweep
            xm, ym = 0.5 * (c[0] + c[1]), 0.5 * (c[2] + c[3])
            nxt.extend(
                [(c[0], xm, c[2], ym), (xm, c[1], c[2], ym), (c[0], xm, ym, c[3]), (xm, c[1], ym, c[3])]
            )
        cells = nxt
    points = []
    for c in inside_cells:
        res = count_zeros(gprime, gsecond, c)
        if not res.conclusive:
            return LocateResult([], False, res.detail)
        if res.count:
            sub = locate_in_rect(gprime, gsecond, c, _count=res)
            if not sub.conclusive:
                return sub
            points.extend(sub.points)
    return LocateResult(_merge_points(points), True, f"expected {expected}")


def boundary_band_zeros(gprime, gsecond, poly, depths=(5e-4, 2e-3, 5e-3), spacing=3e-3,
                        grad_tol=1e-10, max_band=8e-3):
    """Newton sweep for zeros of g' in the band along a region polyline.

    Finds boundary-adjacent zeros the interior contour cannot enclose.
    Sweeps can only add verified zeros (|g'| below tolerance, within the
    band), so they never inflate counts with spurious points.
    """
    closed = np.abs(poly[0] - poly[-1]) < 1e-12
    pts = poly[:-1] if closed else poly
    seg = np.abs(np.diff(np.concatenate([pts, pts[:1]])))
    # resample roughly uniformly
    keep = [0]
    acc = 0.0
    for i, ds in enumerate(seg):
        acc += ds
        if acc >= spacing:
            keep.append((i + 1) % pts.size)
            acc = 0.0
    base = pts[np.array(sorted(set(keep)))]
    inward = offset_polyline(np.concatenate([base, base[:1]]), 1.0, inward=True)[:-1] - base
    seeds = np.concatenate([base + d * inward for d in depths])

    z = seeds.astype(complex)
    for _ in range(40):
        gp = gprime(z)
        gpp = gsecond(z)
        bad = np.abs(gpp) < 1e-300
        gpp = np.where(bad, 1.0, gpp)
        step = np.where(bad, 0.0, gp / gpp)
        z = z - step
    gp_final = np.abs(gprime(z))
    near = polyline_distance(poly, z) <= max_band
    ok = (gp_final <= grad_tol) & near & np.isfinite(z)
    found = z[ok]
    clusters = []
    for zz in found:
        for i, c in enumerate(clusters):
            if abs(zz - c) < 1e-6:
                break
        else:
            clusters.append(complex(zz))
    return clusters


# ---------------------------------------------------------------------------
# odd reflection


class ReflectedCompletion:
    """Schwarz odd extension of a transported function across {Y = 0}.

    Values extend by U(X, -Y) = -U(X, Y); the completion's derivative by
    G'(conj W) = conj(G'(W)).  Points on the axis use the upper branch.
    """

    def __init__(self, transported):
        self.u = transported
        self.residual = getattr(transported, "residual", 0.0)

    def _split(self, w):
        w = np.atleast_1d(as_complex(w)).astype(complex)
        upper = w.imag >= 0
        return w, upper

    def value(self, w):
        w_arr, upper = self._split(w)
        out = np.empty(w_arr.shape, dtype=float)
        if np.any(upper):
            out[upper] = self.u.value(w_arr[upper])
        if np.any(~upper):
            out[~upper] = -np.atleast_1d(self.u.value(np.conj(w_arr[~upper])))
        return float(out[0]) if np.ndim(as_complex(w)) == 0 else out

    def gprime(self, w):
        w_arr, upper = self._split(w)
        out = np.empty(w_arr.shape, dtype=complex)
        if np.any(upper):
            out[upper] = self.u.gprime(w_arr[upper])
        if np.any(~upper):
            out[~upper] = np.conj(np.atleast_1d(self.u.gprime(np.conj(w_arr[~upper]))))
        return complex(out[0]) if np.ndim(as_complex(w)) == 0 else out

    def gsecond(self, w):
        w_arr, upper = self._split(w)
        out = np.empty(w_arr.shape, dtype=complex)
        if np.any(upper):
            out[upper] = self.u.gsecond(w_arr[upper])
        if np.any(~upper):
            out[~upper] = np.conj(np.atleast_1d(self.u.gsecond(np.conj(w_arr[~upper]))))
        return complex(out[0]) if np.ndim(as_complex(w)) == 0 else out

    def gradient(self, w):
        return 1j * np.conj(self.gprime(w))


class ReflectionError(ValueError):
    pass


def reflect_odd(transported, x_range, n_check=64, tol=None) -> ReflectedCompletion:
    """Odd reflection of a transported function vanishing on {Y = 0}.

    The trace on the sampled axis segment must vanish within tolerance
    (default 10x the upstream residual) or the input is not a
    Dirichlet-zero trace and reflection would create a spurious kink.
    """
    if tol is None:
        tol = max(10.0 * getattr(transported, "residual", 0.0), 1e-9)
    xs = np.linspace(x_range[0], x_range[1], n_check)
    trace = np.max(np.abs(np.atleast_1d(transported.value(xs + 0j))))
    if trace > tol:
        raise ReflectionError(f"not a Dirichlet-zero trace: |U| = {trace:.2e} on Y=0 (tol {tol:.2e})")
    return ReflectedCompletion(transported)


# ---------------------------------------------------------------------------
# boundary small-gradient measure


@dataclass
class MeasureTable:
    epsilons: np.ndarray
    measures: np.ndarray
    omega_length: float
    flagged_fraction: float
    warning: bool
    sample_s: np.ndarray = field(repr=False, default=None)
    sample_values: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        return {
            "epsilons": [float(e) for e in self.epsilons],
            "measures": [float(m) for m in self.measures],
            "omega_length": float(self.omega_length),
            "flagged_fraction": float(self.flagged_fraction),
            "warning": bool(self.warning),
        }


OFFSETS = (1e-3, 5e-4, 2.5e-4)


def boundary_small_gradient_measure(v, domain, epsilons, n=2048) -> MeasureTable:
    """Arc length of the original-boundary set where |grad v| < epsilon.

    The gradient on the boundary is the Richardson extrapolation of the
    values at three inward offsets, mirroring a non-tangential limit.
    Points whose offset values are not monotone are flagged; more than 5%
    of them marks the table as suspect.
    """
    samples = boundary_sample(domain, n).of_role("omega")
    if samples.points.size == 0:
        raise ValueError("domain has no original-boundary (omega) samples")
    inward = -samples.normals
    f = np.empty((3, samples.points.size))
    for i, h in enumerate(OFFSETS):
        f[i] = np.abs(v.gradient(samples.points + h * inward))
    e1 = 2 * f[1] - f[0]
    e2 = 2 * f[2] - f[1]
    vals = (4 * e2 - e1) / 3
    vals = np.maximum(vals, 0.0)
    mono = (f[0] - f[1]) * (f[1] - f[2]) >= -1e-12
    flagged = 1.0 - float(np.mean(mono))
    eps_sorted = np.sort(np.asarray(epsilons, dtype=float))
    w = samples.weights
    measures = np.array([float(np.sum(w[vals < e])) for e in eps_sorted])
    return MeasureTable(
        eps_sorted,
        measures,
        float(np.sum(w)),
        flagged,
        flagged > 0.05,
        sample_s=samples.s,
        sample_values=vals,
    )


def boundary_candidate_points(table: MeasureTable, threshold=1e-6, s_filter=None):
    """Cluster below-threshold boundary samples into candidate singular points.

    Consecutive flagged samples merge into one candidate; these are
    reported, not certified, since floating-point extrapolation cannot
    prove an exact boundary zero.
    """
    mask = table.sample_values < threshold
    if s_filter is not None:
        mask &= s_filter(table.sample_s)
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    runs = [[idx[0]]]
    for i in idx[1:]:
        if i == runs[-1][-1] + 1:
            runs[-1].append(i)
        else:
            runs.append([i])
    return [float(np.mean(table.sample_s[r])) for r in runs]


# ---------------------------------------------------------------------------
# the counting ledger


@dataclass
class CriticalSetReport:
    interior_points: list  # [(z, multiplicity), ...] zeros of the original function
    boundary_table: MeasureTable
    count_u: int | None
    count_theta: int | None
    count_U: int | None
    conclusive: bool
    inequality_holds: bool | None
    detail: dict

    def ledger(self):
        return (self.count_u, self.count_theta, self.count_U)


def _count_region_points(completion, region, residual=0.0):
    """Interior + boundary-band zeros of a completion over the region."""
    poly = region.polyline()
    interior = locate_critical_points(completion, region)
    band = boundary_band_zeros(completion.gprime, completion.gsecond, poly,
                               grad_tol=max(1e-10, 1e-4 * residual))
    pts = list(interior.points)
    for z in band:
        if any(abs(z - p) < 1e-5 for p, _ in pts):
            continue
        near = region.contains_closure(np.array([z]), tol=1e-4)[0]
        if not near:
            continue
        local = count_zeros(completion.gprime, completion.gsecond,
                            (z.real - 2e-4, z.real + 2e-4, z.imag - 2e-4, z.imag + 2e-4))
        mult = local.count if local.conclusive and local.count else 1
        pts.append((z, int(mult)))
    return pts, interior.conclusive


def counting_ledger(u_completion, theta_map, U_reflected, region, measure_table=None,
                    boundary_threshold=1e-6) -> CriticalSetReport:
    """Assemble the three critical-set counts and check the inequality.

    count_u:     points of C(u) in the closed region (interior zeros of the
                 original completion plus verified boundary-band zeros).
    count_theta: interior zeros of the map's own completion derivative in
                 the region plus clustered boundary candidates where the
                 extrapolated |grad v| falls below the threshold.
    count_U:     points of C(U) of the reflected transported function in
                 the doubled rectangle.
    """
    detail = {}

    u_points, u_ok = _count_region_points(u_completion, region,
                                          residual=getattr(theta_map, "residual", 0.0))
    count_u = len(u_points)
    detail["u_points"] = [(complex(z), int(m)) for z, m in u_points]

    theta_interior = locate_critical_points(theta_map.completion, region)
    theta_ok = theta_interior.conclusive
    if measure_table is None:
        eps = sorted(set([boundary_threshold, 1e-3, 1e-2]))
        measure_table = boundary_small_gradient_measure(
            theta_map.completion.base, theta_map.domain, eps
        )
    bottom = region.sides["bottom"]

    def near_bottom(s_vals):
        pts = theta_map.domain.boundary.point_at(s_vals)
        return polyline_distance(bottom, pts) < 5e-3

    candidates = boundary_candidate_points(measure_table, boundary_threshold, s_filter=near_bottom)
    count_theta = theta_interior.count_points() + len(candidates)
    detail["theta_interior_points"] = [(complex(z), int(m)) for z, m in theta_interior.points]
    detail["theta_boundary_candidates"] = [float(s) for s in candidates]

    a, b = region.a, region.b
    refl_rect = (-a, a, -b, b)
    U_located = locate_in_rect(U_reflected.gprime, U_reflected.gsecond, refl_rect)
    U_ok = U_located.conclusive
    count_U = U_located.count_points()
    detail["U_points"] = [(complex(z), int(m)) for z, m in U_located.points]

    conclusive = bool(u_ok and theta_ok and U_ok)
    inequality = (count_u <= count_theta + count_U) if conclusive else None
    return CriticalSetReport(
        interior_points=u_points,
        boundary_table=measure_table,
        count_u=count_u if u_ok else None,
        count_theta=count_theta if theta_ok else None,
        count_U=count_U if U_ok else None,
        conclusive=conclusive,
        inequality_holds=inequality,
        detail=detail,
    )


def interior_critical_count(h, domain, margin=1e-3):
    """Count of interior critical points of h, corners excluded by margin.

    Wraps the argument principle around the inward-offset boundary
    contour; the result dict reports the count and its status explicitly.
    The margin never drops below a few multiples of the solve residual:
    closer to the boundary the discrete solution is all fit noise, and
    its spurious near-boundary zeros say nothing about the continuum
    function being witnessed.
    """
    from .analytic import complete

    comp = complete(h, anchor=domain.anchor, domain=domain) if not hasattr(h, "gprime") else h
    base = comp.base if hasattr(comp, "base") else h
    residual = getattr(base, "residual", 0.0)
    margin = max(margin, 5.0 * residual)
    poly = domain.boundary.polyline(2048)
    res = interior_count_from_polyline(comp.gprime, comp.gsecond, poly, margin=margin)
    return {
        "count": res.count,
        "conclusive": res.conclusive,
        "margin": margin,
        "detail": res.detail,
        "integral": complex(res.integral),
    }
