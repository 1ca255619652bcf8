"""Dirichlet solves via a charge expansion in fundamental solutions.

A harmonic function on the domain is represented as a combination of
logarithmic point charges placed on an offset curve outside the closed
domain,

    v(z) = sum_k c_k log|z - q_k|,

with coefficients fitted to the boundary trace at collocation points by
a truncated-SVD least squares solve.  The systems are exponentially
ill-conditioned by design; truncation keeps the fit backward stable and
the certified quantity is the residual at held-out validation points.

Every harmonic function here also exposes the complex derivatives of a
holomorphic function whose imaginary part it is; downstream modules use
those to build conjugates, boundary-flattening maps and argument-
principle counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, GeometryError, as_complex, boundary_sample


class SolverError(RuntimeError):
    """Dirichlet solve failed (rank collapse, bad geometry, bad data)."""


class DataError(ValueError):
    """Boundary data violates its contract."""


# ---------------------------------------------------------------------------
# harmonic function representations


class ClosedFormHarmonic:
    """Harmonic function v = Im f(z) for a named holomorphic f.

    ``f``, ``df``, ``d2f`` are vectorized complex callables.  Keeping the
    holomorphic generator around makes the conjugate, the completion and
    all complex derivatives exact.
    """

    kind = "closed-form"

    def __init__(self, name, f, df, d2f):
        self.name = name
        self.f = f
        self.df = df
        self.d2f = d2f

    def value(self, z):
        return np.imag(self.f(as_complex(z)))

    def gradient(self, z):
        """Gradient packed as v_x + i v_y."""
        return 1j * np.conj(self.df(as_complex(z)))

    def holo(self, z):
        return self.f(as_complex(z))

    def dholo(self, z):
        return self.df(as_complex(z))

    def d2holo(self, z):
        return self.d2f(as_complex(z))


_CLOSED_FORMS = {
    "y": ("z", lambda z: z, lambda z: np.ones_like(z), lambda z: np.zeros_like(z)),
    "im_z2": ("z^2", lambda z: z**2, lambda z: 2 * z, lambda z: 2 * np.ones_like(z)),
    "im_z3": ("z^3", lambda z: z**3, lambda z: 3 * z**2, lambda z: 6 * z),
}


def closed_form(name):
    """Closed-form harmonic functions: v = Im f with f in {z, z^2, z^3}."""
    if name not in _CLOSED_FORMS:
        raise KeyError(f"unknown closed form {name!r}; have {sorted(_CLOSED_FORMS)}")
    _, f, df, d2f = _CLOSED_FORMS[name]
    return ClosedFormHarmonic(name, f, df, d2f)


class ChargeExpansion:
    """v(z) = sum_k c_k log|z - q_k| with exact derivatives.

    The matching holomorphic generator is i * sum_k c_k Log(z - q_k) with
    a per-charge branch cut along ``cut_dirs[k]`` (unit complex numbers
    pointing away from the domain), so Im(holo) = v everywhere and
    Re(holo) is single-valued on the domain as long as no cut crosses it.
    """

    kind = "charge-expansion"

    def __init__(self, charges, coeffs, cut_dirs, diagnostics=None):
        self.charges = np.asarray(charges, dtype=complex)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.cut_dirs = np.asarray(cut_dirs, dtype=complex)
        self.diagnostics = diagnostics or {}

    @property
    def residual(self):
        return self.diagnostics.get("residual", 0.0)

    def _dz(self, z):
        z = np.atleast_1d(as_complex(z))
        return z[..., None] - self.charges

    def value(self, z):
        z = as_complex(z)
        scalar = np.ndim(z) == 0
        d = self._dz(z)
        out = np.log(np.abs(d)) @ self.coeffs
        return float(out[0]) if scalar else out

    def gradient(self, z):
        z = as_complex(z)
        scalar = np.ndim(z) == 0
        d = self._dz(z)
        out = (d / np.abs(d) ** 2) @ self.coeffs
        return complex(out[0]) if scalar else out

    def value_and_gradient(self, z):
        d = self._dz(z)
        r2 = np.abs(d) ** 2
        return 0.5 * np.log(r2) @ self.coeffs, (d / r2) @ self.coeffs

    def cut_argument(self, z):
        """Per-charge branch of arg(z - q_k), cut along the outward rays."""
        d = self._dz(z)
        return np.angle(-d / self.cut_dirs)

    def holo(self, z):
        z = as_complex(z)
        scalar = np.ndim(z) == 0
        d = self._dz(z)
        out = (np.log(np.abs(d)) + 1j * self.cut_argument(z)) @ self.coeffs
        out = 1j * out
        return complex(out[0]) if scalar else out

    def dholo(self, z):
        z = as_complex(z)
        scalar = np.ndim(z) == 0
        out = 1j * ((1.0 / self._dz(z)) @ self.coeffs)
        return complex(out[0]) if scalar else out

    def d2holo(self, z):
        z = as_complex(z)
        scalar = np.ndim(z) == 0
        out = -1j * ((1.0 / self._dz(z) ** 2) @ self.coeffs)
        return complex(out[0]) if scalar else out


def eval_value(h, z):
    """Pointwise value of any harmonic-function representation."""
    return h.value(z)


def eval_grad(h, z):
    """Pointwise gradient (v_x + i v_y) of any representation."""
    return h.gradient(z)


# ---------------------------------------------------------------------------
# boundary data


@dataclass
class BoundaryData:
    """Nonnegative unimodal bump on an arc of the closing cap, by arclength.

    ``support`` is the (s_lo, s_hi) arclength interval where the data is
    positive; ``peak`` the arclength of its unique maximum.  Values rise
    from 0 at s_lo to 1 at the peak and fall back to 0 at s_hi along
    raised-cosine profiles.
    """

    support: tuple
    peak: float

    def __post_init__(self):
        s0, s1 = self.support
        if not s0 < self.peak < s1:
            raise DataError("peak must lie strictly inside the support")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        s0, s1 = self.support
        p = self.peak
        out = np.zeros(s.shape)
        rise = (s >= s0) & (s <= p)
        fall = (s > p) & (s <= s1)
        out[rise] = 0.5 * (1.0 - np.cos(np.pi * (s[rise] - s0) / (p - s0)))
        out[fall] = 0.5 * (1.0 - np.cos(np.pi * (s1 - s[fall]) / (s1 - p)))
        return out

    def check_shape(self, n=512):
        s0, s1 = self.support
        s = np.linspace(s0, s1, n)
        vals = self(s)
        if np.any(vals < -1e-15):
            raise DataError("data must be nonnegative")
        up = vals[s <= self.peak]
        down = vals[s >= self.peak]
        if np.any(np.diff(up) < -1e-12) or np.any(np.diff(down) > 1e-12):
            raise DataError("data must be unimodal about its peak")
        return True


@dataclass
class ArclengthTrace:
    """Arbitrary boundary trace given as a function of arclength."""

    fn: callable

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))


def bump_sum(bumps):
    """Superposition of raised-cosine bumps: [(support, peak, amplitude), ...].

    Not unimodal in general; used for negative controls and for traces of
    the transported solution.
    """
    parts = [(BoundaryData(sup, pk), amp) for sup, pk, amp in bumps]

    def fn(s):
        out = np.zeros(np.asarray(s, dtype=float).shape)
        for b, amp in parts:
            out = out + amp * b(s)
        return out

    return ArclengthTrace(fn)


def cap_range(domain):
    """Arclength span of the cap (the closing circular-arc piece)."""
    ranges = domain.boundary.role_ranges("cap")
    if not ranges:
        raise DataError("domain has no cap segment to carry data")
    if len(ranges) > 1:
        raise DataError("expected a single cap segment")
    return ranges[0]


def unimodal_data(domain, support, peak):
    """Unimodal bump supported strictly inside the cap arc.

    ``support``/``peak`` are absolute arclength coordinates.  Data touching
    the ends of the cap would be discontinuous against the zero trace on
    the original boundary, so that is rejected.
    """
    lo, hi = cap_range(domain)
    s0, s1 = support
    if not (lo < s0 < s1 < hi):
        raise DataError(
            f"support ({s0:.4f}, {s1:.4f}) must sit strictly inside the cap ({lo:.4f}, {hi:.4f})"
        )
    data = BoundaryData((float(s0), float(s1)), float(peak))
    data.check_shape()
    return data


def unimodal_from_fractions(domain, lo_frac=0.2, hi_frac=0.8, peak_frac=0.5):
    """Unimodal bump positioned by fractions of the cap arc."""
    lo, hi = cap_range(domain)
    span = hi - lo
    s0 = lo + lo_frac * span
    s1 = lo + hi_frac * span
    return unimodal_data(domain, (s0, s1), s0 + peak_frac * (s1 - s0))


# ---------------------------------------------------------------------------
# the solve


@dataclass
class SolverConfig:
    charges: int = 96  # uniform charges; corner clusters come on top
    collocation: int = 0  # 0 means 3x charges
    offset_factor: float = 8.0  # uniform-charge offset in units of charge spacing
    target_residual: float = 1e-6
    corner_cluster: int = 0  # 0 means charges // 3 per corner, capped at 40
    cluster_scale: float = 0.5
    cluster_ratio: float = 0.6
    # relative singular-value cutoff: tighter cutoffs admit huge coefficient
    # vectors whose evaluation noise floor then dominates downstream Newton
    # solves; 1e-10 balances fit quality against that floor
    truncation: float = 1e-10

    def resolved_collocation(self):
        m = self.collocation if self.collocation else 3 * self.charges
        if m < 2 * self.charges:
            raise SolverError(f"collocation count {m} must be >= 2x charges ({self.charges})")
        return m

    def resolved_cluster(self):
        if self.corner_cluster:
            return self.corner_cluster
        return min(40, max(12, self.charges // 3))


def _corner_bisector(boundary, s_c):
    eps = 1e-6
    L = boundary.length
    n_m = boundary.normal_at(np.array([(s_c - eps) % L]))[0]
    n_p = boundary.normal_at(np.array([(s_c + eps) % L]))[0]
    v = n_m + n_p
    if abs(v) < 1e-12:  # straight-angle cusp: fall back to one side
        v = n_p
    return v / abs(v)


def _cluster_depths(config):
    n_c = config.resolved_cluster()
    d = config.cluster_scale * config.cluster_ratio ** np.arange(1, n_c + 1)
    return d[d >= 1e-9]  # deeper charges are numerically indistinguishable


def _collocation_points(domain, m, config):
    """Uniform arclength grid plus geometric refinement toward each corner.

    Corner charges sit at exponentially shrinking distances; the trace must
    be sampled at matching scales or the least squares cannot see them.
    """
    base = boundary_sample(domain, m)
    b = domain.boundary
    L = b.length
    parts = [base.s]
    depths = _cluster_depths(config)
    for c in b.corners:
        for f in (0.35, 0.7, 1.05, 1.4):
            parts.append(np.mod(c + f * depths, L))
            parts.append(np.mod(c - f * depths, L))
    s_all = np.unique(np.concatenate(parts))
    return s_all, b.point_at(s_all)


def _charge_points(domain, n, config):
    """Uniform offset-curve charges plus exponential corner clusters."""
    b = domain.boundary
    samples = boundary_sample(domain, n)
    delta = np.full(n, config.offset_factor * b.length / n)
    q = samples.points + delta * samples.normals
    # uniform charges must clear the closed domain; shrink stubborn ones
    bad = domain.inside(q) | (b.distance(q) < 0.45 * delta)
    for idx in np.nonzero(bad)[0]:
        for shrink in (0.5, 0.25, 0.125):
            cand = samples.points[idx] + shrink * delta[idx] * samples.normals[idx]
            if not domain.inside_one(cand) and b.distance(cand)[0] >= 0.2 * shrink * delta[idx]:
                q[idx] = cand
                delta[idx] *= shrink
                bad[idx] = False
                break
    if np.any(bad):
        raise SolverError(f"{int(bad.sum())} charge points could not be placed outside the domain")
    clusters = [q]
    clearances = [0.45 * delta]
    depths = _cluster_depths(config)
    for c in b.corners:
        z_c = b.point_at(np.array([c]))[0]
        direction = _corner_bisector(b, c)
        zq = z_c + depths * direction
        keep = ~domain.inside(zq)
        clusters.append(zq[keep])
        clearances.append(0.2 * depths[keep])
    q_all = np.concatenate(clusters)
    clear_all = np.concatenate(clearances)
    dist = b.distance(q_all)
    ok = (dist > 0) & ~domain.inside(q_all)
    if not np.all(ok):
        raise SolverError("charge layout produced points inside the closed domain")
    return q_all, clear_all, float(np.median(delta))


def _cut_directions(domain, charges):
    probe = domain.interior_probe()
    d = charges - probe
    return d / np.abs(d)


def solve_dirichlet(domain: Domain, data, config: SolverConfig | None = None) -> ChargeExpansion:
    """Fit a charge expansion to the boundary trace.

    ``data`` may be BoundaryData / ArclengthTrace (functions of arclength)
    or a plain callable on boundary points (closed-form traces).  The
    returned expansion carries its certified validation residual; a
    residual above ``config.target_residual`` sets a warning flag rather
    than failing the solve.
    """
    config = config or SolverConfig()
    n = config.charges
    m = config.resolved_collocation()
    b = domain.boundary

    s_col, p_col = _collocation_points(domain, m, config)
    charges, clearance, delta = _charge_points(domain, n, config)
    cut_dirs = _cut_directions(domain, charges)

    def trace(s_vals, pts):
        if isinstance(data, (BoundaryData, ArclengthTrace)):
            return data(s_vals)
        return np.asarray(data(pts), dtype=float)

    rhs = trace(s_col, p_col)
    if not np.all(np.isfinite(rhs)):
        raise SolverError("boundary data produced non-finite values")

    A = np.log(np.abs(p_col[:, None] - charges[None, :]))
    u, sing, vt = np.linalg.svd(A, full_matrices=False)
    keep = sing >= config.truncation * sing[0]
    rank = int(keep.sum())
    if rank == 0 or not np.all(np.isfinite(sing)):
        raise SolverError(f"system numerically rank-deficient (condition ~ {sing[0]:.2e}/{sing[-1]:.2e})")
    coef = vt[keep].T @ ((u[:, keep].T @ rhs) / sing[keep])

    # certify on held-out points offset from the collocation grid
    s_val = np.mod(s_col + 0.5 * np.diff(np.concatenate([s_col, [s_col[0] + b.length]])), b.length)
    p_val = b.point_at(s_val)
    r_val = np.log(np.abs(p_val[:, None] - charges[None, :])) @ coef - trace(s_val, p_val)
    residual = float(np.max(np.abs(r_val)))

    diagnostics = {
        "charges": int(charges.size),
        "uniform_charges": n,
        "collocation": int(s_col.size),
        "offset": delta,
        "min_clearance": float(np.min(b.distance(charges))),
        "residual": residual,
        "condition": float(sing[0] / sing[keep][-1]),
        "rank": rank,
        "target": config.target_residual,
        "warning": residual > config.target_residual,
    }
    return ChargeExpansion(charges, coef, cut_dirs, diagnostics)


def verify_no_interior_critical_points(h, domain, margin=1e-3):
    """Count zeros of the completion's derivative strictly inside the domain.

    Uses the argument principle on the inward-offset boundary contour so
    corners are excluded by ``margin``.  For a unimodal solve the count is
    expected to be 0; the result reports the count rather than assuming it.
    """
    from .critical import interior_critical_count

    return interior_critical_count(h, domain, margin=margin)


# ---------------------------------------------------------------------------
# representation checks shared by tests and the verify command


def gradient_fd_residual(h, points, step=1e-5):
    """Max |analytic gradient - central finite differences| over points."""
    z = np.atleast_1d(as_complex(points))
    gx = (h.value(z + step) - h.value(z - step)) / (2 * step)
    gy = (h.value(z + 1j * step) - h.value(z - 1j * step)) / (2 * step)
    return float(np.max(np.abs(h.gradient(z) - (gx + 1j * gy))))


def laplacian_stencil_residual(h, points, step=1e-4):
    """Max five-point-stencil Laplacian over points (harmonicity proxy)."""
    z = np.atleast_1d(as_complex(points))
    lap = (
        h.value(z + step)
        + h.value(z - step)
        + h.value(z + 1j * step)
        + h.value(z - 1j * step)
        - 4.0 * h.value(z)
    ) / step**2
    return float(np.max(np.abs(lap)))
