"""Deterministic low-discrepancy sampling used across the package.

Every stochastic-looking choice (probe pairs, interior sample clouds,
chord-arc pairs) is driven by Halton sequences so that a run is a pure
function of its configuration and seed.
"""

import numpy as np

_PRIMES = (2, 3, 5, 7, 11, 13)


def radical_inverse(indices, base):
    """Van der Corput radical inverse of nonnegative integers in the given base."""
    idx = np.array(indices, dtype=np.int64, copy=True)
    out = np.zeros(idx.shape, dtype=float)
    denom = np.ones(idx.shape, dtype=float)
    while np.any(idx > 0):
        denom *= base
        out += (idx % base) / denom
        idx //= base
    return out


def halton(n, dim=2, start=1):
    """First n points of the Halton sequence, shape (n, dim), in [0, 1)^dim.

    ``start`` offsets the index stream; seeds map to offsets so distinct
    seeds give distinct but reproducible point sets.
    """
    if dim > len(_PRIMES):
        raise ValueError(f"dim must be <= {len(_PRIMES)}")
    idx = np.arange(start, start + n, dtype=np.int64)
    return np.column_stack([radical_inverse(idx, b) for b in _PRIMES[:dim]])


def seed_offset(seed):
    """Map a user seed to a Halton index offset."""
    return 1 + (int(seed) % 100003) * 1009


def interior_points(domain, n, seed=0, margin=0.0, ball_radius=None, max_tries=200):
    """Quasi-random points strictly inside the domain (complex array of length n).

    Rejection-samples a Halton stream over the boundary bounding box.  With
    ``ball_radius`` set, points are also restricted to the ball of that
    radius around the domain anchor.  ``margin`` keeps a clearance from the
    boundary.
    """
    lo, hi = domain.boundary.bounding_box()
    span = hi - lo
    out = []
    start = seed_offset(seed)
    need = n
    for _ in range(max_tries):
        batch = max(4 * need, 256)
        uv = halton(batch, dim=2, start=start)
        start += batch
        z = (lo.real + uv[:, 0] * span.real) + 1j * (lo.imag + uv[:, 1] * span.imag)
        keep = domain.inside(z)
        if ball_radius is not None:
            keep &= np.abs(z - domain.anchor) < ball_radius
        if margin > 0.0:
            keep &= domain.boundary.distance(z) > margin
        z = z[keep]
        out.append(z)
        need -= z.size
        if need <= 0:
            break
    pts = np.concatenate(out) if out else np.empty(0, dtype=complex)
    if pts.size < n:
        raise RuntimeError(f"could not sample {n} interior points (got {pts.size})")
    return pts[:n]
