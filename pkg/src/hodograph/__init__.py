"""Boundary-flattening hodograph maps for planar harmonic functions.

The pipeline: solve an auxiliary positive harmonic function v on a
domain, build its conjugate and holomorphic completion, flatten the
boundary with the map (v_bar, v), transport and reflect the function of
interest, and count critical points on both sides of the map.
"""

from .geometry import (
    BoundaryCurve,
    BoundarySamples,
    Domain,
    GeometryError,
    GraphParametrization,
    Segment,
    boundary_sample,
    chord_arc_constant,
    circle_domain,
    dmo_phi,
    ellipse_domain,
    graph_corner,
    graph_dmo,
    graph_polyline,
    graph_zero,
    half_disk_domain,
    make_graph_domain,
    polygon_domain,
)

__all__ = [
    "BoundaryCurve",
    "BoundarySamples",
    "Domain",
    "GeometryError",
    "GraphParametrization",
    "Segment",
    "boundary_sample",
    "chord_arc_constant",
    "circle_domain",
    "dmo_phi",
    "ellipse_domain",
    "graph_corner",
    "graph_dmo",
    "graph_polyline",
    "graph_zero",
    "half_disk_domain",
    "make_graph_domain",
    "polygon_domain",
]
