"""Periodic approximation of measures for partially hyperbolic skew products.

Model systems are a cat-map torus skew product and a full 2-shift with
circle fiber maps. See the README for the module map.
"""

from .systems import load_system, shift_system, torus_system
from .orbits import EmpiricalMeasure, PeriodicOrbit, empirical_measure, periodic_orbits, point_measure
from .measures import center_exponent, classify_index, convex_combine, weak_star_distance
from .pliss import PlissQuery, pliss_oracle, pliss_times

__all__ = [
    "EmpiricalMeasure",
    "PeriodicOrbit",
    "PlissQuery",
    "center_exponent",
    "classify_index",
    "convex_combine",
    "empirical_measure",
    "load_system",
    "periodic_orbits",
    "pliss_oracle",
    "pliss_times",
    "point_measure",
    "shift_system",
    "torus_system",
    "weak_star_distance",
]

__version__ = "0.1.0"
