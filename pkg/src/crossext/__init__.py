"""Harmonic and plurisubharmonic measures, cross envelopes and Bergman-series extensions.

Submodules
----------
geometry
    Planar domains, boundary arc sets, smoothed collars and slices.
harmonic
    Harmonic measure by closed form, grid solve and walk on spheres.
pshmeasure
    Relative extremal functions, sublevel rescaling, tubes and exhaustions.
cross
    Cross specifications, envelope membership and connectivity, two-constant bounds.
bergman
    Doubly orthogonal bases, cross coefficients and series assembly.
extend
    Mixed-cross extension, max-norm checks, boundary crosses and gluing schedules.
cli
    Manifest-driven command line front end.
"""

__version__ = "0.1.0"

__all__ = ["bergman", "cli", "cross", "extend", "geometry", "harmonic", "pshmeasure", "__version__"]
