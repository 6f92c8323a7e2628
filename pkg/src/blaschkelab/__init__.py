"""Blaschke metrics, cubic differentials and volume entropy on a genus-2 surface.

The library is organized bottom-up:

- ``fuchsian``: disk isometries and the octagon deck group
- ``mesh``: triangulated fundamental domain, Laplacian, integration
- ``cubic``: cubic differentials by truncated Poincare series
- ``wang``: the curvature equation for the Blaschke conformal factor
- ``analysis``: areas and the inequality ledger
- ``entropy``: orbit counting in the universal cover
- ``experiment``: the ray-degeneration driver
- ``service`` / ``cli``: HTTP wrapper and thin command-line client
"""

__version__ = "0.1.0"
