"""Figure rendering for star-growth run directories.

This package is independent of the simulator: it reads only the documented
CSV/JSON run formats and writes deterministic PNG images.
"""

__version__ = "0.1.0"
