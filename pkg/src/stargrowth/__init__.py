"""Growth of star-shaped domains by localized boundary bumps.

Simulates the pure-jump growth process (boundary field, particle position),
integrates the averaged boundary ODE, and provides the lattice walk
reference simulators plus experiment harnesses.
"""

__version__ = "0.1.0"
