"""Dielectric compressive reflector antenna design.

Physical-optics forward model with per-facet dielectric layers over a metal
reflector, a capacity/efficiency design objective with an exact gradient,
a projected-gradient optimizer and an l1 reconstruction harness.
"""
__version__ = "0.1.0"
