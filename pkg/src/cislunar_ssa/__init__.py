"""Cislunar SSA constellation design: CR3BP slot catalog, visibility model,
time-expanded p-median instances, and a Lagrangean solver."""

__version__ = "0.1.0"
