"""Stokes flow through dense periodic pillar arrays: meshing, Taylor-Hood
discretization, inf-sup measurement and augmented-Lagrangian solvers."""

__version__ = "0.1.0"
