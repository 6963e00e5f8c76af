"""Simulation of adiabatic single-atom transport between magnetic waveguides
on an atom chip: wire-field potentials, 3D split-operator propagation, and a
three-mode analytic oracle."""

__version__ = "0.1.0"
