"""Fock-space simulation of entangled-photon generation with two pair sources
and two polarizing beam splitters, with Bell-test and QKD tooling."""

__version__ = "0.1.0"
