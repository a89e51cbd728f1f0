"""Geometric impedance control on SE(3)."""
