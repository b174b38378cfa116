"""Boundary-integral solver for water-wave scattering from a compact patch
of modified surface physics (a floating membrane, or an opening in an
elastic ice sheet)."""

__version__ = "0.1.0"
