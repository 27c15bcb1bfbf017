"""Direct ALE ADER-DG for the Euler equations on moving 3D polyhedral meshes
with topology changes treated by hole-like space-time elements."""

__version__ = "0.1.0"
