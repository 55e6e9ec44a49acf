"""Finite-strain damage and healing of soft tissue.

Growth, remodeling and gradient-enhanced damage on a two-field
(displacement + nonlocal damage) plane-strain finite-element model.
"""

__version__ = "0.1.0"
