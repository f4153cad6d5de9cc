"""Loss-surface deformation mappings and the instruments to study them."""

__version__ = "0.1.0"

from .vdm import (  # noqa: E402
    ArctanPower,
    DeformationSpec,
    Identity,
    LogExp,
    PowerHalfSquare,
    Scale,
    derivative_curve,
    parse_spec,
    vdm_derivative,
    vdm_value,
)
