"""Few-photon scattering and transient dynamics in waveguide QED."""
from .core import (Channel, Interaction, JCBlock, MirrorBlock, Mode, Model,
                   RydbergBlock, SystemConfig, Wavepacket, config_from_dict,
                   validate)

__version__ = "0.1.0"

__all__ = [
    "Channel", "Interaction", "JCBlock", "MirrorBlock", "Mode", "Model",
    "RydbergBlock", "SystemConfig", "Wavepacket", "config_from_dict",
    "validate",
]
