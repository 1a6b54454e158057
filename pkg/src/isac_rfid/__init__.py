"""Beamforming design for backscatter RFID interrogation alongside downlink users."""

__version__ = "0.1.0"

from .model import (BeamformingSolution, PolarPosition, Scenario, SystemParams,  # noqa: E402
                    default_params, reference_scenario)

__all__ = ["BeamformingSolution", "PolarPosition", "Scenario", "SystemParams",
           "default_params", "reference_scenario", "__version__"]
