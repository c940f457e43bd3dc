"""Pinching-antenna ISAC beamforming over segmented waveguides."""

from .scenario import (Geometry, Placement, PinchingLayout, ScenarioConfig,
                       ScenarioError, default_layout, load_scenario,
                       project_layout, sample_placement, scenario_from_dict,
                       scenario_to_dict, waveguide_axes)
from .channel import ChannelError, ChannelSet, build_channels
from .metrics import (BeamformingState, MetricsError, all_rates,
                      communication_rate, csr, penalized_objective,
                      sensing_rate, soc_margins, wmmse_objective)
from .ao import (AoConfig, AoResult, AoTrace, run_alternating_optimization,
                 select_segments)

__version__ = "0.1.0"
