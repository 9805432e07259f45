"""Decentralized event-triggered control over sensor/actuator networks.

Simulates sample-and-hold feedback whose updates are triggered by centralized or
per-node conditions, with on-line adaptation of the per-node thresholds, on a
quadruple-tank reference plant.
"""

__version__ = "0.1.0"

from .adaptation import AdaptationConfig, adapt_theta, solve_theta, taylor_estimates
from .config import emit_config, load_reference_scenario, parse_and_validate, parse_document
from .engine import (ScenarioConfig, SimResult, apply_actuation_delay, compare_modes,
                     run_event_triggered, run_mode, run_periodic)
from .plant import (PlantModel, QuadrupleTank, QuadrupleTankParams, equilibrium_inputs,
                    feedback_law, lyapunov_hd, tank_dynamics)
from .trigger import (ThetaVector, TriggerConfig, centralized_gap, implication_holds,
                      local_gaps, schedule_next_update)
