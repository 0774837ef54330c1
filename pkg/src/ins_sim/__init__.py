"""Interactive narrative systems as state transition systems, with experience managers."""

from ins_sim.model import Kind, NarrativeSystem, Rule, Transition, Island
from ins_sim.policy import Overlay, get_manager, fairy_manager, mimesis_manager, vanilla_manager
from ins_sim.simulate import PlayerModel, Trace, run_batch, run_once
from ins_sim.analyze import aggregate, is_complete_plan, absorption_probabilities
from ins_sim.storyio import bundled_lrrh, parse_story

__version__ = "0.1.0"
