"""Electric road system corridor simulator.

>>> from ers_sim import load_preset, run
>>> result = run(load_preset("single-vehicle"))
>>> round(result.summary["transfer"]["kwh_delivered"], 2)
2.59
"""
from .engine import SimulationResult, run
from .errors import ErsError, ScenarioError
from .scenario import Scenario, load_preset, load_scenario, load_scenario_file, preset_names

__version__ = "0.1.0"

__all__ = ["ErsError", "Scenario", "ScenarioError", "SimulationResult", "load_preset", "load_scenario",
           "load_scenario_file", "preset_names", "run", "__version__"]
