from .config import KEYS, ExperimentConfig, from_dict, load_config
from .plot import LOG_FLOOR, PlotStyle, Series, emit_plot, render_svg
from .scenarios import CATALOG, Scenario, UnknownScenarioError, list_scenarios, measure_loop_split, run_scenario

__all__ = [
    "CATALOG", "KEYS", "LOG_FLOOR", "ExperimentConfig", "PlotStyle", "Scenario", "Series", "UnknownScenarioError",
    "emit_plot", "from_dict", "list_scenarios", "load_config", "measure_loop_split", "render_svg", "run_scenario",
]
