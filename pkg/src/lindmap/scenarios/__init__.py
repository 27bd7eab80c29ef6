"""Bundled scenario files; resolve them with scenario.bundled_scenario_path."""
