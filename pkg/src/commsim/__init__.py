"""Open-world community simulation: scenes from map data, a deterministic
multi-agent stepper, background traffic, navigation, baseline planners and
benchmark tasks."""

__version__ = "0.1.0"
