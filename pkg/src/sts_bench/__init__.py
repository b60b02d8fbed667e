"""Student-teacher simulatability benchmark for attributional graph explanations."""

__version__ = "0.1.0"
