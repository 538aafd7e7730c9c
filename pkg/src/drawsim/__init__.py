"""drawsim: simulated student science drawings with diagnostic scaffolding."""

__version__ = "0.1.0"
