"""qgforge: difficulty calibration and controlled question generation tooling.

Subpackages cover the pipeline stages: corpus handling, deterministic
text metrics, response collection, Rasch calibration, synthetic
learners, generation-endpoint clients, evaluation tables, and the CLI
that strings the stages together.
"""

__version__ = "0.1.0"
