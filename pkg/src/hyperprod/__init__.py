"""Products of hyperbolic factors: geometry, entailment cones, training and evaluation."""

__version__ = "0.1.0"
