"""Federated learning simulator with explanation-driven class unlearning.

The package trains a small CNN across simulated clients, scores channel
influence on a target class by ablation, and unlearns the class by
fine-tuning only the influential channels on perturbation data, either
through federated rounds (decentralized) or on the server (centralized).
Evaluation covers class accuracy, membership-inference recall, measured
traffic, and an analytic cost model.
"""

__version__ = "0.1.0"
