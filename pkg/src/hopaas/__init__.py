"""Hyperparameter optimization as a service.

A coordination server hands out hyperparameter sets to distributed workers
over a minimal HTTP protocol (ask / tell / should_prune), drives the search
with a Tree-structured Parzen Estimator and a median pruner, authenticates
workers with revocable API tokens and persists all study state durably.
"""

__version__ = "0.1.0"
