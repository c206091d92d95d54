from .experiment import ExperimentService, experiment_service

__all__ = ["ExperimentService", "experiment_service"]
