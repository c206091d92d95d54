from .scenario import ScenarioFile, ScenarioOverrides
from .result import RunManifest, RunScenarioRequest, RunScenarioResponse

__all__ = ["ScenarioFile", "ScenarioOverrides", "RunManifest", "RunScenarioRequest", "RunScenarioResponse"]
