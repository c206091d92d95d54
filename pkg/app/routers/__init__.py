from .scenario import router as scenario_router

__all__ = ["scenario_router"]
