from . import base

ConfigError = base.ConfigError
RunConfig = base.RunConfig
TNPlannerError = base.TNPlannerError

__all__ = ['ConfigError', 'RunConfig', 'TNPlannerError']
