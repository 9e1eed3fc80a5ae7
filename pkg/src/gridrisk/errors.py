"""Exception types raised by the engine."""


class GridRiskError(Exception):
    """Base class; ``stage`` names the pipeline step that failed, when known."""

    stage = None


class CaseError(GridRiskError, ValueError):
    stage = "parse_case"


class ScenarioError(GridRiskError, ValueError):
    stage = "scenarios"


class ObservabilityError(GridRiskError, ArithmeticError):
    stage = "estimation"


class AttackError(GridRiskError, ValueError):
    stage = "attack"


class CaptureError(GridRiskError, ValueError):
    stage = "cyber"
