"""
Exceptions raised by the delivery planner.
"""


class PlannerError(Exception):
    pass


class ImproperlyConfigured(PlannerError):
    pass


class AlreadyRegistered(PlannerError):
    pass


class NotRegistered(PlannerError):
    pass


class InvalidInstance(PlannerError):
    """
    An instance failed validation. ``violations`` lists every problem found.
    """
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid instance: %s" % "; ".join(self.violations))


class InstanceFileError(PlannerError):
    """
    An instance document could not be parsed. ``location`` points at the
    offending file, line or field.
    """
    def __init__(self, location, message):
        self.location = location
        super().__init__("%s: %s" % (location, message))


class SubtourDetected(PlannerError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("subtour not containing the depot: %s" % (self.cycle,))


class BrokenPath(PlannerError):
    pass


class MissingRecourse(PlannerError):
    pass


class MalformedProblem(PlannerError):
    pass


class NonIntegralValue(PlannerError):
    def __init__(self, name, value):
        self.name = name
        self.value = value
        super().__init__("non-integral value %r for %s" % (value, name))


class SolutionParseError(PlannerError):
    def __init__(self, line, message):
        self.line = line
        super().__init__("line %d: %s" % (line, message))


class BudgetExceeded(PlannerError):
    pass


class BudgetExhausted(PlannerError):
    pass


class Infeasible(PlannerError):
    pass


class IncompleteRecourse(PlannerError):
    pass


class SolverFailure(PlannerError):
    pass
