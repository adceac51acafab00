"""
JSON encoding for planner objects.
"""
import dataclasses
import enum
import math

import numpy as np
import simplejson

from delivery_planner.model import violation_probabilities


class PlannerJSONEncoder(simplejson.JSONEncoder):
    """
    JSONEncoder subclass that knows how to encode numpy arrays and scalars,
    enums and dataclasses.
    """
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, enum.Enum):
            return o.value
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dict((f.name, getattr(o, f.name)) for f in dataclasses.fields(o))
        return super().default(o)


def dumps(obj, **kwargs):
    """
    Serialize ``obj`` with ``PlannerJSONEncoder``; non-finite floats become
    ``null``.
    """
    kwargs.setdefault('cls', PlannerJSONEncoder)
    kwargs.setdefault('ignore_nan', True)
    return simplejson.dumps(obj, **kwargs)


def loads(text, **kwargs):
    return simplejson.loads(text, **kwargs)


def finite_or_none(value):
    value = float(value)
    return value if math.isfinite(value) else None


def recourse_document(recourse, inst):
    """
    Get the JSON-ready description of one scenario's recourse.
    """
    return {
        'carrier_assign': recourse.carrier_assign,
        'routes': [list(route.visit_sequence) for route in recourse.routes],
        'order': recourse.order,
        'late_flags': recourse.late_flags,
        'violation_probabilities': violation_probabilities(recourse, inst),
    }


def solution_document(result, inst):
    """
    Get the JSON-ready solution file contents for a ``SolveResult``.
    """
    document = {
        'format': 'delivery-planner-solution',
        'version': 1,
        'method': result.method,
        'status': result.status,
        'objective': finite_or_none(result.objective),
        'wall_time': result.wall_time,
        'breakdown': result.breakdown.as_dict(),
        'plan': {
            'reserved': result.plan.reserved,
            'assigned': result.plan.assigned,
        },
        'scenarios': [recourse_document(rec, inst) for rec in result.recourse],
    }
    if result.trace:
        document['iterations'] = len(result.trace)
    return document
