"""
Parameter sweeps and method comparisons, reported as pandas tables.
"""
import logging

import pandas as pd

from delivery_planner.exceptions import PlannerError
from delivery_planner.methods import site as default_site

logger = logging.getLogger(__name__)

COMPONENTS = ('assignment_term', 'truck_initial', 'carrier_charges', 'routing_cost', 'penalty_cost')
COLUMNS = (('parameter', 'value', 'method', 'status', 'objective', 'total') + COMPONENTS
           + ('violation_probability', 'wall_time', 'iterations', 'consistent', 'failed', 'error'))
CONSISTENCY_TOL = 1e-9
OBJECTIVE_TOL = 1e-6


def objective_matches(result):
    """
    Does the objective a method reported agree with the total its plan and
    recourse re-evaluate to? Methods whose objective prices another model
    always agree.
    """
    if not result.objective_is_total:
        return True
    return abs(result.objective - result.total) <= OBJECTIVE_TOL * max(1.0, abs(result.total))


class SweepReport(object):
    """
    One row per (parameter value, method).
    """
    def __init__(self, parameter):
        self.parameter = parameter
        self.rows = []

    def __len__(self):
        return len(self.rows)

    def add_result(self, value, method, result):
        row = dict.fromkeys(COLUMNS)
        row.update(result.breakdown.as_dict())
        row.update(
            parameter=self.parameter,
            value=value,
            method=method,
            status=result.status,
            objective=result.objective,
            violation_probability=result.violation_probability,
            wall_time=result.wall_time,
            iterations=len(result.trace),
            consistent=objective_matches(result),
            failed=False,
            error='',
        )
        self.rows.append(row)

    def add_failure(self, value, method, error):
        row = dict.fromkeys(COLUMNS)
        row.update(parameter=self.parameter, value=value, method=method, status='failed',
                   consistent=True, failed=True, error='%s: %s' % (type(error).__name__, error))
        self.rows.append(row)

    def to_frame(self):
        frame = pd.DataFrame(self.rows, columns=list(COLUMNS))
        return frame.sort_values(['value', 'method'], kind='stable').reset_index(drop=True)

    def to_csv(self, path_or_buf=None):
        return self.to_frame().to_csv(path_or_buf, index=False, float_format='%.9g')

    def inconsistent_rows(self):
        """
        Get the indices of rows whose components do not add up to their
        total, or whose reported objective disagrees with it.
        """
        frame = self.to_frame()
        ok = frame[~frame['failed'].astype(bool)]
        gap = (ok[list(COMPONENTS)].astype(float).sum(axis=1) - ok['total'].astype(float)).abs()
        bad = (gap > CONSISTENCY_TOL) | ~ok['consistent'].astype(bool)
        return list(ok.index[bad.to_numpy()])


def _solve_point(report, inst, value, method, site, options):
    try:
        result = site(inst, method, **options)
    except PlannerError as e:
        logger.warning("%s=%r with %s failed: %s", report.parameter, value, method, e)
        report.add_failure(value, method, e)
        return
    if not objective_matches(result):
        logger.warning("%s=%r with %s: objective %.9g but the plan re-evaluates to %.9g",
                       report.parameter, value, method, result.objective, result.total)
    logger.info("%s=%r with %s: total %.6f, violation probability %.4f",
                report.parameter, value, method, result.total, result.violation_probability)
    report.add_result(value, method, result)


def _sweep(inst, parameter, field, values, method, site, options):
    site = site if site is not None else default_site
    report = SweepReport(parameter)
    for value in sorted(values):
        _solve_point(report, inst.replace(**{field: float(value)}), value, method, site, options)
    return report


def sweep_deadline(inst, deadlines, method='extensive', site=None, **options):
    """
    Solve ``inst`` once per deadline in ``deadlines``. A deadline of zero or
    less makes an invalid instance, so its row is a failed one.
    """
    return _sweep(inst, 'deadline', 'deadline_minutes', deadlines, method, site, options)


def sweep_penalty(inst, penalties, method='extensive', site=None, **options):
    """
    Solve ``inst`` once per penalty cost in ``penalties``.
    """
    return _sweep(inst, 'penalty', 'penalty_cost', penalties, method, site, options)


def compare_methods(inst, methods=('extensive', 'lshaped', 'oracle'), site=None, **options):
    """
    Solve ``inst`` with each of ``methods``, passing ``options`` to every
    one of them; methods that refuse or fail get a flagged row.
    """
    site = site if site is not None else default_site
    report = SweepReport('method')
    for method in methods:
        _solve_point(report, inst, 0, method, site, options)
    return report
