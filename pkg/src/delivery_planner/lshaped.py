"""
L-shaped decomposition: a first-stage master problem over truck reservations
and assignments, one subproblem per demand scenario, and optimality cuts
built from the subproblem solutions.

The loop stops once the recourse estimate ``theta`` agrees with the cut
value ``B`` to within ``epsilon`` and the upper estimate ``H`` stops
decreasing; the record of the iteration before the last is the answer.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from delivery_planner import serializers
from delivery_planner.conf import Configurable
from delivery_planner.exceptions import (
    ImproperlyConfigured, IncompleteRecourse, InvalidInstance, SolverFailure
)
from delivery_planner.formulation import (
    BigMPolicy, OptimalityCut, build_master, build_subproblem, decode
)
from delivery_planner.milp import BranchAndBound
from delivery_planner.model import validate_instance

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IterationRecord:
    k: int
    theta_bar: float
    B: float
    H: float
    N: int
    plan: object
    cut: OptimalityCut
    scenario_costs: tuple
    recourse: tuple = ()
    wall_time: float = 0.0

    @property
    def objective(self):
        """
        Full objective of this iteration's plan: ``H`` plus the unit
        assignment term the master carries.
        """
        return self.H + float(self.plan.assigned.sum())

    def as_dict(self):
        return {
            'k': self.k,
            'theta_bar': serializers.finite_or_none(self.theta_bar),
            'B': self.B,
            'H': self.H,
            'N': self.N,
            'wall_time': self.wall_time,
        }


@dataclass(frozen=True, eq=False)
class LShapedResult:
    best: IterationRecord
    trace: tuple = field(default_factory=tuple)
    converged: bool = False
    exhausted: bool = False


class LShapedConfig(Configurable):
    """
    Options of a decomposition run.
    """
    def __init__(self, **kwargs):
        self._load_config_values(kwargs,
            epsilon=0.001,
            max_iterations=30,
            solver=None,
            big_m=None,
        )
        self._reject_unknown(kwargs)
        if not self.epsilon > 0:
            raise ImproperlyConfigured("epsilon must be positive, got %r" % (self.epsilon,))
        if self.max_iterations < 1:
            raise ImproperlyConfigured("max_iterations must be positive")

    def get_solver(self):
        return self.solver if self.solver is not None else BranchAndBound()

    def get_big_m(self, inst):
        return self.big_m if self.big_m is not None else BigMPolicy.default(inst)


def _arc_costs(recourse, inst):
    return np.einsum('uv,uvt->uvt', inst.routing_cost, recourse.arcs)


def compute_P(w, recourse, inst):
    """
    Probability-weighted lateness penalty of scenario ``w``.
    """
    return float(inst.probabilities[w] * inst.penalty_cost * recourse.late_flags.sum())


def compute_M(w, recourse, inst):
    """
    Probability-weighted routing cost of the arcs touching each customer,
    summed over customers. Arcs between two customers are counted once for
    each end.
    """
    costs = _arc_costs(recourse, inst)
    return float(inst.probabilities[w] * (costs[:, 1:, :].sum() + costs[1:, :, :].sum()))


def compute_J(w, inst):
    """
    Probability-weighted cost of sending every demanding customer of
    scenario ``w`` to its cheapest carrier.
    """
    if inst.n_carriers == 0:
        raise IncompleteRecourse("carrier fallback needs at least one carrier")
    return float(inst.probabilities[w] * (inst.demand[w] @ inst.cheapest_charges))


def compute_I_matrix(w, recourse, inst):
    """
    ``I[i - 1, t]`` for every customer ``i`` and truck ``t``.
    """
    if inst.n_carriers == 0:
        raise IncompleteRecourse("carrier fallback needs at least one carrier")
    costs = _arc_costs(recourse, inst)
    shares = costs.sum(axis=0)[1:, :] + costs.sum(axis=1)[1:, :]
    fallback = (inst.demand[w] * inst.cheapest_charges)[:, np.newaxis]
    return inst.probabilities[w] * (fallback - shares)


def compute_I(i, t, w, recourse, inst):
    return float(compute_I_matrix(w, recourse, inst)[i - 1, t])


def assemble_cut(J, P, M, I):
    """
    Combine per-scenario values into one optimality cut.
    """
    J, P, M = (np.asarray(values, dtype=float) for values in (J, P, M))
    E = np.sum(np.asarray(I, dtype=float), axis=0)
    return OptimalityCut(E, float((J - P - M).sum()))


def _solve(solver, problem, label):
    solution = solver.solve(problem)
    if not solution.has_solution:
        raise SolverFailure("%s solve ended with status %s" % (label, solution.status.value))
    return solution


def run(inst, config=None, **options):
    """
    Run the decomposition on ``inst``; returns an ``LShapedResult``.
    """
    config = config if config is not None else LShapedConfig(**options)
    violations = validate_instance(inst)
    if violations:
        raise InvalidInstance(violations)
    if inst.n_carriers == 0:
        raise IncompleteRecourse("decomposition needs at least one carrier for complete recourse")
    solver = config.get_solver()
    big_m = config.get_big_m(inst)

    cuts = []
    trace = []
    previous_H = math.inf
    N = 0
    for k in range(config.max_iterations):
        started = time.monotonic()
        master, index = build_master(inst, big_m, cuts, first_iteration=(k == 0))
        solution = _solve(solver, master, "master problem at iteration %d" % k)
        plan, _ = decode(solution, index)
        theta_bar = -math.inf if k == 0 else solution.value(index['theta',])

        recourse, costs = [], []
        J, P, M, I = [], [], [], []
        for w in range(inst.n_scenarios):
            problem, sub_index = build_subproblem(inst, w, plan, big_m)
            sub_solution = _solve(solver, problem, "subproblem %d at iteration %d" % (w, k))
            _, (rec,) = decode(sub_solution, sub_index)
            recourse.append(rec)
            costs.append(sub_solution.objective_value)
            J.append(compute_J(w, inst))
            P.append(compute_P(w, rec, inst))
            M.append(compute_M(w, rec, inst))
            I.append(compute_I_matrix(w, rec, inst))

        cut = assemble_cut(J, P, M, I)
        B = float(np.sum(J) - np.sum(M) - (cut.E * plan.assigned).sum())
        H = float(inst.initial_costs @ plan.reserved) + float(np.sum(costs))
        if abs(B - theta_bar) <= config.epsilon:
            N = 1
        record = IterationRecord(k, theta_bar, B, H, N, plan, cut, tuple(costs), tuple(recourse),
                                 time.monotonic() - started)
        trace.append(record)
        cuts.append(cut)
        logger.info("iteration %d: theta %.6g, B %.6g, H %.6g, N %d", k, theta_bar, B, H, N)

        if H >= previous_H and N == 1:
            return LShapedResult(trace[-2], tuple(trace), converged=True)
        previous_H = H

    best = min(trace, key=lambda record: record.H)
    logger.warning("decomposition stopped after %d iterations without converging", len(trace))
    return LShapedResult(best, tuple(trace), exhausted=True)


def write_trace(trace, stream):
    """
    Write one JSON object per iteration record to ``stream``.
    """
    for record in trace:
        stream.write(serializers.dumps(record.as_dict()) + '\n')
