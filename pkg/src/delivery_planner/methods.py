"""
Solution methods and the registry that dispatches instances to them.
"""
import dataclasses
import time
from copy import copy
from dataclasses import dataclass
from functools import update_wrapper

import numpy as np

from delivery_planner import lshaped
from delivery_planner.conf import Configurable, classonlymethod
from delivery_planner.exceptions import (
    AlreadyRegistered, BudgetExhausted, Infeasible, IncompleteRecourse, NotRegistered, SolverFailure
)
from delivery_planner.formulation import BigMPolicy, build_extensive, decode
from delivery_planner.milp import BranchAndBound, Status
from delivery_planner.model import NONZERO_TOL, arc_times, evaluate, violation_probabilities
from delivery_planner.oracle import enumerate_optimal


@dataclass(frozen=True, eq=False)
class SolveResult:
    """
    What a solution method produced, with the payment breakdown recomputed
    from the decoded plan and recourse.
    """
    method: str
    status: str
    plan: object
    recourse: tuple
    breakdown: object
    violation_probabilities: np.ndarray
    violation_probability: float
    objective: float
    wall_time: float
    trace: tuple = ()
    nodes: int = 0
    objective_is_total: bool = True

    @property
    def total(self):
        return self.breakdown.total


def _with_late_flags(recourse, inst):
    """
    Get ``recourse`` with its late flags recomputed from its routes.
    """
    flags = np.zeros_like(recourse.late_flags)
    for t in range(recourse.arcs.shape[2]):
        flags[t] = arc_times(recourse.arcs[:, :, t], inst) - inst.deadline_minutes > NONZERO_TOL
    return dataclasses.replace(recourse, late_flags=flags)


class BaseMethod(Configurable):
    """
    Encapsulates the options shared by every solution method.
    """
    name = None
    objective_is_total = True

    def __init__(self, **kwargs):
        self._load_config_values(kwargs,
            gap_tol=1e-6,
            max_nodes=200000,
            time_limit=None,
            big_m=None,
        )
        self._reject_unknown(kwargs)

    def get_big_m(self, inst):
        """
        Get the big-M constants to build models with.
        """
        if self.big_m is not None:
            return self.big_m
        return BigMPolicy.default(inst)

    def get_solver(self):
        """
        Get the branch-and-bound solver for the built models.
        """
        return BranchAndBound(gap_tol=self.gap_tol, max_nodes=self.max_nodes, time_limit=self.time_limit)

    def is_applicable(self, inst):
        """
        Can this method solve ``inst``? Raise to refuse.
        """
        return True

    def solve_instance(self, inst):
        """
        Solve ``inst`` and return ``(status, plan, recourse, objective, trace, nodes)``.
        """
        raise NotImplementedError

    def __call__(self, inst):
        """
        Solve ``inst`` and get a ``SolveResult``.
        """
        started = time.monotonic()
        self.is_applicable(inst)
        status, plan, recourse, objective, trace, nodes = self.solve_instance(inst)
        breakdown = evaluate(plan, recourse, inst)
        probabilities = np.array([violation_probabilities(rec, inst) for rec in recourse])
        worst = probabilities.max(axis=1) if probabilities.size else np.zeros(len(recourse))
        return SolveResult(
            method=self.name,
            status=status,
            plan=plan,
            recourse=tuple(recourse),
            breakdown=breakdown,
            violation_probabilities=probabilities,
            violation_probability=float(inst.probabilities @ worst),
            objective=float(objective),
            wall_time=time.monotonic() - started,
            trace=tuple(trace),
            nodes=nodes,
            objective_is_total=self.objective_is_total,
        )

    @classonlymethod
    def as_solver(cls, **initkwargs):
        """
        Get a function that solves an instance with a fresh method object.
        """
        def solver(inst):
            self = cls(**initkwargs)
            return self(inst)

        update_wrapper(solver, cls, updated=())
        return solver


class ExtensiveMethod(BaseMethod):
    """
    Solves the extensive form over every scenario at once.
    """
    name = 'extensive'

    def solve_instance(self, inst):
        problem, index = build_extensive(inst, self.get_big_m(inst))
        solution = self.get_solver().solve(problem)
        if solution.status is Status.INFEASIBLE:
            raise Infeasible("the extensive form has no feasible solution")
        if solution.status is Status.ITER_LIMIT:
            raise BudgetExhausted("branch and bound stopped after %d nodes without an incumbent"
                                  % solution.nodes)
        if solution.status is Status.UNBOUNDED:
            raise SolverFailure("the extensive form is unbounded")
        plan, recourse = decode(solution, index)
        status = 'optimal' if solution.status is Status.OPTIMAL else 'gap-limit'
        return status, plan, recourse, solution.objective_value, (), solution.nodes


class DeadlineBlindMethod(ExtensiveMethod):
    """
    Plans as if the deadline did not matter (no lateness penalty), then
    reports what that plan really pays. Its objective is the blind model's.
    """
    name = 'odp'
    objective_is_total = False

    def solve_instance(self, inst):
        blind = inst.replace(penalty_cost=0.0)
        status, plan, recourse, objective, trace, nodes = super().solve_instance(blind)
        recourse = tuple(_with_late_flags(rec, inst) for rec in recourse)
        return status, plan, recourse, objective, trace, nodes


class LShapedMethod(BaseMethod):
    """
    Solves by L-shaped decomposition.
    """
    name = 'lshaped'

    def __init__(self, **kwargs):
        self._load_config_values(kwargs,
            epsilon=0.001,
            max_iterations=30,
        )
        super().__init__(**kwargs)

    def is_applicable(self, inst):
        if inst.n_carriers == 0:
            raise IncompleteRecourse("decomposition needs at least one carrier for complete recourse")
        return True

    def get_lshaped_config(self):
        return lshaped.LShapedConfig(
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            solver=self.get_solver(),
            big_m=self.big_m,
        )

    def solve_instance(self, inst):
        result = lshaped.run(inst, self.get_lshaped_config())
        best = result.best
        status = 'converged' if result.converged else 'iteration-limit'
        return status, best.plan, best.recourse, best.objective, result.trace, 0


class OracleMethod(BaseMethod):
    """
    Certifies the optimum of a tiny instance by enumeration.
    """
    name = 'oracle'

    def solve_instance(self, inst):
        result = enumerate_optimal(inst)
        return 'optimal', result.plan, result.recourse, result.optimal_total, (), result.enumeration_count


class MethodSite(object):
    """
    A method site is a registry of solution methods that dispatches
    instances to their designated method.
    """
    def __init__(self, **defaults):
        self._registry = {}
        self.defaults = defaults

    def register(self, key, method=None, **options):
        """
        Register a solution method with the current site.
        """
        if method is None:
            method = ExtensiveMethod
        if key in self._registry:
            raise AlreadyRegistered("The key '%s' is already registered" % key)
        opts = copy(options)
        opts.update(self.defaults)
        self._registry[key] = (method, opts)

    def unregister(self, key):
        """
        Remove a solution method from the current site's registry.
        """
        if key not in self._registry:
            raise NotRegistered("The key '%s' is not registered" % key)
        del self._registry[key]

    def keys(self):
        return list(self._registry)

    def __contains__(self, key):
        return key in self._registry

    def get_method(self, key, **overrides):
        """
        Get a configured method object for ``key``.
        """
        if key not in self._registry:
            raise NotRegistered("The key '%s' is not registered" % key)
        method_class, options = self._registry[key]
        opts = copy(options)
        opts.update(overrides)
        return method_class(**opts)

    def __call__(self, inst, key=None, **overrides):
        """
        Dispatch ``inst`` to the method registered under ``key``.
        """
        result = self.get_method(key, **overrides)(inst)
        return dataclasses.replace(result, method=key)


site = MethodSite()
site.register('extensive', ExtensiveMethod)
site.register('lshaped', LShapedMethod)
site.register('oracle', OracleMethod)
site.register('odp', DeadlineBlindMethod)
