"""
Builders that turn an ``Instance`` into ``MilpProblem`` objects: the
extensive form over every scenario, the decomposition master problem and
the per-scenario subproblems, plus decoding of solver output back into
domain types.
"""
import math
from dataclasses import dataclass

import numpy as np

from delivery_planner.exceptions import (
    ImproperlyConfigured, Infeasible, InvalidInstance, NonIntegralValue, SolverFailure
)
from delivery_planner.milp import MilpProblem, Sense, VarKind
from delivery_planner.model import (
    FirstStagePlan, ScenarioRecourse, routes_from_arcs, validate_instance
)

INTEGRALITY_TOL = 1e-6


@dataclass(frozen=True)
class BigMPolicy:
    """
    The two big-M constants: ``delta_assignment`` activates truck
    reservations, ``delta_deadline`` releases the deadline constraint when a
    late flag is set.
    """
    delta_assignment: float
    delta_deadline: float

    @classmethod
    def default(cls, inst):
        worst = max(float(np.sum(sample)) for sample in inst.travel_time_samples)
        return cls(float(inst.n_customers), max(1.0, worst - inst.deadline_minutes))

    def scaled(self, factor):
        return BigMPolicy(self.delta_assignment * factor, self.delta_deadline * factor)

    def check(self, inst):
        """
        Raise ``ImproperlyConfigured`` unless both constants are large enough
        for ``inst``.
        """
        if self.delta_assignment < inst.n_customers:
            raise ImproperlyConfigured("delta_assignment %r is below the customer count %d"
                                       % (self.delta_assignment, inst.n_customers))
        k = inst.n_customers + 1
        longest = max(float(np.sort(np.ravel(sample))[::-1][:k].sum())
                      for sample in inst.travel_time_samples)
        if self.delta_deadline < max(0.0, longest - inst.deadline_minutes):
            raise ImproperlyConfigured("delta_deadline %r cannot release the deadline constraint"
                                       % self.delta_deadline)


@dataclass(frozen=True)
class OptimalityCut:
    """
    ``sum(E[i, t] * X[i, t]) + theta >= e``; ``E`` is indexed by customer
    row (0-based) and truck.
    """
    E: np.ndarray
    e: float

    def __post_init__(self):
        E = np.array(self.E, dtype=float)
        if not np.all(np.isfinite(E)) or not math.isfinite(self.e):
            raise ValueError("optimality cut has non-finite coefficients")
        E.setflags(write=False)
        object.__setattr__(self, 'E', E)
        object.__setattr__(self, 'e', float(self.e))

    def slack(self, assigned, theta):
        """
        Left-hand side minus right-hand side at ``(assigned, theta)``.
        """
        return float((self.E * assigned).sum()) + theta - self.e


class VariableIndex(object):
    """
    Two-way mapping between structured keys such as ``('X', i, t)`` or
    ``('V', u, v, t, w)`` and the ``VarId`` of a built problem.
    """
    def __init__(self, inst, kind, scenarios=(), fixed_plan=None):
        self.inst = inst
        self.kind = kind
        self.scenarios = tuple(scenarios)
        self.fixed_plan = fixed_plan
        self._ids = {}
        self._keys = []
        self._integer = []

    def add(self, problem, key, kind=VarKind.BINARY, lower=0.0, upper=1.0):
        name = key[0] if len(key) == 1 else '%s_%s' % (key[0], '_'.join(str(k) for k in key[1:]))
        var = problem.add_variable(name, kind, lower, upper)
        self._ids[key] = var
        self._keys.append(key)
        self._integer.append(kind is not VarKind.CONTINUOUS)
        return var

    def __getitem__(self, key):
        return self._ids[key]

    def __contains__(self, key):
        return key in self._ids

    def __len__(self):
        return len(self._keys)

    def get(self, key, default=None):
        return self._ids.get(key, default)

    def key_of(self, var):
        return self._keys[var]

    def is_integer(self, var):
        return self._integer[var]


def _require_valid(inst):
    violations = validate_instance(inst)
    if violations:
        raise InvalidInstance(violations)


def _add_first_stage(problem, index, inst, big_m):
    n, n_trucks = inst.n_customers, inst.n_trucks
    objective = {}
    for i in range(1, n + 1):
        for t in range(n_trucks):
            objective[index.add(problem, ('X', i, t))] = 1.0
    for t in range(n_trucks):
        objective[index.add(problem, ('W', t))] = inst.initial_costs[t]
    for t in range(n_trucks):
        problem.add_constraint(
            dict((index['X', i, t], inst.weights[i - 1]) for i in range(1, n + 1)),
            Sense.LE, inst.capacities[t], name='cap_%d' % t)
        terms = dict((index['X', i, t], 1.0) for i in range(1, n + 1))
        terms[index['W', t]] = -big_m.delta_assignment
        problem.add_constraint(terms, Sense.LE, 0.0, name='act_%d' % t)
    return objective


def _add_second_stage(problem, index, inst, w, big_m, fixed=None):
    """
    Add the scenario-``w`` variables, constraints and objective terms. With
    ``fixed`` (an assignment matrix) the first-stage variables are constants.
    """
    n, n_trucks, N = inst.n_customers, inst.n_trucks, inst.n_locations
    prob = inst.probabilities[w]
    demand = inst.demand[w]
    charges = inst.carrier_charges
    routing = inst.routing_cost
    times = inst.travel_times
    objective = {}

    for i in range(1, n + 1):
        for r in range(inst.n_carriers):
            objective[index.add(problem, ('Y', i, r, w))] = prob * charges[i - 1, r]
    for t in range(n_trucks):
        for u in range(N):
            for v in range(N):
                objective[index.add(problem, ('V', u, v, t, w))] = prob * routing[u, v]
    for i in range(1, n + 1):
        for t in range(n_trucks):
            index.add(problem, ('S', i, t, w), VarKind.INTEGER, 0.0, float(n))
    for t in range(n_trucks):
        for s in range(inst.n_samples):
            objective[index.add(problem, ('Z', t, s, w))] = prob * inst.penalty_cost

    for i in range(1, n + 1):
        terms = dict((index['Y', i, r, w], 1.0) for r in range(inst.n_carriers))
        rhs = float(demand[i - 1])
        if fixed is None:
            terms.update((index['X', i, t], 1.0) for t in range(n_trucks))
        else:
            rhs -= float(fixed[i - 1].sum())
        if terms or rhs > 0:
            problem.add_constraint(terms, Sense.GE, rhs, name='cover_%d_%d' % (i, w))

    for t in range(n_trucks):
        V = lambda u, v: index['V', u, v, t, w]
        for u in range(N):
            problem.add_constraint({V(u, u): 1.0}, Sense.EQ, 0.0, name='loop_%d_%d_%d' % (u, t, w))
        problem.add_constraint(dict((V(u, 0), 1.0) for u in range(N)), Sense.LE, 1.0,
                               name='depot_in_%d_%d' % (t, w))
        problem.add_constraint(dict((V(0, u), 1.0) for u in range(N)), Sense.LE, 1.0,
                               name='depot_out_%d_%d' % (t, w))
        for i in range(1, n + 1):
            for label, arcs in (('in', [V(u, i) for u in range(N)]), ('out', [V(i, u) for u in range(N)])):
                terms = dict((var, 1.0) for var in arcs)
                rhs = 0.0
                if fixed is None:
                    terms[index['X', i, t]] = -float(demand[i - 1])
                else:
                    rhs = float(demand[i - 1] * fixed[i - 1, t])
                problem.add_constraint(terms, Sense.EQ, rhs, name='%s_%d_%d_%d' % (label, i, t, w))
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i == j:
                    continue
                problem.add_constraint(
                    {index['S', i, t, w]: 1.0, index['S', j, t, w]: -1.0, V(i, j): float(n)},
                    Sense.LE, float(n - 1), name='mtz_%d_%d_%d_%d' % (i, j, t, w))
        for s in range(inst.n_samples):
            terms = dict((V(u, v), times[s, u, v]) for u in range(N) for v in range(N) if u != v)
            terms[index['Z', t, s, w]] = -big_m.delta_deadline
            problem.add_constraint(terms, Sense.LE, inst.deadline_minutes,
                                   name='late_%d_%d_%d' % (t, s, w))
    return objective


def build_extensive(inst, big_m=None):
    """
    Build the extensive form: first-stage and every scenario's second-stage
    decisions in one problem. Returns ``(problem, index)``.
    """
    _require_valid(inst)
    big_m = big_m or BigMPolicy.default(inst)
    big_m.check(inst)
    problem = MilpProblem(name='extensive')
    index = VariableIndex(inst, 'extensive', scenarios=range(inst.n_scenarios))
    objective = _add_first_stage(problem, index, inst, big_m)
    for w in range(inst.n_scenarios):
        objective.update(_add_second_stage(problem, index, inst, w, big_m))
    problem.set_objective(objective)
    return problem, index


def build_master(inst, big_m=None, cuts=(), first_iteration=False):
    """
    Build the decomposition master problem over ``X``, ``W`` and, after the
    first iteration, the recourse estimate ``theta`` bounded by ``cuts``.
    """
    _require_valid(inst)
    big_m = big_m or BigMPolicy.default(inst)
    cuts = tuple(cuts)
    if first_iteration and cuts:
        raise ImproperlyConfigured("the first-iteration master carries no theta and takes no cuts")
    problem = MilpProblem(name='master')
    index = VariableIndex(inst, 'master')
    objective = _add_first_stage(problem, index, inst, big_m)
    if not first_iteration:
        theta = index.add(problem, ('theta',), VarKind.CONTINUOUS, 0.0, math.inf)
        objective[theta] = 1.0
        for k, cut in enumerate(cuts):
            terms = dict((index['X', i, t], cut.E[i - 1, t])
                         for i in range(1, inst.n_customers + 1) for t in range(inst.n_trucks))
            terms[theta] = 1.0
            problem.add_constraint(terms, Sense.GE, cut.e, name='cut_%d' % k)
    problem.set_objective(objective)
    return problem, index


def build_subproblem(inst, w, fixed_plan, big_m=None):
    """
    Build the scenario-``w`` subproblem with the first-stage assignment
    ``fixed_plan`` as a parameter.
    """
    big_m = big_m or BigMPolicy.default(inst)
    assigned = np.asarray(fixed_plan.assigned)
    load = inst.weights @ assigned if inst.n_customers else np.zeros(inst.n_trucks)
    for t in range(inst.n_trucks):
        if load[t] > inst.capacities[t] + 1e-9:
            raise Infeasible("fixed plan overloads truck %d" % t)
        if assigned[:, t].any() and not fixed_plan.reserved[t]:
            raise Infeasible("fixed plan uses unreserved truck %d" % t)
    problem = MilpProblem(name='subproblem_%d' % w)
    index = VariableIndex(inst, 'subproblem', scenarios=(w,), fixed_plan=fixed_plan)
    problem.set_objective(_add_second_stage(problem, index, inst, w, big_m, fixed=assigned))
    return problem, index


def _rounded(solution, index, key):
    var = index[key]
    value = float(solution.values[var])
    if not index.is_integer(var):
        return value
    rounded = round(value)
    if abs(value - rounded) > INTEGRALITY_TOL:
        raise NonIntegralValue('_'.join(str(k) for k in key), value)
    return int(rounded)


def decode(solution, index):
    """
    Turn a solver solution into ``(plan, recourse)`` where ``recourse`` is a
    tuple aligned with ``index.scenarios``. Raises ``SubtourDetected`` if a
    decoded truck tour is not a single depot-anchored cycle.
    """
    if not solution.has_solution:
        raise SolverFailure("no solution to decode (status %s)" % solution.status.value)
    inst = index.inst
    n, n_trucks, N = inst.n_customers, inst.n_trucks, inst.n_locations

    if index.fixed_plan is not None:
        plan = index.fixed_plan
    else:
        assigned = np.zeros((n, n_trucks), dtype=int)
        reserved = np.zeros(n_trucks, dtype=int)
        for t in range(n_trucks):
            reserved[t] = _rounded(solution, index, ('W', t))
            for i in range(1, n + 1):
                assigned[i - 1, t] = _rounded(solution, index, ('X', i, t))
        plan = FirstStagePlan(reserved, assigned)

    recourse = []
    for w in index.scenarios:
        Y = np.zeros((n, inst.n_carriers), dtype=int)
        V = np.zeros((N, N, n_trucks), dtype=int)
        S = np.zeros((n, n_trucks), dtype=int)
        Z = np.zeros((n_trucks, inst.n_samples), dtype=int)
        for i in range(1, n + 1):
            for r in range(inst.n_carriers):
                Y[i - 1, r] = _rounded(solution, index, ('Y', i, r, w))
            for t in range(n_trucks):
                S[i - 1, t] = _rounded(solution, index, ('S', i, t, w))
        for t in range(n_trucks):
            for u in range(N):
                for v in range(N):
                    V[u, v, t] = _rounded(solution, index, ('V', u, v, t, w))
            for s in range(inst.n_samples):
                Z[t, s] = _rounded(solution, index, ('Z', t, s, w))
        for t in range(n_trucks):
            routes_from_arcs(V[:, :, t], truck=t)
        recourse.append(ScenarioRecourse(Y, V, S, Z))
    return plan, tuple(recourse)
