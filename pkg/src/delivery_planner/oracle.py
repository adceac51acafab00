"""
Brute-force ground truth for tiny instances.

Every first-stage assignment is enumerated; per scenario each truck gets its
best tour over the demanding customers it was assigned (routing cost plus
lateness penalty, jointly) and every uncovered demanding customer goes to
its cheapest carrier.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from delivery_planner.exceptions import BudgetExceeded, Infeasible, InvalidInstance
from delivery_planner.model import (
    NONZERO_TOL, FirstStagePlan, Route, ScenarioRecourse, cardinality, evaluate, validate_instance
)

logger = logging.getLogger(__name__)

MAX_CUSTOMERS = 6
MAX_TRUCKS = 2
MAX_SCENARIOS = 4
MAX_SAMPLES = 4
HELD_KARP_LIMIT = 12


@dataclass(frozen=True, eq=False)
class OracleResult:
    optimal_total: float
    plan: FirstStagePlan
    recourse: tuple
    enumeration_count: int
    breakdown: object = None


def held_karp(customers, cost_matrix):
    """
    Cheapest depot-anchored tour over ``customers`` (location indices) under
    ``cost_matrix``. Returns ``(cost, visit_sequence)``.
    """
    nodes = sorted(int(c) for c in customers)
    k = len(nodes)
    if k > HELD_KARP_LIMIT:
        raise BudgetExceeded("tour over %d customers exceeds the limit of %d" % (k, HELD_KARP_LIMIT))
    if not k:
        return 0.0, ()
    cost = np.asarray(cost_matrix, dtype=float)
    full = (1 << k) - 1
    best = {}
    for j in range(k):
        best[1 << j, j] = (cost[0, nodes[j]], None)
    for mask in range(1, full + 1):
        for last in range(k):
            entry = best.get((mask, last))
            if entry is None:
                continue
            for nxt in range(k):
                if mask & (1 << nxt):
                    continue
                key = (mask | (1 << nxt), nxt)
                value = entry[0] + cost[nodes[last], nodes[nxt]]
                if key not in best or value < best[key][0]:
                    best[key] = (value, last)

    end = min(range(k), key=lambda j: best[full, j][0] + cost[nodes[j], 0])
    total = best[full, end][0] + cost[nodes[end], 0]
    sequence = []
    mask, j = full, end
    while j is not None:
        sequence.append(nodes[j])
        previous = best[mask, j][1]
        mask ^= 1 << j
        j = previous
    return float(total), tuple(reversed(sequence))


def min_tour_cost(customers, cost_matrix):
    """
    Cost of the cheapest depot-anchored tour over ``customers``.
    """
    return held_karp(customers, cost_matrix)[0]


def _route_times(sequence, inst):
    stops = (0,) + tuple(sequence) + (0,)
    return inst.travel_times[:, stops[:-1], stops[1:]].sum(axis=1)


def _late_count(sequence, inst):
    return cardinality(np.maximum(0.0, _route_times(sequence, inst) - inst.deadline_minutes))


class _TourBook(object):
    """
    Best tour (routing plus lateness penalty) per customer set, memoized.
    """
    def __init__(self, inst):
        self.inst = inst
        self._cache = {}

    def __call__(self, customers):
        key = frozenset(customers)
        if key not in self._cache:
            self._cache[key] = self._best(key)
        return self._cache[key]

    def _best(self, customers):
        inst = self.inst
        routing = inst.routing_cost
        if not customers:
            return 0.0, ()
        if inst.penalty_cost == 0:
            return held_karp(customers, routing)
        best_value, best_sequence = np.inf, ()
        for sequence in itertools.permutations(sorted(customers)):
            stops = (0,) + sequence + (0,)
            value = float(routing[stops[:-1], stops[1:]].sum())
            value += inst.penalty_cost * _late_count(sequence, inst)
            if value < best_value:
                best_value, best_sequence = value, sequence
        return best_value, best_sequence


def _check_budget(inst):
    limits = (
        ('customers', inst.n_customers, MAX_CUSTOMERS),
        ('trucks', inst.n_trucks, MAX_TRUCKS),
        ('scenarios', inst.n_scenarios, MAX_SCENARIOS),
        ('travel-time samples', inst.n_samples, MAX_SAMPLES),
    )
    for label, count, limit in limits:
        if count > limit:
            raise BudgetExceeded("%d %s exceeds the oracle limit of %d" % (count, label, limit))


def _recourse(plan, w, inst, tours):
    n, n_trucks = inst.n_customers, inst.n_trucks
    demand = inst.demand[w]
    Y = np.zeros((n, inst.n_carriers), dtype=int)
    V = np.zeros((n + 1, n + 1, n_trucks), dtype=int)
    S = np.zeros((n, n_trucks), dtype=int)
    Z = np.zeros((n_trucks, inst.n_samples), dtype=int)
    covered = plan.assigned.any(axis=1)
    for i in range(n):
        if demand[i] and not covered[i]:
            Y[i, int(np.argmin(inst.carrier_charges[i]))] = 1
    for t in range(n_trucks):
        members = [i + 1 for i in range(n) if plan.assigned[i, t] and demand[i]]
        _, sequence = tours(members)
        V[:, :, t] = Route(t, sequence).arcs(n + 1)
        for position, location in enumerate(sequence, 1):
            S[location - 1, t] = position
        if sequence:
            late = _route_times(sequence, inst) - inst.deadline_minutes
            Z[t] = late > NONZERO_TOL
    return ScenarioRecourse(Y, V, S, Z)


def enumerate_optimal(inst):
    """
    Find the optimal plan of ``inst`` by exhaustive enumeration. Ties keep
    the lexicographically first assignment.
    """
    violations = validate_instance(inst)
    if violations:
        raise InvalidInstance(violations)
    _check_budget(inst)

    n, n_trucks = inst.n_customers, inst.n_trucks
    tours = _TourBook(inst)
    has_carrier = inst.n_carriers > 0
    cheapest = inst.cheapest_charges if has_carrier else np.zeros(n)
    demanding = [set(np.flatnonzero(row) + 1) for row in inst.demand]

    best_value, best_assigned = np.inf, None
    count = 0
    for bits in itertools.product((0, 1), repeat=n * n_trucks):
        assigned = np.array(bits, dtype=int).reshape(n, n_trucks)
        if (inst.weights @ assigned > inst.capacities + 1e-9).any():
            continue
        count += 1
        reserved = assigned.any(axis=0)
        value = float(assigned.sum()) + float(inst.initial_costs @ reserved)
        covered = set(np.flatnonzero(assigned.any(axis=1)) + 1)
        feasible = True
        for w in range(inst.n_scenarios):
            uncovered = demanding[w] - covered
            if uncovered and not has_carrier:
                feasible = False
                break
            scenario = sum(cheapest[i - 1] for i in uncovered)
            for t in range(n_trucks):
                members = [i for i in demanding[w] if assigned[i - 1, t]]
                scenario += tours(members)[0]
            value += inst.probabilities[w] * scenario
        if feasible and value < best_value - 1e-12:
            best_value, best_assigned = value, assigned

    if best_assigned is None:
        raise Infeasible("no plan covers every demanding customer")
    plan = FirstStagePlan(best_assigned.any(axis=0).astype(int), best_assigned)
    recourse = tuple(_recourse(plan, w, inst, tours) for w in range(inst.n_scenarios))
    breakdown = evaluate(plan, recourse, inst)
    logger.debug("oracle enumerated %d plans, optimum %.6f", count, breakdown.total)
    return OracleResult(breakdown.total, plan, recourse, count, breakdown)
