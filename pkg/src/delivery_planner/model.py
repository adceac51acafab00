"""
Domain types for stochastic package delivery planning, and the reference
semantics every solver is checked against: instance validation, route
timing, deadline violation counting, cost evaluation and feasibility checks.

Locations are indices ``0..n'``; the depot is location 0 and customer ``i``
lives at location ``i``. Arrays indexed by customer (weights, demand rows,
the rows of ``assigned``) are 0-based, so customer ``i`` sits at row ``i - 1``.
"""
import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from delivery_planner.exceptions import BrokenPath, MissingRecourse, SubtourDetected

NONZERO_TOL = 1e-9
PROBABILITY_TOL = 1e-9


def _frozen(values, dtype=float):
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Customer:
    weight_kg: float


@dataclass(frozen=True)
class Truck:
    capacity_kg: float
    initial_cost: float


@dataclass(frozen=True)
class Carrier:
    per_customer_charge: tuple

    def __post_init__(self):
        object.__setattr__(self, 'per_customer_charge', tuple(float(c) for c in self.per_customer_charge))


@dataclass(frozen=True)
class Scenario:
    probability: float
    demand: tuple

    def __post_init__(self):
        object.__setattr__(self, 'demand', tuple(self.demand))


@dataclass(frozen=True, eq=False)
class Instance:
    """
    Full problem data: customers, trucks, carriers, prices, the distance
    matrix, travel-time samples, demand scenarios and the delivery deadline.

    ``penalty_cost`` is charged once per violating travel-time sample, the
    ``1/s'`` denominator of the violation probability being folded into it.
    ``routing_cost_override`` replaces ``routing_cost_per_km * distance_km``
    when given.
    """
    customers: tuple
    trucks: tuple
    carriers: tuple
    distance_km: np.ndarray
    travel_time_samples: tuple
    scenarios: tuple
    deadline_minutes: float
    penalty_cost: float = 1.0
    routing_cost_per_km: float = 0.105
    routing_cost_override: np.ndarray = None
    depot_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'customers', tuple(self.customers))
        object.__setattr__(self, 'trucks', tuple(self.trucks))
        object.__setattr__(self, 'carriers', tuple(self.carriers))
        object.__setattr__(self, 'scenarios', tuple(self.scenarios))
        object.__setattr__(self, 'distance_km', _frozen(self.distance_km))
        object.__setattr__(self, 'travel_time_samples',
                           tuple(_frozen(sample) for sample in self.travel_time_samples))
        if self.routing_cost_override is not None:
            object.__setattr__(self, 'routing_cost_override', _frozen(self.routing_cost_override))

    @property
    def n_customers(self):
        return len(self.customers)

    @property
    def n_locations(self):
        return len(self.customers) + 1

    @property
    def n_trucks(self):
        return len(self.trucks)

    @property
    def n_carriers(self):
        return len(self.carriers)

    @property
    def n_scenarios(self):
        return len(self.scenarios)

    @property
    def n_samples(self):
        return len(self.travel_time_samples)

    @cached_property
    def weights(self):
        return _frozen([c.weight_kg for c in self.customers])

    @cached_property
    def capacities(self):
        return _frozen([t.capacity_kg for t in self.trucks])

    @cached_property
    def initial_costs(self):
        return _frozen([t.initial_cost for t in self.trucks])

    @cached_property
    def carrier_charges(self):
        """
        Service charges as an ``n' x r'`` matrix.
        """
        charges = np.zeros((self.n_customers, self.n_carriers))
        for r, carrier in enumerate(self.carriers):
            charges[:, r] = carrier.per_customer_charge
        charges.setflags(write=False)
        return charges

    @cached_property
    def cheapest_charges(self):
        """
        Per-customer minimum carrier charge; requires at least one carrier.
        """
        return _frozen(self.carrier_charges.min(axis=1))

    @cached_property
    def demand(self):
        return _frozen([s.demand for s in self.scenarios], dtype=int).reshape(
            self.n_scenarios, self.n_customers)

    @cached_property
    def probabilities(self):
        return _frozen([s.probability for s in self.scenarios])

    @cached_property
    def travel_times(self):
        """
        Samples stacked into an ``s' x (n'+1) x (n'+1)`` array with the
        diagonal zeroed; self-loops never carry a vehicle.
        """
        times = np.array(self.travel_time_samples, dtype=float).reshape(
            self.n_samples, self.n_locations, self.n_locations)
        idx = np.arange(self.n_locations)
        times[:, idx, idx] = 0.0
        times.setflags(write=False)
        return times

    @cached_property
    def routing_cost(self):
        if self.routing_cost_override is not None:
            return self.routing_cost_override
        return _frozen(self.routing_cost_per_km * self.distance_km)

    def replace(self, **changes):
        """
        Get a copy of this instance with some fields replaced.
        """
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class FirstStagePlan:
    """
    Truck reservations ``W_t`` and customer-to-truck assignments ``X_{i,t}``.
    """
    reserved: np.ndarray
    assigned: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'reserved', _frozen(self.reserved, dtype=int))
        assigned = np.array(self.assigned, dtype=int)
        if assigned.ndim != 2:
            assigned = assigned.reshape(-1, self.reserved.shape[0])
        assigned.setflags(write=False)
        object.__setattr__(self, 'assigned', assigned)

    @classmethod
    def empty(cls, n_customers, n_trucks):
        return cls(np.zeros(n_trucks, dtype=int), np.zeros((n_customers, n_trucks), dtype=int))

    def __eq__(self, other):
        if not isinstance(other, FirstStagePlan):
            return NotImplemented
        return (np.array_equal(self.reserved, other.reserved)
                and np.array_equal(self.assigned, other.assigned))

    __hash__ = None


@dataclass(frozen=True)
class Route:
    """
    A truck tour; the depot at either end is implicit.
    """
    truck: int
    visit_sequence: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'visit_sequence', tuple(int(v) for v in self.visit_sequence))

    def locations(self):
        """
        Get the full location sequence, depot included at both ends.
        """
        if not self.visit_sequence:
            return ()
        return (0,) + self.visit_sequence + (0,)

    def arcs(self, n_locations):
        """
        Get the ``(n'+1) x (n'+1)`` arc indicator matrix of this tour.
        """
        matrix = np.zeros((n_locations, n_locations), dtype=int)
        stops = self.locations()
        for u, v in zip(stops, stops[1:]):
            matrix[u, v] = 1
        return matrix


@dataclass(frozen=True, eq=False)
class ScenarioRecourse:
    """
    Second-stage decisions for one demand scenario: carrier assignments
    ``Y``, arcs ``V`` (indexed ``[u, v, t]``), MTZ orders ``S`` and late
    flags ``Z`` (indexed ``[t, s]``).
    """
    carrier_assign: np.ndarray
    arcs: np.ndarray
    order: np.ndarray
    late_flags: np.ndarray

    def __post_init__(self):
        for name in ('carrier_assign', 'arcs', 'order', 'late_flags'):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=int))

    @classmethod
    def empty(cls, inst):
        n, t = inst.n_customers, inst.n_trucks
        return cls(
            np.zeros((n, inst.n_carriers), dtype=int),
            np.zeros((n + 1, n + 1, t), dtype=int),
            np.zeros((n, t), dtype=int),
            np.zeros((t, inst.n_samples), dtype=int),
        )

    @cached_property
    def routes(self):
        """
        Tours extracted from the arc tensor, one per truck.
        """
        return tuple(routes_from_arcs(self.arcs[:, :, t], truck=t) for t in range(self.arcs.shape[2]))


@dataclass(frozen=True)
class PaymentBreakdown:
    """
    The five terms of the objective, itemized.
    """
    assignment_term: float = 0.0
    truck_initial: float = 0.0
    carrier_charges: float = 0.0
    routing_cost: float = 0.0
    penalty_cost: float = 0.0
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'total', self.assignment_term + self.truck_initial
                           + self.carrier_charges + self.routing_cost + self.penalty_cost)

    def as_dict(self):
        return dataclasses.asdict(self)


def validate_instance(inst):
    """
    Return every violated structural invariant of ``inst``; an empty list
    means the instance is valid. Never raises.
    """
    violations = []
    n = inst.n_customers
    size = (n + 1, n + 1)

    if inst.depot_index != 0:
        violations.append("depot_index is %r, expected 0" % (inst.depot_index,))

    def check_matrix(label, matrix):
        if matrix.shape != size:
            violations.append("%s has shape %s, expected %s" % (label, matrix.shape, size))
            return
        if not np.all(np.isfinite(matrix)):
            violations.append("%s has non-finite entries" % label)
        elif (matrix < 0).any():
            violations.append("%s has negative entries" % label)

    check_matrix("distance_km", inst.distance_km)
    if inst.routing_cost_override is not None:
        check_matrix("routing_cost_override", inst.routing_cost_override)
    if not inst.travel_time_samples:
        violations.append("at least one travel-time sample is required")
    for s, sample in enumerate(inst.travel_time_samples):
        check_matrix("travel_time_samples[%d]" % s, sample)

    for i, customer in enumerate(inst.customers, 1):
        if not customer.weight_kg >= 0:
            violations.append("customer %d has negative weight %r" % (i, customer.weight_kg))
    for t, truck in enumerate(inst.trucks):
        if not truck.capacity_kg > 0:
            violations.append("truck %d capacity must be positive, got %r" % (t, truck.capacity_kg))
        if not truck.initial_cost >= 0:
            violations.append("truck %d has negative initial cost %r" % (t, truck.initial_cost))
    for r, carrier in enumerate(inst.carriers):
        if len(carrier.per_customer_charge) != n:
            violations.append("carrier %d lists %d charges, expected %d"
                              % (r, len(carrier.per_customer_charge), n))
        if any(not c >= 0 for c in carrier.per_customer_charge):
            violations.append("carrier %d has negative charges" % r)

    if not inst.scenarios:
        violations.append("at least one demand scenario is required")
    total = 0.0
    for w, scenario in enumerate(inst.scenarios):
        p = scenario.probability
        if not 0 <= p <= 1:
            violations.append("scenario %d probability %r outside [0, 1]" % (w, p))
        total += p
        if len(scenario.demand) != n:
            violations.append("scenario %d lists %d demands, expected %d" % (w, len(scenario.demand), n))
        if any(d not in (0, 1) for d in scenario.demand):
            violations.append("scenario %d has non-binary demand" % w)
    if inst.scenarios and abs(total - 1.0) > PROBABILITY_TOL:
        violations.append("scenario probabilities sum to %.12g" % total)

    if not inst.deadline_minutes > 0:
        violations.append("deadline_minutes must be positive, got %r" % (inst.deadline_minutes,))
    if not inst.penalty_cost >= 0:
        violations.append("penalty_cost is negative")
    if not inst.routing_cost_per_km >= 0:
        violations.append("routing_cost_per_km is negative")
    return violations


def route_time(route, sample_index, inst):
    """
    Travel time of ``route`` under travel-time sample ``sample_index``.
    """
    if not 0 <= sample_index < inst.n_samples:
        raise IndexError("sample index %d out of range for %d samples" % (sample_index, inst.n_samples))
    sample = inst.travel_time_samples[sample_index]
    stops = route.locations()
    return float(sum(sample[u, v] for u, v in zip(stops, stops[1:])))


def exceeding_time(route, sample_index, inst):
    """
    Minutes by which ``route`` overruns the deadline under one sample.
    """
    return max(0.0, route_time(route, sample_index, inst) - inst.deadline_minutes)


def cardinality(values):
    """
    Count the entries of ``values`` that are nonzero.
    """
    values = np.asarray(values, dtype=float)
    return int(np.count_nonzero(np.abs(values) > NONZERO_TOL))


def violation_probability(route, inst):
    """
    Fraction of travel-time samples under which ``route`` misses the deadline.
    """
    exceeding = [exceeding_time(route, s, inst) for s in range(inst.n_samples)]
    return cardinality(exceeding) / inst.n_samples


def arc_times(arcs, inst):
    """
    Travel time of the arc set ``arcs`` (one truck) under every sample.
    """
    return np.einsum('suv,uv->s', inst.travel_times, np.asarray(arcs, dtype=float))


def late_counts(recourse, inst):
    """
    Per-truck number of samples whose route time exceeds the deadline.
    """
    counts = np.zeros(recourse.arcs.shape[2], dtype=int)
    for t in range(recourse.arcs.shape[2]):
        exceeding = np.maximum(0.0, arc_times(recourse.arcs[:, :, t], inst) - inst.deadline_minutes)
        counts[t] = cardinality(exceeding)
    return counts


def violation_probabilities(recourse, inst):
    """
    Per-truck deadline violation probability in one scenario.
    """
    return late_counts(recourse, inst) / inst.n_samples


def routes_from_arcs(arcs, truck=0):
    """
    Extract the depot-anchored tour encoded by the binary arc matrix ``arcs``.
    """
    binary = np.abs(np.asarray(arcs, dtype=float)) > 0.5
    loops = np.flatnonzero(binary.diagonal())
    if loops.size:
        raise BrokenPath("self-loop at location %d" % loops[0])
    out_degree = binary.sum(axis=1)
    in_degree = binary.sum(axis=0)
    for u in range(binary.shape[0]):
        if out_degree[u] != in_degree[u] or out_degree[u] > 1:
            raise BrokenPath("location %d has in-degree %d and out-degree %d"
                             % (u, in_degree[u], out_degree[u]))

    successor = dict((int(u), int(v)) for u, v in np.argwhere(binary))
    visits = []
    node = successor.get(0, 0)
    while node != 0:
        visits.append(node)
        node = successor[node]

    stray = sorted(set(successor) - set(visits) - {0})
    if stray:
        cycle = [stray[0]]
        node = successor[stray[0]]
        while node != stray[0]:
            cycle.append(node)
            node = successor[node]
        raise SubtourDetected(cycle)
    return Route(truck, visits)


def _recourse_list(recourse, inst):
    recourse = list(recourse) if recourse is not None else []
    if len(recourse) != inst.n_scenarios:
        raise MissingRecourse("recourse is required for each of the %d scenarios, got %d"
                              % (inst.n_scenarios, len(recourse)))
    for w, rec in enumerate(recourse):
        if rec is None:
            raise MissingRecourse("scenario %d has no recourse" % w)
    return recourse


def evaluate(plan, recourse, inst, scenario_indices=None):
    """
    Compute the payment breakdown of a plan with its per-scenario recourse.

    With ``scenario_indices`` the second-stage terms are restricted to those
    scenarios, their probabilities kept as they are.
    """
    recourse = _recourse_list(recourse, inst)
    if scenario_indices is None:
        scenario_indices = range(inst.n_scenarios)

    carrier = routing = penalty = 0.0
    for w in scenario_indices:
        rec = recourse[w]
        prob = inst.probabilities[w]
        carrier += prob * float((inst.carrier_charges * rec.carrier_assign).sum())
        routing += prob * float(np.einsum('uv,uvt->', inst.routing_cost, rec.arcs))
        penalty += prob * inst.penalty_cost * float(late_counts(rec, inst).sum())

    return PaymentBreakdown(
        assignment_term=float(plan.assigned.sum()),
        truck_initial=float(inst.initial_costs @ plan.reserved),
        carrier_charges=carrier,
        routing_cost=routing,
        penalty_cost=penalty,
    )


def _is_binary(values):
    return np.isin(values, (0, 1))


def check_feasibility(plan, recourse, inst):
    """
    Check a candidate solution against every constraint family and return
    the identifiers of the violated constraints; empty means feasible.
    """
    violations = []
    n, n_trucks = inst.n_customers, inst.n_trucks
    X = np.asarray(plan.assigned)
    W = np.asarray(plan.reserved)

    for i, t in np.argwhere(~_is_binary(X)):
        violations.append("(12) X i=%d, t=%d" % (i + 1, t))
    for t in np.flatnonzero(~_is_binary(W)):
        violations.append("(12) W t=%d" % t)
    load = inst.weights @ X if n else np.zeros(n_trucks)
    for t in range(n_trucks):
        if load[t] > inst.capacities[t] + NONZERO_TOL:
            violations.append("(4) t=%d" % t)
        if X[:, t].any() and W[t] != 1:
            violations.append("(5) t=%d" % t)

    recourse = list(recourse) if recourse is not None else []
    for w in range(inst.n_scenarios):
        if w >= len(recourse) or recourse[w] is None:
            violations.append("missing recourse ω=%d" % w)
            continue
        rec = recourse[w]
        D = inst.demand[w]
        Y, V, S, Z = rec.carrier_assign, rec.arcs, rec.order, rec.late_flags

        for i, r in np.argwhere(~_is_binary(Y)):
            violations.append("(13) Y i=%d, r=%d, ω=%d" % (i + 1, r, w))
        for u, v, t in np.argwhere(~_is_binary(V)):
            violations.append("(13) V u=%d, v=%d, t=%d, ω=%d" % (u, v, t, w))
        for i, t in np.argwhere((S < 0) | (S > n)):
            violations.append("(14) S i=%d, t=%d, ω=%d" % (i + 1, t, w))
        for t, s in np.argwhere(~_is_binary(Z)):
            violations.append("(19) Z t=%d, s=%d, ω=%d" % (t, s, w))

        covered = X.sum(axis=1) + Y.sum(axis=1)
        for i in np.flatnonzero(covered < D):
            violations.append("(3) i=%d, ω=%d" % (i + 1, w))

        for t in range(n_trucks):
            arcs = V[:, :, t]
            for u in np.flatnonzero(arcs.diagonal()):
                violations.append("(6) u=%d, t=%d, ω=%d" % (u, t, w))
            if arcs[:, 0].sum() > 1:
                violations.append("(7) t=%d, ω=%d" % (t, w))
            if arcs[0, :].sum() > 1:
                violations.append("(8) t=%d, ω=%d" % (t, w))
            required = X[:, t] * D
            for i in range(1, n + 1):
                if arcs[:, i].sum() != required[i - 1]:
                    violations.append("(9) i=%d, t=%d, ω=%d" % (i, t, w))
                if arcs[i, :].sum() != required[i - 1]:
                    violations.append("(10) i=%d, t=%d, ω=%d" % (i, t, w))
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    if i != j and S[i - 1, t] - S[j - 1, t] + n * arcs[i, j] > n - 1:
                        violations.append("(11) i=%d, j=%d, t=%d, ω=%d" % (i, j, t, w))
            times = arc_times(arcs, inst)
            for s in range(inst.n_samples):
                if times[s] > inst.deadline_minutes + NONZERO_TOL and Z[t, s] == 0:
                    violations.append("(18) t=%d, s=%d, ω=%d" % (t, s, w))
    return violations
