"""
Instance documents (JSON with optional CSV matrix sidecars) and a seeded
synthetic instance generator.
"""
import itertools
import os
from dataclasses import dataclass, field

import numpy as np
import simplejson

from delivery_planner import serializers
from delivery_planner.exceptions import ImproperlyConfigured, InstanceFileError, InvalidInstance
from delivery_planner.model import Carrier, Customer, Instance, Scenario, Truck, validate_instance

FORMAT = 'delivery-planner-instance'
VERSION = 1
CSV_FORMAT = '%.9g'


def read_matrix_csv(path):
    """
    Read a square matrix from a comma-separated file.
    """
    try:
        matrix = np.loadtxt(path, delimiter=',', ndmin=2)
    except (OSError, ValueError) as e:
        raise InstanceFileError(path, str(e))
    return matrix


def write_matrix_csv(path, matrix):
    np.savetxt(path, np.asarray(matrix, dtype=float), fmt=CSV_FORMAT, delimiter=',')


def _matrix(value, base_dir, location):
    if isinstance(value, dict):
        if 'csv' not in value:
            raise InstanceFileError(location, "matrix reference needs a 'csv' path")
        return read_matrix_csv(os.path.join(base_dir, value['csv']))
    try:
        return np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InstanceFileError(location, "not a numeric matrix")


def _field(document, name, location):
    try:
        return document[name]
    except KeyError:
        raise InstanceFileError(location, "missing field '%s'" % name)
    except TypeError:
        raise InstanceFileError(location, "expected an object")


def instance_from_document(document, base_dir='.', location='<document>'):
    """
    Build an ``Instance`` from a parsed instance document. Does not validate.
    """
    if _field(document, 'format', location) != FORMAT:
        raise InstanceFileError(location, "not a %s document" % FORMAT)
    version = _field(document, 'version', location)
    if version != VERSION:
        raise InstanceFileError(location, "unsupported version %r" % (version,))
    try:
        customers = [Customer(float(c['weight_kg'])) for c in _field(document, 'customers', location)]
        trucks = [Truck(float(t['capacity_kg']), float(t['initial_cost']))
                  for t in _field(document, 'trucks', location)]
        carriers = [Carrier(c['per_customer_charge']) for c in _field(document, 'carriers', location)]
        scenarios = [Scenario(float(s['probability']), [int(d) for d in s['demand']])
                     for s in _field(document, 'scenarios', location)]
    except (KeyError, TypeError, ValueError) as e:
        raise InstanceFileError(location, "malformed entry: %s" % e)
    samples = [_matrix(sample, base_dir, '%s: travel_time_samples[%d]' % (location, s))
               for s, sample in enumerate(_field(document, 'travel_time_samples', location))]
    override = document.get('routing_cost_override')
    if override is not None:
        override = _matrix(override, base_dir, '%s: routing_cost_override' % location)
    return Instance(
        customers=customers,
        trucks=trucks,
        carriers=carriers,
        distance_km=_matrix(_field(document, 'distance_km', location), base_dir,
                            '%s: distance_km' % location),
        travel_time_samples=samples,
        scenarios=scenarios,
        deadline_minutes=float(_field(document, 'deadline_minutes', location)),
        penalty_cost=float(document.get('penalty_cost', 1.0)),
        routing_cost_per_km=float(document.get('routing_cost_per_km', 0.105)),
        routing_cost_override=override,
    )


def load_instance(path):
    """
    Load and validate an instance file.
    """
    try:
        with open(path) as f:
            document = simplejson.load(f)
    except OSError as e:
        raise InstanceFileError(path, e.strerror or str(e))
    except simplejson.JSONDecodeError as e:
        raise InstanceFileError('%s:%d:%d' % (path, e.lineno, e.colno), e.msg)
    inst = instance_from_document(document, os.path.dirname(os.path.abspath(path)), path)
    violations = validate_instance(inst)
    if violations:
        raise InvalidInstance(violations)
    return inst


def instance_document(inst, sidecar_dir=None, prefix='instance'):
    """
    Get the document for ``inst``. With ``sidecar_dir`` the matrices are
    written there as CSV files and referenced by name.
    """
    def matrix(name, value):
        if sidecar_dir is None:
            return np.asarray(value)
        filename = '%s.%s.csv' % (prefix, name)
        write_matrix_csv(os.path.join(sidecar_dir, filename), value)
        return {'csv': filename}

    document = {
        'format': FORMAT,
        'version': VERSION,
        'customers': [{'weight_kg': c.weight_kg} for c in inst.customers],
        'trucks': [{'capacity_kg': t.capacity_kg, 'initial_cost': t.initial_cost} for t in inst.trucks],
        'carriers': [{'per_customer_charge': list(c.per_customer_charge)} for c in inst.carriers],
        'distance_km': matrix('distance', inst.distance_km),
        'travel_time_samples': [matrix('time%d' % s, sample)
                                for s, sample in enumerate(inst.travel_time_samples)],
        'scenarios': [{'probability': s.probability, 'demand': list(s.demand)} for s in inst.scenarios],
        'deadline_minutes': inst.deadline_minutes,
        'penalty_cost': inst.penalty_cost,
        'routing_cost_per_km': inst.routing_cost_per_km,
    }
    if inst.routing_cost_override is not None:
        document['routing_cost_override'] = matrix('routing', inst.routing_cost_override)
    return document


def write_instance(inst, path, sidecars=False):
    """
    Write ``inst`` to ``path``; with ``sidecars`` the matrices go to CSV
    files next to it.
    """
    sidecar_dir = os.path.dirname(os.path.abspath(path)) if sidecars else None
    prefix = os.path.splitext(os.path.basename(path))[0]
    document = instance_document(inst, sidecar_dir, prefix)
    with open(path, 'w') as f:
        f.write(serializers.dumps(document, indent=2) + '\n')


@dataclass(frozen=True)
class Pricing:
    """
    Prices and physical constants used by the generator.
    """
    truck_initial_cost: float = 280.0
    truck_capacity_kg: float = 1060.0
    package_weight_kg: float = 30.0
    carrier_charge: float = 21.0
    routing_cost_per_km: float = 0.105
    penalty_cost: float = 1.0
    deadline_minutes: float = 105.0


@dataclass(frozen=True)
class GeneratorSpec:
    """
    What to generate. Times are in minutes; ``time_noise_std`` defaults to
    ten seconds.
    """
    n_customers: int = 5
    n_trucks: int = 1
    n_carriers: int = 1
    n_scenarios: int = 4
    n_samples: int = 3
    seed: int = 0
    area_km: float = 20.0
    speed_kmh: float = 30.0
    time_noise_std: float = 10.0 / 60.0
    demand_probability: object = 0.5
    base_times: object = None
    pricing: Pricing = field(default_factory=Pricing)

    def __post_init__(self):
        for name in ('n_customers', 'n_trucks', 'n_carriers', 'n_scenarios', 'n_samples'):
            if getattr(self, name) < 0:
                raise ImproperlyConfigured("%s must be nonnegative" % name)
        if self.time_noise_std < 0:
            raise ImproperlyConfigured("time_noise_std must be nonnegative")
        if not self.speed_kmh > 0:
            raise ImproperlyConfigured("speed_kmh must be positive")
        probabilities = np.broadcast_to(np.asarray(self.demand_probability, dtype=float),
                                        (self.n_customers,))
        if ((probabilities < 0) | (probabilities > 1)).any():
            raise ImproperlyConfigured("demand probabilities must lie in [0, 1]")


def _scenarios(spec, rng):
    n = spec.n_customers
    p = np.broadcast_to(np.asarray(spec.demand_probability, dtype=float), (n,))
    if 2 ** n <= spec.n_scenarios:
        scenarios = []
        for demand in itertools.product((0, 1), repeat=n):
            d = np.array(demand)
            probability = float(np.prod(np.where(d == 1, p, 1.0 - p)))
            if probability > 0:
                scenarios.append(Scenario(probability, demand))
        return scenarios
    draws = (rng.random((spec.n_scenarios, n)) < p).astype(int)
    return [Scenario(1.0 / spec.n_scenarios, row.tolist()) for row in draws]


def generate(spec):
    """
    Generate a random instance; identical specs give identical instances.
    """
    rng = np.random.default_rng(spec.seed)
    pricing = spec.pricing
    n = spec.n_customers
    centre = np.full((1, 2), spec.area_km / 2.0)
    points = np.vstack([centre, rng.uniform(0.0, spec.area_km, size=(n, 2))])
    distance = np.linalg.norm(points[:, np.newaxis, :] - points[np.newaxis, :, :], axis=2)

    if spec.base_times is not None:
        base = np.array(spec.base_times, dtype=float)
    else:
        base = distance / spec.speed_kmh * 60.0
    diagonal = np.eye(n + 1, dtype=bool)
    samples = []
    for _ in range(spec.n_samples):
        sample = np.maximum(0.0, base + rng.normal(0.0, spec.time_noise_std, size=base.shape))
        sample[diagonal] = 0.0
        samples.append(sample)

    return Instance(
        customers=[Customer(pricing.package_weight_kg) for _ in range(n)],
        trucks=[Truck(pricing.truck_capacity_kg, pricing.truck_initial_cost) for _ in range(spec.n_trucks)],
        carriers=[Carrier([pricing.carrier_charge] * n) for _ in range(spec.n_carriers)],
        distance_km=distance,
        travel_time_samples=samples,
        scenarios=_scenarios(spec, rng),
        deadline_minutes=pricing.deadline_minutes,
        penalty_cost=pricing.penalty_cost,
        routing_cost_per_km=pricing.routing_cost_per_km,
    )
