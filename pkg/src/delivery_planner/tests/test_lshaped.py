import io
import math
from unittest import TestCase

import numpy as np

from delivery_planner import lshaped, serializers
from delivery_planner.exceptions import IncompleteRecourse
from delivery_planner.instances import load_instance
from delivery_planner.model import (
    Carrier, Route, Scenario, ScenarioRecourse, Truck, check_feasibility, evaluate
)
from delivery_planner.oracle import enumerate_optimal
from delivery_planner.tests.factories import fixture_path, random_instance


def golden():
    return load_instance(fixture_path('three_customers.json'))


def full_tour(inst):
    """
    Scenario-0 recourse of the golden instance: one tour over all three
    customers, late under the slower sample.
    """
    arcs = Route(0, [1, 2, 3]).arcs(4)[:, :, np.newaxis]
    return ScenarioRecourse(np.zeros((3, 1)), arcs, [[1], [2], [3]], [[0, 1]])


class CutComponentsTest(TestCase):
    def test_carrier_only(self):
        inst = golden()
        empty = ScenarioRecourse.empty(inst)
        self.assertEqual(38.0, lshaped.compute_J(0, inst))
        self.assertEqual(25.5, lshaped.compute_J(1, inst))
        self.assertEqual(0.0, lshaped.compute_P(0, empty, inst))
        self.assertEqual(0.0, lshaped.compute_M(0, empty, inst))
        self.assertEqual([[10.5], [12.5], [15.0]], lshaped.compute_I_matrix(0, empty, inst).tolist())
        self.assertEqual(0.0, lshaped.compute_I(2, 0, 1, empty, inst))

    def test_full_tour(self):
        inst = golden()
        rec = full_tour(inst)
        self.assertEqual(0.5, lshaped.compute_P(0, rec, inst))
        self.assertAlmostEqual(0.5 * (2.205 + 2.73), lshaped.compute_M(0, rec, inst), places=12)
        expected = 0.5 * (np.array([21.0, 25.0, 30.0]) - np.array([1.575, 1.155, 2.205]))
        for i in (1, 2, 3):
            self.assertAlmostEqual(expected[i - 1], lshaped.compute_I(i, 0, 0, rec, inst), places=12)

    def test_assemble_cut(self):
        I = [np.array([[1.0], [2.0]]), np.array([[0.5], [0.0]])]
        cut = lshaped.assemble_cut([10.0, 5.0], [1.0, 0.0], [2.0, 1.0], I)
        self.assertEqual([[1.5], [2.0]], cut.E.tolist())
        self.assertEqual(11.0, cut.e)

    def test_no_carrier(self):
        inst = golden().replace(carriers=[])
        self.assertRaises(IncompleteRecourse, lshaped.compute_J, 0, inst)
        self.assertRaises(IncompleteRecourse, lshaped.compute_I_matrix, 0, ScenarioRecourse.empty(inst), inst)


class RunTest(TestCase):
    def test_golden(self):
        inst = golden()
        result = lshaped.run(inst)
        self.assertTrue(result.converged)
        self.assertFalse(result.exhausted)
        self.assertEqual(3, len(result.trace))
        first, second = result.trace[:2]
        self.assertEqual(-math.inf, first.theta_bar)
        self.assertEqual(0, first.N)
        self.assertAlmostEqual(63.5, first.H, places=6)
        self.assertAlmostEqual(63.5, first.B, places=6)
        self.assertEqual(1, second.N)
        self.assertAlmostEqual(0.0, second.B, places=6)
        self.assertAlmostEqual(24.175, second.H, places=6)

        self.assertEqual(1, result.best.k)
        self.assertEqual([[1], [1], [1]], result.best.plan.assigned.tolist())
        self.assertAlmostEqual(27.175, result.best.objective, places=6)
        self.assertAlmostEqual(enumerate_optimal(inst).optimal_total, result.best.objective, places=6)

    def test_zero_demand(self):
        inst = golden().replace(scenarios=[Scenario(1.0, [0, 0, 0])])
        result = lshaped.run(inst)
        self.assertTrue(result.converged)
        self.assertEqual(0, result.best.k)
        self.assertEqual(0.0, result.best.objective)

    def test_trucks_never_pay(self):
        inst = golden().replace(trucks=[Truck(1060.0, 1e6)])
        result = lshaped.run(inst)
        self.assertTrue(result.converged)
        self.assertEqual(0, result.best.plan.assigned.sum())
        self.assertAlmostEqual(lshaped.compute_J(0, inst) + lshaped.compute_J(1, inst),
                               result.best.objective, places=6)

    def test_iteration_cap(self):
        result = lshaped.run(golden(), max_iterations=1)
        self.assertTrue(result.exhausted)
        self.assertFalse(result.converged)
        self.assertEqual(1, len(result.trace))
        self.assertAlmostEqual(63.5, result.best.objective, places=6)

    def test_incomplete_recourse(self):
        self.assertRaises(IncompleteRecourse, lshaped.run, golden().replace(carriers=[]))

    def test_cut_slack_is_the_penalty(self):
        for seed in range(4):
            inst = random_instance(seed, n_scenarios=2, rate=0.105)
            for record in lshaped.run(inst, max_iterations=6).trace:
                penalty = sum(lshaped.compute_P(w, rec, inst) for w, rec in enumerate(record.recourse))
                self.assertAlmostEqual(penalty, record.cut.slack(record.plan.assigned, record.B), places=6)

    def test_records_are_real_plans(self):
        for seed in range(8):
            inst = random_instance(seed, n_scenarios=2, rate=0.105)
            optimum = enumerate_optimal(inst).optimal_total
            result = lshaped.run(inst, max_iterations=10)
            best = result.best
            self.assertEqual([], check_feasibility(best.plan, best.recourse, inst))
            self.assertAlmostEqual(evaluate(best.plan, best.recourse, inst).total, best.objective, places=6)
            self.assertTrue(best.objective >= optimum - 1e-6)

    def test_calibration_band(self):
        within = 0
        for seed in range(700, 730):
            inst = random_instance(seed, n_customers=2 + seed % 3, n_trucks=1 + seed % 2,
                                   n_carriers=1 + (seed // 2) % 2, n_scenarios=1 + seed % 3,
                                   n_samples=1 + (seed // 3) % 3)
            optimum = enumerate_optimal(inst).optimal_total
            best = lshaped.run(inst).best
            self.assertEqual([], check_feasibility(best.plan, best.recourse, inst), seed)
            self.assertTrue(best.objective >= optimum - 1e-6, (seed, optimum, best.objective))
            within += best.objective <= 1.1 * optimum + 1e-6
        self.assertTrue(within >= 27, within)

    def test_extra_carrier_never_hurts_the_first_iteration(self):
        inst = golden()
        cheaper = inst.replace(carriers=list(inst.carriers) + [Carrier([20.0, 20.0, 20.0])])
        self.assertTrue(lshaped.run(cheaper, max_iterations=1).best.H < lshaped.run(inst, max_iterations=1).best.H)


class WriteTraceTest(TestCase):
    def test_json_lines(self):
        result = lshaped.run(golden())
        stream = io.StringIO()
        lshaped.write_trace(result.trace, stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(3, len(lines))
        first = serializers.loads(lines[0])
        self.assertEqual(None, first['theta_bar'])
        self.assertEqual(0, first['k'])
        self.assertEqual(['B', 'H', 'N', 'k', 'theta_bar', 'wall_time'], sorted(first))
        self.assertEqual(1, serializers.loads(lines[1])['N'])
