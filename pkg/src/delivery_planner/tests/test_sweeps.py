import io
from unittest import TestCase

import pandas as pd

from delivery_planner import sweeps
from delivery_planner.instances import GeneratorSpec, generate, load_instance
from delivery_planner.methods import ExtensiveMethod, LShapedMethod, MethodSite, OracleMethod
from delivery_planner.model import Truck
from delivery_planner.tests.factories import fixture_path, random_instance, single_route_instance


class MispricedMethod(OracleMethod):
    """
    Reports an objective one above what its plan costs.
    """
    def solve_instance(self, inst):
        status, plan, recourse, objective, trace, nodes = super().solve_instance(inst)
        return status, plan, recourse, objective + 1.0, trace, nodes


class RecordingMethod(OracleMethod):
    seen = []

    def solve_instance(self, inst):
        self.seen.append((self.max_nodes, self.time_limit))
        return super().solve_instance(inst)


def free_truck_instance(**kwargs):
    """
    A single-route instance where the truck undercuts the carrier, so the
    tour is driven whatever the deadline.
    """
    return single_route_instance(**kwargs).replace(trucks=[Truck(1060.0, 0.0)])


class SweepDeadlineTest(TestCase):
    def test_penalty_follows_late_samples(self):
        report = sweeps.sweep_deadline(free_truck_instance(), [130.0, 60.0, 100.0])
        frame = report.to_frame()
        self.assertEqual([60.0, 100.0, 130.0], frame['value'].tolist())
        self.assertEqual(['deadline'] * 3, frame['parameter'].tolist())
        self.assertEqual([2.0, 1.0, 0.0], [round(p, 9) for p in frame['penalty_cost']])
        self.assertEqual([1.0, 0.5, 0.0], frame['violation_probability'].tolist())
        for expected, total in zip([11.4, 10.4, 9.4], frame['total']):
            self.assertAlmostEqual(expected, total, places=6)
        self.assertEqual([], report.inconsistent_rows())

    def test_total_never_grows_with_the_deadline(self):
        for seed in range(3):
            inst = random_instance(seed, n_scenarios=2, rate=0.105)
            base = inst.deadline_minutes
            report = sweeps.sweep_deadline(inst, [0.5 * base, base, 2.0 * base], method='oracle')
            totals = report.to_frame()['total'].tolist()
            for shorter, longer in zip(totals, totals[1:]):
                self.assertTrue(longer <= shorter + 1e-9, totals)

    def test_zero_deadline_fails(self):
        with self.assertLogs('delivery_planner.sweeps', level='WARNING'):
            report = sweeps.sweep_deadline(free_truck_instance(), [0.0, 130.0], method='oracle')
        frame = report.to_frame()
        self.assertEqual([True, False], frame['failed'].tolist())
        self.assertTrue(frame['error'].iloc[0].startswith('InvalidInstance: '))
        self.assertEqual([], report.inconsistent_rows())

    def test_late_tours_only_under_tight_deadlines(self):
        inst = single_route_instance(distance_to_customer=40.0)
        report = sweeps.sweep_deadline(inst.replace(trucks=[Truck(1060.0, 0.0)]), [120.0, 500.0])
        self.assertEqual([0.0, 0.0], report.to_frame()['penalty_cost'].tolist())


class SweepPenaltyTest(TestCase):
    def test_carrier_takes_over(self):
        inst = free_truck_instance(deadline=60.0)
        frame = sweeps.sweep_penalty(inst, [20.0, 0.0, 5.0]).to_frame()
        self.assertEqual([0.0, 5.0, 20.0], frame['value'].tolist())
        for expected, total in zip([9.4, 19.4, 21.0], frame['total']):
            self.assertAlmostEqual(expected, total, places=6)
        self.assertEqual([0.0, 21.0], frame['carrier_charges'].tolist()[1:])
        self.assertEqual([1.0, 1.0, 0.0], frame['violation_probability'].tolist())

    def test_violation_probability_never_grows_with_the_penalty(self):
        for seed in range(4):
            inst = random_instance(seed, n_scenarios=2, n_samples=3, rate=0.105)
            frame = sweeps.sweep_penalty(inst, [0.0, 1.0, 5.0, 50.0], method='oracle').to_frame()
            self.assertEqual(0.0, frame['penalty_cost'].iloc[0])
            probabilities = frame['violation_probability'].tolist()
            for cheaper, dearer in zip(probabilities, probabilities[1:]):
                self.assertTrue(dearer <= cheaper + 1e-12, probabilities)


class CompareMethodsTest(TestCase):
    def setUp(self):
        self.inst = load_instance(fixture_path('three_customers.json'))

    def test_agreement(self):
        report = sweeps.compare_methods(self.inst)
        frame = report.to_frame()
        self.assertEqual(3, len(report))
        self.assertEqual(['extensive', 'lshaped', 'oracle'], frame['method'].tolist())
        for total in frame['total']:
            self.assertAlmostEqual(27.175, total, places=6)
        self.assertFalse(frame['failed'].any())
        self.assertEqual([], report.inconsistent_rows())
        self.assertEqual(3, frame.loc[1, 'iterations'])

    def test_failure_row(self):
        inst = self.inst.replace(carriers=[])
        with self.assertLogs('delivery_planner.sweeps', level='WARNING'):
            report = sweeps.compare_methods(inst, methods=('extensive', 'lshaped'))
        frame = report.to_frame()
        failed = frame[frame['failed'].astype(bool)]
        self.assertEqual(['lshaped'], failed['method'].tolist())
        self.assertEqual('failed', failed['status'].iloc[0])
        self.assertTrue(failed['error'].iloc[0].startswith('IncompleteRecourse: '))
        self.assertEqual([], report.inconsistent_rows())

    def test_custom_site(self):
        site = MethodSite()
        site.register('enumerate', OracleMethod)
        frame = sweeps.compare_methods(self.inst, methods=('enumerate', 'missing'), site=site).to_frame()
        self.assertEqual(['enumerate', 'missing'], frame['method'].tolist())
        self.assertEqual([False, True], frame['failed'].tolist())
        self.assertTrue(frame['error'].iloc[1].startswith('NotRegistered: '))

    def test_csv(self):
        report = sweeps.compare_methods(self.inst, methods=('oracle',))
        text = report.to_csv()
        self.assertEqual(','.join(sweeps.COLUMNS), text.splitlines()[0])
        frame = pd.read_csv(io.StringIO(text))
        self.assertEqual(list(sweeps.COLUMNS), list(frame.columns))
        self.assertAlmostEqual(27.175, frame['total'].iloc[0], places=6)

    def test_objective_disagreement_is_flagged(self):
        site = MethodSite()
        site.register('mispriced', MispricedMethod)
        site.register('oracle', OracleMethod)
        with self.assertLogs('delivery_planner.sweeps', level='WARNING'):
            report = sweeps.compare_methods(self.inst, methods=('oracle', 'mispriced'), site=site)
        frame = report.to_frame()
        self.assertEqual(['mispriced', 'oracle'], frame['method'].tolist())
        self.assertEqual([False, True], frame['consistent'].tolist())
        self.assertEqual([0], report.inconsistent_rows())
        self.assertAlmostEqual(28.175, frame['objective'].iloc[0], places=6)

    def test_blind_objective_is_not_flagged(self):
        report = sweeps.compare_methods(self.inst, methods=('odp',))
        frame = report.to_frame()
        self.assertEqual([True], frame['consistent'].tolist())
        self.assertEqual([], report.inconsistent_rows())

    def test_options_reach_every_method(self):
        site = MethodSite()
        site.register('first', RecordingMethod)
        site.register('second', RecordingMethod)
        RecordingMethod.seen = []
        sweeps.compare_methods(self.inst, methods=('first', 'second'), site=site,
                               max_nodes=7, time_limit=2.0)
        self.assertEqual([(7, 2.0), (7, 2.0)], RecordingMethod.seen)


class ScenarioScalingTest(TestCase):
    def test_eight_scenarios(self):
        inst = generate(GeneratorSpec(n_customers=5, n_scenarios=8, seed=11))
        site = MethodSite(time_limit=20.0)
        site.register('extensive', ExtensiveMethod)
        site.register('lshaped', LShapedMethod, max_iterations=8)
        frame = sweeps.compare_methods(inst, methods=('extensive', 'lshaped'), site=site).to_frame()
        lshaped = frame[frame['method'] == 'lshaped'].iloc[0]
        self.assertFalse(lshaped['failed'])
        self.assertTrue(0.0 <= lshaped['wall_time'] < float('inf'))
        self.assertTrue(0.0 <= lshaped['total'] < float('inf'))
        extensive = frame[frame['method'] == 'extensive'].iloc[0]
        if extensive['failed']:
            self.assertTrue(extensive['error'].startswith('BudgetExhausted: '))
        else:
            self.assertTrue(extensive['status'] in ('optimal', 'gap-limit'))
            if extensive['status'] == 'optimal':
                self.assertTrue(extensive['total'] <= lshaped['total'] + 1e-6)
