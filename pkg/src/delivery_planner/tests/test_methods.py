import dataclasses
from unittest import TestCase

import numpy as np

from delivery_planner.exceptions import (
    AlreadyRegistered, BudgetExhausted, IncompleteRecourse, Infeasible, NotRegistered, SolverFailure
)
from delivery_planner.formulation import BigMPolicy
from delivery_planner.instances import load_instance
from delivery_planner.methods import (
    BaseMethod, DeadlineBlindMethod, ExtensiveMethod, LShapedMethod, MethodSite, OracleMethod,
    SolveResult, site
)
from delivery_planner.milp import BranchAndBound, MilpSolution, Status
from delivery_planner.tests.factories import fixture_path, make_instance
from delivery_planner.tests.test_oracle import regime_shift_instance


def golden():
    return load_instance(fixture_path('three_customers.json'))


class StubSolver(object):
    """
    Wraps a real solver and reports a different status.
    """
    def __init__(self, status, keep_values=False):
        self.status = status
        self.keep_values = keep_values

    def solve(self, problem):
        if not self.keep_values:
            return MilpSolution(self.status)
        return dataclasses.replace(BranchAndBound().solve(problem), status=self.status)


def stubbed(status, keep_values=False):
    class StubbedMethod(ExtensiveMethod):
        def get_solver(self):
            return StubSolver(status, keep_values)
    return StubbedMethod()


class BaseMethodTest(TestCase):
    def test_init_no_kwargs(self):
        method = BaseMethod()
        self.assertEqual(1e-6, method.gap_tol)
        self.assertEqual(200000, method.max_nodes)
        self.assertEqual(None, method.time_limit)
        self.assertEqual(None, method.big_m)

    def test_init_declarative(self):
        class LooseMethod(ExtensiveMethod):
            gap_tol = 0.5
        self.assertEqual(0.5, LooseMethod().gap_tol)
        self.assertEqual(0.5, LooseMethod().get_solver().gap_tol)
        self.assertEqual(0.1, LooseMethod(gap_tol=0.1).get_solver().gap_tol)

    def test_unknown_option(self):
        self.assertRaises(TypeError, ExtensiveMethod, epsilon=0.1)
        self.assertEqual(0.1, LShapedMethod(epsilon=0.1).epsilon)

    def test_get_big_m(self):
        inst = golden()
        self.assertEqual(BigMPolicy.default(inst), BaseMethod().get_big_m(inst))
        big_m = BigMPolicy(10.0, 1000.0)
        self.assertEqual(big_m, BaseMethod(big_m=big_m).get_big_m(inst))

    def test_solve_instance(self):
        self.assertRaises(NotImplementedError, BaseMethod().solve_instance, golden())
        self.assertEqual(True, BaseMethod().is_applicable(golden()))

    def test_as_solver(self):
        method = ExtensiveMethod()
        self.assertRaises(AttributeError, getattr, method, 'as_solver')
        solver = OracleMethod.as_solver()
        self.assertEqual('OracleMethod', solver.__name__)
        result = solver(golden())
        self.assertTrue(isinstance(result, SolveResult))
        self.assertEqual('oracle', result.method)


class ExtensiveMethodTest(TestCase):
    def test_golden(self):
        result = ExtensiveMethod()(golden())
        self.assertEqual('extensive', result.method)
        self.assertEqual('optimal', result.status)
        self.assertAlmostEqual(27.175, result.total, places=6)
        self.assertAlmostEqual(27.175, result.objective, places=6)
        self.assertEqual([[0.5], [0.0]], result.violation_probabilities.tolist())
        self.assertAlmostEqual(0.25, result.violation_probability, places=12)
        self.assertTrue(result.nodes >= 1)

    def test_solver_statuses(self):
        inst = golden()
        self.assertRaises(Infeasible, stubbed(Status.INFEASIBLE), inst)
        self.assertRaises(BudgetExhausted, stubbed(Status.ITER_LIMIT), inst)
        self.assertRaises(SolverFailure, stubbed(Status.UNBOUNDED), inst)
        result = stubbed(Status.GAP_LIMIT, keep_values=True)(inst)
        self.assertEqual('gap-limit', result.status)
        self.assertAlmostEqual(27.175, result.total, places=6)

    def test_infeasible_instance(self):
        inst = make_instance([[0.0, 1.0], [1.0, 0.0]], [[[0.0, 1.0], [1.0, 0.0]]], [(1.0, [1])],
                             weights=[2000.0], charges=[])
        self.assertRaises(Infeasible, ExtensiveMethod(), inst)


class DeadlineBlindMethodTest(TestCase):
    def test_penalty_reported(self):
        inst = regime_shift_instance(penalty=50.0)
        result = DeadlineBlindMethod()(inst)
        self.assertEqual('odp', result.method)
        self.assertEqual([[1], [1]], result.plan.assigned.tolist())
        self.assertEqual([[1, 1]], result.recourse[0].late_flags.tolist())
        self.assertAlmostEqual(100.0, result.breakdown.penalty_cost, places=9)
        self.assertAlmostEqual(2.0 + 5.0 + 0.105 * 62.5, result.objective, places=6)
        self.assertAlmostEqual(result.objective + 100.0, result.total, places=6)
        self.assertEqual(1.0, result.violation_probability)
        self.assertTrue(ExtensiveMethod()(inst).total < result.total)

    def test_same_as_extensive_without_deadline_pressure(self):
        inst = regime_shift_instance(penalty=0.0)
        self.assertAlmostEqual(ExtensiveMethod()(inst).total, DeadlineBlindMethod()(inst).total, places=6)


class LShapedMethodTest(TestCase):
    def test_golden(self):
        result = LShapedMethod()(golden())
        self.assertEqual('lshaped', result.method)
        self.assertEqual('converged', result.status)
        self.assertEqual(3, len(result.trace))
        self.assertAlmostEqual(27.175, result.total, places=6)
        self.assertAlmostEqual(result.total, result.objective, places=6)

    def test_iteration_limit(self):
        result = LShapedMethod(max_iterations=1)(golden())
        self.assertEqual('iteration-limit', result.status)
        self.assertAlmostEqual(63.5, result.total, places=6)

    def test_incomplete_recourse(self):
        self.assertRaises(IncompleteRecourse, LShapedMethod(), golden().replace(carriers=[]))

    def test_config(self):
        config = LShapedMethod(epsilon=0.5, max_iterations=4, gap_tol=0.01).get_lshaped_config()
        self.assertEqual((0.5, 4), (config.epsilon, config.max_iterations))
        self.assertEqual(0.01, config.get_solver().gap_tol)


class OracleMethodTest(TestCase):
    def test_golden(self):
        result = OracleMethod()(golden())
        self.assertEqual('optimal', result.status)
        self.assertEqual(8, result.nodes)
        self.assertEqual(result.objective, result.total)
        self.assertTrue(np.array_equal([[1], [1], [1]], result.plan.assigned))


class MethodSiteTest(TestCase):
    def test_register(self):
        site = MethodSite()
        site.register('fast', LShapedMethod, max_iterations=5)
        self.assertTrue('fast' in site)
        self.assertEqual('LShapedMethod', site._registry['fast'][0].__name__)
        self.assertEqual({'max_iterations': 5}, site._registry['fast'][1])
        self.assertRaises(AlreadyRegistered, site.register, 'fast', LShapedMethod)
        site.register('plain')
        self.assertEqual('ExtensiveMethod', site._registry['plain'][0].__name__)
        self.assertEqual(['fast', 'plain'], site.keys())

    def test_unregister(self):
        site = MethodSite()
        site.register('oracle', OracleMethod)
        self.assertEqual(1, len(site._registry))
        site.unregister('oracle')
        self.assertEqual(0, len(site._registry))
        self.assertRaises(NotRegistered, site.unregister, 'oracle')

    def test_unregistered_dispatch(self):
        site = MethodSite()
        self.assertRaises(NotRegistered, site, golden(), 'oracle')
        self.assertRaises(NotRegistered, site.get_method, 'oracle')

    def test_dispatch(self):
        site = MethodSite()
        site.register('enumerate', OracleMethod)
        result = site(golden(), 'enumerate')
        self.assertEqual('enumerate', result.method)
        self.assertAlmostEqual(27.175, result.total, places=9)

    def test_overrides(self):
        site = MethodSite(max_iterations=1)
        site.register('lshaped', LShapedMethod, max_iterations=5)
        self.assertEqual(1, site.get_method('lshaped').max_iterations)
        self.assertEqual('iteration-limit', site(golden(), 'lshaped').status)
        self.assertEqual('converged', site(golden(), 'lshaped', max_iterations=30).status)

    def test_default_site(self):
        self.assertEqual(['extensive', 'lshaped', 'oracle', 'odp'], site.keys())
        self.assertTrue(isinstance(site.get_method('odp'), DeadlineBlindMethod))
