import io
import os
import shutil
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from unittest import TestCase

from delivery_planner import cli, instances, serializers
from delivery_planner.formulation import build_extensive
from delivery_planner.methods import site
from delivery_planner.milp import Status, solve_bnb
from delivery_planner.tests.factories import fixture_path
from delivery_planner.tests.test_methods import stubbed

GOLDEN = fixture_path('three_customers.json')


class CommandTest(TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)

    def path(self, name):
        return os.path.join(self.tmp, name)

    def run_cli(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        with redirect_stdout(stdout), redirect_stderr(stderr):
            code = cli.main(list(argv))
        return code, stdout.getvalue(), stderr.getvalue()

    def write_instance(self, name, inst):
        path = self.path(name)
        instances.write_instance(inst, path)
        return path

    def read(self, name):
        with open(self.path(name)) as f:
            return f.read()


class ValidateTest(CommandTest):
    def test_valid(self):
        code, out, _ = self.run_cli('validate', '--instance', GOLDEN)
        self.assertEqual(cli.EXIT_OK, code)
        self.assertTrue(out.endswith(': valid\n'))

    def test_invalid(self):
        inst = instances.load_instance(GOLDEN).replace(deadline_minutes=0.0)
        code, _, err = self.run_cli('validate', '--instance', self.write_instance('bad.json', inst))
        self.assertEqual(cli.EXIT_INPUT, code)
        self.assertTrue('deadline' in err)

    def test_missing_file(self):
        code, _, _ = self.run_cli('validate', '--instance', self.path('nowhere.json'))
        self.assertEqual(cli.EXIT_INPUT, code)

    def test_usage(self):
        with redirect_stderr(io.StringIO()):
            self.assertRaises(SystemExit, cli.main, ['solve'])
            self.assertRaises(SystemExit, cli.main, ['sweep', '--instance', GOLDEN, '--parameter', 'deadline',
                                                     '--values', 'soon'])


class GenTest(CommandTest):
    def test_deterministic(self):
        for name in ('a.json', 'b.json'):
            code, _, _ = self.run_cli('gen', '--customers', '4', '--seed', '3', '--out', self.path(name))
            self.assertEqual(cli.EXIT_OK, code)
        self.assertEqual(self.read('a.json'), self.read('b.json'))
        inst = instances.load_instance(self.path('a.json'))
        self.assertEqual(4, inst.n_customers)

    def test_sidecars(self):
        self.run_cli('gen', '--samples', '2', '--sidecars', '--out', self.path('g.json'))
        for name in ('g.distance.csv', 'g.time0.csv', 'g.time1.csv'):
            self.assertTrue(os.path.exists(self.path(name)), name)


class SolveTest(CommandTest):
    def test_oracle(self):
        code, _, _ = self.run_cli('solve', '--instance', GOLDEN, '--method', 'oracle',
                                  '--out', self.path('solution.json'))
        self.assertEqual(cli.EXIT_OK, code)
        document = serializers.loads(self.read('solution.json'))
        self.assertEqual('delivery-planner-solution', document['format'])
        self.assertEqual('oracle', document['method'])
        self.assertEqual('optimal', document['status'])
        self.assertAlmostEqual(27.175, document['breakdown']['total'], places=9)
        self.assertEqual([[1], [1], [1]], document['plan']['assigned'])

    def test_stdout(self):
        code, out, _ = self.run_cli('solve', '--instance', GOLDEN)
        self.assertEqual(cli.EXIT_OK, code)
        self.assertEqual('extensive', serializers.loads(out)['method'])

    def test_lshaped_trace(self):
        code, _, _ = self.run_cli('solve', '--instance', GOLDEN, '--method', 'lshaped',
                                  '--trace', self.path('trace.jsonl'), '--out', self.path('s.json'))
        self.assertEqual(cli.EXIT_OK, code)
        self.assertEqual(3, len(self.read('trace.jsonl').splitlines()))
        self.assertEqual(3, serializers.loads(self.read('s.json'))['iterations'])

    def test_iteration_limit(self):
        code, _, _ = self.run_cli('solve', '--instance', GOLDEN, '--method', 'lshaped',
                                  '--max-iterations', '1', '--out', self.path('s.json'))
        self.assertEqual(cli.EXIT_BUDGET, code)
        self.assertEqual('iteration-limit', serializers.loads(self.read('s.json'))['status'])

    def test_gap_limit(self):
        site.register('gapped', type(stubbed(Status.GAP_LIMIT, keep_values=True)))
        self.addCleanup(site.unregister, 'gapped')
        code, _, _ = self.run_cli('solve', '--instance', GOLDEN, '--method', 'gapped',
                                  '--out', self.path('s.json'))
        self.assertEqual(cli.EXIT_BUDGET, code)
        document = serializers.loads(self.read('s.json'))
        self.assertEqual('gap-limit', document['status'])
        self.assertAlmostEqual(27.175, document['breakdown']['total'], places=6)

    def test_extensive_is_deterministic(self):
        self.run_cli('gen', '--customers', '4', '--scenarios', '2', '--seed', '5',
                     '--out', self.path('g.json'))
        documents = []
        for name in ('a.json', 'b.json'):
            code, _, _ = self.run_cli('solve', '--instance', self.path('g.json'),
                                      '--out', self.path(name))
            self.assertEqual(cli.EXIT_OK, code)
            documents.append(serializers.loads(self.read(name)))
        self.assertEqual(documents[0]['objective'], documents[1]['objective'])
        self.assertEqual(documents[0]['plan'], documents[1]['plan'])

    def test_refused(self):
        inst = instances.load_instance(GOLDEN).replace(carriers=[])
        path = self.write_instance('fleet.json', inst)
        code, _, err = self.run_cli('solve', '--instance', path, '--method', 'lshaped')
        self.assertEqual(cli.EXIT_REFUSED, code)
        self.assertTrue(err.startswith('delivery-planner: '))

    def test_oracle_budget(self):
        self.run_cli('gen', '--customers', '7', '--out', self.path('big.json'))
        code, _, _ = self.run_cli('solve', '--instance', self.path('big.json'), '--method', 'oracle')
        self.assertEqual(cli.EXIT_BUDGET, code)

    def test_unknown_method(self):
        code, _, _ = self.run_cli('solve', '--instance', GOLDEN, '--method', 'simplex')
        self.assertEqual(cli.EXIT_INPUT, code)


class ExportTest(CommandTest):
    def test_export_lp(self):
        code, _, _ = self.run_cli('export-lp', '--instance', GOLDEN, '--out', self.path('golden.lp'))
        self.assertEqual(cli.EXIT_OK, code)
        text = self.read('golden.lp')
        self.assertEqual('\\ Problem: extensive', text.splitlines()[0])
        self.assertTrue(text.rstrip().endswith('End'))

    def test_load_solution(self):
        problem, _ = build_extensive(instances.load_instance(GOLDEN))
        solution = solve_bnb(problem)
        with open(self.path('golden.sol'), 'w') as f:
            for var, spec in enumerate(problem.variables):
                f.write('%s %.12g\n' % (spec.name, solution.value(var)))
        code, _, _ = self.run_cli('load-solution', '--instance', GOLDEN, '--solution', self.path('golden.sol'),
                                  '--out', self.path('loaded.json'))
        self.assertEqual(cli.EXIT_OK, code)
        document = serializers.loads(self.read('loaded.json'))
        self.assertAlmostEqual(27.175, document['objective'], places=6)
        self.assertAlmostEqual(27.175, document['breakdown']['total'], places=6)

    def test_load_infeasible_solution(self):
        with open(self.path('empty.sol'), 'w') as f:
            f.write('# nothing delivered\n')
        code, _, err = self.run_cli('load-solution', '--instance', GOLDEN, '--solution', self.path('empty.sol'))
        self.assertEqual(cli.EXIT_REFUSED, code)
        self.assertTrue('violates' in err)

    def test_load_unknown_variable(self):
        with open(self.path('bad.sol'), 'w') as f:
            f.write('X_1_0 1\nQ_9 1\n')
        code, _, _ = self.run_cli('load-solution', '--instance', GOLDEN, '--solution', self.path('bad.sol'))
        self.assertEqual(cli.EXIT_INPUT, code)


class ReportTest(CommandTest):
    def test_sweep(self):
        code, out, _ = self.run_cli('sweep', '--instance', GOLDEN, '--parameter', 'penalty',
                                    '--values', '0,1,10', '--method', 'oracle')
        self.assertEqual(cli.EXIT_OK, code)
        lines = out.splitlines()
        self.assertEqual(4, len(lines))
        self.assertTrue(lines[0].startswith('parameter,value,method,status,objective,total'))
        self.assertTrue(lines[1].startswith('penalty,0'))

    def test_compare(self):
        code, out, _ = self.run_cli('compare', '--instance', GOLDEN, '--methods', 'extensive,oracle',
                                    '--out', self.path('compare.csv'))
        self.assertEqual(cli.EXIT_OK, code)
        self.assertEqual(3, len(self.read('compare.csv').splitlines()))

    def test_compare_solver_flags(self):
        code, _, _ = self.run_cli('compare', '--instance', GOLDEN, '--methods', 'extensive,oracle',
                                  '--gap', '0.001', '--time-limit', '30', '--max-nodes', '5000',
                                  '--out', self.path('compare.csv'))
        self.assertEqual(cli.EXIT_OK, code)
        self.assertEqual(3, len(self.read('compare.csv').splitlines()))
