"""
Command-line interface: ``delivery-planner <command> [options]``.
"""
import argparse
import logging
import sys

from delivery_planner import instances, lshaped, serializers, sweeps
from delivery_planner.exceptions import (
    BudgetExceeded, BudgetExhausted, ImproperlyConfigured, IncompleteRecourse, Infeasible,
    InstanceFileError, InvalidInstance, MalformedProblem, NotRegistered, PlannerError,
    SolutionParseError, SolverFailure
)
from delivery_planner.formulation import build_extensive, decode
from delivery_planner.lpformat import read_solution_file, solution_from_values, write_lp_format
from delivery_planner.methods import site
from delivery_planner.model import evaluate, violation_probabilities

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REFUSED = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3

EXIT_CODES = (
    ((Infeasible, IncompleteRecourse, SolverFailure), EXIT_REFUSED),
    ((InstanceFileError, InvalidInstance, SolutionParseError, ImproperlyConfigured,
      NotRegistered, MalformedProblem), EXIT_INPUT),
    ((BudgetExhausted, BudgetExceeded), EXIT_BUDGET),
)


def _floats(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers, got %r" % text)


def _words(text):
    return [v.strip() for v in text.split(',') if v.strip()]


def _write(path, text):
    if path is None or path == '-':
        sys.stdout.write(text)
    else:
        with open(path, 'w') as f:
            f.write(text)


def _solver_options(args):
    options = {}
    if args.gap is not None:
        options['gap_tol'] = args.gap
    if args.time_limit is not None:
        options['time_limit'] = args.time_limit
    if args.max_nodes is not None:
        options['max_nodes'] = args.max_nodes
    if getattr(args, 'method', None) == 'lshaped':
        if getattr(args, 'epsilon', None) is not None:
            options['epsilon'] = args.epsilon
        if getattr(args, 'max_iterations', None) is not None:
            options['max_iterations'] = args.max_iterations
    return options


def cmd_gen(args):
    pricing = instances.Pricing(
        deadline_minutes=args.deadline,
        penalty_cost=args.penalty,
    )
    spec = instances.GeneratorSpec(
        n_customers=args.customers,
        n_trucks=args.trucks,
        n_carriers=args.carriers,
        n_scenarios=args.scenarios,
        n_samples=args.samples,
        seed=args.seed,
        time_noise_std=args.noise_std,
        demand_probability=args.demand_probability,
        pricing=pricing,
    )
    inst = instances.generate(spec)
    instances.write_instance(inst, args.out, sidecars=args.sidecars)
    logger.info("wrote %d-customer instance to %s", inst.n_customers, args.out)
    return EXIT_OK


def cmd_solve(args):
    inst = instances.load_instance(args.instance)
    result = site(inst, args.method, **_solver_options(args))
    document = serializers.solution_document(result, inst)
    _write(args.out, serializers.dumps(document, indent=2) + '\n')
    if args.trace and result.trace:
        with open(args.trace, 'w') as f:
            lshaped.write_trace(result.trace, f)
    logger.info("%s: %s, total %.6f", args.method, result.status, result.total)
    if result.status in ('iteration-limit', 'gap-limit'):
        return EXIT_BUDGET
    return EXIT_OK


def cmd_export_lp(args):
    inst = instances.load_instance(args.instance)
    problem, _ = build_extensive(inst)
    _write(args.out, write_lp_format(problem))
    return EXIT_OK


def cmd_sweep(args):
    inst = instances.load_instance(args.instance)
    if args.parameter == 'deadline':
        report = sweeps.sweep_deadline(inst, args.values, args.method, **_solver_options(args))
    else:
        report = sweeps.sweep_penalty(inst, args.values, args.method, **_solver_options(args))
    _write(args.out, report.to_csv())
    return EXIT_OK


def cmd_compare(args):
    inst = instances.load_instance(args.instance)
    report = sweeps.compare_methods(inst, args.methods, **_solver_options(args))
    _write(args.out, report.to_csv())
    return EXIT_OK


def cmd_validate(args):
    instances.load_instance(args.instance)
    sys.stdout.write("%s: valid\n" % args.instance)
    return EXIT_OK


def cmd_load_solution(args):
    inst = instances.load_instance(args.instance)
    problem, index = build_extensive(inst)
    try:
        with open(args.solution) as f:
            text = f.read()
    except OSError as e:
        raise InstanceFileError(args.solution, e.strerror or str(e))
    values = read_solution_file(text, problem)
    solution = solution_from_values(problem, values)
    violation = problem.max_violation(solution.values)
    if violation > 1e-6:
        raise Infeasible("solution violates the extensive form by %.6g" % violation)
    plan, recourse = decode(solution, index)
    breakdown = evaluate(plan, recourse, inst)
    document = {
        'objective': solution.objective_value,
        'breakdown': breakdown.as_dict(),
        'plan': {'reserved': plan.reserved, 'assigned': plan.assigned},
        'scenarios': [serializers.recourse_document(rec, inst) for rec in recourse],
    }
    _write(args.out, serializers.dumps(document, indent=2) + '\n')
    return EXIT_OK


def _add_solver_arguments(parser):
    parser.add_argument('--gap', type=float, help="absolute optimality gap tolerance")
    parser.add_argument('--time-limit', type=float, help="branch-and-bound time limit in seconds")
    parser.add_argument('--max-nodes', type=int, help="branch-and-bound node limit")


def get_parser():
    parser = argparse.ArgumentParser(
        prog='delivery-planner',
        description='Plan package deliveries over a private fleet and common carriers.',
    )
    parser.add_argument(
        '-v', '--verbose',
        help="Be verbose; repeat for debugging output",
        action='count', default=0,
    )
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help="generate a random instance")
    gen.add_argument('--customers', type=int, default=5)
    gen.add_argument('--trucks', type=int, default=1)
    gen.add_argument('--carriers', type=int, default=1)
    gen.add_argument('--scenarios', type=int, default=4)
    gen.add_argument('--samples', type=int, default=3)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--noise-std', type=float, default=10.0 / 60.0,
                     help="travel-time noise standard deviation in minutes")
    gen.add_argument('--demand-probability', type=float, default=0.5)
    gen.add_argument('--deadline', type=float, default=105.0, help="deadline in minutes")
    gen.add_argument('--penalty', type=float, default=1.0, help="penalty per late sample")
    gen.add_argument('--sidecars', action='store_true', help="write matrices as CSV files")
    gen.add_argument('--out', required=True)
    gen.set_defaults(handler=cmd_gen)

    solve = commands.add_parser('solve', help="solve an instance")
    solve.add_argument('--instance', required=True)
    solve.add_argument('--method', default='extensive')
    _add_solver_arguments(solve)
    solve.add_argument('--epsilon', type=float, help="decomposition convergence tolerance")
    solve.add_argument('--max-iterations', type=int, help="decomposition iteration cap")
    solve.add_argument('--trace', help="write the decomposition trace as JSON lines")
    solve.add_argument('--out')
    solve.set_defaults(handler=cmd_solve)

    export = commands.add_parser('export-lp', help="write the extensive form in CPLEX-LP format")
    export.add_argument('--instance', required=True)
    export.add_argument('--out')
    export.set_defaults(handler=cmd_export_lp)

    sweep = commands.add_parser('sweep', help="solve over a range of deadlines or penalty costs")
    sweep.add_argument('--instance', required=True)
    sweep.add_argument('--parameter', choices=('deadline', 'penalty'), required=True)
    sweep.add_argument('--values', type=_floats, required=True)
    sweep.add_argument('--method', default='extensive')
    _add_solver_arguments(sweep)
    sweep.add_argument('--out')
    sweep.set_defaults(handler=cmd_sweep)

    compare = commands.add_parser('compare', help="solve one instance with several methods")
    compare.add_argument('--instance', required=True)
    compare.add_argument('--methods', type=_words, default=['extensive', 'lshaped', 'oracle'])
    _add_solver_arguments(compare)
    compare.add_argument('--out')
    compare.set_defaults(handler=cmd_compare)

    validate = commands.add_parser('validate', help="check an instance file")
    validate.add_argument('--instance', required=True)
    validate.set_defaults(handler=cmd_validate)

    load = commands.add_parser('load-solution',
                               help="evaluate an external solver's solution of the exported LP")
    load.add_argument('--instance', required=True)
    load.add_argument('--solution', required=True)
    load.add_argument('--out')
    load.set_defaults(handler=cmd_load_solution)
    return parser


def exit_code_for(error):
    for classes, code in EXIT_CODES:
        if isinstance(error, classes):
            return code
    return EXIT_REFUSED


def main(argv=None):
    parser = get_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(asctime)s, %(levelname)s: %(message)s')
    try:
        return args.handler(args)
    except PlannerError as e:
        if isinstance(e, InvalidInstance):
            for violation in e.violations:
                sys.stderr.write("%s\n" % violation)
        sys.stderr.write("delivery-planner: %s\n" % e)
        return exit_code_for(e)
