"""
Solver-neutral mixed-integer linear programs and a bundled exact solver.

``solve_lp`` is a dense two-phase revised simplex over the LP relaxation;
``solve_bnb`` (or a configured ``BranchAndBound``) runs depth-first branch
and bound on top of it, re-solving each node by dual simplex from its
parent's basis and falling back to the two-phase solve. Both are meant for
desk-scale models of a few thousand variables at most.
"""
import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from delivery_planner.conf import Configurable
from delivery_planner.exceptions import ImproperlyConfigured, MalformedProblem

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
PIVOT_TOL = 1e-9
OPTIMALITY_TOL = 1e-9
DUAL_TOL = 1e-7
INFEASIBLE_TOL = 1e-6
REFACTOR_INTERVAL = 50
DEGENERATE_RUN = 50


class VarKind(enum.Enum):
    BINARY = 'binary'
    INTEGER = 'integer'
    CONTINUOUS = 'continuous'


class Sense(enum.Enum):
    LE = '<='
    EQ = '='
    GE = '>='


class Status(enum.Enum):
    OPTIMAL = 'Optimal'
    INFEASIBLE = 'Infeasible'
    UNBOUNDED = 'Unbounded'
    GAP_LIMIT = 'GapLimit'
    ITER_LIMIT = 'IterLimit'


@dataclass(frozen=True)
class VarSpec:
    name: str
    kind: VarKind = VarKind.CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf

    @property
    def is_integer(self):
        return self.kind is not VarKind.CONTINUOUS


@dataclass(frozen=True)
class LinearConstraint:
    terms: dict
    sense: Sense
    rhs: float
    name: str = ''


@dataclass
class MilpSolution:
    """
    Outcome of a solve. ``values`` is indexed by ``VarId`` and is ``None``
    when no solution is available.
    """
    status: Status
    values: np.ndarray = None
    objective_value: float = math.nan
    proven_bound: float = -math.inf
    nodes: int = 0
    iterations: int = 0

    @property
    def has_solution(self):
        return self.values is not None

    def value(self, var):
        return float(self.values[var])


class MilpProblem(object):
    """
    A minimization problem over declared variables. Variables are referred
    to by the integer ``VarId`` returned from ``add_variable``.
    """
    def __init__(self, name='problem'):
        self.name = name
        self.variables = []
        self.constraints = []
        self.objective = {}

    def __len__(self):
        return len(self.variables)

    def add_variable(self, name, kind=VarKind.CONTINUOUS, lower=0.0, upper=math.inf):
        """
        Declare a variable and return its ``VarId``.
        """
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if lower > upper:
            raise MalformedProblem("variable %s has lower bound %r above upper bound %r"
                                   % (name, lower, upper))
        self.variables.append(VarSpec(name, kind, float(lower), float(upper)))
        return len(self.variables) - 1

    def _check_terms(self, terms):
        cleaned = {}
        for var, coef in terms.items():
            if not (isinstance(var, (int, np.integer)) and 0 <= var < len(self.variables)):
                raise MalformedProblem("undeclared variable %r" % (var,))
            if coef != 0:
                cleaned[int(var)] = cleaned.get(int(var), 0.0) + float(coef)
        return dict((k, v) for k, v in cleaned.items() if v != 0)

    def add_constraint(self, terms, sense, rhs, name=''):
        constraint = LinearConstraint(self._check_terms(terms), Sense(sense), float(rhs),
                                      name or 'c%d' % len(self.constraints))
        self.constraints.append(constraint)
        return constraint

    def set_objective(self, terms):
        self.objective = self._check_terms(terms)

    def add_objective_terms(self, terms):
        merged = dict(self.objective)
        for var, coef in terms.items():
            merged[var] = merged.get(var, 0.0) + coef
        self.set_objective(merged)

    def check(self):
        """
        Verify every referenced variable is declared.
        """
        self._check_terms(self.objective)
        for constraint in self.constraints:
            self._check_terms(constraint.terms)

    @property
    def integer_mask(self):
        return np.array([v.is_integer for v in self.variables], dtype=bool)

    @property
    def bounds(self):
        lower = np.array([v.lower for v in self.variables], dtype=float)
        upper = np.array([v.upper for v in self.variables], dtype=float)
        return lower, upper

    def objective_vector(self):
        c = np.zeros(len(self.variables))
        for var, coef in self.objective.items():
            c[var] = coef
        return c

    def constraint_matrix(self):
        """
        Get the dense constraint matrix, senses and right-hand sides.
        """
        A = np.zeros((len(self.constraints), len(self.variables)))
        for row, constraint in enumerate(self.constraints):
            for var, coef in constraint.terms.items():
                A[row, var] = coef
        senses = [c.sense for c in self.constraints]
        b = np.array([c.rhs for c in self.constraints], dtype=float)
        return A, senses, b

    def objective_of(self, values):
        return float(self.objective_vector() @ np.asarray(values, dtype=float))

    def max_violation(self, values):
        """
        Largest constraint or bound violation of ``values``.
        """
        x = np.asarray(values, dtype=float)
        worst = 0.0
        lower, upper = self.bounds
        if x.size:
            worst = max(worst, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
        for constraint in self.constraints:
            lhs = sum(coef * x[var] for var, coef in constraint.terms.items())
            if constraint.sense is Sense.LE:
                worst = max(worst, lhs - constraint.rhs)
            elif constraint.sense is Sense.GE:
                worst = max(worst, constraint.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - constraint.rhs))
        return worst


class _StandardForm(object):
    """
    ``min c z  s.t.  A z = b, z >= 0`` with ``x = offset + T z``.

    The column layout is fixed by the bounds the form is built with. Bounds
    that only move finite limits (as branching does) reuse the same ``A``
    and ``c``: ``rhs`` and ``offset`` rebase the form onto them.
    """
    def __init__(self, dense, lower, upper):
        A0, senses, b0, c0 = dense
        n = len(c0)

        columns = []
        bounded = []
        for j in range(n):
            lo, hi = lower[j], upper[j]
            if np.isfinite(lo) and lo == hi:
                continue
            if np.isfinite(lo):
                columns.append((j, 1.0))
                if np.isfinite(hi):
                    bounded.append((len(columns) - 1, j))
            elif np.isfinite(hi):
                columns.append((j, -1.0))
            else:
                columns.append((j, 1.0))
                columns.append((j, -1.0))
        T = np.zeros((n, len(columns)))
        for k, (j, sign) in enumerate(columns):
            T[j, k] = sign

        nz = len(columns)
        B = np.zeros((len(bounded), nz))
        for r, (k, _) in enumerate(bounded):
            B[r, k] = 1.0
        A = np.vstack([A0 @ T, B])
        row_senses = list(senses) + [Sense.LE] * len(bounded)
        m = A.shape[0]

        n_slack = sum(1 for s in row_senses if s is not Sense.EQ)
        S = np.zeros((m, n_slack))
        slack_of_row = -np.ones(m, dtype=int)
        k = 0
        for r, sense in enumerate(row_senses):
            if sense is Sense.EQ:
                continue
            S[r, k] = 1.0 if sense is Sense.LE else -1.0
            slack_of_row[r] = nz + k
            k += 1

        self.A = np.hstack([A, S])
        self.c = np.concatenate([c0 @ T, np.zeros(n_slack)])
        self.T = T
        self.slack_of_row = slack_of_row
        self.n_structural = nz
        self._A0 = A0
        self._b0 = b0
        self._c0 = c0
        self._bounded = np.array([j for _, j in bounded], dtype=int)

    def offset(self, lower, upper):
        return np.where(np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0))

    def rhs(self, lower, upper):
        """
        Right-hand side of the form under ``[lower, upper]``.
        """
        b = self._b0 - self._A0 @ self.offset(lower, upper)
        return np.concatenate([b, upper[self._bounded] - lower[self._bounded]])

    def objective(self, z, offset):
        return float(self.c @ z) + float(self._c0 @ offset)

    def recover(self, z, offset):
        return offset + self.T @ z[:self.n_structural]


def _pivot(Binv, x_B, col, r, theta):
    x_B -= theta * col
    x_B[r] = theta
    new_row = Binv[r] / col[r]
    Binv -= np.outer(col, new_row)
    Binv[r] = new_row


def _reduced_costs(A, c, basis, Binv):
    d = c - (c[basis] @ Binv) @ A
    d[basis] = 0.0
    return d


def _simplex(A, b, c, basis, eligible, max_iter):
    """
    Run the revised simplex from a feasible ``basis``. Returns the status
    string, basis, basic values, basis inverse and iteration count.
    """
    m = A.shape[0]
    Binv = np.linalg.inv(A[:, basis])
    x_B = Binv @ b
    degenerate = 0
    bland = False
    for iteration in range(max_iter):
        if iteration and iteration % REFACTOR_INTERVAL == 0:
            try:
                Binv = np.linalg.inv(A[:, basis])
                x_B = Binv @ b
            except np.linalg.LinAlgError:
                pass
        d = _reduced_costs(A, c, basis, Binv)
        d[~eligible] = 0.0
        candidates = np.flatnonzero(d < -OPTIMALITY_TOL)
        if not candidates.size:
            return 'optimal', basis, x_B, Binv, iteration
        if bland:
            j = candidates[0]
        else:
            j = candidates[np.argmin(d[candidates])]
        col = Binv @ A[:, j]
        positive = col > PIVOT_TOL
        if not positive.any():
            return 'unbounded', basis, x_B, Binv, iteration
        ratios = np.full(m, np.inf)
        ratios[positive] = np.maximum(x_B[positive], 0.0) / col[positive]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12)
        if bland:
            r = ties[np.argmin(basis[ties])]
        else:
            r = ties[np.argmax(col[ties])]
        _pivot(Binv, x_B, col, r, theta)
        basis[r] = j
        x_B[np.abs(x_B) < 1e-12] = 0.0
        if theta <= 1e-12:
            degenerate += 1
            if degenerate >= DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
            bland = False
    return 'iteration-limit', basis, x_B, Binv, max_iter


def _solve_standard(form, b, max_iter=None):
    """
    Two-phase simplex on ``form`` with right-hand side ``b``. Returns
    ``(status, z, basis, Binv, iterations)``; ``basis`` and ``Binv`` are
    ``None`` unless the optimal basis is made of ``form.A`` columns only.
    """
    c = form.c
    m, n = form.A.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 100
    if m == 0:
        if (c < -OPTIMALITY_TOL).any():
            return 'unbounded', None, None, None, 0
        return 'optimal', np.zeros(n), None, None, 0

    sign = np.where(b < 0, -1.0, 1.0)
    A = form.A * sign[:, np.newaxis]
    b = b * sign
    basis = np.empty(m, dtype=int)
    needs_artificial = []
    for r in range(m):
        s = form.slack_of_row[r]
        if s >= 0 and A[r, s] > 0:
            basis[r] = s
        else:
            needs_artificial.append(r)
    n_art = len(needs_artificial)
    art = np.zeros((m, n_art))
    for k, r in enumerate(needs_artificial):
        art[r, k] = 1.0
        basis[r] = n + k
    A_full = np.hstack([A, art])
    eligible = np.ones(n + n_art, dtype=bool)
    iterations = 0

    if n_art:
        c1 = np.concatenate([np.zeros(n), np.ones(n_art)])
        status, basis, x_B, Binv, it = _simplex(A_full, b, c1, basis, eligible, max_iter)
        iterations += it
        if status == 'iteration-limit':
            return status, None, None, None, iterations
        infeasibility = float(c1[basis] @ x_B)
        if infeasibility > 1e-7 * max(1.0, float(np.abs(b).max())):
            return 'infeasible', None, None, None, iterations
        for r in range(m):
            if basis[r] < n:
                continue
            row = Binv[r] @ A
            row[basis[basis < n]] = 0.0
            choices = np.flatnonzero(np.abs(row) > PIVOT_TOL)
            if choices.size:
                j = choices[0]
                col = Binv @ A_full[:, j]
                _pivot(Binv, x_B, col, r, x_B[r] / col[r])
                basis[r] = j
        eligible[n:] = False

    c2 = np.concatenate([c, np.zeros(n_art)])
    status, basis, x_B, Binv, it = _simplex(A_full, b, c2, basis, eligible, max_iter)
    iterations += it
    if status != 'optimal':
        return status, None, None, None, iterations
    z = np.zeros(n + n_art)
    z[basis] = np.maximum(x_B, 0.0)
    if (basis >= n).any():
        return 'optimal', z[:n], None, None, iterations
    # The flipped rows leave the basis columns alone; only the inverse's
    # columns change sign.
    return 'optimal', z[:n], basis, Binv * sign, iterations


def _proves_infeasible(A, b, basis, r, scale):
    """
    Does row ``r`` of a fresh factorization of ``basis`` read as a basic
    variable forced below zero by nonnegative nonbasic columns?
    """
    try:
        Binv = np.linalg.inv(A[:, basis])
    except np.linalg.LinAlgError:
        return False
    row = Binv[r] @ A
    row[basis] = 0.0
    return float(Binv[r] @ b) < -INFEASIBLE_TOL * scale and not (row < -PIVOT_TOL).any()


def _reoptimize(A, b, c, basis, Binv=None, max_iter=None):
    """
    Dual simplex from ``basis``, an optimal basis for the same ``A`` and
    ``c`` under another right-hand side. Returns the status string, basis,
    basic values, basis inverse and iteration count. Any status but
    'optimal' or 'infeasible' means the result cannot be trusted and the
    caller should solve from scratch.
    """
    m = A.shape[0]
    if max_iter is None:
        max_iter = 2 * m + 100
    basis = basis.copy()
    try:
        Binv = np.linalg.inv(A[:, basis]) if Binv is None else Binv.copy()
    except np.linalg.LinAlgError:
        return 'unstable', basis, None, None, 0
    x_B = Binv @ b
    d = _reduced_costs(A, c, basis, Binv)
    if (d < -DUAL_TOL).any():
        return 'unstable', basis, x_B, Binv, 0
    scale = max(1.0, float(np.abs(b).max()))

    for iteration in range(max_iter):
        if iteration and iteration % REFACTOR_INTERVAL == 0:
            try:
                Binv = np.linalg.inv(A[:, basis])
            except np.linalg.LinAlgError:
                return 'unstable', basis, x_B, Binv, iteration
            x_B = Binv @ b
            d = _reduced_costs(A, c, basis, Binv)
        r = int(np.argmin(x_B))
        if x_B[r] >= -FEASIBILITY_TOL * scale:
            d = _reduced_costs(A, c, basis, Binv)
            residual = float(np.abs(A[:, basis] @ x_B - b).max())
            if (d < -DUAL_TOL).any() or residual > 1e-7 * scale:
                return 'unstable', basis, x_B, Binv, iteration
            return 'optimal', basis, x_B, Binv, iteration
        alpha = Binv[r] @ A
        alpha[basis] = 0.0
        alpha[basis[r]] = 1.0
        candidates = np.flatnonzero(alpha < -PIVOT_TOL)
        if not candidates.size:
            if _proves_infeasible(A, b, basis, r, scale):
                return 'infeasible', basis, x_B, Binv, iteration
            return 'unstable', basis, x_B, Binv, iteration
        ratios = np.maximum(d[candidates], 0.0) / -alpha[candidates]
        ties = candidates[ratios <= ratios.min() + 1e-12]
        j = ties[np.argmin(alpha[ties])]
        col = Binv @ A[:, j]
        if col[r] > -PIVOT_TOL:
            return 'unstable', basis, x_B, Binv, iteration
        _pivot(Binv, x_B, col, r, x_B[r] / col[r])
        d -= (d[j] / alpha[j]) * alpha
        basis[r] = j
        d[basis] = 0.0
        x_B[np.abs(x_B) < 1e-12] = 0.0
    return 'iteration-limit', basis, x_B, Binv, max_iter


def _dense(problem):
    A, senses, b = problem.constraint_matrix()
    return A, senses, b, problem.objective_vector()


def _solve_relaxation(form, lower, upper, start=None, max_iter=None):
    """
    Solve the relaxation of ``form`` over ``[lower, upper]``, from the
    ``(basis, Binv)`` pair ``start`` when given (``Binv`` may be ``None``).
    Returns ``(status, x, objective, iterations, restart)``; ``restart`` can
    seed relaxations over tighter bounds.
    """
    if (lower > upper).any():
        return 'infeasible', None, math.nan, 0, None
    b = form.rhs(lower, upper)
    offset = form.offset(lower, upper)
    iterations = 0
    if start is not None:
        basis, Binv = start
        status, basis, x_B, Binv, iterations = _reoptimize(form.A, b, form.c, basis, Binv, max_iter)
        if status == 'infeasible':
            return status, None, math.nan, iterations, None
        if status == 'optimal':
            z = np.zeros(form.A.shape[1])
            z[basis] = np.maximum(x_B, 0.0)
            return status, form.recover(z, offset), form.objective(z, offset), iterations, (basis, Binv)
        logger.debug("dual simplex gave up (%s) after %d iterations; solving from scratch",
                     status, iterations)

    status, z, basis, Binv, its = _solve_standard(form, b, max_iter)
    iterations += its
    if status != 'optimal':
        return status, None, math.nan, iterations, None
    restart = None if basis is None else (basis, Binv)
    return status, form.recover(z, offset), form.objective(z, offset), iterations, restart


_LP_STATUS = {
    'infeasible': Status.INFEASIBLE,
    'unbounded': Status.UNBOUNDED,
    'iteration-limit': Status.ITER_LIMIT,
}


def solve_lp(problem, lower=None, upper=None):
    """
    Solve the LP relaxation of ``problem`` (integrality dropped).
    """
    problem.check()
    default_lower, default_upper = problem.bounds
    lower = default_lower if lower is None else np.asarray(lower, dtype=float)
    upper = default_upper if upper is None else np.asarray(upper, dtype=float)
    if (lower > upper).any():
        return MilpSolution(Status.INFEASIBLE)
    form = _StandardForm(_dense(problem), lower, upper)
    status, x, objective, iterations, _ = _solve_relaxation(form, lower, upper)
    if status != 'optimal':
        return MilpSolution(_LP_STATUS[status], iterations=iterations)
    return MilpSolution(Status.OPTIMAL, x, objective, objective, iterations=iterations)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lower: np.ndarray = field(compare=False)
    upper: np.ndarray = field(compare=False)
    parent: int = field(default=-1, compare=False)
    basis: np.ndarray = field(default=None, compare=False)


class BranchAndBound(Configurable):
    """
    Depth-first branch and bound over LP relaxations.

    Branches on the most fractional integer variable (lowest ``VarId`` on
    ties) and re-sorts the open nodes by bound every ``restart_interval``
    nodes so the search restarts from the best bound. A node whose
    relaxation runs out of simplex iterations (``simplex_max_iter``) is
    dropped; its bound still counts against the proven bound.
    """
    def __init__(self, **kwargs):
        self._load_config_values(kwargs,
            gap_tol=1e-6,
            max_nodes=200000,
            time_limit=None,
            restart_interval=1000,
            integrality_tol=1e-6,
            simplex_max_iter=None,
        )
        self._reject_unknown(kwargs)
        if self.gap_tol < 0:
            raise ImproperlyConfigured("gap_tol must be nonnegative")
        if self.max_nodes < 1:
            raise ImproperlyConfigured("max_nodes must be positive")
        if self.simplex_max_iter is not None and self.simplex_max_iter < 1:
            raise ImproperlyConfigured("simplex_max_iter must be positive")

    def _fractionality(self, x, integer):
        frac = x - np.floor(x)
        score = np.minimum(frac, 1.0 - frac)
        score[~integer] = 0.0
        score[score <= self.integrality_tol] = 0.0
        return score

    def solve_relaxation(self, form, node, start=None):
        """
        Solve the LP relaxation at ``node``. Returns ``(status, x, objective,
        iterations, restart)``.
        """
        return _solve_relaxation(form, node.lower, node.upper, start, self.simplex_max_iter)

    def solve(self, problem):
        problem.check()
        integer = problem.integer_mask
        lower, upper = problem.bounds
        if (~np.isfinite(lower[integer])).any() or (~np.isfinite(upper[integer])).any():
            raise MalformedProblem("integer variables must be bounded")
        lower = lower.copy()
        upper = upper.copy()
        lower[integer] = np.ceil(lower[integer] - self.integrality_tol)
        upper[integer] = np.floor(upper[integer] + self.integrality_tol)
        if (lower > upper).any():
            return MilpSolution(Status.INFEASIBLE)

        form = _StandardForm(_dense(problem), lower, upper)
        started = time.monotonic()
        prune_tol = max(self.gap_tol, 1e-9)
        incumbent = None
        incumbent_value = math.inf
        stack = [_Node(-math.inf, 0, lower, upper)]
        seq = 1
        nodes = iterations = 0
        stopped = False
        dropped_bound = math.inf
        # Basis inverse of the last solved node, for whichever child comes next.
        factored_node, factor = None, None

        while stack:
            if nodes >= self.max_nodes or (
                    self.time_limit is not None and time.monotonic() - started > self.time_limit):
                stopped = True
                break
            if nodes and nodes % self.restart_interval == 0:
                stack.sort(key=lambda node: (-node.bound, -node.seq))
                logger.debug("%s: %d nodes, %d open, incumbent %s",
                             problem.name, nodes, len(stack), incumbent_value)
            if incumbent is not None and incumbent_value - min(n.bound for n in stack) <= self.gap_tol:
                break
            node = stack.pop()
            if node.bound >= incumbent_value - prune_tol:
                continue
            nodes += 1
            start = None
            if node.basis is not None:
                start = (node.basis, factor if node.parent == factored_node else None)
            status, x, objective, its, restart = self.solve_relaxation(form, node, start)
            iterations += its
            factored_node, factor = node.seq, (restart[1] if restart is not None else None)
            if status == 'unbounded':
                if nodes == 1:
                    return MilpSolution(Status.UNBOUNDED, nodes=nodes, iterations=iterations)
                continue
            if status == 'iteration-limit':
                logger.warning("%s: simplex iteration limit at node %d; node dropped", problem.name, nodes)
                dropped_bound = min(dropped_bound, node.bound)
                continue
            if status != 'optimal' or objective >= incumbent_value - prune_tol:
                continue

            score = self._fractionality(x, integer)
            if not score.any():
                x = x.copy()
                x[integer] = np.round(x[integer])
                incumbent = x
                incumbent_value = problem.objective_of(x)
                logger.debug("%s: incumbent %.6f at node %d", problem.name, incumbent_value, nodes)
                continue

            j = int(np.argmax(score))
            down_upper = node.upper.copy()
            down_upper[j] = math.floor(x[j])
            up_lower = node.lower.copy()
            up_lower[j] = math.ceil(x[j])
            basis = restart[0] if restart is not None else None
            down = _Node(objective, seq, node.lower, down_upper, node.seq, basis)
            up = _Node(objective, seq + 1, up_lower, node.upper, node.seq, basis)
            seq += 2
            if x[j] - math.floor(x[j]) >= 0.5:
                stack.extend([down, up])
            else:
                stack.extend([up, down])

        open_bound = min(min((n.bound for n in stack), default=math.inf), dropped_bound)
        if incumbent is None:
            if stopped or dropped_bound < math.inf:
                return MilpSolution(Status.ITER_LIMIT, nodes=nodes, iterations=iterations,
                                    proven_bound=open_bound)
            return MilpSolution(Status.INFEASIBLE, nodes=nodes, iterations=iterations)
        bound = min(incumbent_value, open_bound)
        status = Status.OPTIMAL
        if incumbent_value - bound > self.gap_tol:
            status = Status.GAP_LIMIT
        logger.debug("%s: %s objective %.6f bound %.6f after %d nodes",
                     problem.name, status.value, incumbent_value, bound, nodes)
        return MilpSolution(status, incumbent, incumbent_value, bound, nodes=nodes, iterations=iterations)


def solve_bnb(problem, config=None, **options):
    """
    Solve ``problem`` to proven optimality within ``gap_tol``.
    """
    solver = config if config is not None else BranchAndBound(**options)
    return solver.solve(problem)
