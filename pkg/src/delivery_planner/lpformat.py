"""
CPLEX-LP text export and import, and plain ``name value`` solution files,
for handing models to external solvers and reading their answers back.
"""
import math
import re

import numpy as np

from delivery_planner.exceptions import MalformedProblem, SolutionParseError
from delivery_planner.milp import MilpProblem, MilpSolution, Sense, Status, VarKind

TERMS_PER_LINE = 8

_SECTIONS = {
    'minimize': 'objective', 'minimise': 'objective', 'minimum': 'objective', 'min': 'objective',
    'subject to': 'constraints', 'such that': 'constraints', 'st': 'constraints', 's.t.': 'constraints',
    'bounds': 'bounds', 'bound': 'bounds',
    'binary': 'binary', 'binaries': 'binary', 'bin': 'binary',
    'general': 'general', 'generals': 'general', 'gen': 'general',
    'end': 'end',
}

_TOKEN = re.compile(r"""
    (?P<label>[A-Za-z_][A-Za-z0-9_.]*):
  | (?P<sense><=|>=|=<|=>|=|<|>)
  | (?P<sign>[+-])
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|(?i:infinity|inf)\b)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<space>\s+)
""", re.VERBOSE)

_SENSE_TOKENS = {'<=': Sense.LE, '=<': Sense.LE, '<': Sense.LE,
                 '>=': Sense.GE, '=>': Sense.GE, '>': Sense.GE, '=': Sense.EQ}


def sanitize_names(names):
    """
    Map names onto unique identifiers made of ``[A-Za-z0-9_]`` that start
    with a letter or underscore.
    """
    seen = set()
    result = []
    for name in names:
        clean = re.sub(r'[^A-Za-z0-9_]', '_', name) or '_'
        if clean[0].isdigit():
            clean = 'v_' + clean
        candidate = clean
        suffix = 1
        while candidate in seen:
            candidate = '%s_%d' % (clean, suffix)
            suffix += 1
        seen.add(candidate)
        result.append(candidate)
    return result


def _num(value):
    value = float(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _expression(terms, names):
    if not terms:
        return ['0']
    parts = []
    for k, (var, coef) in enumerate(terms.items()):
        text = '%s %s' % (_num(abs(coef)), names[var])
        if k == 0:
            parts.append('-' + text if coef < 0 else text)
        else:
            parts.append(('- ' if coef < 0 else '+ ') + text)
    return parts


def _wrapped(prefix, parts):
    lines = []
    for start in range(0, len(parts), TERMS_PER_LINE):
        chunk = ' '.join(parts[start:start + TERMS_PER_LINE])
        lines.append((prefix if start == 0 else ' ' * len(prefix)) + chunk)
    return lines


def write_lp_format(problem):
    """
    Render ``problem`` as CPLEX-LP text, variables in declaration order.
    """
    problem.check()
    names = sanitize_names([v.name for v in problem.variables])
    row_names = sanitize_names([c.name for c in problem.constraints])
    lines = ['\\ Problem: %s' % problem.name, 'Minimize']
    lines.extend(_wrapped(' obj: ', _expression(problem.objective, names)))
    lines.append('Subject To')
    for constraint, row_name in zip(problem.constraints, row_names):
        parts = _expression(constraint.terms, names) + [constraint.sense.value, _num(constraint.rhs)]
        lines.extend(_wrapped(' %s: ' % row_name, parts))
    lines.append('Bounds')
    for spec, name in zip(problem.variables, names):
        lower, upper = spec.lower, spec.upper
        if math.isinf(lower) and math.isinf(upper):
            lines.append(' %s free' % name)
        elif math.isinf(upper):
            lines.append(' %s >= %s' % (name, _num(lower)))
        elif math.isinf(lower):
            lines.append(' -inf <= %s <= %s' % (name, _num(upper)))
        else:
            lines.append(' %s <= %s <= %s' % (_num(lower), name, _num(upper)))
    for header, kind in (('Binary', VarKind.BINARY), ('General', VarKind.INTEGER)):
        lines.append(header)
        members = [name for spec, name in zip(problem.variables, names) if spec.kind is kind]
        lines.extend(_wrapped(' ', members))
    lines.append('End')
    return '\n'.join(lines) + '\n'


def _tokens(text):
    pos = 0
    tokens = []
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise MalformedProblem("unexpected text %r" % text[pos:pos + 20])
        pos = match.end()
        if match.lastgroup != 'space':
            tokens.append((match.lastgroup, match.group(match.lastgroup)))
    return tokens


def _number(token):
    text = token.lower()
    if text.startswith('inf'):
        return math.inf
    return float(text)


def _split_sections(text):
    sections = dict((key, []) for key in ('objective', 'constraints', 'bounds', 'binary', 'general'))
    current = None
    for raw in text.splitlines():
        line = raw.split('\\', 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key == 'end':
            break
        if key is not None:
            current = key
            continue
        if line.lower().startswith(('maximize', 'maximise', 'max')):
            raise MalformedProblem("only minimization problems are supported")
        if current is None:
            raise MalformedProblem("text before the objective section: %r" % line)
        sections[current].append(line)
    return sections


def _linear(tokens, pos):
    """
    Parse ``[sign] [coef] name ...`` starting at ``pos``; returns
    ``(list of (name, coef), constant, pos)``.
    """
    terms = []
    constant = 0.0
    while pos < len(tokens) and tokens[pos][0] in ('sign', 'number', 'name'):
        coef = 1.0
        if tokens[pos][0] == 'sign':
            coef = -1.0 if tokens[pos][1] == '-' else 1.0
            pos += 1
        if pos < len(tokens) and tokens[pos][0] == 'number':
            value = _number(tokens[pos][1])
            pos += 1
            if pos < len(tokens) and tokens[pos][0] == 'name':
                coef *= value
            else:
                constant += coef * value
                continue
        if pos >= len(tokens) or tokens[pos][0] != 'name':
            raise MalformedProblem("expected a variable name")
        terms.append((tokens[pos][1], coef))
        pos += 1
    return terms, constant, pos


def read_lp_format(text):
    """
    Parse the CPLEX-LP subset written by ``write_lp_format`` back into a
    ``MilpProblem``.
    """
    sections = _split_sections(text)
    objective_tokens = _tokens(' '.join(sections['objective']))
    constraint_tokens = _tokens(' '.join(sections['constraints']))
    binaries = ' '.join(sections['binary']).split()
    generals = ' '.join(sections['general']).split()

    bounds = {}
    order = []
    for line in sections['bounds']:
        tokens = _tokens(line)
        names = [t[1] for t in tokens if t[0] == 'name']
        if len(names) == 2 and names[1].lower() == 'free':
            bounds[names[0]] = (-math.inf, math.inf)
            order.append(names[0])
            continue
        if len(names) != 1:
            raise MalformedProblem("cannot parse bound %r" % line)
        name = names[0]
        signed = []
        k = 0
        while k < len(tokens):
            kind, value = tokens[k]
            if kind == 'sign':
                number = _number(tokens[k + 1][1])
                signed.append(('number', -number if value == '-' else number))
                k += 2
                continue
            signed.append((kind, _number(value) if kind == 'number' else value))
            k += 1
        lower, upper = 0.0, math.inf
        if len(signed) == 5:
            lower, upper = signed[0][1], signed[4][1]
        elif len(signed) == 3 and signed[0][0] == 'name':
            sense, number = _SENSE_TOKENS[signed[1][1]], signed[2][1]
            if sense is Sense.GE:
                lower = number
            elif sense is Sense.LE:
                upper = number
            else:
                lower = upper = number
        elif len(signed) == 3:
            sense, number = _SENSE_TOKENS[signed[1][1]], signed[0][1]
            if sense is Sense.LE:
                lower = number
            elif sense is Sense.GE:
                upper = number
            else:
                lower = upper = number
        else:
            raise MalformedProblem("cannot parse bound %r" % line)
        bounds[name] = (lower, upper)
        order.append(name)

    statements = []
    pos = 0
    while pos < len(constraint_tokens):
        label = ''
        if constraint_tokens[pos][0] == 'label':
            label = constraint_tokens[pos][1][:-1]
            pos += 1
        terms, constant, pos = _linear(constraint_tokens, pos)
        if pos >= len(constraint_tokens) or constraint_tokens[pos][0] != 'sense':
            raise MalformedProblem("constraint %s has no sense" % (label or len(statements)))
        sense = _SENSE_TOKENS[constraint_tokens[pos][1]]
        pos += 1
        sign = 1.0
        if pos < len(constraint_tokens) and constraint_tokens[pos][0] == 'sign':
            sign = -1.0 if constraint_tokens[pos][1] == '-' else 1.0
            pos += 1
        if pos >= len(constraint_tokens) or constraint_tokens[pos][0] != 'number':
            raise MalformedProblem("constraint %s has no right-hand side" % (label or len(statements)))
        rhs = sign * _number(constraint_tokens[pos][1]) - constant
        pos += 1
        statements.append((label, terms, sense, rhs))

    pos = 0
    if objective_tokens and objective_tokens[0][0] == 'label':
        pos = 1
    objective_terms, _, _ = _linear(objective_tokens, pos)

    for name, _ in objective_terms:
        order.append(name)
    for _, terms, _, _ in statements:
        order.extend(name for name, _ in terms)
    order.extend(binaries)
    order.extend(generals)

    problem = MilpProblem(name='imported')
    ids = {}
    binary_set, general_set = set(binaries), set(generals)
    for name in order:
        if name in ids:
            continue
        lower, upper = bounds.get(name, (0.0, math.inf))
        if name in binary_set:
            kind = VarKind.BINARY
            if name not in bounds:
                lower, upper = 0.0, 1.0
        elif name in general_set:
            kind = VarKind.INTEGER
        else:
            kind = VarKind.CONTINUOUS
        ids[name] = problem.add_variable(name, kind, lower, upper)

    problem.set_objective(_collect(objective_terms, ids))
    for label, terms, sense, rhs in statements:
        problem.add_constraint(_collect(terms, ids), sense, rhs, name=label)
    return problem


def _collect(terms, ids):
    collected = {}
    for name, coef in terms:
        collected[ids[name]] = collected.get(ids[name], 0.0) + coef
    return collected


def read_solution_file(text, problem=None):
    """
    Parse whitespace-separated ``name value`` lines. When ``problem`` is
    given, names are checked against it (original or LP-sanitized) and the
    result is keyed by the original variable names.
    """
    known = None
    if problem is not None:
        originals = [v.name for v in problem.variables]
        known = dict(zip(originals, originals))
        known.update(zip(sanitize_names(originals), originals))
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionParseError(lineno, "expected 'name value', got %r" % line)
        name, text_value = parts
        try:
            value = float(text_value)
        except ValueError:
            raise SolutionParseError(lineno, "value %r is not a number" % text_value)
        if known is not None:
            if name not in known:
                raise SolutionParseError(lineno, "unknown variable %r" % name)
            name = known[name]
        values[name] = value
    return values


def solution_from_values(problem, values):
    """
    Build a ``MilpSolution`` from a name-to-value mapping; variables missing
    from the mapping are taken as zero.
    """
    x = np.zeros(len(problem.variables))
    for var, spec in enumerate(problem.variables):
        x[var] = values.get(spec.name, 0.0)
    objective = problem.objective_of(x)
    return MilpSolution(Status.OPTIMAL, x, objective, objective)
