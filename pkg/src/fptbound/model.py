"""Population CTMC models, first-passage queries and the model DSL.

A model file is line oriented::

    # dimerization
    species M D
    init M=0 D=0
    rate lam=100
    rate del=0.2
    reaction 0 -> M @ lam
    reaction 2 M -> D @ del
    query { threshold D >= 5; horizon 1; objective mfpt; order 2; }

``mode species`` declares binary switch species (gene states); a reaction can
also carry an explicit polynomial propensity, ``@ poly(0.1*M^2 - 0.1*M)``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .poly import Polynomial, as_fraction, falling_binomial, format_number

__all__ = [
    "ModelError",
    "SpeciesKind",
    "Objective",
    "Species",
    "Reaction",
    "Pctmc",
    "FptQuery",
    "Diagnostic",
    "parse_model",
    "parse_query",
    "load",
    "serialize_model",
    "serialize_query",
    "validate",
    "propensity_polynomial",
    "reduce_model",
]


class ModelError(ValueError):
    """Malformed model or query text, or an inconsistent model value."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class SpeciesKind(str, enum.Enum):
    POPULATION = "population"
    MODE = "mode"


class Objective(str, enum.Enum):
    MFPT = "mfpt"
    HIT_PROBABILITY = "hitprob"


@dataclass(frozen=True)
class Species:
    name: str
    kind: SpeciesKind = SpeciesKind.POPULATION
    initial_count: int = 0

    def __post_init__(self):
        if not _IDENT.fullmatch(self.name):
            raise ModelError(f"invalid species name {self.name!r}")
        if self.initial_count < 0:
            raise ModelError(f"negative initial count for {self.name}")
        if self.kind is SpeciesKind.MODE and self.initial_count not in (0, 1):
            raise ModelError(f"mode species {self.name} must start at 0 or 1")


@dataclass(frozen=True)
class Reaction:
    """Mass-action reaction ``consume -> produce`` with rate constant ``rate_constant``.

    ``propensity``, when given, replaces the mass-action law; it is a polynomial
    over the species (no time variable).
    """

    consume: tuple[int, ...]
    produce: tuple[int, ...]
    rate_constant: float
    propensity: Polynomial | None = None

    def __post_init__(self):
        if len(self.consume) != len(self.produce):
            raise ModelError("consume and produce vectors differ in length")
        if any(c < 0 for c in self.consume + self.produce):
            raise ModelError("stoichiometric coefficients must be nonnegative")
        if not self.rate_constant > 0 or math.isinf(self.rate_constant):
            raise ModelError(f"rate constant must be positive and finite, got {self.rate_constant}")

    @property
    def change(self) -> tuple[int, ...]:
        return tuple(p - c for p, c in zip(self.produce, self.consume))


@dataclass(frozen=True)
class Pctmc:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    name: str = "model"

    def __post_init__(self):
        if not self.species:
            raise ModelError("model declares no species")
        if not self.reactions:
            raise ModelError("model declares no reactions")
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ModelError("duplicate species name")
        n = len(self.species)
        for j, r in enumerate(self.reactions):
            if len(r.consume) != n:
                raise ModelError(f"reaction {j + 1} has {len(r.consume)} entries, expected {n}")
            if r.propensity is not None and r.propensity.nvars != n:
                raise ModelError(f"reaction {j + 1} propensity arity mismatch")
            for i, s in enumerate(self.species):
                if s.kind is SpeciesKind.MODE and (r.consume[i] > 1 or r.produce[i] > 1):
                    raise ModelError(f"reaction {j + 1} uses mode species {s.name} with multiplicity > 1")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def x0(self) -> tuple[int, ...]:
        return tuple(s.initial_count for s in self.species)

    def index(self, name: str) -> int:
        for i, s in enumerate(self.species):
            if s.name == name:
                return i
        raise ModelError(f"unknown species {name!r}")

    @property
    def population_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.species) if s.kind is SpeciesKind.POPULATION]

    @property
    def mode_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.species) if s.kind is SpeciesKind.MODE]

    @property
    def is_hybrid(self) -> bool:
        return bool(self.mode_indices)


@dataclass(frozen=True)
class FptQuery:
    """One bounding question: hit ``thresholds`` before ``horizon``.

    ``scale_bounds`` holds user magnitude bounds for species without a
    threshold; they only affect moment scaling, never the feasible set.
    """

    thresholds: tuple[tuple[str, int], ...]
    horizon: float = math.inf
    objective: Objective = Objective.MFPT
    order: int = 2
    time_scale_hint: float | None = None
    scale_bounds: tuple[tuple[str, float], ...] = field(default=())

    def __post_init__(self):
        if not self.thresholds:
            raise ModelError("query needs at least one threshold")
        if not self.horizon > 0:
            raise ModelError("horizon must be positive")
        if self.order < 1:
            raise ModelError("relaxation order must be >= 1")
        if self.time_scale_hint is not None and not self.time_scale_hint > 0:
            raise ModelError("time scale must be positive")
        names = [s for s, _ in self.thresholds]
        if len(set(names)) != len(names):
            raise ModelError("duplicate threshold species")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.horizon)

    def threshold_map(self) -> dict[str, int]:
        return dict(self.thresholds)

    def with_(self, **changes) -> "FptQuery":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# parsing

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_UNSIGNED = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_DECIMAL = r"[+-]?" + _UNSIGNED
_DECIMAL_RE = re.compile(_DECIMAL)


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def _split_query(text: str) -> tuple[list[tuple[int, str]], list[tuple[int, int, str]]]:
    """Separate model lines from the ``query { ... }`` block.

    Returns the model lines and the query items as (line, column, text).
    """
    model_lines: list[tuple[int, str]] = []
    items: list[tuple[int, int, str]] = []
    in_query = False
    seen_query = False
    buf, buf_pos = "", None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        col = 0
        if not in_query:
            m = re.match(r"\s*query\s*\{", line)
            if not m:
                model_lines.append((lineno, line))
                continue
            if seen_query:
                raise ModelError("more than one query block", lineno, 1)
            in_query = seen_query = True
            col = m.end()
        while col < len(line):
            ch = line[col]
            if ch == "}":
                if buf.strip():
                    items.append((*buf_pos, buf.strip()))
                buf, buf_pos = "", None
                in_query = False
                rest = line[col + 1:]
                if rest.strip():
                    raise ModelError("unexpected text after query block", lineno, col + 2)
                break
            if ch == ";":
                if buf.strip():
                    items.append((*buf_pos, buf.strip()))
                buf, buf_pos = "", None
            else:
                if buf_pos is None and not ch.isspace():
                    buf_pos = (lineno, col + 1)
                buf += ch
            col += 1
        else:
            if in_query:
                buf += " "
    if in_query:
        raise ModelError("unterminated query block", len(text.splitlines()), None)
    return model_lines, items


def _parse_decimal(token: str, lineno: int, col: int) -> tuple[float, Fraction]:
    if not _DECIMAL_RE.fullmatch(token):
        raise ModelError(f"expected a number, got {token!r}", lineno, col)
    return float(token), Fraction(token)


def parse_model(text: str, name: str = "model") -> Pctmc:
    """Parse model DSL text into a :class:`Pctmc`. Any query block is ignored."""
    model_lines, _ = _split_query(text)
    species: list[list] = []  # [name, kind, init]
    rates: dict[str, float] = {}
    pending: list[tuple[int, str, str, str, int]] = []
    inits: list[tuple[int, int, str, int]] = []

    for lineno, line in model_lines:
        if not line.strip():
            continue
        col0 = len(line) - len(line.lstrip()) + 1
        words = line.split()
        head = words[0]
        if head == "species" or (head == "mode" and len(words) > 1 and words[1] == "species"):
            kind = SpeciesKind.MODE if head == "mode" else SpeciesKind.POPULATION
            names = words[2:] if head == "mode" else words[1:]
            if not names:
                raise ModelError("species declaration without names", lineno, col0)
            for nm in names:
                col = line.find(nm) + 1
                if not _IDENT.fullmatch(nm):
                    raise ModelError(f"invalid species name {nm!r}", lineno, col)
                if any(s[0] == nm for s in species):
                    raise ModelError(f"duplicate species name {nm!r}", lineno, col)
                species.append([nm, kind, 0])
        elif head == "init":
            for tok in words[1:]:
                col = line.find(tok) + 1
                m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)=(\d+)", tok)
                if not m:
                    raise ModelError(f"malformed initial count {tok!r} (expected name=<int>)", lineno, col)
                inits.append((lineno, col, m.group(1), int(m.group(2))))
        elif head == "rate":
            m = re.fullmatch(r"\s*rate\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*", line)
            if not m:
                raise ModelError("malformed rate declaration (expected rate <name>=<decimal>)", lineno, col0)
            value, _ = _parse_decimal(m.group(2), lineno, m.start(2) + 1)
            if not value > 0:
                raise ModelError(f"rate {m.group(1)} must be positive", lineno, m.start(2) + 1)
            rates[m.group(1)] = value
        elif head == "reaction":
            m = re.fullmatch(r"\s*reaction\s+(.+?)\s*->\s*(.+?)\s*@\s*(.+?)\s*", line)
            if not m:
                raise ModelError("malformed reaction (expected reaction <lhs> -> <rhs> @ <rate>)", lineno, col0)
            pending.append((lineno, m.group(1), m.group(2), m.group(3), m.start(3) + 1))
        else:
            raise ModelError(f"unknown statement {head!r}", lineno, col0)

    if not species:
        raise ModelError("model declares no species")
    index = {s[0]: i for i, s in enumerate(species)}
    for lineno, col, nm, count in inits:
        if nm not in index:
            raise ModelError(f"unknown species {nm!r} in init", lineno, col)
        species[index[nm]][2] = count

    try:
        species_objs = tuple(Species(nm, kind, init) for nm, kind, init in species)
    except ModelError as exc:
        raise ModelError(str(exc)) from None

    n = len(species)
    names = [s[0] for s in species]
    reactions = []
    for lineno, lhs, rhs, rate_txt, rate_col in pending:
        consume = _parse_side(lhs, index, n, lineno)
        produce = _parse_side(rhs, index, n, lineno)
        propensity = None
        pm = re.fullmatch(r"poly\((.*)\)", rate_txt)
        if pm:
            propensity = parse_polynomial(pm.group(1), names, rates, lineno, rate_col + 5)
            value = 1.0
        elif rate_txt in rates:
            value = rates[rate_txt]
        elif _IDENT.fullmatch(rate_txt):
            raise ModelError(f"unknown rate {rate_txt!r}", lineno, rate_col)
        else:
            value, _ = _parse_decimal(rate_txt, lineno, rate_col)
            if not value > 0:
                raise ModelError(f"rate constant must be positive, got {rate_txt}", lineno, rate_col)
        try:
            reactions.append(Reaction(consume, produce, value, propensity))
        except ModelError as exc:
            raise ModelError(str(exc), lineno) from None
    try:
        return Pctmc(species_objs, tuple(reactions), name)
    except ModelError as exc:
        raise ModelError(str(exc)) from None


def _parse_side(text: str, index: dict[str, int], n: int, lineno: int) -> tuple[int, ...]:
    vec = [0] * n
    text = text.strip()
    if text == "0":
        return tuple(vec)
    for term in text.split("+"):
        term = term.strip()
        m = re.fullmatch(r"(\d+)?\s*\*?\s*([A-Za-z_][A-Za-z0-9_]*)", term)
        if not m:
            raise ModelError(f"malformed reaction term {term!r}", lineno)
        coeff = int(m.group(1)) if m.group(1) else 1
        nm = m.group(2)
        if nm not in index:
            raise ModelError(f"unknown species {nm!r} in reaction", lineno)
        vec[index[nm]] += coeff
    return tuple(vec)


_POLY_TOKEN = re.compile(rf"\s*(?:(?P<num>{_UNSIGNED})|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))")


def parse_polynomial(
    text: str,
    names: Sequence[str],
    constants: dict[str, float] | None = None,
    lineno: int | None = None,
    column: int = 1,
) -> Polynomial:
    """Parse ``+ - * / ^`` expressions over species names into a polynomial over species.

    Division is only allowed by constants. Named constants (rates) are
    substituted by their exact decimal value.
    """
    constants = constants or {}
    nvars = len(names)
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _POLY_TOKEN.match(text, pos)
        if not m:
            raise ModelError(f"unexpected character {text[pos]!r} in polynomial", lineno, column + pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), column + m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", column + len(text)))
    it = 0

    def peek():
        return tokens[it]

    def take(expected=None):
        nonlocal it
        tok = tokens[it]
        if expected is not None and tok[1] != expected:
            raise ModelError(f"expected {expected!r}", lineno, tok[2])
        it += 1
        return tok

    def expr():
        sign = 1
        if peek()[1] in "+-" and peek()[0] == "op":
            sign = -1 if take()[1] == "-" else 1
        out = term().scale(sign)
        while peek()[0] == "op" and peek()[1] in "+-":
            op = take()[1]
            rhs = term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term():
        out = power()
        while peek()[0] == "op" and peek()[1] in "*/":
            op = take()[1]
            rhs = power()
            if op == "*":
                out = out * rhs
            else:
                if rhs.degree > 0:
                    raise ModelError("division by a non-constant", lineno, peek()[2])
                c = rhs.coefficient((0,) * nvars)
                if c == 0:
                    raise ModelError("division by zero", lineno, peek()[2])
                out = out.scale(1 / c)
        return out

    def power():
        base = atom()
        if peek()[1] == "^":
            take()
            kind, val, col = take()
            if kind != "num" or not val.isdigit():
                raise ModelError("exponent must be a nonnegative integer", lineno, col)
            base = base ** int(val)
        return base

    def atom():
        kind, val, col = take()
        if kind == "num":
            return Polynomial.constant(nvars, Fraction(val))
        if kind == "name":
            if val in names:
                return Polynomial.variable(nvars, list(names).index(val))
            if val in constants:
                return Polynomial.constant(nvars, as_fraction(constants[val]))
            raise ModelError(f"unknown name {val!r} in polynomial", lineno, col)
        if val == "(":
            inner = expr()
            take(")")
            return inner
        if val == "-":
            return -atom()
        raise ModelError(f"unexpected token {val!r}", lineno, col)

    result = expr()
    if peek()[0] != "end":
        raise ModelError(f"unexpected token {peek()[1]!r}", lineno, peek()[2])
    return result


def parse_query(text: str, model: Pctmc | None = None) -> FptQuery | None:
    """Parse the ``query { ... }`` block of ``text``; None when there is none."""
    _, items = _split_query(text)
    if not items and not re.search(r"^\s*query\s*\{", text, re.M):
        return None
    thresholds: list[tuple[str, int]] = []
    fields: dict = {}
    scales: list[tuple[str, float]] = []
    for lineno, col, item in items:
        words = item.split(None, 1)
        key = words[0]
        arg = words[1].strip() if len(words) > 1 else ""
        if key == "threshold":
            for part in arg.split(","):
                m = re.fullmatch(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*>=\s*(\d+)\s*", part)
                if not m:
                    raise ModelError(f"malformed threshold {part.strip()!r}", lineno, col)
                thresholds.append((m.group(1), int(m.group(2))))
        elif key == "horizon":
            if arg in ("inf", "infinity"):
                fields["horizon"] = math.inf
            else:
                fields["horizon"] = _parse_decimal(arg, lineno, col)[0]
        elif key == "objective":
            try:
                fields["objective"] = Objective(arg)
            except ValueError:
                raise ModelError(f"unknown objective {arg!r} (mfpt|hitprob)", lineno, col) from None
        elif key == "order":
            if not arg.isdigit():
                raise ModelError(f"order must be an integer, got {arg!r}", lineno, col)
            fields["order"] = int(arg)
        elif key == "timescale":
            fields["time_scale_hint"] = _parse_decimal(arg, lineno, col)[0]
        elif key == "scale":
            m = re.fullmatch(rf"([A-Za-z_][A-Za-z0-9_]*)\s+({_DECIMAL})", arg)
            if not m:
                raise ModelError("malformed scale item (expected scale <species> <value>)", lineno, col)
            scales.append((m.group(1), float(m.group(2))))
        else:
            raise ModelError(f"unknown query item {key!r}", lineno, col)
    try:
        query = FptQuery(tuple(thresholds), scale_bounds=tuple(scales), **fields)
    except ModelError as exc:
        raise ModelError(f"invalid query: {exc}") from None
    if model is not None:
        for nm, _ in query.thresholds + query.scale_bounds:
            model.index(nm)
    return query


def load(path, name: str | None = None) -> tuple[Pctmc, FptQuery | None]:
    from pathlib import Path

    path = Path(path)
    text = path.read_text(encoding="utf-8")
    model = parse_model(text, name or path.stem)
    return model, parse_query(text, model)


def _format_rate(value: float) -> str:
    return repr(float(value))


def serialize_model(model: Pctmc) -> str:
    lines = [f"# {model.name}"]
    # declaration order must survive, so group consecutive runs of one kind
    run_kind, run = None, []
    for s in model.species:
        if s.kind != run_kind and run:
            lines.append(("mode species " if run_kind is SpeciesKind.MODE else "species ") + " ".join(run))
            run = []
        run_kind = s.kind
        run.append(s.name)
    if run:
        lines.append(("mode species " if run_kind is SpeciesKind.MODE else "species ") + " ".join(run))
    lines.append("init " + " ".join(f"{s.name}={s.initial_count}" for s in model.species))
    for r in model.reactions:
        rate = f"poly({r.propensity.to_string(model.names, mul='*')})" if r.propensity is not None else _format_rate(r.rate_constant)
        lines.append(f"reaction {_format_side(r.consume, model)} -> {_format_side(r.produce, model)} @ {rate}")
    return "\n".join(lines) + "\n"


def _format_side(vec: Sequence[int], model: Pctmc) -> str:
    parts = []
    for c, s in zip(vec, model.species):
        if c == 1:
            parts.append(s.name)
        elif c > 1:
            parts.append(f"{c} {s.name}")
    return " + ".join(parts) if parts else "0"


def serialize_query(query: FptQuery) -> str:
    items = ["threshold " + ", ".join(f"{s} >= {h}" for s, h in query.thresholds)]
    items.append("horizon " + ("inf" if not query.finite else repr(float(query.horizon))))
    items.append(f"objective {query.objective.value}")
    items.append(f"order {query.order}")
    if query.time_scale_hint is not None:
        items.append(f"timescale {query.time_scale_hint!r}")
    for s, v in query.scale_bounds:
        items.append(f"scale {s} {v!r}")
    return "query { " + "; ".join(items) + "; }\n"


# --------------------------------------------------------------------------
# semantics


def propensity_polynomial(model: Pctmc, j: int) -> Polynomial:
    """Mass-action propensity a_j * prod_i binom(x_i, consume_i) over (t, species...)."""
    r = model.reactions[j]
    n = len(model.species)
    if r.propensity is not None:
        return r.propensity.embed(n + 1, range(1, n + 1))
    out = Polynomial.constant(n + 1, as_fraction(r.rate_constant))
    for i, c in enumerate(r.consume):
        if c:
            out = out * falling_binomial(n + 1, i + 1, c)
    return out


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.severity.upper()}: {self.message}"


def reachable_modes(model: Pctmc) -> list[tuple[int, ...]]:
    """Mode assignments reachable from x0 through mode-changing reactions.

    Population counts are ignored, so this over-approximates reachability.
    Assignments leaving {0,1} are skipped here and reported by :func:`validate`.
    """
    idx = model.mode_indices
    if not idx:
        return []
    start = tuple(model.x0[i] for i in idx)
    seen = {start}
    stack = [start]
    while stack:
        y = stack.pop()
        for r in model.reactions:
            if any(r.consume[i] > y[k] for k, i in enumerate(idx)):
                continue
            nxt = tuple(y[k] + r.change[i] for k, i in enumerate(idx))
            if nxt != y and all(v in (0, 1) for v in nxt) and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return sorted(seen, reverse=True)


def _mode_escapes(model: Pctmc) -> list[str]:
    idx = model.mode_indices
    if not idx:
        return []
    start = tuple(model.x0[i] for i in idx)
    seen, stack, problems = {start}, [start], []
    while stack:
        y = stack.pop()
        for j, r in enumerate(model.reactions):
            if any(r.consume[i] > y[k] for k, i in enumerate(idx)):
                continue
            if r.propensity is not None:
                p = r.propensity
                for k, i in enumerate(idx):
                    p = p.substitute(i, y[k])
                if p.is_zero():
                    continue
            nxt = tuple(y[k] + r.change[i] for k, i in enumerate(idx))
            if not all(v in (0, 1) for v in nxt):
                problems.append(f"reaction {j + 1} takes mode assignment {y} to {nxt}")
                continue
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return problems


def validate(model: Pctmc, query: FptQuery, scaling: bool = True) -> list[Diagnostic]:
    """Structural checks the relaxation relies on. Never raises."""
    out: list[Diagnostic] = []
    names = model.names
    thr = {}
    for s, h in query.thresholds:
        if s not in names:
            out.append(Diagnostic("error", f"threshold species {s!r} is not declared"))
            continue
        i = names.index(s)
        if model.species[i].kind is SpeciesKind.MODE:
            out.append(Diagnostic("error", f"threshold species {s} is a mode species"))
            continue
        if h <= model.x0[i]:
            out.append(Diagnostic("error", f"threshold {s} >= {h} already holds at the initial state"))
        thr[i] = h
    for nm, _ in query.scale_bounds:
        if nm not in names:
            out.append(Diagnostic("error", f"scale bound for undeclared species {nm!r}"))
    for j, r in enumerate(model.reactions):
        for i in thr:
            if r.change[i] > 1:
                out.append(Diagnostic(
                    "error",
                    f"reaction {j + 1} increases threshold species {names[i]} by {r.change[i]}; "
                    "jumps above +1 can overshoot the threshold",
                ))
    for msg in _mode_escapes(model):
        out.append(Diagnostic("error", f"mode species leave {{0,1}}: {msg}"))
    if not query.finite and query.time_scale_hint is None and scaling:
        out.append(Diagnostic("error", "infinite horizon needs a time scale (query item 'timescale') when scaling is on"))
    if thr:
        try:
            kept = reduce_model(model, query)[1]
        except ModelError:
            kept = list(range(len(names)))
        bounded = set(thr)
        declared = {nm for nm, _ in query.scale_bounds}
        for i in kept:
            if model.species[i].kind is SpeciesKind.POPULATION and i not in bounded:
                note = "" if names[i] in declared else "; its scale will come from a simulation pilot"
                out.append(Diagnostic("warning", f"species {names[i]} has no threshold and is unbounded{note}"))
    return out


def reduce_model(model: Pctmc, query: FptQuery) -> tuple[Pctmc, list[int]]:
    """Drop species that cannot influence any threshold species.

    A species influences another when it appears in the propensity of a
    reaction that changes the other. Returns the reduced model and the kept
    original indices.
    """
    n = len(model.species)
    kept = {model.index(s) for s, _ in query.thresholds}
    depends = []
    for j, r in enumerate(model.reactions):
        if r.propensity is not None:
            deps = {i for i in range(n) if r.propensity.degree_in(i) > 0}
        else:
            deps = {i for i in range(n) if r.consume[i] > 0}
        depends.append(deps)
    changed = True
    while changed:
        changed = False
        for j, r in enumerate(model.reactions):
            if any(r.change[i] for i in kept):
                new = depends[j] - kept
                if new:
                    kept |= new
                    changed = True
    order = sorted(kept)
    reactions = []
    for j, r in enumerate(model.reactions):
        if not any(r.change[i] for i in order):
            continue
        prop = r.propensity.project(order) if r.propensity is not None else None
        reactions.append(Reaction(
            tuple(r.consume[i] for i in order),
            tuple(r.produce[i] for i in order),
            r.rate_constant,
            prop,
        ))
    reduced = Pctmc(tuple(model.species[i] for i in order), tuple(reactions), model.name)
    return reduced, order
