"""Martingale moment constraints for stopped population processes.

For f(x) = x^m and w(t) = t^k the stopped process

    Z = tau^k X_tau^m - 0^k x0^m - int_0^tau (k t^(k-1) x^m + t^k (L x^m)) dt

has zero mean, where L is the generator. Splitting the exit term by where the
process stops (on a threshold face, or at the horizon) gives one linear
relation between moments of the occupation measure and the exit measures.
Models with mode species get one relation per mode assignment, built from
partial moments E[... ; modes = y].
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .model import FptQuery, ModelError, Pctmc, SpeciesKind, propensity_polynomial, reachable_modes, reduce_model
from .poly import Polynomial, as_fraction, grlex_key, monomials_upto

OCCUPATION = "z"
HIT_FACE = "y1"
HORIZON_FACE = "y2"


@dataclass(frozen=True)
class Measure:
    """Which measure a moment belongs to.

    ``face`` is the position of the threshold species among the population
    species (hit-face measures only); ``mode`` is the mode assignment for
    models with mode species.
    """

    kind: str
    face: int | None = None
    mode: tuple[int, ...] | None = None

    def sort_key(self) -> tuple:
        kinds = {OCCUPATION: 0, HIT_FACE: 1, HORIZON_FACE: 2}
        return (tuple(-b for b in self.mode) if self.mode else (), kinds[self.kind], -1 if self.face is None else self.face)


@dataclass(frozen=True)
class MomentVar:
    """Moment of ``measure`` with exponents ``exps`` over that measure's variables.

    Occupation and hit-face measures list time first; the horizon face has no
    time variable and a hit face omits its own (pinned) species.
    """

    measure: Measure
    exps: tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.exps)

    @property
    def time_exp(self) -> int:
        return 0 if self.measure.kind == HORIZON_FACE else self.exps[0]

    @property
    def state_exp(self) -> tuple[int, ...]:
        return self.exps if self.measure.kind == HORIZON_FACE else self.exps[1:]

    def sort_key(self) -> tuple:
        return (self.measure.sort_key(), grlex_key(self.exps))

    def name(self) -> str:
        meas = self.measure
        st = ",".join(map(str, self.state_exp))
        if meas.kind == OCCUPATION:
            base = f"z[{self.time_exp},{st}]" if st else f"z[{self.time_exp}]"
        elif meas.kind == HIT_FACE:
            base = f"y1[{meas.face}][{self.time_exp},{st}]" if st else f"y1[{meas.face}][{self.time_exp}]"
        else:
            base = f"y2[{st}]"
        if meas.mode is not None:
            base += "@y=" + "".join(map(str, meas.mode))
        return base

    def __str__(self) -> str:
        return self.name()


@dataclass(frozen=True)
class LinearMomentConstraint:
    """``0 = sum(coeff * var) + constant``; ``label`` records (k, m, mode)."""

    terms: tuple[tuple[MomentVar, Fraction], ...]
    constant: Fraction
    label: tuple = ()

    def as_dict(self) -> dict[MomentVar, Fraction]:
        return dict(self.terms)

    def coefficient(self, var: MomentVar) -> Fraction:
        return self.as_dict().get(var, Fraction(0))

    @property
    def max_degree(self) -> int:
        return max(v.degree for v, _ in self.terms)

    def evaluate(self, values) -> float:
        """Affine value at ``values`` (mapping MomentVar -> number, missing = 0)."""
        return float(self.constant) + sum(float(c) * float(values.get(v, 0.0)) for v, c in self.terms)

    def to_string(self, names: Sequence[str] | None = None) -> str:
        parts = []
        for v, c in self.terms:
            sign = "-" if c < 0 else "+"
            parts.append(f"{sign} {_num(abs(c))}*{v.name()}")
        if self.constant:
            parts.append(f"{'-' if self.constant < 0 else '+'} {_num(abs(self.constant))}")
        text = " ".join(parts)
        if text.startswith("+ "):
            text = text[2:]
        return "0 = " + text


def _num(c: Fraction) -> str:
    f = float(c)
    return repr(f) if f != int(f) else str(int(f))


def _make_constraint(acc: dict[MomentVar, Fraction], constant: Fraction, label) -> LinearMomentConstraint:
    terms = tuple(sorted(((v, c) for v, c in acc.items() if c), key=lambda vc: vc[0].sort_key()))
    return LinearMomentConstraint(terms, Fraction(constant), label)


class FptSystem:
    """A model/query pair prepared for constraint and matrix generation.

    Holds the (optionally reduced) model, population and mode species
    positions, thresholds by population position, and the horizon.
    """

    def __init__(self, model: Pctmc, query: FptQuery, reduce: bool = True, tight_support: bool = True):
        self.original = model
        self.tight_support = tight_support
        self.query = query
        if reduce:
            self.model, self.kept = reduce_model(model, query)
        else:
            self.model, self.kept = model, list(range(len(model.species)))
        m = self.model
        self.pop = m.population_indices
        self.mode_idx = m.mode_indices
        self.pop_names = [m.species[i].name for i in self.pop]
        self.npop = len(self.pop)
        self.nvars = 1 + self.npop  # time + population species
        self.thresholds: dict[int, int] = {}
        for name, h in query.thresholds:
            i = m.index(name)
            if m.species[i].kind is not SpeciesKind.POPULATION:
                raise ModelError(f"threshold species {name} must be a population species")
            self.thresholds[self.pop.index(i)] = h
        self.faces = sorted(self.thresholds)
        self.finite = query.finite
        self.T = as_fraction(query.horizon) if self.finite else None
        self.x0 = tuple(m.x0[i] for i in self.pop)
        self.hybrid = bool(self.mode_idx)
        self.modes: list[tuple[int, ...] | None] = reachable_modes(m) if self.hybrid else [None]
        self.x0_mode = tuple(m.x0[i] for i in self.mode_idx) if self.hybrid else None
        self._alpha = [propensity_polynomial(m, j) for j in range(len(m.reactions))]
        # x^m picks up deg(alpha) - 1 through the difference f(x + v) - f(x), but a
        # mode switch moves the gain term to another partial moment, so nothing cancels
        self.delta = max(
            0,
            max(self._pop_degree(j) - (0 if any(self.mode_change(j)) else 1) for j in range(len(m.reactions))),
        )

    # -- propensities ------------------------------------------------------

    def _pop_degree(self, j: int) -> int:
        p = self._alpha[j]
        deg = -1
        for exps, _ in p.items():
            deg = max(deg, sum(exps[1 + i] for i in self.pop))
        return deg

    def alpha(self, j: int, mode: tuple[int, ...] | None = None) -> Polynomial:
        """Propensity of reaction j over (t, population...) with modes fixed to ``mode``."""
        p = self._alpha[j]
        if self.hybrid:
            for k, i in enumerate(self.mode_idx):
                p = p.substitute(1 + i, mode[k])
        return p.project([0] + [1 + i for i in self.pop])

    def pop_change(self, j: int) -> tuple[int, ...]:
        ch = self.model.reactions[j].change
        return tuple(ch[i] for i in self.pop)

    def mode_change(self, j: int) -> tuple[int, ...]:
        ch = self.model.reactions[j].change
        return tuple(ch[i] for i in self.mode_idx)

    # -- measures ----------------------------------------------------------

    def measures(self) -> list[Measure]:
        out = [Measure(OCCUPATION, None, y) for y in self.modes]
        for y in self.modes:
            for s in self.faces:
                out.append(Measure(HIT_FACE, s, y))
            if self.finite:
                out.append(Measure(HORIZON_FACE, None, y))
        return sorted(out, key=Measure.sort_key)

    def measure_species(self, measure: Measure) -> list[int]:
        """Population positions that are free variables of ``measure``."""
        if measure.kind == HIT_FACE:
            return [i for i in range(self.npop) if i != measure.face]
        return list(range(self.npop))

    def has_time(self, measure: Measure) -> bool:
        return measure.kind != HORIZON_FACE

    def measure_variables(self, measure: Measure) -> list[str]:
        names = [self.pop_names[i] for i in self.measure_species(measure)]
        return (["t"] if self.has_time(measure) else []) + names

    def objective_vars(self, objective) -> list[MomentVar]:
        from .model import Objective

        out = []
        for y in self.modes:
            if objective is Objective.MFPT:
                out.append(MomentVar(Measure(OCCUPATION, None, y), (0,) * self.nvars))
            else:
                for s in self.faces:
                    out.append(MomentVar(Measure(HIT_FACE, s, y), (0,) * (self.nvars - 1)))
        return out

    def normalization(self) -> LinearMomentConstraint:
        """Exit masses sum to one."""
        acc: dict[MomentVar, Fraction] = {}
        for y in self.modes:
            for s in self.faces:
                acc[MomentVar(Measure(HIT_FACE, s, y), (0,) * (self.nvars - 1))] = Fraction(1)
            if self.finite:
                acc[MomentVar(Measure(HORIZON_FACE, None, y), (0,) * self.npop)] = Fraction(1)
        return _make_constraint(acc, Fraction(-1), ("normalization",))


def _system(model, query, reduce=True) -> FptSystem:
    if isinstance(model, FptSystem):
        return model
    return FptSystem(model, query, reduce)


def generator_polynomial(model: Pctmc, m: Sequence[int]) -> Polynomial:
    """sum_j (shift(x^m, v_j) - x^m) * alpha_j(x) over (t, species...).

    ``m`` has one entry per variable, time first (which must be 0).
    """
    m = tuple(m)
    n = len(model.species)
    if len(m) != n + 1:
        raise ValueError(f"exponent needs {n + 1} entries (time first)")
    if m[0] != 0:
        raise ValueError("generator is applied to state monomials only")
    mono = Polynomial.monomial(m)
    out = Polynomial.zero(n + 1)
    for j, r in enumerate(model.reactions):
        if not any(r.change):
            continue
        out = out + (mono.shift(r.change) - mono) * propensity_polynomial(model, j)
    return out


def mode_generator(system: FptSystem, m: Sequence[int], mode: tuple[int, ...] | None) -> dict:
    """Generator of the partial moment E[x^m; modes = mode] by source mode.

    Returns {source mode: polynomial g} with d/dt E[x^m 1_mode] = sum E[g(X) 1_source].
    Without mode species the single key is None.
    """
    m = tuple(m)
    mono = Polynomial.monomial(m)
    out: dict = {}

    def add(key, p):
        if p.is_zero():
            return
        out[key] = out[key] + p if key in out else p

    reachable = set(system.modes)
    for j in range(len(system.model.reactions)):
        v = system.pop_change(j)
        if not system.hybrid:
            if any(v):
                add(None, (mono.shift(v) - mono) * system.alpha(j))
            continue
        vh = system.mode_change(j)
        src = tuple(a - b for a, b in zip(mode, vh))
        if all(b in (0, 1) for b in src) and src in reachable:
            add(src, mono.shift(v) * system.alpha(j, src))
        add(mode, -(mono * system.alpha(j, mode)))
    return {k: p for k, p in out.items() if not p.is_zero()}


def martingale_constraint(
    model, query: FptQuery, m: Sequence[int], k: int, mode=None, reduce: bool = True, _balance: bool = False
) -> LinearMomentConstraint:
    """E[Z_tau] = 0 for f = x^m, w = t^k, as a linear moment constraint.

    ``m`` lists population exponents of the (reduced) model; a leading time
    entry of zero is accepted too. ``model`` may be an :class:`FptSystem`.
    """
    system = _system(model, query, reduce)
    m = tuple(m)
    if len(m) == system.nvars:
        if m[0] != 0:
            raise ValueError("time exponent goes in k")
        m = m[1:]
    if len(m) != system.npop:
        raise ValueError(f"exponent needs {system.npop} population entries")
    if system.hybrid and mode is None:
        raise ValueError("model has mode species; use hybrid_constraint")
    if k == 0 and not any(m) and not (system.hybrid and _balance):
        raise ValueError("(m, k) = (0, 0) is degenerate")
    acc: dict[MomentVar, Fraction] = {}

    def add(var, c):
        acc[var] = acc.get(var, Fraction(0)) + c

    occ = Measure(OCCUPATION, None, mode)
    if k >= 1:
        add(MomentVar(occ, (k - 1,) + m), Fraction(-k))
    gen = mode_generator(system, (0,) + m, mode)
    for src, poly in gen.items():
        src_occ = Measure(OCCUPATION, None, src)
        for exps, c in poly.items():
            add(MomentVar(src_occ, (k,) + exps[1:]), -c)
    for s in system.faces:
        h = Fraction(system.thresholds[s]) ** m[s]
        rest = tuple(e for i, e in enumerate(m) if i != s)
        add(MomentVar(Measure(HIT_FACE, s, mode), (k,) + rest), h)
    if system.finite:
        add(MomentVar(Measure(HORIZON_FACE, None, mode), m), system.T ** k)
    constant = Fraction(0)
    if k == 0 and (mode is None or mode == system.x0_mode):
        constant = -Fraction(_mono_value(system.x0, m))
    return _make_constraint(acc, constant, (k, m, mode))


def hybrid_constraint(model, query: FptQuery, m: Sequence[int], k: int, y: Sequence[int], reduce: bool = True) -> LinearMomentConstraint:
    """Mode-conditioned constraint for partial moments with modes fixed to ``y``."""
    system = _system(model, query, reduce)
    if not system.hybrid:
        raise ValueError("model has no mode species")
    y = tuple(y)
    if len(y) != len(system.mode_idx) or any(b not in (0, 1) for b in y):
        raise ValueError(f"mode assignment {y} is not in {{0,1}}^{len(system.mode_idx)}")
    return martingale_constraint(system, query, m, k, mode=y)


def mode_balance_constraint(model, query: FptQuery, y: Sequence[int], reduce: bool = True) -> LinearMomentConstraint:
    """The f = 1, w = 1 constraint restricted to mode ``y``.

    Vacuous without modes, but with them it equates the exit mass in mode y
    with the initial indicator plus the net switching flow into y.
    """
    system = _system(model, query, reduce)
    if not system.hybrid:
        raise ValueError("model has no mode species")
    return martingale_constraint(system, query, (0,) * system.npop, 0, mode=tuple(y), _balance=True)


def _mono_value(x: Sequence[int], m: Sequence[int]) -> int:
    out = 1
    for xi, mi in zip(x, m):
        out *= xi ** mi
    return out


def constraint_pairs(system: FptSystem, order: int) -> list[tuple[int, tuple[int, ...]]]:
    """(k, m) with 1 <= k + |m| <= 2r - delta, sorted graded-lex on (k, m)."""
    top = 2 * order - system.delta
    if top < 1:
        raise ValueError(
            f"order {order} is too small for propensities of degree {system.delta + 1} (need 2r - {system.delta} >= 1)"
        )
    pairs = []
    for exps in monomials_upto(system.nvars, top):
        if sum(exps) >= 1:
            pairs.append((exps[0], exps[1:]))
    return pairs


def constraint_set(model, query: FptQuery, reduce: bool = True, order: int | None = None) -> list[LinearMomentConstraint]:
    """Every martingale constraint the degree policy admits, plus normalization.

    Hybrid models get one constraint per mode, each mode led by its balance
    constraint; output is sorted by (mode, k, m).
    """
    system = _system(model, query, reduce)
    order = order or query.order
    pairs = constraint_pairs(system, order)
    out = []
    for y in system.modes:
        if system.hybrid:
            out.append(mode_balance_constraint(system, query, y))
        for k, m in pairs:
            c = martingale_constraint(system, query, m, k, mode=y)
            if c.terms:
                out.append(c)
    out.append(system.normalization())
    return out


def format_generator(system: FptSystem, m: Sequence[int], mode=None) -> str:
    """``dE[M]/dt = ...`` rendering of the moment equation for x^m."""
    m = tuple(m)
    if len(m) != system.npop:
        raise ValueError(f"exponent needs {system.npop} population entries")
    lhs = "*".join(
        (f"{system.pop_names[i]}^{e}" if e > 1 else system.pop_names[i]) for i, e in enumerate(m) if e
    ) or "1"
    gen = mode_generator(system, (0,) + m, mode)
    parts = []
    for src in sorted(gen, key=lambda s: () if s is None else tuple(-b for b in s)):
        for exps, c in gen[src].items():
            mono = "*".join(
                (f"{system.pop_names[i]}^{e}" if e > 1 else system.pop_names[i])
                for i, e in enumerate(exps[1:]) if e
            )
            tag = "" if src is None else "@y=" + "".join(map(str, src))
            term = f"E[{mono}{tag}]" if mono else (f"P[y={''.join(map(str, src))}]" if src is not None else "")
            coeff = _num(abs(c))
            if term:
                body = term if abs(c) == 1 else f"{coeff}*{term}"
            else:
                body = coeff
            parts.append(("-" if c < 0 else "+", body))
    if not parts:
        rhs = "0"
    else:
        rhs = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            rhs += f" {sign} {body}"
    tag = "" if mode is None else "; y=" + "".join(map(str, mode))
    return f"dE[{lhs}{tag}]/dt = {rhs}"


def iter_vars(constraints: Iterable[LinearMomentConstraint]):
    seen = set()
    for c in constraints:
        for v, _ in c.terms:
            if v not in seen:
                seen.add(v)
                yield v
