"""Moment and localizing matrices, scaling, and assembly of the relaxation.

Every measure (occupation, one per threshold face, horizon; one set per mode
for models with mode species) gets a moment matrix over the graded-lex basis
of order r, plus localizing matrices that pin its support to the box
[0, T] x prod [0, H_s] (``t >= 0`` / ``x >= 0`` where no bound exists).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .constraints import (
    HIT_FACE,
    HORIZON_FACE,
    OCCUPATION,
    FptSystem,
    LinearMomentConstraint,
    Measure,
    MomentVar,
    constraint_set,
)
from .model import FptQuery, Objective, Pctmc
from .poly import Polynomial, as_fraction, monomials_upto

MINIMIZE = "min"
MAXIMIZE = "max"


@dataclass(frozen=True)
class MomentBasis:
    variables: tuple[str, ...]
    monomials: tuple[tuple[int, ...], ...]

    @classmethod
    def of_order(cls, variables: Sequence[str], order: int) -> "MomentBasis":
        return cls(tuple(variables), tuple(monomials_upto(len(variables), order)))

    def __len__(self) -> int:
        return len(self.monomials)


@dataclass(frozen=True)
class MatrixSpec:
    """PSD block: moment matrix of ``measure`` over ``basis``, optionally localized by ``localizer``."""

    measure: Measure
    basis: MomentBasis
    localizer: Polynomial | None = None
    label: str = ""

    @property
    def size(self) -> int:
        return len(self.basis)

    def entry(self, i: int, j: int) -> dict[MomentVar, Fraction]:
        a, b = self.basis.monomials[i], self.basis.monomials[j]
        ab = tuple(x + y for x, y in zip(a, b))
        if self.localizer is None:
            return {MomentVar(self.measure, ab): Fraction(1)}
        out = {}
        for g, c in self.localizer.items():
            out[MomentVar(self.measure, tuple(x + y for x, y in zip(g, ab)))] = c
        return out

    def entries(self):
        """(i, j, {var: coeff}) over the upper triangle, row major."""
        for i in range(self.size):
            for j in range(i, self.size):
                yield i, j, self.entry(i, j)

    def variables(self) -> set[MomentVar]:
        out = set()
        for _, _, e in self.entries():
            out.update(e)
        return out

    def evaluate(self, values) -> np.ndarray:
        """Numeric matrix at moment values (mapping MomentVar -> float)."""
        n = self.size
        out = np.zeros((n, n))
        for i, j, e in self.entries():
            out[i, j] = out[j, i] = sum(float(c) * values[v] for v, c in e.items())
        return out


@dataclass
class ScalingVector:
    """Positive per-moment scale factors plus the basis scales used for blocks."""

    time_scale: float
    species_scales: list[float]
    factors: dict[MomentVar, float] = field(default_factory=dict)

    def __getitem__(self, var: MomentVar) -> float:
        if var not in self.factors:
            self.factors[var] = self.moment_scale(var)
        return self.factors[var]

    def moment_scale(self, var: MomentVar) -> float:
        meas = var.measure
        out = 1.0
        if meas.kind == OCCUPATION:
            out = self.time_scale ** (var.exps[0] + 1)
            species = range(len(self.species_scales))
            state = var.exps[1:]
        elif meas.kind == HIT_FACE:
            out = self.time_scale ** var.exps[0]
            species = [i for i in range(len(self.species_scales)) if i != meas.face]
            state = var.exps[1:]
        else:
            species = range(len(self.species_scales))
            state = var.exps
        for i, e in zip(species, state):
            out *= self.species_scales[i] ** e
        return out

    def variable_scales(self, system: FptSystem, measure: Measure) -> list[float]:
        scales = [self.species_scales[i] for i in system.measure_species(measure)]
        return ([self.time_scale] if system.has_time(measure) else []) + scales

    def basis_scale(self, system: FptSystem, spec: MatrixSpec) -> np.ndarray:
        """sqrt of the scale of the squared basis monomial, so diagonals are O(1)."""
        var_scales = self.variable_scales(system, spec.measure)
        out = []
        for mono in spec.basis.monomials:
            sq = MomentVar(spec.measure, tuple(2 * e for e in mono))
            out.append(math.sqrt(self[sq]))
        del var_scales
        return np.array(out)

    def localizer_scale(self, system: FptSystem, spec: MatrixSpec) -> float:
        if spec.localizer is None:
            return 1.0
        var_scales = self.variable_scales(system, spec.measure)
        deg = 0.0
        for exps, _ in spec.localizer.items():
            s = 1.0
            for v, e in zip(var_scales, exps):
                s *= v ** e
            deg = max(deg, s)
        return deg


@dataclass
class SdpProblem:
    system: FptSystem
    blocks: list[MatrixSpec]
    equalities: list[LinearMomentConstraint]
    objective: list[MomentVar]
    sense: str
    var_index: list[MomentVar]
    bounds: list[tuple[MomentVar, float, float | None]] = field(default_factory=list)
    scaling: ScalingVector | None = None

    def index_of(self) -> dict[MomentVar, int]:
        return {v: i for i, v in enumerate(self.var_index)}

    @property
    def order(self) -> int:
        return max(max(sum(m) for m in b.basis.monomials) for b in self.blocks)

    def numeric(self):
        """Scaled numeric data: see :class:`NumericProblem`."""
        return NumericProblem.from_problem(self)

    def to_json(self) -> dict:
        idx = self.index_of()
        return {
            "sense": self.sense,
            "variables": [v.name() for v in self.var_index],
            "objective": [idx[v] for v in self.objective],
            "blocks": [
                {
                    "label": b.label,
                    "measure": b.measure.kind,
                    "size": b.size,
                    "entries": [
                        [i, j, [[idx[v], float(c)] for v, c in e.items()]] for i, j, e in b.entries()
                    ],
                }
                for b in self.blocks
            ],
            "equalities": [
                {"terms": [[idx[v], float(c)] for v, c in eq.terms], "constant": float(eq.constant)}
                for eq in self.equalities
            ],
            "bounds": [[idx[v], lo, hi] for v, lo, hi in self.bounds],
            "scaling": None if self.scaling is None else [self.scaling[v] for v in self.var_index],
        }


@dataclass
class NumericProblem:
    """Floating point form over scaled moments v' = v / scale.

    ``blocks[b]`` is a list of (i, j, var, coeff) entries of block b (upper
    triangle), already divided by the block's congruence scaling. Equalities
    read ``A v' = rhs``; the objective is ``c @ v'`` (always as written, the
    sense is kept separately).
    """

    sizes: list[int]
    blocks: list[list[tuple[int, int, int, float]]]
    A: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    scales: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str

    @classmethod
    def from_problem(cls, problem: SdpProblem) -> "NumericProblem":
        idx = problem.index_of()
        n = len(problem.var_index)
        sc = problem.scaling
        scales = np.array([sc[v] if sc is not None else 1.0 for v in problem.var_index])
        sizes, blocks = [], []
        for spec in problem.blocks:
            if sc is not None:
                b = sc.basis_scale(problem.system, spec)
                ls = sc.localizer_scale(problem.system, spec)
            else:
                b = np.ones(spec.size)
                ls = 1.0
            entries = []
            for i, j, e in spec.entries():
                denom = b[i] * b[j] * ls
                for v, coeff in e.items():
                    entries.append((i, j, idx[v], float(coeff) * scales[idx[v]] / denom))
            sizes.append(spec.size)
            blocks.append(entries)
        A = np.zeros((len(problem.equalities), n))
        rhs = np.zeros(len(problem.equalities))
        for r, eq in enumerate(problem.equalities):
            for v, coeff in eq.terms:
                A[r, idx[v]] += float(coeff) * scales[idx[v]]
            rhs[r] = -float(eq.constant)
            norm = np.abs(A[r]).max()
            if norm > 0:
                A[r] /= norm
                rhs[r] /= norm
        c = np.zeros(n)
        for v in problem.objective:
            c[idx[v]] += scales[idx[v]]
        lower = np.full(n, -np.inf)
        upper = np.full(n, np.inf)
        for v, lo, hi in problem.bounds:
            k = idx[v]
            lower[k] = lo / scales[k]
            if hi is not None:
                upper[k] = hi / scales[k]
        return cls(sizes, blocks, A, rhs, c, scales, lower, upper, problem.sense)

    def block_matrix(self, b: int, v: np.ndarray) -> np.ndarray:
        n = self.sizes[b]
        out = np.zeros((n, n))
        for i, j, k, coeff in self.blocks[b]:
            out[i, j] += coeff * v[k]
        return out + np.triu(out, 1).T


def localizers(system: FptSystem, measure: Measure, species_bounds: dict[int, float] | None = None) -> list[tuple[str, Polynomial]]:
    """Support-defining polynomials for ``measure`` over its own variables."""
    names = system.measure_variables(measure)
    nv = len(names)
    out = []
    pos = 0
    if system.has_time(measure):
        t = Polynomial.variable(nv, 0)
        if system.finite:
            out.append(("u_T", t.scale(system.T) - t * t))
        else:
            out.append(("t", t))
        pos = 1
    for k, i in enumerate(system.measure_species(measure)):
        x = Polynomial.variable(nv, pos + k)
        if i in system.thresholds:
            h = Fraction(system.thresholds[i])
            if system.tight_support and measure.kind != HIT_FACE:
                # before the exit the species sits at most one below its threshold
                out.append((f"u_H-1[{system.pop_names[i]}]", x.scale(h - 1) - x * x))
            else:
                out.append((f"u_H[{system.pop_names[i]}]", x.scale(h) - x * x))
        else:
            out.append((system.pop_names[i], x))
    return out


def build_blocks(system: FptSystem, order: int, full_localizers: bool = False) -> list[MatrixSpec]:
    """Moment and localizing matrices for every measure.

    With ``full_localizers`` the localizing matrices use the order-r basis
    (entries up to degree 2r + deg u); otherwise the basis is cut to order
    r - ceil(deg u / 2) so every entry stays within degree 2r.
    """
    blocks = []
    for meas in system.measures():
        names = system.measure_variables(meas)
        tag = _measure_tag(system, meas)
        blocks.append(MatrixSpec(meas, MomentBasis.of_order(names, order), None, f"M_{order}({tag})"))
        for lname, u in localizers(system, meas):
            r = order if full_localizers else order - (u.degree + 1) // 2
            if r < 0:
                continue
            blocks.append(MatrixSpec(meas, MomentBasis.of_order(names, r), u, f"M_{r}({lname}, {tag})"))
    return blocks


def _measure_tag(system: FptSystem, meas: Measure) -> str:
    if meas.kind == OCCUPATION:
        tag = "z"
    elif meas.kind == HIT_FACE:
        tag = f"y1[{system.pop_names[meas.face]}]"
    else:
        tag = "y2"
    if meas.mode is not None:
        tag += "@y=" + "".join(map(str, meas.mode))
    return tag


def scaling_vector(system: FptSystem, species_scales: dict[str, float] | None = None) -> ScalingVector:
    """Scales d = T^(k+1) prod H^m (occupation), T^k prod H^m (faces), prod H^m (horizon).

    The time scale is the query's time scale hint when given, else the horizon. Species without a threshold take their scale from
    ``species_scales`` (falling back to the query's ``scale`` items).
    """
    q = system.query
    if q.time_scale_hint is not None:
        ts = float(q.time_scale_hint)
    elif system.finite:
        ts = float(q.horizon)
    else:
        raise ValueError("infinite horizon needs a time scale hint for scaling")
    given = dict(q.scale_bounds)
    given.update(species_scales or {})
    out = []
    for i, name in enumerate(system.pop_names):
        if i in system.thresholds:
            out.append(float(system.thresholds[i]))
        elif name in given:
            out.append(float(given[name]))
        else:
            raise ValueError(f"no scale bound for unbounded species {name}")
    return ScalingVector(ts, out)


def moment_upper_bound(system: FptSystem, var: MomentVar) -> float | None:
    """A valid upper bound from the box support, or None when a factor is unbounded."""
    meas = var.measure
    bound = 1.0
    if meas.kind == OCCUPATION:
        if not system.finite:
            return None
        k = var.exps[0]
        bound = float(system.T) ** (k + 1) / (k + 1)
    elif meas.kind == HIT_FACE:
        if not system.finite and var.exps[0] > 0:
            return None
        bound = float(system.T) ** var.exps[0] if var.exps[0] else 1.0
    species = system.measure_species(meas)
    state = var.exps if meas.kind == HORIZON_FACE else var.exps[1:]
    for i, e in zip(species, state):
        if e == 0:
            continue
        if i not in system.thresholds:
            return None
        bound *= float(system.thresholds[i]) ** e
    return bound


def assemble(
    model: Pctmc | FptSystem,
    query: FptQuery,
    sense: str = MINIMIZE,
    *,
    scale: bool = True,
    species_scales: dict[str, float] | None = None,
    full_localizers: bool = False,
    reduce: bool = True,
    order: int | None = None,
    tight_support: bool = True,
) -> SdpProblem:
    """Build the relaxation of order ``query.order`` (or ``order``)."""
    system = model if isinstance(model, FptSystem) else FptSystem(model, query, reduce, tight_support)
    order = order or query.order
    if sense not in (MINIMIZE, MAXIMIZE):
        raise ValueError(f"sense must be {MINIMIZE!r} or {MAXIMIZE!r}")
    eqs = constraint_set(system, query, order=order)
    blocks = build_blocks(system, order, full_localizers)
    objective = system.objective_vars(query.objective)
    block_vars: set[MomentVar] = set()
    for b in blocks:
        block_vars |= b.variables()
    for eq in eqs:
        for v, _ in eq.terms:
            if v.degree > 2 * order:
                raise AssertionError(f"constraint references {v} beyond degree {2 * order}")
            if v not in block_vars:
                raise AssertionError(f"{v} is not controlled by any PSD block")
    var_index = sorted(block_vars, key=MomentVar.sort_key)
    bounds = []
    for v in var_index:
        if v.degree > 2 * order:
            bounds.append((v, 0.0, moment_upper_bound(system, v)))
    scaling = scaling_vector(system, species_scales) if scale else None
    return SdpProblem(system, blocks, eqs, objective, sense, var_index, bounds, scaling)
