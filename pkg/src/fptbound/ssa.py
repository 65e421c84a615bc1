"""Direct-method stochastic simulation of first passage times.

Every trajectory draws from its own counter-based stream (SplitMix64 keyed
by the run seed and the trajectory number), so results do not depend on
thread count or backend. The hot loop is a numba kernel; setting
``FPTBOUND_NO_NUMBA=1`` switches to a numpy implementation that advances all
trajectories in lockstep.

Along each path the integrals of t^k X^m (optionally restricted to one mode
assignment) are accumulated exactly: X is constant between jumps, so each
interval contributes x^m (b^(k+1) - a^(k+1)) / (k+1).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .constraints import HIT_FACE, HORIZON_FACE, OCCUPATION, FptSystem, LinearMomentConstraint, MomentVar
from .model import FptQuery, Pctmc, SpeciesKind, propensity_polynomial

HORIZON = -1
DIVERGED = -2

# per-trajectory status flags
OK = 0
STALLED = 1  # all propensities zero before absorption
EVENT_LIMIT = 2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53 = 1.0 / 9007199254740992.0


def _numba_wanted() -> bool:
    return os.environ.get("FPTBOUND_NO_NUMBA", "").strip().lower() in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip the TBB probe, which warns on hosts with an old TBB
        numba.config.THREADING_LAYER = "omp"
except ImportError:  # pragma: no cover - numba is a hard dependency, but keep the fallback usable
    HAVE_NUMBA = False


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and _numba_wanted() else "numpy"


def _threads() -> int | None:
    raw = os.environ.get("FPTBOUND_THREADS")
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        return None


# -- random streams -----------------------------------------------------------


def _mix(z):
    """SplitMix64 finalizer, works on numpy uint64 scalars and arrays alike."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def trajectory_keys(seed: int, n: int) -> np.ndarray:
    """Starting states of the per-trajectory streams."""
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        idx = np.arange(n, dtype=np.uint64)
        return _mix(_mix(base * _GOLDEN + np.uint64(0x632BE59BD9B4E019)) + idx * _GOLDEN)


# -- compiled model data -------------------------------------------------------


@dataclass(frozen=True)
class IntegralKey:
    """Request for the path integral of t^k prod x_i^m_i, restricted to a mode if given.

    ``m`` runs over all species of the simulated model; ``mode`` over its mode
    species (in model order).
    """

    k: int
    m: tuple[int, ...]
    mode: tuple[int, ...] | None = None


@dataclass
class _Compiled:
    x0: np.ndarray
    change: np.ndarray  # (R, S)
    term_rxn: np.ndarray  # (P,)
    term_coef: np.ndarray  # (P,)
    term_exps: np.ndarray  # (P, S)
    thr_idx: np.ndarray
    thr_h: np.ndarray
    horizon: float
    int_k: np.ndarray
    int_m: np.ndarray  # (I, S)
    int_modemask: np.ndarray  # (I, S) 1 where the species value must match
    int_modeval: np.ndarray  # (I, S)
    int_closed: np.ndarray  # (I,) 1 when x^m == 1 and no mode restriction


def _compile(model: Pctmc, query: FptQuery, keys: Sequence[IntegralKey]) -> _Compiled:
    S = len(model.species)
    R = len(model.reactions)
    change = np.array([r.change for r in model.reactions], dtype=np.int64).reshape(R, S)
    rxn, coef, exps = [], [], []
    for j in range(R):
        poly = propensity_polynomial(model, j)
        for e, c in poly.items():
            rxn.append(j)
            coef.append(float(c))
            exps.append(e[1:])
    thr = [(model.index(name), h) for name, h in query.thresholds]
    mode_pos = model.mode_indices
    I = len(keys)
    int_m = np.zeros((I, S), dtype=np.int64)
    mask = np.zeros((I, S), dtype=np.int64)
    val = np.zeros((I, S), dtype=np.int64)
    closed = np.zeros(I, dtype=np.int64)
    for q, key in enumerate(keys):
        if len(key.m) != S:
            raise ValueError(f"integral exponent {key.m} needs {S} entries")
        int_m[q] = key.m
        if key.mode is not None:
            if len(key.mode) != len(mode_pos):
                raise ValueError(f"mode {key.mode} needs {len(mode_pos)} entries")
            for p, b in zip(mode_pos, key.mode):
                mask[q, p] = 1
                val[q, p] = b
        closed[q] = int(key.mode is None and not any(key.m))
    return _Compiled(
        x0=np.array(model.x0, dtype=np.int64),
        change=change,
        term_rxn=np.array(rxn, dtype=np.int64),
        term_coef=np.array(coef, dtype=np.float64),
        term_exps=np.array(exps, dtype=np.int64).reshape(len(rxn), S),
        thr_idx=np.array([i for i, _ in thr], dtype=np.int64),
        thr_h=np.array([h for _, h in thr], dtype=np.int64),
        horizon=float(query.horizon),
        int_k=np.array([k.k for k in keys], dtype=np.int64),
        int_m=int_m,
        int_modemask=mask,
        int_modeval=val,
        int_closed=closed,
    )


# -- numba kernel -----------------------------------------------------------------


def _kernel_py(
    keys, x0, change, term_rxn, term_coef, term_exps, thr_idx, thr_h, horizon,
    int_k, int_m, int_mask, int_val, int_closed, max_events,
    tau, hit, final, maxima, integ, status,
):
    n = keys.shape[0]
    R = change.shape[0]
    S = x0.shape[0]
    P = term_rxn.shape[0]
    I = int_k.shape[0]
    golden = np.uint64(0x9E3779B97F4A7C15)
    m1 = np.uint64(0xBF58476D1CE4E5B9)
    m2 = np.uint64(0x94D049BB133111EB)
    s30 = np.uint64(30)
    s27 = np.uint64(27)
    s31 = np.uint64(31)
    s11 = np.uint64(11)
    for traj in _prange(n):
        state = keys[traj]
        x = x0.copy()
        a = np.zeros(R)
        acc = np.zeros(I)
        mx = x0.copy()
        t = 0.0
        outcome = HORIZON
        flag = OK
        events = 0
        while True:
            for j in range(R):
                a[j] = 0.0
            for p in range(P):
                v = term_coef[p]
                for s in range(S):
                    e = term_exps[p, s]
                    if e > 0:
                        v *= float(x[s]) ** e
                a[term_rxn[p]] += v
            a0 = 0.0
            for j in range(R):
                if a[j] < 0.0:
                    a[j] = 0.0
                a0 += a[j]
            state = state + golden
            z = state
            z = (z ^ (z >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u1 = float(z >> s11) * 1.1102230246251565e-16
            state = state + golden
            z = state
            z = (z ^ (z >> s30)) * m1
            z = (z ^ (z >> s27)) * m2
            z = z ^ (z >> s31)
            u2 = float(z >> s11) * 1.1102230246251565e-16
            if a0 > 0.0:
                t_next = t - math.log(1.0 - u1) / a0
            else:
                t_next = math.inf
            end = t_next
            stop = False
            if a0 <= 0.0:
                # nothing can fire: wait out a finite horizon, otherwise the target is never reached
                flag = STALLED
                stop = True
                if horizon < math.inf:
                    end = horizon
                else:
                    outcome = DIVERGED
            elif t_next >= horizon:
                end = horizon
                stop = True
            # integrals over [t, end) at the current state
            if end > t and end < math.inf:
                for q in range(I):
                    if int_closed[q] == 1:
                        continue
                    ok = True
                    for s in range(S):
                        if int_mask[q, s] == 1 and x[s] != int_val[q, s]:
                            ok = False
                            break
                    if not ok:
                        continue
                    w = 1.0
                    for s in range(S):
                        e = int_m[q, s]
                        if e > 0:
                            w *= float(x[s]) ** e
                    k1 = int_k[q] + 1
                    acc[q] += w * (end**k1 - t**k1) / k1
            if stop:
                t = end
                break
            # pick the reaction
            target = u2 * a0
            cum = 0.0
            chosen = -1
            for j in range(R):
                cum += a[j]
                if a[j] > 0.0:
                    chosen = j
                    if target < cum:
                        break
            for s in range(S):
                x[s] += change[chosen, s]
                if x[s] > mx[s]:
                    mx[s] = x[s]
            t = t_next
            events += 1
            crossed = -1
            for f in range(thr_idx.shape[0]):
                if x[thr_idx[f]] >= thr_h[f]:
                    crossed = f
                    break
            if crossed >= 0:
                outcome = crossed
                break
            if events >= max_events:
                flag = EVENT_LIMIT
                outcome = DIVERGED
                break
        for q in range(I):
            if int_closed[q] == 1:
                k1 = int_k[q] + 1
                acc[q] = t**k1 / k1
        tau[traj] = t
        hit[traj] = outcome
        status[traj] = flag
        for s in range(S):
            final[traj, s] = x[s]
            maxima[traj, s] = mx[s]
        for q in range(I):
            integ[traj, q] = acc[q]


_prange = range
_numba_kernel = None


def _get_numba_kernel():
    global _numba_kernel, _prange
    if _numba_kernel is None:
        _prange = numba.prange
        _numba_kernel = numba.njit(parallel=True, cache=True, nogil=True)(_kernel_py)
        _prange = range
    return _numba_kernel


def _run_numba(c: _Compiled, keys: np.ndarray, max_events: int):
    n = len(keys)
    S = len(c.x0)
    out = _alloc(n, S, len(c.int_k))
    kernel = _get_numba_kernel()
    threads = _threads()
    prev = None
    if threads is not None:
        prev = numba.get_num_threads()
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    try:
        kernel(
            keys, c.x0, c.change, c.term_rxn, c.term_coef, c.term_exps, c.thr_idx, c.thr_h, c.horizon,
            c.int_k, c.int_m, c.int_modemask, c.int_modeval, c.int_closed, max_events, *out,
        )
    finally:
        if prev is not None:
            numba.set_num_threads(prev)
    return out


def _alloc(n, S, I):
    return (
        np.zeros(n),
        np.zeros(n, dtype=np.int64),
        np.zeros((n, S), dtype=np.int64),
        np.zeros((n, S), dtype=np.int64),
        np.zeros((n, I)),
        np.zeros(n, dtype=np.int64),
    )


# -- numpy lockstep fallback ---------------------------------------------------------


def _uniform(state):
    with np.errstate(over="ignore"):
        state += _GOLDEN
        z = _mix(state.copy())
    return (z >> np.uint64(11)).astype(np.float64) * _TWO53


def _run_numpy(c: _Compiled, keys: np.ndarray, max_events: int):
    n = len(keys)
    S = len(c.x0)
    R = c.change.shape[0]
    I = len(c.int_k)
    tau, hit, final, maxima, integ, status = _alloc(n, S, I)
    x = np.tile(c.x0, (n, 1))
    mx = x.copy()
    t = np.zeros(n)
    state = keys.copy()
    events = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    open_q = np.flatnonzero(c.int_closed == 0)
    while active.size:
        xa = x[active].astype(np.float64)
        a = np.zeros((active.size, R))
        for p in range(len(c.term_rxn)):
            v = np.full(active.size, c.term_coef[p])
            for s in range(S):
                e = c.term_exps[p, s]
                if e > 0:
                    v = v * xa[:, s] ** e
            a[:, c.term_rxn[p]] += v
        a = np.maximum(a, 0.0)
        a0 = np.zeros(active.size)
        for j in range(R):
            a0 = a0 + a[:, j]
        st = state[active]
        u1 = _uniform(st)
        u2 = _uniform(st)
        state[active] = st
        ta = t[active]
        with np.errstate(divide="ignore"):
            t_next = np.where(a0 > 0, ta - np.log(1.0 - u1) / np.where(a0 > 0, a0, 1.0), np.inf)
        stalled = a0 <= 0
        past = (t_next >= c.horizon) & ~(stalled & ~np.isfinite(c.horizon))
        end = np.where(past, c.horizon, t_next)
        stop = past | stalled
        finite_end = np.isfinite(end) & (end > ta)
        for q in open_q:
            sel = finite_end.copy()
            for s in range(S):
                if c.int_modemask[q, s]:
                    sel &= x[active, s] == c.int_modeval[q, s]
            if not sel.any():
                continue
            w = np.ones(active.size)
            for s in range(S):
                e = c.int_m[q, s]
                if e > 0:
                    w = w * xa[:, s] ** e
            k1 = c.int_k[q] + 1
            contrib = w * (end**k1 - ta**k1) / k1
            integ[active[sel], q] += contrib[sel]
        # finished without a jump
        done = active[stop]
        if done.size:
            t[done] = end[stop]
            hit[done] = np.where(past[stop], HORIZON, DIVERGED)
            status[done] = np.where(stalled[stop], STALLED, OK)
        go = ~stop
        idx = active[go]
        if idx.size:
            ag = a[go]
            target = u2[go] * a0[go]
            cum = np.zeros(idx.size)
            chosen = np.full(idx.size, -1)
            settled = np.zeros(idx.size, dtype=bool)
            for j in range(R):
                cum = cum + ag[:, j]
                pos = ag[:, j] > 0
                upd = pos & ~settled
                chosen[upd] = j
                settled |= pos & (target < cum)
            x[idx] += c.change[chosen]
            mx[idx] = np.maximum(mx[idx], x[idx])
            t[idx] = t_next[go]
            events[idx] += 1
            crossed = np.full(idx.size, -1)
            for f in range(len(c.thr_idx) - 1, -1, -1):
                crossed = np.where(x[idx, c.thr_idx[f]] >= c.thr_h[f], f, crossed)
            fin = crossed >= 0
            hit[idx[fin]] = crossed[fin]
            lim = ~fin & (events[idx] >= max_events)
            hit[idx[lim]] = DIVERGED
            status[idx[lim]] = EVENT_LIMIT
            still = idx[~fin & ~lim]
        else:
            still = idx
        active = still
    for q in np.flatnonzero(c.int_closed == 1):
        k1 = c.int_k[q] + 1
        integ[:, q] = t**k1 / k1
    tau[:] = t
    final[:] = x
    maxima[:] = mx
    return tau, hit, final, maxima, integ, status


# -- results --------------------------------------------------------------------


@dataclass(frozen=True)
class FptSample:
    tau: float
    hit: str  # threshold species name, "horizon", or "diverged"
    final_state: tuple[int, ...]
    trajectory_integrals: dict | None = None


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float
    confidence: float
    n: int
    std_error: float = float("nan")

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high

    def intersects(self, low: float, high: float) -> bool:
        return self.low <= high and low <= self.high

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "half_width": self.half_width,
            "confidence": self.confidence,
            "n": self.n,
            "std_error": self.std_error,
        }


@dataclass(frozen=True)
class CdfPoint:
    T: float
    p: float
    low: float
    high: float
    n: int


class SampleSet:
    """Columnar store of simulated trajectories (iterates as :class:`FptSample`)."""

    def __init__(self, model: Pctmc, query: FptQuery, keys, tau, hit, final, maxima, integrals, status, seed, backend):
        self.model = model
        self.query = query
        self.integral_keys = list(keys)
        self.tau = tau
        self.hit_index = hit
        self.final = final
        self.maxima = maxima
        self.integrals = integrals
        self.status = status
        self.seed = seed
        self.backend = backend
        self._faces = [name for name, _ in query.thresholds]

    def __len__(self) -> int:
        return len(self.tau)

    def _hit_name(self, h: int) -> str:
        if h == HORIZON:
            return "horizon"
        if h == DIVERGED:
            return "diverged"
        return self._faces[h]

    def __getitem__(self, i: int) -> FptSample:
        ints = {k: float(self.integrals[i, q]) for q, k in enumerate(self.integral_keys)} or None
        return FptSample(float(self.tau[i]), self._hit_name(int(self.hit_index[i])), tuple(int(v) for v in self.final[i]), ints)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def integral(self, key: IntegralKey) -> np.ndarray:
        return self.integrals[:, self.integral_keys.index(key)]

    @property
    def hit_any(self) -> np.ndarray:
        return self.hit_index >= 0

    @property
    def n_diverged(self) -> int:
        return int(np.sum(self.hit_index == DIVERGED))

    def warnings(self) -> list[str]:
        out = []
        stalled = int(np.sum(self.status == STALLED))
        limited = int(np.sum(self.status == EVENT_LIMIT))
        if stalled:
            out.append(f"{stalled} trajectories ran out of enabled reactions before absorption")
        if limited:
            out.append(f"{limited} trajectories hit the event limit")
        return out

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["trajectory", "tau", "hit"] + [f"final_{n}" for n in self.model.names])
        for i in range(len(self)):
            w.writerow([i, repr(float(self.tau[i])), self._hit_name(int(self.hit_index[i]))] + [int(v) for v in self.final[i]])


def simulate_fpt(
    model: Pctmc,
    query: FptQuery,
    n: int,
    seed: int = 0,
    integrals: Iterable[IntegralKey] = (),
    backend: str | None = None,
    max_events: int = 100_000_000,
) -> SampleSet:
    """Simulate ``n`` trajectories from x0 until a threshold is reached or the horizon passes."""
    if n < 1:
        raise ValueError("need at least one trajectory")
    keys = list(integrals)
    backend = backend or default_backend()
    c = _compile(model, query, keys)
    streams = trajectory_keys(seed, n)
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not available")
        out = _run_numba(c, streams, max_events)
    elif backend == "numpy":
        out = _run_numpy(c, streams, max_events)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return SampleSet(model, query, keys, *out, seed=seed, backend=backend)


# -- statistics -------------------------------------------------------------------


def estimate_mean(values: np.ndarray, confidence: float = 0.99) -> Estimate:
    """Student-t interval for the mean of i.i.d. values."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise ValueError("need at least two samples")
    mean = float(values.mean())
    se = float(values.std(ddof=1)) / math.sqrt(n)
    q = float(stats.t.ppf(0.5 + confidence / 2, n - 1))
    return Estimate(mean, q * se, confidence, n, se)


def mean_fpt(samples: SampleSet, confidence: float = 0.99) -> Estimate:
    if samples.n_diverged:
        raise ValueError(f"{samples.n_diverged} trajectories never reached the target set")
    return estimate_mean(samples.tau, confidence)


def wilson_interval(k: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def empirical_cdf(samples: SampleSet, grid: Sequence[float], confidence: float = 0.99) -> list[CdfPoint]:
    """Pr(tau < T) at each grid point, with Wilson score intervals."""
    n = len(samples)
    hit_times = np.sort(samples.tau[samples.hit_any])
    out = []
    for T in grid:
        if samples.query.finite and T > float(samples.query.horizon) * (1 + 1e-12):
            raise ValueError(f"grid point {T} lies beyond the simulated horizon {samples.query.horizon}")
        k = int(np.searchsorted(hit_times, T, side="left"))
        lo, hi = wilson_interval(k, n, confidence)
        out.append(CdfPoint(float(T), k / n, lo, hi, n))
    return out


# -- moment estimates and martingale residuals ---------------------------------------


def _full_exps(system: FptSystem, var: MomentVar) -> tuple[int, tuple[int, ...]]:
    """(time exponent, exponents over all species of ``system.model``)."""
    S = len(system.model.species)
    m = [0] * S
    meas = var.measure
    if meas.kind == HORIZON_FACE:
        species = system.measure_species(meas)
        state = var.exps
        k = 0
    else:
        species = system.measure_species(meas)
        state = var.exps[1:]
        k = var.exps[0]
    for i, e in zip(species, state):
        m[system.pop[i]] = e
    return k, tuple(m)


def _mode_of(system: FptSystem, final: np.ndarray, mode) -> np.ndarray:
    if mode is None:
        return np.ones(len(final), dtype=bool)
    sel = np.ones(len(final), dtype=bool)
    for p, b in zip(system.mode_idx, mode):
        sel &= final[:, p] == b
    return sel


def integral_keys_for(system: FptSystem, variables: Iterable[MomentVar]) -> list[IntegralKey]:
    keys = []
    for v in variables:
        if v.measure.kind == OCCUPATION:
            k, m = _full_exps(system, v)
            key = IntegralKey(k, m, v.measure.mode)
            if key not in keys:
                keys.append(key)
    return keys


def sample_moments(system: FptSystem, samples: SampleSet, variables: Iterable[MomentVar]) -> dict[MomentVar, np.ndarray]:
    """Per-trajectory contribution of each moment variable (mean gives the moment)."""
    out = {}
    tau = samples.tau
    fin = samples.final.astype(np.float64)
    for v in variables:
        meas = v.measure
        k, m = _full_exps(system, v)
        if meas.kind == OCCUPATION:
            out[v] = samples.integral(IntegralKey(k, m, meas.mode))
            continue
        w = np.ones(len(tau))
        for s, e in enumerate(m):
            if e:
                w = w * fin[:, s] ** e
        if k:
            w = w * tau**k
        if meas.kind == HIT_FACE:
            face = system.pop_names[meas.face]
            sel = samples.hit_index == samples._faces.index(face)
        else:
            sel = samples.hit_index == HORIZON
        sel = sel & _mode_of(system, samples.final, meas.mode)
        out[v] = np.where(sel, w, 0.0)
    return out


def constraint_residuals(system: FptSystem, constraint: LinearMomentConstraint, samples: SampleSet) -> np.ndarray:
    """Per-trajectory value of the affine expression; its mean estimates zero."""
    contrib = sample_moments(system, samples, [v for v, _ in constraint.terms])
    out = np.full(len(samples), float(constraint.constant))
    for v, c in constraint.terms:
        out = out + float(c) * contrib[v]
    return out


def martingale_residual(
    model: Pctmc | FptSystem,
    query: FptQuery,
    m: Sequence[int],
    k: int,
    n: int,
    seed: int = 0,
    mode=None,
    confidence: float = 0.99,
    backend: str | None = None,
) -> Estimate:
    """Monte Carlo estimate of E[Z_tau] for the (m, k[, mode]) constraint."""
    from .constraints import martingale_constraint, mode_balance_constraint

    system = model if isinstance(model, FptSystem) else FptSystem(model, query)
    if system.hybrid and k == 0 and not any(m):
        con = mode_balance_constraint(system, query, mode)
    else:
        con = martingale_constraint(system, query, m, k, mode=mode)
    keys = integral_keys_for(system, [v for v, _ in con.terms])
    samples = simulate_fpt(system.model, query, n, seed, keys, backend=backend)
    return estimate_mean(constraint_residuals(system, con, samples), confidence)


def pilot_scales(
    model: Pctmc,
    query: FptQuery,
    species: Sequence[str] | None = None,
    n: int = 1000,
    seed: int = 0,
    quantile: float = 0.999,
) -> dict[str, float]:
    """Scale bounds for unbounded species: a high quantile of the path maximum."""
    if species is None:
        system = FptSystem(model, query)
        species = [
            name for i, name in enumerate(system.pop_names) if i not in system.thresholds and name not in dict(query.scale_bounds)
        ]
    if not species:
        return {}
    samples = simulate_fpt(model, query, n, seed)
    out = {}
    for name in species:
        col = samples.maxima[:, model.index(name)]
        out[name] = max(1.0, float(np.quantile(col, quantile)))
    return out
