"""Embedded primal-dual interior-point SDP solver and SDPA file exchange.

Problems use the SDPA convention. The ``y`` side reads

    minimize  b^T y   subject to   Z = sum_i y_i A_i - C  >= 0

and the matrix side is its dual, maximize C.X subject to A_i.X = b_i, X >= 0.
Diagonal blocks (negative size) are stored as 1-D arrays.

The relaxation is lowered onto the ``y`` side: the moment equalities are
eliminated through a nullspace basis, so every remaining free coordinate of
the moment vector is one ``y`` variable and every PSD block becomes one block.
"""

from __future__ import annotations

import enum
import math
import re
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constraints import FptSystem
from .sdp import MAXIMIZE, MINIMIZE, NumericProblem, SdpProblem, assemble


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"
    ITERATION_LIMIT = "iteration_limit"


class SdpaParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class StandardSdp:
    """Block-diagonal SDP in SDPA form.

    ``sizes[b] < 0`` marks a diagonal block of order ``-sizes[b]``. ``C[b]`` is
    the objective matrix of block b and ``A[b][i]`` the i-th constraint matrix
    (so ``A[b]`` has shape (m, n, n), or (m, n) for diagonal blocks).
    """

    sizes: list[int]
    C: list[np.ndarray]
    A: list[np.ndarray]
    b: np.ndarray

    @property
    def m(self) -> int:
        return len(self.b)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if not (len(self.sizes) == len(self.C) == len(self.A)):
            raise ValueError("sizes, C and A must list the same blocks")
        for s, c, a in zip(self.sizes, self.C, self.A):
            n = abs(s)
            shape = (n,) if s < 0 else (n, n)
            if c.shape != shape or a.shape != (self.m,) + shape:
                raise ValueError(f"block of size {s} has inconsistent data shapes {c.shape}, {a.shape}")
            if s > 0 and (not np.array_equal(c, c.T) or not np.array_equal(a, a.transpose(0, 2, 1))):
                raise ValueError("block matrices must be symmetric")

    def slack(self, y: np.ndarray) -> list[np.ndarray]:
        """Z(y) = sum_i y_i A_i - C, per block."""
        return [np.tensordot(y, a, axes=1) - c for c, a in zip(self.C, self.A)]

    def apply(self, X: Sequence[np.ndarray]) -> np.ndarray:
        """A(X)_i = sum_b <A_i, X_b>."""
        out = np.zeros(self.m)
        for s, a, x in zip(self.sizes, self.A, X):
            out += a.reshape(self.m, -1) @ x.reshape(-1)
        return out


@dataclass
class Lowering:
    """How y maps back to scaled moments: v' = v_p + N y."""

    numeric: NumericProblem
    particular: np.ndarray
    nullspace: np.ndarray
    sign: float
    offset: float
    block_of: list[str] = field(default_factory=list)

    def moments(self, y: np.ndarray) -> np.ndarray:
        """Unscaled moment vector."""
        return (self.particular + self.nullspace @ y) * self.numeric.scales

    def objective(self, sdp_value: float) -> float:
        """Moment objective from b^T y (or C.X)."""
        return self.sign * sdp_value + self.offset


@dataclass(frozen=True)
class IterationRecord:
    """One interior-point iterate; ``complementarity`` is X.Z / n and stays positive."""

    iteration: int
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    complementarity: float


@dataclass
class Solution:
    status: Status
    primal_objective: float
    dual_objective: float
    duality_gap: float
    moment_values: dict = field(default_factory=dict)
    iterations: int = 0
    primal_infeasibility: float = float("nan")
    dual_infeasibility: float = float("nan")
    message: str = ""
    y: np.ndarray | None = None
    X: list | None = None
    seconds: float = 0.0
    history: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL

    @property
    def value(self) -> float:
        return self.primal_objective

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "duality_gap": self.duality_gap,
            "primal_infeasibility": self.primal_infeasibility,
            "dual_infeasibility": self.dual_infeasibility,
            "iterations": self.iterations,
            "seconds": self.seconds,
            "message": self.message,
        }


class LoweringInfeasible(Exception):
    """The equality rows contradict each other."""

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"equality constraints are inconsistent (least-squares residual {residual:.3g})")


# -- lowering ---------------------------------------------------------------


def lower_numeric(num: NumericProblem, rank_tol: float = 1e-10) -> tuple[StandardSdp, Lowering]:
    """Eliminate ``A v = rhs`` and pose the blocks and bounds over the nullspace."""
    n = len(num.c)
    A = np.asarray(num.A, dtype=float).reshape(-1, n)
    rhs = np.asarray(num.rhs, dtype=float)
    if A.shape[0]:
        U, s, Vt = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > rank_tol * max(1.0, s[0]))) if s.size else 0
        coef = U[:, :rank].T @ rhs / s[:rank]
        vp = Vt[:rank].T @ coef
        resid = float(np.max(np.abs(A @ vp - rhs))) if rhs.size else 0.0
        if resid > 1e-8 * (1.0 + float(np.max(np.abs(rhs)))):
            raise LoweringInfeasible(resid)
        N = Vt[rank:].T
    else:
        vp = np.zeros(n)
        N = np.eye(n)
    m = N.shape[1]
    sizes, Cs, As, labels = [], [], [], []
    for size, entries in zip(num.sizes, num.blocks):
        F = np.zeros((n, size, size))
        for i, j, k, coeff in entries:
            F[k, i, j] += coeff
            if i != j:
                F[k, j, i] += coeff
        # F(v) = sum_k v_k F_k; Z = F(vp) + sum_i y_i F(N_i)
        Ab = np.tensordot(N.T, F, axes=1)
        C = -np.tensordot(vp, F, axes=1)
        sizes.append(size)
        Cs.append(0.5 * (C + C.T))
        As.append(0.5 * (Ab + Ab.transpose(0, 2, 1)))
        labels.append("psd")
    lo = np.flatnonzero(np.isfinite(num.lower))
    hi = np.flatnonzero(np.isfinite(num.upper))
    if lo.size or hi.size:
        # v_k - lower_k >= 0 and upper_k - v_k >= 0 as one diagonal block
        Cd = np.concatenate([num.lower[lo] - vp[lo], vp[hi] - num.upper[hi]])
        Ad = np.concatenate([N[lo], -N[hi]], axis=0).T
        sizes.append(-len(Cd))
        Cs.append(Cd)
        As.append(np.ascontiguousarray(Ad))
        labels.append("bounds")
    sign = 1.0 if num.sense == MINIMIZE else -1.0
    b = sign * (N.T @ num.c)
    offset = float(num.c @ vp)
    sdp = StandardSdp(sizes, Cs, As, b)
    return sdp, Lowering(num, vp, N, sign, offset, labels)


def lower_to_standard(problem: SdpProblem) -> tuple[StandardSdp, Lowering]:
    return lower_numeric(problem.numeric())


# -- interior point ---------------------------------------------------------


def _chol(M: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


def _max_step(Ls, D, sizes) -> float:
    """Largest alpha with V + alpha D >= 0 given V = L L^T per block (diag: L is V)."""
    alpha = math.inf
    for s, L, d in zip(sizes, Ls, D):
        if s < 0:
            neg = d < 0
            if neg.any():
                alpha = min(alpha, float(np.min(-L[neg] / d[neg])))
            continue
        Li = np.linalg.solve(L, np.eye(L.shape[0]))
        W = Li @ d @ Li.T
        lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def _restore_primal(sdp: StandardSdp, X, feas_tol: float):
    """Least-norm correction of X onto A(X) = b, kept only if X stays PSD to -feas_tol."""
    rp = sdp.b - sdp.apply(X)
    G = np.zeros((sdp.m, sdp.m))
    for a in sdp.A:
        af = a.reshape(sdp.m, -1)
        G += af @ af.T
    try:
        lam = np.linalg.lstsq(G, rp, rcond=None)[0]
    except np.linalg.LinAlgError:
        return X
    out = []
    for s, a, x in zip(sdp.sizes, sdp.A, X):
        xn = x + np.tensordot(lam, a, axes=1)
        low = float(np.min(xn)) if s < 0 else float(np.linalg.eigvalsh(xn)[0])
        if low < -feas_tol:
            return X
        out.append(xn)
    return out


def _slack_feasible(sdp: StandardSdp, y: np.ndarray, tol: float = 1e-6) -> bool:
    """Whether sum y_i A_i - C is PSD up to ``tol`` relative to its size."""
    for s, z in zip(sdp.sizes, sdp.slack(y)):
        low = float(np.min(z)) if s < 0 else float(np.linalg.eigvalsh(0.5 * (z + z.T))[0])
        if low < -tol * (1.0 + float(np.max(np.abs(z)))):
            return False
    return True


def _inner(sizes, P, Q) -> float:
    return float(sum(np.sum(p * q) for p, q in zip(P, Q)))


REFINE = 1


def solve(
    sdp: StandardSdp,
    gap_tol: float = 1e-8,
    feas_tol: float = 1e-8,
    max_iter: int = 200,
    verbose: bool = False,
) -> Solution:
    """HKM primal-dual path following with Mehrotra predictor-corrector.

    Infeasible start from scaled identities; the Schur complement is formed
    densely and factored by Cholesky. Returns the ``y`` side objective as
    primal and ``C.X`` as dual; the gap is their difference.
    """
    t0 = time.perf_counter()
    m = sdp.m
    sizes = sdp.sizes
    dims = [abs(s) for s in sizes]
    ntot = sum(dims)
    b = sdp.b
    normC = math.sqrt(_inner(sizes, sdp.C, sdp.C))
    normb = float(np.linalg.norm(b))
    normA = [
        max(math.sqrt(float(np.sum(a[i] ** 2))) for a in sdp.A) if sdp.A else 0.0 for i in range(m)
    ]
    xi = max(10.0, math.sqrt(ntot), max(((1 + abs(b[i])) / (1 + normA[i]) for i in range(m)), default=0.0))
    eta = max(10.0, math.sqrt(ntot), normC, max(normA, default=0.0))
    X = [np.full(n, xi) if s < 0 else xi * np.eye(n) for s, n in zip(sizes, dims)]
    Z = [np.full(n, eta) if s < 0 else eta * np.eye(n) for s, n in zip(sizes, dims)]
    y = np.zeros(m)
    history = []

    def residuals(X, y, Z):
        rp = b - sdp.apply(X)
        S = sdp.slack(y)
        Rd = [s_ - z for s_, z in zip(S, Z)]
        return rp, Rd

    status = Status.ITERATION_LIMIT
    message = ""
    it = 0
    best = None
    stalls = 0
    for it in range(1, max_iter + 1):
        rp, Rd = residuals(X, y, Z)
        pobj = float(b @ y)
        dobj = _inner(sizes, sdp.C, X)
        mu = _inner(sizes, X, Z) / ntot
        pinf = float(np.linalg.norm(rp)) / (1 + normb)
        dinf = math.sqrt(_inner(sizes, Rd, Rd)) / (1 + normC)
        rgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        history.append(IterationRecord(it, pobj, dobj, pinf, dinf, mu))
        if verbose:
            print(f"{it:3d} p={pobj:+.10e} d={dobj:+.10e} pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e} |X|={math.sqrt(_inner(sizes, X, X)):.1e} |y|={np.linalg.norm(y):.1e}")
        score = max(rgap / gap_tol, pinf / feas_tol, dinf / feas_tol)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], y.copy(), [z.copy() for z in Z], it)
        elif score > 100 * best[0] and best[0] < 1e4:
            status = Status.NUMERICAL_FAILURE
            message = "accuracy stopped improving"
            break
        if rgap <= gap_tol and pinf <= feas_tol and dinf <= feas_tol:
            status = Status.OPTIMAL
            break
        # infeasibility certificates (heuristic thresholds on the normalized rays)
        nX = math.sqrt(_inner(sizes, X, X))
        if dobj > 0 and nX > 1e10 and float(np.linalg.norm(sdp.apply(X))) / dobj < 1e-6 * max(1.0, normb):
            status = Status.INFEASIBLE
            message = "matrix-side ray: A(X) ~ 0 with C.X > 0"
            break
        if (
            pobj < -1e8 * (1 + normb)
            and np.linalg.norm(y) > 1e10
            and dinf * (1 + normC) / abs(pobj) < 1e-6
            and _slack_feasible(sdp, y)
        ):
            status = Status.UNBOUNDED
            message = "y-side ray: objective decreases without bound"
            break

        # Cholesky factors of X and Z; Z^{-1}
        LX, Zinv, LZi = [], [], []
        failed = False
        for s, x, z in zip(sizes, X, Z):
            if s < 0:
                LX.append(x)
                Zinv.append(1.0 / z)
                LZi.append(None)
                continue
            lx = _chol(x)
            lz = _chol(z)
            if lx is None or lz is None:
                failed = True
                break
            li = np.linalg.solve(lz, np.eye(lz.shape[0]))
            zi = li.T @ li
            LX.append(lx)
            Zinv.append(0.5 * (zi + zi.T))
            LZi.append(li)
        if failed:
            status = Status.NUMERICAL_FAILURE
            message = "lost positive definiteness of an iterate"
            break

        # Schur complement M_ij = tr(A_i X A_j Z^{-1}) = <B_i, B_j>, B_i = Lx^T A_i Lz^{-T}
        M = np.zeros((m, m))
        for s, a, lx, zi, li in zip(sizes, sdp.A, LX, Zinv, LZi):
            if s < 0:
                M += (a * (lx * zi)) @ a.T
            else:
                B = np.matmul(np.matmul(lx.T, a), li.T)
                Bf = B.reshape(m, -1)
                M += Bf @ Bf.T
        M = 0.5 * (M + M.T)
        LM = _chol(M)
        if LM is None:
            reg = 1e-14 * max(1.0, float(np.max(np.diag(M))))
            LM = _chol(M + reg * np.eye(m))
            if LM is None:
                status = Status.NUMERICAL_FAILURE
                message = "Schur complement is not positive definite"
                break

        def msolve(rhs):
            out = np.linalg.solve(LM.T, np.linalg.solve(LM, rhs))
            for _ in range(2):  # iterative refinement
                out = out + np.linalg.solve(LM.T, np.linalg.solve(LM, rhs - M @ out))
            return out

        def direction(sigma_mu, corr):
            # G = sigma mu Z^{-1} - X - dXa dZa Z^{-1}
            G = []
            for k, (s, x, zi) in enumerate(zip(sizes, X, Zinv)):
                if s < 0:
                    g = sigma_mu * zi - x
                    if corr is not None:
                        g = g - corr[0][k] * corr[1][k] * zi
                else:
                    g = sigma_mu * zi - x
                    if corr is not None:
                        g = g - corr[0][k] @ corr[1][k] @ zi
                G.append(g)
            XRZ = []
            for s, x, r, zi in zip(sizes, X, Rd, Zinv):
                XRZ.append(x * r * zi if s < 0 else x @ r @ zi)
            AG = sdp.apply([0.5 * (g + g.T) if s > 0 else g for s, g in zip(sizes, G)])
            AX = sdp.apply([0.5 * (v + v.T) if s > 0 else v for s, v in zip(sizes, XRZ)])
            rhs = AG - AX - rp
            dy = msolve(rhs)
            for _ in range(REFINE):
                dX, dZ = recover(dy, G)
                # M is formed with rounding; correct against the residual of A(dX) = rp itself
                err = rp - sdp.apply(dX)
                if not np.all(np.isfinite(err)):
                    break
                dy = dy - msolve(err)
            dX, dZ = recover(dy, G)
            return dX, dy, dZ

        def recover(dy, G):
            dZ = [np.tensordot(dy, a, axes=1) + r for a, r in zip(sdp.A, Rd)]
            dX = []
            for s, g, x, dz, zi in zip(sizes, G, X, dZ, Zinv):
                if s < 0:
                    dX.append(g - x * dz * zi)
                else:
                    d = g - x @ dz @ zi
                    dX.append(0.5 * (d + d.T))
            return dX, dZ

        dXa, dya, dZa = direction(0.0, None)
        ap = min(1.0, _max_step(LX, dXa, sizes))
        LZ = [z if s < 0 else np.linalg.cholesky(z) for s, z in zip(sizes, Z)]
        ad = min(1.0, _max_step(LZ, dZa, sizes))
        mu_aff = _inner(
            sizes, [x + ap * d for x, d in zip(X, dXa)], [z + ad * d for z, d in zip(Z, dZa)]
        ) / ntot
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        dX, dy, dZ = direction(sigma * mu, (dXa, dZa))
        gamma = 0.9 + 0.09 * min(1.0, 1.0 - sigma)
        ap = min(1.0, gamma * _max_step(LX, dX, sizes))
        ad = min(1.0, gamma * _max_step(LZ, dZ, sizes))
        if not np.all(np.isfinite(dy)):
            status = Status.NUMERICAL_FAILURE
            message = "non-finite search direction"
            break
        X = [x + ap * d for x, d in zip(X, dX)]
        y = y + ad * dy
        Z = [z + ad * d for z, d in zip(Z, dZ)]
        if max(ap, ad) < 1e-9:
            stalls += 1
            if stalls >= 3:
                status = Status.NUMERICAL_FAILURE
                message = "step length collapsed"
                break
        else:
            stalls = 0
    else:
        it = max_iter

    if status != Status.OPTIMAL and best is not None and status not in (Status.INFEASIBLE, Status.UNBOUNDED):
        _, X, y, Z, _ = best
        X = _restore_primal(sdp, X, feas_tol)
        rp, Rd = residuals(X, y, Z)
        pobj = float(b @ y)
        dobj = _inner(sizes, sdp.C, X)
        if (
            abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj)) <= gap_tol
            and float(np.linalg.norm(rp)) / (1 + normb) <= feas_tol
            and math.sqrt(_inner(sizes, Rd, Rd)) / (1 + normC) <= feas_tol
        ):
            status = Status.OPTIMAL
            message = "optimal after primal feasibility restoration"
    rp, Rd = residuals(X, y, Z)
    pobj = float(b @ y)
    dobj = _inner(sizes, sdp.C, X)
    return Solution(
        status=status,
        primal_objective=pobj,
        dual_objective=dobj,
        duality_gap=pobj - dobj,
        iterations=it,
        primal_infeasibility=float(np.linalg.norm(rp)) / (1 + normb),
        dual_infeasibility=math.sqrt(_inner(sizes, Rd, Rd)) / (1 + normC),
        message=message,
        y=y,
        X=X,
        seconds=time.perf_counter() - t0,
        history=history,
    )


# -- SDPA sparse format ---------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(sdp: StandardSdp, comment: str = "fptbound") -> str:
    """SDPA sparse text (.dat-s): m, nblocks, sizes, b, then ``matno blk i j value``.

    Entries are 1-based, upper triangle, zeros omitted; matrix 0 is C. Floats
    are written with ``repr`` so a parse and re-export reproduces the text.
    """
    lines = ['"' + comment.replace("\n", " "), str(sdp.m), str(len(sdp.sizes))]
    lines.append(" ".join(str(s) for s in sdp.sizes))
    lines.append(" ".join(_fmt(v) for v in sdp.b))
    mats = [sdp.C] + [[a[i] for a in sdp.A] for i in range(sdp.m)]
    for matno, blocks in enumerate(mats):
        for blk, (s, M) in enumerate(zip(sdp.sizes, blocks), start=1):
            if s < 0:
                for i in np.flatnonzero(M):
                    lines.append(f"{matno} {blk} {i + 1} {i + 1} {_fmt(M[i])}")
            else:
                iu, ju = np.nonzero(np.triu(M))
                for i, j in zip(iu, ju):
                    lines.append(f"{matno} {blk} {i + 1} {j + 1} {_fmt(M[i, j])}")
    return "\n".join(lines) + "\n"


_SEP = re.compile(r"[\s,{}()=]+")


def _tokens(line: str) -> list[str]:
    return [t for t in _SEP.split(line) if t]


def parse_sdpa(text: str) -> StandardSdp:
    """Inverse of :func:`export_sdpa`; accepts the usual SDPA punctuation."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s[0] in "\"*":
            continue
        rows.append((lineno, s))
    header = []
    pos = 0
    # the header is four logical items; a vector may not span lines in our writer
    while len(header) < 4 and pos < len(rows):
        header.append(rows[pos])
        pos += 1
    if len(header) < 4:
        raise SdpaParseError("incomplete header", rows[-1][0] if rows else 1)

    def ints(item, count=None):
        ln, s = item
        vals = []
        for t in _tokens(s):
            try:
                vals.append(int(float(t)))
            except ValueError:
                # SDPA files often annotate header lines, e.g. "2 = mDIM"
                if vals:
                    break
                raise SdpaParseError(f"expected integers, got {t!r}", ln) from None
        if count is not None:
            if len(vals) < count:
                raise SdpaParseError(f"expected {count} integers, got {len(vals)}", ln)
            vals = vals[:count]
        return vals

    m = ints(header[0], 1)[0]
    nblocks = ints(header[1], 1)[0]
    sizes = ints(header[2], nblocks)
    if any(s == 0 for s in sizes):
        raise SdpaParseError("block size 0", header[2][0])
    ln, s = header[3]
    try:
        b = [float(t) for t in _tokens(s)]
    except ValueError as exc:
        raise SdpaParseError(f"bad right-hand side: {exc}", ln) from None
    if len(b) != m:
        raise SdpaParseError(f"expected {m} right-hand side values, got {len(b)}", ln)
    C = [np.zeros(-s) if s < 0 else np.zeros((s, s)) for s in sizes]
    A = [np.zeros((m, -s)) if s < 0 else np.zeros((m, s, s)) for s in sizes]
    for ln, s in rows[pos:]:
        tok = _tokens(s)
        if len(tok) != 5:
            raise SdpaParseError(f"expected 'matno blkno i j value', got {s!r}", ln)
        try:
            matno, blk, i, j = (int(t) for t in tok[:4])
            val = float(tok[4])
        except ValueError as exc:
            raise SdpaParseError(str(exc), ln) from None
        if not 0 <= matno <= m:
            raise SdpaParseError(f"matrix number {matno} out of range 0..{m}", ln)
        if not 1 <= blk <= nblocks:
            raise SdpaParseError(f"block number {blk} out of range 1..{nblocks}", ln)
        size = sizes[blk - 1]
        n = abs(size)
        if not (1 <= i <= n and 1 <= j <= n):
            raise SdpaParseError(f"entry ({i}, {j}) outside block of order {n}", ln)
        if i > j:
            i, j = j, i
        target = C[blk - 1] if matno == 0 else A[blk - 1][matno - 1]
        if size < 0:
            if i != j:
                raise SdpaParseError("off-diagonal entry in a diagonal block", ln)
            target[i - 1] = val
        else:
            target[i - 1, j - 1] = val
            target[j - 1, i - 1] = val
    return StandardSdp(sizes, C, A, np.array(b))


_PHASES = {
    "pdOPT": Status.OPTIMAL,
    "pINF_dFEAS": Status.INFEASIBLE,
    "pINF_dUNBD": Status.INFEASIBLE,
    "dUNBD": Status.INFEASIBLE,
    "pFEAS_dINF": Status.UNBOUNDED,
    "pUNBD_dINF": Status.UNBOUNDED,
    "pUNBD": Status.UNBOUNDED,
    "pdINF": Status.INFEASIBLE,
}


def parse_sdpa_solution(text: str) -> Solution:
    """Read an SDPA ``.out``/result listing: phase.value, objValPrimal, objValDual, xVec.

    SDPA's primal is this module's ``y`` side, so ``xVec`` becomes ``y``.
    """
    phase = None
    values: dict[str, float] = {}
    y = None
    iterations = 0
    lines = text.splitlines()
    k = 0
    while k < len(lines):
        raw = lines[k]
        ln = k + 1
        k += 1
        if "=" not in raw:
            continue
        key, _, rest = raw.partition("=")
        key = key.strip()
        rest = rest.strip()
        if key == "phase.value":
            phase = rest.split()[0] if rest else None
            if phase is None:
                raise SdpaParseError("empty phase.value", ln)
        elif key in ("objValPrimal", "objValDual", "relative gap", "gap", "primalError", "dualError"):
            try:
                values[key] = float(rest.split()[0])
            except (ValueError, IndexError):
                raise SdpaParseError(f"bad number for {key}", ln) from None
        elif key.lower() == "iteration":
            try:
                iterations = int(rest.split()[0])
            except (ValueError, IndexError):
                raise SdpaParseError("bad iteration count", ln) from None
        elif key == "xVec":
            body = rest
            while "}" not in body and k < len(lines):
                body += " " + lines[k]
                k += 1
            try:
                y = np.array([float(t) for t in _tokens(body)])
            except ValueError:
                raise SdpaParseError("bad xVec", ln) from None
    if phase is None:
        raise SdpaParseError("no phase.value line", len(lines) or 1)
    for key in ("objValPrimal", "objValDual"):
        if key not in values:
            raise SdpaParseError(f"missing {key}", len(lines) or 1)
    p, d = values["objValPrimal"], values["objValDual"]
    status = _PHASES.get(phase, Status.NUMERICAL_FAILURE)
    return Solution(
        status=status,
        primal_objective=p,
        dual_objective=d,
        duality_gap=p - d,
        iterations=iterations,
        primal_infeasibility=values.get("primalError", float("nan")),
        dual_infeasibility=values.get("dualError", float("nan")),
        message=f"external solver phase {phase}",
        y=y,
    )


def format_sdpa_result(solution: Solution) -> str:
    """Write a solution in the subset of the SDPA output layout that the parser reads."""
    phase = {
        Status.OPTIMAL: "pdOPT",
        Status.INFEASIBLE: "pINF_dUNBD",
        Status.UNBOUNDED: "pUNBD_dINF",
    }.get(solution.status, "noINFO")
    out = [
        f"phase.value  = {phase}",
        f"   Iteration = {solution.iterations}",
        f"objValPrimal = {_fmt(solution.primal_objective)}",
        f"objValDual   = {_fmt(solution.dual_objective)}",
    ]
    if np.isfinite(solution.primal_infeasibility):
        out.append(f"primalError  = {_fmt(solution.primal_infeasibility)}")
    if np.isfinite(solution.dual_infeasibility):
        out.append(f"dualError    = {_fmt(solution.dual_infeasibility)}")
    if solution.y is not None:
        out.append("xVec = ")
        out.append("{" + ",".join(_fmt(v) for v in solution.y) + "}")
    return "\n".join(out) + "\n"


# -- moment-level solves ------------------------------------------------------------


def _infeasible_solution(exc: LoweringInfeasible, t0: float) -> Solution:
    return Solution(
        status=Status.INFEASIBLE,
        primal_objective=math.nan,
        dual_objective=math.nan,
        duality_gap=math.nan,
        primal_infeasibility=exc.residual,
        message=str(exc),
        seconds=time.perf_counter() - t0,
    )


def lift(raw: Solution, lowering: Lowering, var_index: Sequence | None = None) -> Solution:
    """Translate a standard-form solution into moment units.

    ``primal_objective`` is the objective at the recovered moments; the dual
    value ``sign * C.X + offset`` is the certificate (a lower bound for
    minimization, an upper bound for maximization).
    """
    if raw.y is None:
        return raw
    p = lowering.objective(raw.primal_objective)
    d = lowering.objective(raw.dual_objective) if np.isfinite(raw.dual_objective) else math.nan
    moments = lowering.moments(raw.y)
    names = var_index if var_index is not None else range(len(moments))
    return Solution(
        status=raw.status,
        primal_objective=p,
        dual_objective=d,
        duality_gap=abs(p - d),
        moment_values={v: float(x) for v, x in zip(names, moments)},
        iterations=raw.iterations,
        primal_infeasibility=raw.primal_infeasibility,
        dual_infeasibility=raw.dual_infeasibility,
        message=raw.message,
        y=raw.y,
        X=raw.X,
        seconds=raw.seconds,
        history=raw.history,
    )


def solve_numeric(num: NumericProblem, var_index: Sequence | None = None, **options) -> Solution:
    t0 = time.perf_counter()
    try:
        sdp, low = lower_numeric(num)
    except LoweringInfeasible as exc:
        return _infeasible_solution(exc, t0)
    out = lift(solve(sdp, **options), low, var_index)
    out.seconds = time.perf_counter() - t0
    return out


def solve_problem(problem: SdpProblem, **options) -> Solution:
    """Lower, solve with the embedded solver and report in moment units."""
    return solve_numeric(problem.numeric(), problem.var_index, **options)


# -- bounds ---------------------------------------------------------------------------

# a side that stopped short of Optimal is still reported when it is this close
NEAR_GAP = 1e-4
NEAR_FEAS = 1e-5


def usable(sol: Solution) -> bool:
    if sol.status == Status.OPTIMAL:
        return True
    if sol.status != Status.NUMERICAL_FAILURE and sol.status != Status.ITERATION_LIMIT:
        return False
    p, d = sol.primal_objective, sol.dual_objective
    if not (np.isfinite(p) and np.isfinite(d)):
        return False
    rgap = abs(p - d) / (1 + abs(p) + abs(d))
    return rgap <= NEAR_GAP and sol.primal_infeasibility <= NEAR_FEAS and sol.dual_infeasibility <= NEAR_FEAS


@dataclass
class BoundResult:
    lower: float | None
    upper: float | None
    order: int
    details: tuple[Solution, Solution]
    warnings: list[str] = field(default_factory=list)
    species_scales: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.details)

    @property
    def statuses(self) -> tuple[str, str]:
        return tuple(s.status.value for s in self.details)

    @property
    def width(self) -> float | None:
        if self.lower is None or self.upper is None:
            return None
        return self.upper - self.lower

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "lower": self.lower,
            "upper": self.upper,
            "status": {"lower": self.details[0].status.value, "upper": self.details[1].status.value},
            "warnings": list(self.warnings),
            "seconds": self.seconds,
            "min": self.details[0].summary(),
            "max": self.details[1].summary(),
        }


def _worker_count() -> int:
    import os

    raw = os.environ.get("FPTBOUND_THREADS")
    try:
        return max(1, int(raw)) if raw else 2
    except ValueError:
        return 2


def trivial_range(query) -> tuple[float, float]:
    from .model import Objective

    if query.objective is Objective.HIT_PROBABILITY:
        return 0.0, 1.0
    return 0.0, float(query.horizon)


def needed_scales(model, query, reduce: bool = True) -> list[str]:
    """Population species that need a scale bound (no threshold, no ``scale`` item)."""
    system = FptSystem(model, query, reduce)
    given = dict(query.scale_bounds)
    return [n for i, n in enumerate(system.pop_names) if i not in system.thresholds and n not in given]


def bound(
    model,
    query,
    order: int | None = None,
    *,
    gap_tol: float = 1e-8,
    feas_tol: float = 1e-8,
    max_iter: int = 200,
    scale: bool = True,
    reduce: bool = True,
    species_scales: dict | None = None,
    seed: int = 0,
    full_localizers: bool = False,
    tight_support: bool = True,
) -> BoundResult:
    """Lower and upper bounds on the query objective from the order-r relaxation.

    Unbounded species without a scale get one from a short pilot simulation.
    A side that fails is reported as None with a warning naming the side.
    """
    from concurrent.futures import ThreadPoolExecutor

    t0 = time.perf_counter()
    order = order or query.order
    warnings: list[str] = []
    scales = dict(species_scales or {})
    if scale:
        missing = [n for n in needed_scales(model, query, reduce) if n not in scales]
        if missing:
            from .ssa import pilot_scales

            scales.update(pilot_scales(model, query, missing, seed=seed))
    system = FptSystem(model, query, reduce, tight_support)

    def side(sense):
        prob = assemble(
            system, query, sense, scale=scale, species_scales=scales, full_localizers=full_localizers, order=order
        )
        return solve_problem(prob, gap_tol=gap_tol, feas_tol=feas_tol, max_iter=max_iter)

    with ThreadPoolExecutor(max_workers=min(2, _worker_count())) as pool:
        lo_sol, hi_sol = pool.map(side, (MINIMIZE, MAXIMIZE))
    values = []
    for name, sol in (("lower", lo_sol), ("upper", hi_sol)):
        if sol.ok:
            values.append(sol.dual_objective)
        elif usable(sol):
            values.append(sol.dual_objective)
            warnings.append(
                f"{name} side stopped with {sol.status.value} ({sol.message}); reporting its value at relative gap "
                f"{abs(sol.primal_objective - sol.dual_objective) / (1 + abs(sol.primal_objective) + abs(sol.dual_objective)):.1e}"
            )
        else:
            values.append(None)
            warnings.append(f"{name} side failed: {sol.status.value} ({sol.message})")
    lower, upper = values
    # intersect with the a-priori range so rounding never reports e.g. a probability above one
    lo_triv, hi_triv = trivial_range(query)
    if lower is not None:
        lower = max(lower, lo_triv)
    if upper is not None:
        upper = min(upper, hi_triv)
    if lower is not None and upper is not None and lower > upper + 2 * gap_tol * (1 + abs(upper)):
        warnings.append(f"lower bound {lower} exceeds upper bound {upper}")
    return BoundResult(lower, upper, order, (lo_sol, hi_sol), warnings, scales, time.perf_counter() - t0)
