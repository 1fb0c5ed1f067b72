"""Monotonicity of generalized concurrences under LOCC.

A convex-roof concurrence is a monotone iff for all states psi, phi, weights
a, b and orthogonal flags on one party::

    C(a psi x eta_0 + b phi x eta_1) >= |a|^2 C(psi) + |b|^2 C(phi)

The difference of the two sides is the *gap*.  Writing ``Q(x)`` for the
radicand of ``x`` and ``R`` for ``sum_V alpha_V Upsilon_V`` (cross purities on
the flag-free side of each cut), the gap is negative exactly when
``R < sqrt(Q(psi) Q(phi))``, for every ``0 < |a| < 1``.  The search uses that
scale-free ratio to locate violating pairs, then tunes the weights.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import minimize, minimize_scalar

from .concurrence import ConcurrenceSpec, concurrence_pure, kappa_spec, subset_label
from .errors import DimensionMismatch, Inapplicable, NotPositive
from .qstate import (PureState, all_purities, basis_state, cross_purity, flag_superposition,
                     generalized_phi, permute_parties, random_state, tensor)

VIOLATION_TOL = 1e-7
THREADS_ENV = "CONCURRENCE_LAB_THREADS"


def sufficient_criterion(spec: ConcurrenceSpec, tol: float = 1e-14) -> bool:
    """True when alpha_V <= 0 for every V other than the empty and full set."""
    v = spec.alpha.values
    return bool(np.all(v[1:-1] <= tol))


def positive_subsets(spec: ConcurrenceSpec, tol: float = 1e-14) -> list[int]:
    v = spec.alpha.values
    return [b for b in range(1, len(v) - 1) if v[b] > tol]


def is_permutation_symmetric(spec: ConcurrenceSpec, tol: float = 1e-12) -> bool:
    n, v = spec.n, spec.alpha.values
    for i in range(n - 1):
        for bits in range(1 << n):
            bi, bj = bits >> i & 1, bits >> (i + 1) & 1
            swapped = bits & ~((1 << i) | (1 << (i + 1))) | (bj << i) | (bi << (i + 1))
            if abs(v[bits] - v[swapped]) > tol:
                return False
    return True


@dataclass(frozen=True)
class GapEvaluation:
    gap: float
    lhs: float
    rhs_psi_term: float
    rhs_phi_term: float
    method: str


def _check_pair(spec: ConcurrenceSpec, psi: PureState, phi: PureState, flag_party: int):
    if psi.dims != phi.dims:
        raise DimensionMismatch(f"dims differ: {psi.dims} vs {phi.dims}")
    if psi.n != spec.n:
        raise DimensionMismatch(f"spec has N={spec.n}, states have {psi.n} parties")
    if not 0 <= flag_party < psi.n:
        raise IndexError(f"flag party {flag_party} out of range")


def gap_direct(spec: ConcurrenceSpec, psi: PureState, phi: PureState, a: complex, b: complex,
               flag_party: int = 0) -> GapEvaluation:
    """Build the flagged superposition and evaluate all three concurrences."""
    _check_pair(spec, psi, phi, flag_party)
    xi = flag_superposition(psi, phi, a, b, flag_party)
    lhs = concurrence_pure(spec, xi)
    t_psi = abs(a) ** 2 * concurrence_pure(spec, psi)
    t_phi = abs(b) ** 2 * concurrence_pure(spec, phi)
    return GapEvaluation(lhs - t_psi - t_phi, lhs, t_psi, t_phi, "direct")


def upsilon(psi: PureState, phi: PureState, traced_bits: int, flag_party: int) -> float:
    """Cross purity on the side of the cut (V, complement) free of the flag party."""
    full = (1 << psi.n) - 1
    kept = full ^ traced_bits if traced_bits >> flag_party & 1 else traced_bits
    return cross_purity(psi, phi, kept)


def flagged_purities(psi: PureState, phi: PureState, a: complex, b: complex,
                     flag_party: int) -> np.ndarray:
    """Purities of the flagged superposition for each traced V, from psi and phi alone."""
    wa, wb = abs(a) ** 2, abs(b) ** 2
    pp, pf = all_purities(psi), all_purities(phi)
    ups = np.array([upsilon(psi, phi, v, flag_party) for v in range(1 << psi.n)])
    return wa * wa * pp + wb * wb * pf + 2 * wa * wb * ups


def gap_expanded(spec: ConcurrenceSpec, psi: PureState, phi: PureState, a: complex, b: complex,
                 flag_party: int = 0) -> GapEvaluation:
    """Same gap, with the superposition's purities expanded into
    |a|^4 P_psi + |b|^4 P_phi + 2 |a|^2 |b|^2 Upsilon; never builds the state."""
    _check_pair(spec, psi, phi, flag_party)
    if not spec.is_admissible:
        raise NotPositive("spec is not admissible")
    alpha = spec.alpha.values
    pref = 2.0 ** (1 - spec.n / 2)
    lhs = pref * _sqrt(alpha @ flagged_purities(psi, phi, a, b, flag_party))
    t_psi = abs(a) ** 2 * pref * _sqrt(alpha @ all_purities(psi))
    t_phi = abs(b) ** 2 * pref * _sqrt(alpha @ all_purities(phi))
    return GapEvaluation(lhs - t_psi - t_phi, lhs, t_psi, t_phi, "expanded")


def _sqrt(x: float) -> float:
    return math.sqrt(x) if x > 0 else 0.0


def cauchy_schwarz_slack(psi: PureState, phi: PureState, traced_bits: int,
                         flag_party: int = 0) -> float:
    """(P_psi + P_phi)/2 - Upsilon for one cut; nonnegative."""
    return 0.5 * (all_purities(psi)[traced_bits] + all_purities(phi)[traced_bits]) \
        - upsilon(psi, phi, traced_bits, flag_party)


@dataclass(frozen=True, eq=False)
class ViolationWitness:
    psi: PureState
    phi: PureState
    a: complex
    b: complex
    flag_party: int
    gap: float
    spec: ConcurrenceSpec

    def reevaluate(self, method: str = "direct") -> GapEvaluation:
        fn = gap_direct if method == "direct" else gap_expanded
        return fn(self.spec, self.psi, self.phi, self.a, self.b, self.flag_party)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict("alpha"),
                "psi": self.psi.to_dict(), "phi": self.phi.to_dict(),
                "a": [complex(self.a).real, complex(self.a).imag],
                "b": [complex(self.b).real, complex(self.b).imag],
                "flag_party": self.flag_party + 1,
                "gap": self.gap}

    @classmethod
    def from_dict(cls, data: dict) -> ViolationWitness:
        return cls(PureState.from_dict(data["psi"]), PureState.from_dict(data["phi"]),
                   complex(*data["a"]), complex(*data["b"]), int(data["flag_party"]) - 1,
                   float(data["gap"]), ConcurrenceSpec.from_dict(data["spec"]))


def _witness(spec, psi, phi, a, b, flag_party) -> ViolationWitness:
    g = gap_direct(spec, psi, phi, a, b, flag_party).gap
    return ViolationWitness(psi, phi, a, b, flag_party, g, spec)


def single_element_counterexample(spec: ConcurrenceSpec, k: int) -> ViolationWitness:
    """|0>_k x Phi+ against |0>_k x Phi- on the other N-1 qubits, flags on k.

    Every cut except ({k}, rest) sees identical reductions, so only the
    positive alpha_{k} survives in the gap.
    """
    n = spec.n
    if n < 3:
        raise Inapplicable("construction needs N >= 3")
    if not 0 <= k < n:
        raise IndexError(f"party {k} out of range")
    if not spec.alpha.values[1 << k] > 0:
        raise Inapplicable(f"alpha_{{{k + 1}}} is not positive")
    order = list(range(1, n))
    order.insert(k, 0)
    zero = basis_state((2,), (0,))
    psi = permute_parties(tensor(zero, generalized_phi(n - 1, +1)), order)
    phi = permute_parties(tensor(zero, generalized_phi(n - 1, -1)), order)
    s = 1 / math.sqrt(2)
    wit = _witness(spec, psi, phi, s, s, k)
    if not wit.gap < 0:
        raise Inapplicable(f"construction gives non-negative gap {wit.gap:.3g}")
    return wit


def tripartite_counterexample(spec: ConcurrenceSpec) -> ViolationWitness:
    if spec.n != 3:
        raise Inapplicable("tripartite construction needs N = 3")
    return analytic_counterexample(spec)


def analytic_counterexample(spec: ConcurrenceSpec) -> ViolationWitness:
    """Witness from the first party whose single-element alpha is positive."""
    for k in range(spec.n):
        if spec.alpha.values[1 << k] > 0:
            return single_element_counterexample(spec, k)
    raise Inapplicable("no single-element subset has positive alpha")


# --- numerical search -------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 8
    max_iters: int | None = None      # per-restart ratio stage budget; None -> 3 * nparams**2
    polish_iters: int | None = None   # gap polish of the best restart; None -> 2 * max_iters
    seed: int = 42
    flag_party: int | None = None     # None -> all parties unless the problem is symmetric
    tol: float = VIOLATION_TOL
    workers: int | None = None        # None -> $CONCURRENCE_LAB_THREADS or 1


@lru_cache(maxsize=64)
def _swap_permutation(dims: tuple[int, ...], kept_bits: int) -> np.ndarray:
    """Index map of SWAP_K on H x H: exchange the two copies' digits on K."""
    n = len(dims)
    d = math.prod(dims)
    axes = list(range(2 * n))
    for i in range(n):
        if kept_bits >> i & 1:
            axes[i], axes[n + i] = axes[n + i], axes[i]
    return np.arange(d * d).reshape(dims + dims).transpose(axes).reshape(-1)


class _PairKernel:
    """Q(psi), Q(phi) and R for fixed (alpha, dims, flag party).

    With S = sum_K (alpha_K + alpha_Kbar) SWAP_K over flag-free K, all three
    are quadratic forms <u|S|u> for u = psi psi, phi phi and psi phi, so one
    sparse product evaluates them together.
    """

    def __init__(self, alpha: np.ndarray, dims: tuple[int, ...], flag_party: int):
        n = len(dims)
        full = (1 << n) - 1
        dd = math.prod(dims) ** 2
        self.pref = 2.0 ** (1 - n / 2)
        rows, cols, vals = [], [], []
        for kept in range(1 << n):
            if kept >> flag_party & 1:
                continue
            wt = alpha[kept] + alpha[full ^ kept]
            if wt != 0:
                rows.append(np.arange(dd))
                cols.append(_swap_permutation(dims, kept))
                vals.append(np.full(dd, wt))
        if rows:
            self.op = sparse.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(dd, dd))
        else:
            self.op = sparse.csr_matrix((dd, dd))
        self.op.sum_duplicates()
        self.d = math.prod(dims)
        self._buf = np.empty((self.d, self.d, 3), dtype=np.complex128)

    def raw_terms(self, z: np.ndarray) -> tuple[float, float, float, float, float]:
        """(Q_psi, Q_phi, R, |psi|^2, |phi|^2) for unnormalized z = [psi, phi]."""
        d, buf = self.d, self._buf
        psi, phi = z[:d], z[d:]
        np.multiply.outer(psi, psi, out=buf[:, :, 0])
        np.multiply.outer(phi, phi, out=buf[:, :, 1])
        np.multiply.outer(psi, phi, out=buf[:, :, 2])
        x = buf.reshape(-1, 3)
        qa, qb, r = (x.conj() * (self.op @ x)).sum(axis=0).real
        return qa, qb, r, np.vdot(psi, psi).real, np.vdot(phi, phi).real

    def terms(self, psi: np.ndarray, phi: np.ndarray) -> tuple[float, float, float]:
        """Q and R after normalizing both states."""
        qa, qb, r, na, nb = self.raw_terms(np.concatenate([psi, phi]))
        return qa / (na * na), qb / (nb * nb), r / (na * nb)

    def ratio(self, x: np.ndarray) -> float:
        """R / sqrt(Q_psi Q_phi); invariant under rescaling either state."""
        qa, qb, r, na, nb = self.raw_terms(x.view(np.complex128))
        if qa <= 1e-14 * na * na or qb <= 1e-14 * nb * nb:
            return 1e6
        return r / math.sqrt(qa * qb)

    def gap(self, qa: float, qb: float, r: float, theta: float) -> float:
        wa, wb = math.cos(theta) ** 2, math.sin(theta) ** 2
        lhs = _sqrt(wa * wa * qa + wb * wb * qb + 2 * wa * wb * r)
        return self.pref * (lhs - wa * _sqrt(qa) - wb * _sqrt(qb))

    def full_gap(self, x: np.ndarray) -> float:
        z = x[:-1].view(np.complex128)
        return self.gap(*self.terms(z[:self.d], z[self.d:]), x[-1])


def _pack(psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    # interleaved (re, im) so the parameter vector views as complex without copying
    return np.concatenate([psi, phi]).view(np.float64).copy()


def _unpack(x: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    z = np.ascontiguousarray(x[:4 * d]).view(np.complex128)
    psi, phi = z[:d], z[d:]
    return psi / np.linalg.norm(psi), phi / np.linalg.norm(phi)


def _nm(fun, x0, maxfev):
    return minimize(fun, x0, method="Nelder-Mead",
                    options={"maxfev": maxfev, "maxiter": maxfev, "adaptive": True,
                             "xatol": 1e-9, "fatol": 1e-13})


def _best_weight(kern: _PairKernel, qa: float, qb: float, r: float) -> tuple[float, float]:
    line = minimize_scalar(lambda t: kern.gap(qa, qb, r, t), bounds=(0.0, math.pi / 2),
                           method="bounded", options={"xatol": 1e-10})
    return float(line.x), float(line.fun)


def _single_restart(task):
    """Ratio descent from a Haar pair, then the best weight. Picklable."""
    alpha, dims, flag_party, seed_seq, max_iters = task
    rng = np.random.default_rng(seed_seq)
    d = math.prod(dims)
    kern = _PairKernel(alpha, dims, flag_party)
    x0 = _pack(random_state(dims, rng).amplitudes, random_state(dims, rng).amplitudes)
    res = _nm(kern.ratio, x0, max_iters)
    psi, phi = _unpack(res.x, d)
    theta, gap = _best_weight(kern, *kern.terms(psi, phi))
    return gap, psi, phi, theta


def _polish(alpha, dims, flag_party, psi, phi, theta, gap, iters):
    """Joint simplex descent on the gap itself over (psi, phi, theta)."""
    d = math.prod(dims)
    kern = _PairKernel(alpha, dims, flag_party)
    res = _nm(kern.full_gap, np.append(_pack(psi, phi), theta), iters)
    if res.fun < gap:
        psi, phi = _unpack(res.x, d)
        theta, gap = _best_weight(kern, *kern.terms(psi, phi))
    return gap, psi, phi, theta


def _workers(config: SearchConfig) -> int:
    if config.workers is not None:
        return max(1, config.workers)
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_tasks(fn, tasks: list, workers: int) -> list:
    """Ordered map; a process pool when more than one worker is allowed."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class SearchResult:
    min_gap: float
    witness: ViolationWitness | None
    restart_gaps: list[tuple[int, int, float]]   # (flag_party, restart, gap)
    best_state: ViolationWitness | None = None   # best configuration even when not violating


def _flag_parties(spec: ConcurrenceSpec, dims: tuple[int, ...], config: SearchConfig):
    if config.flag_party is not None:
        return [config.flag_party]
    if is_permutation_symmetric(spec) and len(set(dims)) == 1:
        return [0]
    return list(range(spec.n))


def minimize_gap(spec: ConcurrenceSpec, dims: Sequence[int],
                 config: SearchConfig = SearchConfig()) -> SearchResult:
    """Random-restart derivative-free minimization of the gap over (psi, phi, theta).

    Restart ``r`` draws its Haar pair from the ``r``-th child of the master
    seed and, when several flag parties must be probed, uses party
    ``r mod len(parties)``.  Results do not depend on the worker count; ties
    are broken by (gap, restart index).  The best restart is then polished
    on the gap itself.
    """
    dims = tuple(int(x) for x in dims)
    if len(dims) != spec.n:
        raise DimensionMismatch(f"spec has N={spec.n}, dims {dims}")
    if not spec.is_admissible:
        raise NotPositive("spec is not admissible")
    if config.restarts < 1:
        raise ValueError("need at least one restart")
    nparams = 4 * math.prod(dims) + 1
    max_iters = config.max_iters if config.max_iters is not None else 3 * nparams ** 2
    polish = config.polish_iters if config.polish_iters is not None else 2 * max_iters
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    flags = _flag_parties(spec, dims, config)
    alpha = np.array(spec.alpha.values)
    flag_of = [flags[r % len(flags)] for r in range(config.restarts)]
    tasks = [(alpha, dims, flag_of[r], seeds[r], max_iters) for r in range(config.restarts)]
    outs = run_tasks(_single_restart, tasks, _workers(config))
    restart_gaps = [(flag_of[r], r, float(o[0])) for r, o in enumerate(outs)]

    best = min(range(config.restarts), key=lambda r: (outs[r][0], r))
    g, psi, phi, theta = outs[best]
    f = flag_of[best]
    if polish > 0 and g < 0:
        g, psi, phi, theta = _polish(alpha, dims, f, psi, phi, theta, g, polish)
    state = _witness(spec, PureState(dims, psi), PureState(dims, phi),
                     math.cos(theta), math.sin(theta), f)
    witness = state if state.gap < -config.tol else None
    return SearchResult(state.gap, witness, restart_gaps, state)


def search_violation(spec: ConcurrenceSpec, dims: Sequence[int],
                     config: SearchConfig = SearchConfig()) -> ViolationWitness | None:
    """Witness with gap below ``-config.tol``, or None.

    None is numerical evidence only, never a proof of monotonicity.
    """
    return minimize_gap(spec, dims, config).witness


# --- four-party kappa family ------------------------------------------------

def kappa2_of(kappa1: float) -> float:
    return (-14.0 - 8.0 * kappa1) / 6.0


@dataclass
class KappaPoint:
    kappa1: float
    kappa2: float
    min_gap: float
    violated: bool
    admissible: bool


@dataclass
class KappaScanResult:
    kappa1_grid: list[float]
    min_gap_per_point: list[float]
    boundary_estimate: float
    points: list[KappaPoint] = field(default_factory=list)      # grid points
    refinements: list[KappaPoint] = field(default_factory=list)  # bisection points

    def all_points(self) -> list[KappaPoint]:
        return sorted(self.points + self.refinements, key=lambda p: p.kappa1)


KAPPA_SCAN_CONFIG = SearchConfig(restarts=3, polish_iters=0)


def _kappa_point(kappa1: float, dims, config: SearchConfig) -> KappaPoint:
    spec = kappa_spec(kappa1)
    k2 = kappa2_of(kappa1)
    if not spec.is_admissible:
        return KappaPoint(kappa1, k2, math.nan, False, False)
    res = minimize_gap(spec, dims, config)
    return KappaPoint(kappa1, k2, res.min_gap, res.witness is not None, True)


def kappa_scan(grid: Iterable[float] | None = None, dims: Sequence[int] = (2, 2, 2, 2),
               config: SearchConfig = KAPPA_SCAN_CONFIG, refine_tol: float = 0.05,
               progress=None) -> KappaScanResult:
    """Search each kappa1 in ``grid``; bisect the first violated -> clean transition
    until the bracket half-width is at most ``refine_tol``."""
    grid = sorted(float(k) for k in (np.linspace(-7.0, 0.0, 8) if grid is None else grid))

    def evaluate(k):
        pt = _kappa_point(k, dims, config)
        if progress:
            progress(pt)
        return pt

    points = [evaluate(k) for k in grid]
    refinements = []
    boundary = math.nan
    for lo, hi in zip(points, points[1:]):
        if lo.admissible and hi.admissible and lo.violated and not hi.violated:
            a, b = lo.kappa1, hi.kappa1
            while b - a > 2 * refine_tol:
                mid = evaluate(0.5 * (a + b))
                refinements.append(mid)
                if mid.violated:
                    a = mid.kappa1
                else:
                    b = mid.kappa1
            boundary = 0.5 * (a + b)
            break
    return KappaScanResult(grid, [p.min_gap for p in points], boundary, points, refinements)


def write_kappa_csv(result: KappaScanResult, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["kappa1", "kappa2", "min_gap", "violated"])
    for p in result.all_points():
        w.writerow([f"{p.kappa1:.12g}", f"{p.kappa2:.12g}", f"{p.min_gap:.12g}", int(p.violated)])


# --- tripartite region ------------------------------------------------------

@dataclass(frozen=True)
class RegionPoint:
    p: tuple[float, float, float]   # (p_{+--}, p_{-+-}, p_{--+})
    admissible: bool
    monotone: bool


def tripartite_p_spec(p1: float, p2: float, p3: float) -> ConcurrenceSpec:
    return ConcurrenceSpec.from_p({"+--": p1, "-+-": p2, "--+": p3}, n=3)


def classify_tripartite(p1: float, p2: float, p3: float, tol: float = 1e-12) -> RegionPoint:
    """Monotone iff the three weights satisfy the triangle inequalities."""
    admissible = min(p1, p2, p3) >= -tol
    monotone = admissible and (p1 + p2 >= p3 - tol and p2 + p3 >= p1 - tol
                               and p1 + p3 >= p2 - tol)
    return RegionPoint((p1, p2, p3), admissible, monotone)


def tripartite_region(resolution: int, total: float = 3.0) -> list[RegionPoint]:
    """Triangular grid on p_{+--} + p_{-+-} + p_{--+} = total, p >= 0."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    out = []
    for i in range(resolution + 1):
        for j in range(resolution + 1 - i):
            k = resolution - i - j
            out.append(classify_tripartite(total * i / resolution, total * j / resolution,
                                           total * k / resolution))
    return out


def write_region_csv(points: list[RegionPoint], fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["p1", "p2", "p3", "admissible", "monotone"])
    for pt in points:
        w.writerow([f"{x:.12g}" for x in pt.p] + [int(pt.admissible), int(pt.monotone)])


def describe_positive(spec: ConcurrenceSpec) -> str:
    return ", ".join(f"{{{subset_label(b, spec.n)}}}={spec.alpha.values[b]:.6g}"
                     for b in positive_subsets(spec))
