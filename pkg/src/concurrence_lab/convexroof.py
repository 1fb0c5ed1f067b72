"""Convex-roof upper bounds for mixed-state concurrences.

A decomposition rho = sum_j |psi_j><psi_j| uses sub-normalized vectors, so
the ensemble average of the concurrence is simply sum_j C(psi_j).  Every
decomposition with m members is reachable from the eigen-ensemble through an
m x r isometry; the estimator walks over isometries by random perturbation
followed by QR re-orthonormalization and keeps a step only if it improves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .concurrence import RADICAND_ERROR, ConcurrenceSpec, concurrence_pure
from .errors import DimensionMismatch, InvalidSpec, NotIsometry, NotPSD, SpecNotSufficient
from .qstate import HERMITIAN_TOL, PureState, _all_purities
from .monotonicity import sufficient_criterion

TRACE_TOL = 1e-10
EIGEN_CUTOFF = 1e-12
ISOMETRY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MixedState:
    """Validated density operator over parties with the given dims."""

    dims: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or min(dims) < 1:
            raise DimensionMismatch(f"invalid dims {dims}")
        mat = np.array(self.matrix, dtype=np.complex128)
        d = math.prod(dims)
        if mat.shape != (d, d):
            raise DimensionMismatch(f"matrix shape {mat.shape} does not match dims {dims}")
        if np.abs(mat - mat.conj().T).max() > HERMITIAN_TOL:
            raise NotPSD("matrix is not Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1) > TRACE_TOL:
            raise NotPSD(f"trace {tr:.12g} differs from 1")
        lo = np.linalg.eigvalsh(mat).min()
        if lo < -TRACE_TOL:
            raise NotPSD(f"eigenvalue {lo:.3g} is negative")
        mat.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def rank(self) -> int:
        return int((np.linalg.eigvalsh(self.matrix) > EIGEN_CUTOFF).sum())

    @classmethod
    def from_pure(cls, psi: PureState) -> MixedState:
        v = psi.normalized().amplitudes
        return cls(psi.dims, np.outer(v, v.conj()))

    @classmethod
    def mixture(cls, states: Sequence[PureState], weights: Sequence[float]) -> MixedState:
        """sum_k w_k |psi_k><psi_k| with each psi_k normalized first."""
        if len(states) != len(weights) or not states:
            raise ValueError("need one weight per state")
        dims = states[0].dims
        mat = np.zeros((states[0].dim,) * 2, dtype=np.complex128)
        for psi, wt in zip(states, weights):
            if psi.dims != dims:
                raise DimensionMismatch(f"dims differ: {dims} vs {psi.dims}")
            v = psi.normalized().amplitudes
            mat += wt * np.outer(v, v.conj())
        return cls(dims, mat)

    @classmethod
    def maximally_mixed(cls, dims: Sequence[int]) -> MixedState:
        d = math.prod(dims)
        return cls(tuple(dims), np.eye(d) / d)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "re": self.matrix.real.tolist(),
                "im": self.matrix.imag.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> MixedState:
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
        return cls(tuple(data["dims"]), re + 1j * im)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> MixedState:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Sub-normalized pure states whose projectors sum to ``source``."""

    vectors: tuple[PureState, ...]
    source: MixedState

    def __post_init__(self):
        vecs = tuple(self.vectors)
        for v in vecs:
            if v.dims != self.source.dims:
                raise DimensionMismatch(f"vector dims {v.dims} vs state dims {self.source.dims}")
        object.__setattr__(self, "vectors", vecs)
        dev = self.reconstruction_error()
        if dev > RECONSTRUCTION_TOL:
            raise ValueError(f"decomposition misses rho by {dev:.3g}")

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        """Rows are the amplitude vectors."""
        return np.array([v.amplitudes for v in self.vectors])

    def reconstruct(self) -> np.ndarray:
        m = self.matrix()
        return m.T @ m.conj()

    def reconstruction_error(self) -> float:
        return float(np.abs(self.reconstruct() - self.source.matrix).max())

    def weights(self) -> np.ndarray:
        return np.array([v.norm() ** 2 for v in self.vectors])

    def average(self, spec: ConcurrenceSpec) -> float:
        return math.fsum(concurrence_pure(spec, v) for v in self.vectors)


def _eigen(rho: MixedState) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(rho.matrix)
    if vals.min() < -TRACE_TOL:
        raise NotPSD(f"eigenvalue {vals.min():.3g} is negative")
    keep = vals > EIGEN_CUTOFF
    order = np.argsort(-vals[keep], kind="stable")
    return vals[keep][order], vecs[:, keep][:, order]


def eigendecomposition_ensemble(rho: MixedState) -> Decomposition:
    vals, vecs = _eigen(rho)
    rows = np.sqrt(vals)[:, None] * vecs.T
    return Decomposition(tuple(PureState(rho.dims, r) for r in rows), rho)


def _check_isometry(u: np.ndarray, r: int):
    if u.ndim != 2 or u.shape[1] != r or u.shape[0] < r:
        raise NotIsometry(f"isometry shape {u.shape} incompatible with rank {r}")
    dev = np.abs(u.conj().T @ u - np.eye(r)).max()
    if dev > ISOMETRY_TOL:
        raise NotIsometry(f"columns deviate from orthonormal by {dev:.3g}")


def mix_decomposition(dec: Decomposition, isometry: np.ndarray) -> Decomposition:
    """New members psi'_j = sum_i conj(U_ji) psi_i."""
    u = np.asarray(isometry, dtype=np.complex128)
    _check_isometry(u, len(dec))
    rows = u.conj() @ dec.matrix()
    return Decomposition(tuple(PureState(dec.source.dims, r) for r in rows), dec.source)


def isometry_for(rho: MixedState, vectors: Sequence[PureState]) -> np.ndarray:
    """Isometry taking the eigen-ensemble of rho to the given decomposition."""
    vals, vecs = _eigen(rho)
    amps = np.array([v.amplitudes for v in vectors])
    u = (amps.conj() @ vecs) / np.sqrt(vals)
    _check_isometry(u, len(vals))
    return u


@dataclass(frozen=True)
class RoofConfig:
    ensemble_size: int | None = None
    restarts: int = 4
    iters: int = 400
    seed: int = 42
    step: float = 0.3
    polish_iters: int = 200


@dataclass
class RoofEstimate:
    value: float
    eigen_average: float
    history: list[float] = field(default_factory=list)
    best: np.ndarray | None = None


class _Roof:
    """Average concurrence of the decomposition generated by an isometry."""

    def __init__(self, spec: ConcurrenceSpec, rho: MixedState):
        if spec.n != rho.n:
            raise DimensionMismatch(f"spec has N={spec.n}, state has {rho.n} parties")
        if not spec.is_admissible:
            raise InvalidSpec("spec is not admissible")
        self.dims = rho.dims
        self.alpha = spec.alpha.values
        self.prefactor = 2.0 ** (1 - spec.n / 2)
        vals, vecs = _eigen(rho)
        self.base = np.sqrt(vals)[:, None] * vecs.T
        self.rank = len(vals)

    def average(self, u: np.ndarray) -> float:
        rows = u.conj() @ self.base
        total = []
        for r in rows:
            rad = float(self.alpha @ _all_purities(r, self.dims))
            if rad < -RADICAND_ERROR:
                raise InvalidSpec(f"negative radicand {rad:.3g}")
            total.append(math.sqrt(max(rad, 0.0)))
        return self.prefactor * math.fsum(total)


def _reorthonormalize(m: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(m)
    d = np.diagonal(r)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    return q * phase


def _pad(u: np.ndarray, m: int) -> np.ndarray:
    if u.shape[0] >= m:
        return u
    return np.vstack([u, np.zeros((m - u.shape[0], u.shape[1]), dtype=u.dtype)])


def _polar(m: np.ndarray) -> np.ndarray:
    w, _, vh = np.linalg.svd(m, full_matrices=False)
    return w @ vh


def _polish(roof: _Roof, u: np.ndarray, iters: int) -> tuple[np.ndarray, float]:
    """L-BFGS-B over unconstrained m x r matrices mapped to isometries by polar retraction."""
    start = roof.average(u)
    if iters <= 0:
        return u, start
    shape = u.shape

    def unpack(v):
        return _polar(v.view(np.complex128).reshape(shape))

    res = minimize(lambda v: roof.average(unpack(v)), np.ascontiguousarray(u).view(np.float64).ravel(),
                   method="L-BFGS-B", options={"maxiter": iters, "maxfun": 10**7})
    if res.fun < start:
        return unpack(res.x), float(res.fun)
    return u, start


def _descend(roof: _Roof, u: np.ndarray, iters: int, step: float,
             rng: np.random.Generator) -> tuple[np.ndarray, float, list[float]]:
    best = roof.average(u)
    history = [best]
    for _ in range(iters):
        g = rng.standard_normal(u.shape) + 1j * rng.standard_normal(u.shape)
        trial = _reorthonormalize(u + step * g)
        val = roof.average(trial)
        if val < best:
            u, best = trial, val
            step = min(step * 1.5, 1.0)
        else:
            step = max(step * 0.9, 1e-9)
        history.append(best)
    return u, best, history


def convex_roof_upper(spec: ConcurrenceSpec, rho: MixedState, config: RoofConfig | None = None,
                      candidates: Sequence[Sequence[PureState]] = ()) -> RoofEstimate:
    """Upper bound on C(rho): the best ensemble average among explored decompositions.

    Restart 0 starts from the eigen-ensemble, each candidate decomposition gets
    its own start, and the remaining restarts begin at random isometries.  The
    random starts are first polished by L-BFGS-B; every start then goes
    through ``iters`` perturbation steps, so the result never increases with
    ``iters`` for a fixed seed.
    """
    config = config or RoofConfig()
    roof = _Roof(spec, rho)
    r = roof.rank
    m = max(config.ensemble_size or 2 * r, r)
    eye = _pad(np.eye(r, dtype=np.complex128), m)
    eigen_avg = roof.average(np.eye(r, dtype=np.complex128))

    starts = [eye]
    for cand in candidates:
        u = isometry_for(rho, cand)
        starts.append(_pad(u, m))
    seeds = np.random.SeedSequence(config.seed).spawn(max(config.restarts, 1) + len(starts))
    for k in range(max(config.restarts - 1, 0)):
        rng = np.random.default_rng(seeds[-1 - k])
        g = rng.standard_normal((m, r)) + 1j * rng.standard_normal((m, r))
        starts.append(_polish(roof, _reorthonormalize(g), config.polish_iters)[0])

    best_val, best_u, history = eigen_avg, eye, [eigen_avg]
    for k, u0 in enumerate(starts):
        rng = np.random.default_rng(seeds[k])
        u, val, hist = _descend(roof, u0, config.iters, config.step, rng)
        if val < best_val:
            best_val, best_u = val, u
        history.extend(hist)
    running = np.minimum.accumulate(history)
    return RoofEstimate(float(best_val), float(eigen_avg), running.tolist(), best_u)


def flagged_mixture(rho1: MixedState, rho2: MixedState, p1: float, p2: float,
                    flag_party: int = 0) -> MixedState:
    """p1 rho1 (x) |0><0| + p2 rho2 (x) |1><1| with the flag inside ``flag_party``."""
    if rho1.dims != rho2.dims:
        raise DimensionMismatch(f"dims differ: {rho1.dims} vs {rho2.dims}")
    if not 0 <= flag_party < rho1.n:
        raise ValueError(f"flag party {flag_party} out of range")
    mat = p1 * _flag_operator(rho1, flag_party, 0) + p2 * _flag_operator(rho2, flag_party, 1)
    dims = tuple(d * 2 if i == flag_party else d for i, d in enumerate(rho1.dims))
    return MixedState(dims, mat)


def _flag_operator(rho: MixedState, party: int, index: int) -> np.ndarray:
    n = rho.n
    flag = np.zeros((2, 2))
    flag[index, index] = 1.0
    t = np.multiply.outer(rho.matrix.reshape(rho.dims * 2), flag)
    # axes: rows 0..n-1, cols n..2n-1, flag row 2n, flag col 2n+1
    order = []
    for i in range(n):
        order.append(i)
        if i == party:
            order.append(2 * n)
    for i in range(n):
        order.append(n + i)
        if i == party:
            order.append(2 * n + 1)
    d = math.prod(rho.dims) * 2
    return t.transpose(order).reshape(d, d)


def _flag_vector(psi: PureState, party: int, index: int) -> PureState:
    t = psi.tensor()
    out = np.zeros(t.shape + (2,), dtype=np.complex128)
    out[..., index] = t
    out = np.moveaxis(out, -1, party + 1)
    dims = tuple(d * 2 if i == party else d for i, d in enumerate(psi.dims))
    return PureState(dims, out.reshape(-1))


@dataclass
class FlagsCheck:
    lhs_estimate: float
    rhs_value: float
    residual: float
    rhs_terms: tuple[float, float]


def flags_equality_check(spec: ConcurrenceSpec, rho1: MixedState, rho2: MixedState,
                         p1: float, p2: float, flag_party: int = 0,
                         config: RoofConfig | None = None) -> FlagsCheck:
    """Compare the roof of the flagged mixture with the weighted roofs of its parts.

    The concatenation of the two best decompositions, scaled by sqrt(p_k) and
    tagged with orthogonal flags, is always offered to the lhs optimizer, so
    lhs_estimate <= rhs_value holds by construction.
    """
    if not sufficient_criterion(spec):
        raise SpecNotSufficient("the flags equality is only checked for specs with alpha <= 0")
    if min(p1, p2) < 0 or abs(p1 + p2 - 1) > 1e-12:
        raise ValueError("p1 and p2 must be nonnegative and sum to 1")
    config = config or RoofConfig()
    parts = []
    for rho in (rho1, rho2):
        est = convex_roof_upper(spec, rho, config)
        dec = mix_decomposition(eigendecomposition_ensemble(rho), est.best)
        parts.append((est.value, dec))
    rhs = p1 * parts[0][0] + p2 * parts[1][0]

    joint = []
    for k, (pk, (_, dec)) in enumerate(zip((p1, p2), parts)):
        if pk > 0:
            joint.extend(_flag_vector(v.scaled(math.sqrt(pk)), flag_party, k) for v in dec.vectors)
    mixed = flagged_mixture(rho1, rho2, p1, p2, flag_party)
    lhs = convex_roof_upper(spec, mixed, config, candidates=[joint]).value
    return FlagsCheck(lhs, rhs, lhs - rhs, (parts[0][0], parts[1][0]))
