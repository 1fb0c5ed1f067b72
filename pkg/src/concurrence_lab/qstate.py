"""Dense tensor-product pure states, reductions and purities.

Parties are indexed from 0 internally. A subset of parties is an integer
bitmask (bit ``i`` set means party ``i`` belongs to the subset), wrapped in
:class:`SubsetMask` at the public surface.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SubsetMask:
    bits: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("party count must be positive")
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"mask {self.bits:b} does not fit {self.n} parties")

    @classmethod
    def from_parties(cls, parties: Iterable[int], n: int) -> SubsetMask:
        bits = 0
        for i in parties:
            if not 0 <= i < n:
                raise IndexError(f"party {i} out of range for N={n}")
            bits |= 1 << i
        return cls(bits, n)

    @classmethod
    def empty(cls, n: int) -> SubsetMask:
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> SubsetMask:
        return cls((1 << n) - 1, n)

    def complement(self) -> SubsetMask:
        return SubsetMask(((1 << self.n) - 1) ^ self.bits, self.n)

    @property
    def parties(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.bits >> i & 1)

    def __contains__(self, party: int) -> bool:
        return bool(self.bits >> party & 1)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def label(self) -> str:
        """1-based party list, e.g. ``"13"`` for parties 1 and 3."""
        sep = "," if self.n >= 10 else ""
        return sep.join(str(i + 1) for i in self.parties)


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector over ``prod(dims)`` amplitudes, party 1 slowest.

    Norms below one are allowed: ensemble weights are carried in the length.
    """

    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"invalid dims {dims}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != prod(dims):
            raise DimensionMismatch(
                f"{amps.size} amplitudes for dims {dims} (expected {prod(dims)})")
        amps.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> PureState:
        return PureState(self.dims, self.amplitudes / self.norm())

    def scaled(self, factor: complex) -> PureState:
        return PureState(self.dims, factor * self.amplitudes)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def overlap(self, other: PureState) -> complex:
        _check_same_dims(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims),
                "re": self.amplitudes.real.tolist(),
                "im": self.amplitudes.imag.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> PureState:
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
        if re.shape != im.shape:
            raise DimensionMismatch("re/im length mismatch")
        return cls(tuple(data["dims"]), re + 1j * im)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> PureState:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Operator on the tensor factor of the retained parties."""

    dims: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        mat = np.array(self.matrix, dtype=np.complex128)
        d = prod(dims)
        if mat.shape != (d, d):
            raise DimensionMismatch(f"matrix shape {mat.shape} does not match dims {dims}")
        mat.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", mat)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.abs(self.matrix - self.matrix.conj().T).max(initial=0.0) <= tol)

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        herm = (self.matrix + self.matrix.conj().T) / 2
        return bool(np.linalg.eigvalsh(herm).min(initial=0.0) >= -tol)


def _check_same_dims(psi: PureState, phi: PureState):
    if psi.dims != phi.dims:
        raise DimensionMismatch(f"dims differ: {psi.dims} vs {phi.dims}")


def _mask_bits(mask: SubsetMask | int, n: int) -> int:
    if isinstance(mask, SubsetMask):
        if mask.n != n:
            raise DimensionMismatch(f"mask over {mask.n} parties, state has {n}")
        return mask.bits
    bits = int(mask)
    if bits < 0 or bits >> n:
        raise DimensionMismatch(f"mask {bits:b} does not fit {n} parties")
    return bits


@lru_cache(maxsize=256)
def _split_plan(dims: tuple[int, ...], kept_bits: int) -> tuple[np.ndarray, int, int]:
    """Index permutation that lays amplitudes out as a (kept x rest) matrix."""
    n = len(dims)
    kept = [i for i in range(n) if kept_bits >> i & 1]
    rest = [i for i in range(n) if not kept_bits >> i & 1]
    dk = prod(dims[i] for i in kept)
    perm = np.arange(prod(dims)).reshape(dims).transpose(kept + rest).reshape(-1)
    perm.setflags(write=False)
    return perm, dk, perm.size // dk


def _split(amps: np.ndarray, dims: tuple[int, ...], kept_bits: int) -> np.ndarray:
    perm, dk, dr = _split_plan(dims, kept_bits)
    return amps[perm].reshape(dk, dr)


def _gram_purity(m: np.ndarray) -> float:
    g = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.T @ m.conj()
    return float(np.vdot(g, g).real)


def partial_trace(psi: PureState, traced: SubsetMask | int) -> DensityMatrix:
    """Reduced operator on the parties not in ``traced``."""
    full = (1 << psi.n) - 1
    kept = full ^ _mask_bits(traced, psi.n)
    m = _split(psi.amplitudes, psi.dims, kept)
    dims = tuple(d for i, d in enumerate(psi.dims) if kept >> i & 1)
    return DensityMatrix(dims, m @ m.conj().T)


def purity(psi: PureState, traced: SubsetMask | int) -> float:
    """Tr of the squared reduction left after tracing out ``traced``.

    Computed on whichever side of the cut is smaller; both sides share the
    nonzero spectrum of a pure state.
    """
    bits = _mask_bits(traced, psi.n)
    return _gram_purity(_split(psi.amplitudes, psi.dims, bits))


def all_purities(psi: PureState) -> np.ndarray:
    """Purities for every traced subset, indexed by bitmask."""
    return _all_purities(psi.amplitudes, psi.dims)


def _all_purities(amps: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    n = len(dims)
    full = (1 << n) - 1
    out = np.empty(1 << n)
    # V and its complement give equal purities; visit the half without the last party
    for bits in range(1 << (n - 1)):
        v = _gram_purity(_split(amps, dims, bits))
        out[bits] = out[full ^ bits] = v
    return out


def cross_purity(psi: PureState, phi: PureState, kept: SubsetMask | int) -> float:
    """Tr(rho_psi rho_phi) with both reductions taken onto ``kept``."""
    _check_same_dims(psi, phi)
    bits = _mask_bits(kept, psi.n)
    a = _split(psi.amplitudes, psi.dims, bits)
    b = _split(phi.amplitudes, phi.dims, bits)
    if a.shape[0] <= a.shape[1]:
        ra, rb = a @ a.conj().T, b @ b.conj().T
        return float(np.vdot(ra, rb).real)
    x = a.conj().T @ b
    return float(np.vdot(x, x).real)


def attach_flag(psi: PureState, party: int, flag_dim: int = 2, flag_index: int = 0) -> PureState:
    """Append a basis flag to ``party``; its local dimension grows to d * flag_dim."""
    if not 0 <= party < psi.n:
        raise IndexError(f"party {party} out of range for N={psi.n}")
    if not 0 <= flag_index < flag_dim:
        raise IndexError(f"flag index {flag_index} out of range for flag_dim={flag_dim}")
    d = psi.dims
    left, right = prod(d[:party]), prod(d[party + 1:])
    out = np.zeros((left, d[party], flag_dim, right), dtype=np.complex128)
    out[:, :, flag_index, :] = psi.amplitudes.reshape(left, d[party], right)
    dims = d[:party] + (d[party] * flag_dim,) + d[party + 1:]
    return PureState(dims, out.reshape(-1))


def flag_superposition(psi: PureState, phi: PureState, a: complex, b: complex,
                       party: int) -> PureState:
    """a |psi>|eta_0> + b |phi>|eta_1> with the flags on ``party``."""
    _check_same_dims(psi, phi)
    if abs(a) ** 2 + abs(b) ** 2 > 1 + 1e-12:
        raise ValueError("|a|^2 + |b|^2 exceeds 1")
    x = attach_flag(psi, party, 2, 0).amplitudes * a + attach_flag(phi, party, 2, 1).amplitudes * b
    return PureState(attach_flag(psi, party).dims, x)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_state(dims: Sequence[int], seed=None) -> PureState:
    """Haar-random normalized state (normalized complex Gaussian vector)."""
    rng = _rng(seed)
    d = prod(dims)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState(tuple(dims), v / np.linalg.norm(v))


def random_unitary(d: int, seed=None) -> np.ndarray:
    """Haar unitary via QR with phase correction."""
    rng = _rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def apply_local(psi: PureState, ops: Sequence[np.ndarray | None]) -> PureState:
    """Apply one operator per party (``None`` leaves that party alone)."""
    if len(ops) != psi.n:
        raise DimensionMismatch(f"{len(ops)} local operators for {psi.n} parties")
    t = psi.tensor()
    for i, op in enumerate(ops):
        if op is None:
            continue
        t = np.moveaxis(np.tensordot(op, t, axes=([1], [i])), 0, i)
    return PureState(psi.dims, t.reshape(-1))


def tensor(*states: PureState) -> PureState:
    """Product state; parties are concatenated in order."""
    amps = np.ones(1, dtype=np.complex128)
    dims: tuple[int, ...] = ()
    for s in states:
        amps = np.kron(amps, s.amplitudes)
        dims += s.dims
    return PureState(dims, amps)


def permute_parties(psi: PureState, order: Sequence[int]) -> PureState:
    """New state whose party ``j`` is the old party ``order[j]``."""
    if sorted(order) != list(range(psi.n)):
        raise ValueError(f"{order} is not a permutation of {psi.n} parties")
    t = psi.tensor().transpose(order)
    return PureState(tuple(psi.dims[i] for i in order), t.reshape(-1))


def basis_state(dims: Sequence[int], digits: Sequence[int]) -> PureState:
    amps = np.zeros(prod(dims), dtype=np.complex128)
    amps[np.ravel_multi_index(tuple(digits), tuple(dims))] = 1.0
    return PureState(tuple(dims), amps)


def product_state(vectors: Sequence[Sequence[complex]]) -> PureState:
    return tensor(*(PureState((len(v),), v) for v in vectors))


def generalized_phi(n: int, sign: int = +1) -> PureState:
    """(|0...0> + sign |1...1>)/sqrt(2) on n qubits."""
    if n < 1:
        raise ValueError("need at least one party")
    amps = np.zeros(2 ** n, dtype=np.complex128)
    amps[0] = 1 / np.sqrt(2)
    amps[-1] = sign / np.sqrt(2)
    return PureState((2,) * n, amps)


def bell_phi_plus() -> PureState:
    return generalized_phi(2, +1)


def bell_phi_minus() -> PureState:
    return generalized_phi(2, -1)


def ghz(n: int) -> PureState:
    if n < 2:
        raise ValueError("GHZ state needs N >= 2")
    return generalized_phi(n, +1)


def w(n: int) -> PureState:
    if n < 2:
        raise ValueError("W state needs N >= 2")
    amps = np.zeros(2 ** n, dtype=np.complex128)
    for i in range(n):
        amps[1 << i] = 1 / np.sqrt(n)
    return PureState((2,) * n, amps)
