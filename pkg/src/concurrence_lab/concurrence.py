"""Generalized concurrences: coefficient algebra and pure-state evaluation.

A measure is fixed either by weights ``p_s`` on tensor products of local
(anti)symmetric projectors, indexed by sign patterns ``s``, or by subset
coefficients ``alpha_V`` multiplying reduced-state purities.  The two are
related by a Walsh-Hadamard transform with +-1 weights::

    alpha_V = sum_s p_s prod_{i in V} s_i
    p_s     = 2**-N sum_V alpha_V prod_{i in V} s_i

Sign patterns are stored by their "minus mask" (bit ``i`` set means
``s_i = -``), subsets by their party mask, so both live in arrays of length
``2**N``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, NegativeRadicand, NotPositive, ZeroSpec
from .qstate import PureState, SubsetMask, all_purities

P_NEG_TOL = 1e-12
SYMMETRY_TOL = 1e-12
RADICAND_CLAMP = 1e-10
RADICAND_ERROR = 1e-8


@lru_cache(maxsize=16)
def sign_matrix(n: int) -> np.ndarray:
    """H[V, s] = prod_{i in V} s_i = (-1)**popcount(V & minus(s))."""
    m = np.arange(1 << n)
    parity = np.zeros((1 << n, 1 << n), dtype=np.int64)
    for i in range(n):
        parity ^= ((m[:, None] >> i) & (m[None, :] >> i)) & 1
    h = 1 - 2 * parity
    h.setflags(write=False)
    return h


def _transform(values: np.ndarray, n: int) -> np.ndarray:
    # fsum keeps every entry correctly rounded; the round trip stays at ulp level
    h = sign_matrix(n)
    return np.array([math.fsum(row * values) for row in h], dtype=float)


def pattern_label(minus_bits: int, n: int) -> str:
    return "".join("-" if minus_bits >> i & 1 else "+" for i in range(n))


def parse_pattern(label: str) -> int:
    bits = 0
    for i, ch in enumerate(label.strip()):
        if ch in "-−":
            bits |= 1 << i
        elif ch != "+":
            raise InvalidSpec(f"bad sign pattern {label!r}")
    return bits


def subset_label(bits: int, n: int) -> str:
    return SubsetMask(bits, n).label()


def parse_subset(label: str, n: int) -> int:
    label = label.strip()
    if not label:
        return 0
    parts = label.split(",") if "," in label else list(label)
    try:
        return SubsetMask.from_parties((int(x) - 1 for x in parts), n).bits
    except (ValueError, IndexError) as exc:
        raise InvalidSpec(f"bad subset key {label!r} for N={n}") from exc


def _popcount(x: int) -> int:
    return bin(x).count("1")


@dataclass(frozen=True, eq=False)
class CoefficientsP:
    n: int
    values: np.ndarray  # indexed by minus mask

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != 1 << self.n:
            raise DimensionMismatch(f"{v.size} p values for N={self.n}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, pattern: str) -> float:
        return float(self.values[parse_pattern(pattern)])

    @classmethod
    def from_dict(cls, n: int, data: dict[str, float]) -> CoefficientsP:
        v = np.zeros(1 << n)
        for key, val in data.items():
            if len(key.strip()) != n:
                raise InvalidSpec(f"pattern {key!r} has wrong length for N={n}")
            v[parse_pattern(key)] = float(val)
        return cls(n, v)

    def to_dict(self) -> dict[str, float]:
        return {pattern_label(s, self.n): float(x) for s, x in enumerate(self.values)}


@dataclass(frozen=True, eq=False)
class CoefficientsAlpha:
    n: int
    values: np.ndarray  # indexed by subset mask

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != 1 << self.n:
            raise DimensionMismatch(f"{v.size} alpha values for N={self.n}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, subset: str | SubsetMask | int) -> float:
        if isinstance(subset, str):
            return float(self.values[parse_subset(subset, self.n)])
        if isinstance(subset, SubsetMask):
            return float(self.values[subset.bits])
        return float(self.values[subset])

    @classmethod
    def from_dict(cls, n: int, data: dict[str, float]) -> CoefficientsAlpha:
        """Missing subsets are filled from their complement when it is given."""
        v = np.full(1 << n, np.nan)
        for key, val in data.items():
            v[parse_subset(key, n)] = float(val)
        full = (1 << n) - 1
        for bits in range(1 << n):
            if np.isnan(v[bits]):
                if np.isnan(v[full ^ bits]):
                    raise InvalidSpec(
                        f"alpha for subset {{{subset_label(bits, n)}}} and its complement missing")
                v[bits] = v[full ^ bits]
        return cls(n, v)

    def to_dict(self) -> dict[str, float]:
        return {subset_label(b, self.n): float(x) for b, x in enumerate(self.values)}


def alpha_from_p(p: CoefficientsP) -> CoefficientsAlpha:
    """alpha_V = sum_s p_s prod_{i in V} s_i."""
    return CoefficientsAlpha(p.n, _transform(p.values, p.n))


def _p_values(alpha: CoefficientsAlpha) -> np.ndarray:
    return _transform(alpha.values, alpha.n) / (1 << alpha.n)


def _symmetry_violations(alpha: CoefficientsAlpha, tol: float = SYMMETRY_TOL):
    n, v = alpha.n, alpha.values
    full = (1 << n) - 1
    scale = max(1.0, float(np.abs(v).max(initial=0.0)))
    out = []
    for bits in range(1 << n):
        comp = full ^ bits
        if bits < comp and abs(v[bits] - v[comp]) > tol * scale:
            out.append((subset_label(bits, n), subset_label(comp, n), float(v[bits]), float(v[comp])))
    return out


def p_from_alpha(alpha: CoefficientsAlpha) -> CoefficientsP:
    """Inverse transform; raises ``NotPositive`` outside the admissible cone."""
    if _symmetry_violations(alpha):
        raise InvalidSpec("alpha is not complement symmetric")
    scale = max(1.0, float(np.abs(alpha.values).max(initial=0.0)))
    if abs(math.fsum(alpha.values)) > SYMMETRY_TOL * scale * (1 << alpha.n):
        raise InvalidSpec("alpha does not sum to zero (p_{+...+} != 0)")
    p = _p_values(alpha)
    bad = np.flatnonzero(p < -P_NEG_TOL)
    if bad.size:
        worst = {pattern_label(int(s), alpha.n): float(p[s]) for s in bad}
        raise NotPositive(f"negative p coefficients: {worst}")
    return CoefficientsP(alpha.n, p)


@dataclass
class ValidationReport:
    complement_symmetric: bool
    zero_sum: bool
    positive: bool
    normalized: bool
    symmetry_violations: list = field(default_factory=list)
    alpha_sum: float = 0.0
    negative_p: dict = field(default_factory=dict)
    normalization_detail: str = ""

    @property
    def admissible(self) -> bool:
        """Structural checks only; normalization is a convention."""
        return self.complement_symmetric and self.zero_sum and self.positive

    def lines(self) -> list[str]:
        def mark(ok):
            return "ok  " if ok else "FAIL"
        out = [f"{mark(self.complement_symmetric)} complement symmetry alpha_V = alpha_Vbar"]
        out += [f"       alpha[{a}]={x:.12g} != alpha[{b}]={y:.12g}"
                for a, b, x, y in self.symmetry_violations]
        out.append(f"{mark(self.zero_sum)} sum_V alpha_V = 0 (sum = {self.alpha_sum:.12g})")
        out.append(f"{mark(self.positive)} p_s >= 0")
        out += [f"       p[{k}] = {v:.12g}" for k, v in self.negative_p.items()]
        out.append(f"{mark(self.normalized)} normalization: {self.normalization_detail}")
        return out


@dataclass(frozen=True, eq=False)
class ConcurrenceSpec:
    """Measure parameters. Valid for parties of any local dimension."""

    alpha: CoefficientsAlpha

    @property
    def n(self) -> int:
        return self.alpha.n

    @classmethod
    def from_p(cls, p: CoefficientsP | dict, n: int | None = None) -> ConcurrenceSpec:
        if isinstance(p, dict):
            if n is None:
                n = len(next(iter(p)))
            p = CoefficientsP.from_dict(n, p)
        return cls(alpha_from_p(p))

    @classmethod
    def from_alpha(cls, alpha: CoefficientsAlpha | dict, n: int | None = None,
                   strict: bool = True) -> ConcurrenceSpec:
        if isinstance(alpha, dict):
            if n is None:
                raise ValueError("n is required for dict input")
            alpha = CoefficientsAlpha.from_dict(n, alpha)
        spec = cls(alpha)
        if strict:
            report = spec.validate()
            if not report.admissible:
                raise (NotPositive if report.complement_symmetric and report.zero_sum
                       else InvalidSpec)("; ".join(report.lines()))
        return spec

    @cached_property
    def p(self) -> CoefficientsP:
        return CoefficientsP(self.n, _p_values(self.alpha))

    @cached_property
    def report(self) -> ValidationReport:
        return validate(self)

    def validate(self) -> ValidationReport:
        return self.report

    @property
    def is_admissible(self) -> bool:
        return self.report.admissible

    @property
    def normalized(self) -> bool:
        return self.report.normalized

    def scaled(self, factor: float) -> ConcurrenceSpec:
        return ConcurrenceSpec(CoefficientsAlpha(self.n, self.alpha.values * factor))

    def to_dict(self, form: str = "alpha") -> dict:
        if form == "alpha":
            return {"N": self.n, "alpha": self.alpha.to_dict()}
        if form == "p":
            return {"N": self.n, "p": self.p.to_dict()}
        if form == "both":
            return {"N": self.n, "alpha": self.alpha.to_dict(), "p": self.p.to_dict()}
        raise ValueError(f"unknown form {form!r}")

    @classmethod
    def from_dict(cls, data: dict) -> ConcurrenceSpec:
        """Accepts an ``alpha`` map, a ``p`` map, or both (then cross-checked)."""
        if "alpha" not in data and "p" not in data:
            raise InvalidSpec("spec needs an 'alpha' or a 'p' map")
        n = data.get("N")
        if n is None:
            if "p" not in data or not data["p"]:
                raise InvalidSpec("spec needs 'N'")
            n = len(next(iter(data["p"])).strip())
        n = int(n)
        from_p = cls.from_p(CoefficientsP.from_dict(n, data["p"])) if "p" in data else None
        from_a = cls(CoefficientsAlpha.from_dict(n, data["alpha"])) if "alpha" in data else None
        if from_p is not None and from_a is not None:
            diff = np.abs(from_p.alpha.values - from_a.alpha.values).max()
            scale = max(1.0, float(np.abs(from_a.alpha.values).max()))
            if diff > 1e-10 * scale:
                raise InvalidSpec(f"'alpha' and 'p' maps disagree (max deviation {diff:.3g})")
        return from_a if from_a is not None else from_p

    def to_json(self, form: str = "alpha") -> str:
        return json.dumps(self.to_dict(form), indent=1)

    @classmethod
    def from_json(cls, text: str) -> ConcurrenceSpec:
        return cls.from_dict(json.loads(text))


def validate(spec: ConcurrenceSpec) -> ValidationReport:
    alpha = spec.alpha
    n, v = alpha.n, alpha.values
    full = (1 << n) - 1
    scale = max(1.0, float(np.abs(v).max(initial=0.0)))
    sym = _symmetry_violations(alpha)
    total = math.fsum(v)
    zero_sum = abs(total) <= SYMMETRY_TOL * scale * (1 << n)
    p = _p_values(alpha)
    negative = {pattern_label(s, n): float(p[s]) for s in np.flatnonzero(p < -P_NEG_TOL)}
    target = 2 ** (n - 1) - 1
    norm_ok = (n >= 2 and abs(v[0] - target) <= 1e-12 * max(1, target)
               and abs(v[full] - target) <= 1e-12 * max(1, target))
    detail = (f"alpha_empty={v[0]:.12g}, alpha_full={v[full]:.12g}, "
              f"sum_s p_s={math.fsum(p):.12g}, expected {target}")
    return ValidationReport(
        complement_symmetric=not sym, zero_sum=zero_sum, positive=not negative,
        normalized=bool(norm_ok), symmetry_violations=sym, alpha_sum=total,
        negative_p=negative, normalization_detail=detail)


def normalize(spec: ConcurrenceSpec) -> ConcurrenceSpec:
    """Rescale so that sum_s p_s = 2**(N-1) - 1."""
    if spec.n < 2:
        raise InvalidSpec("normalization needs N >= 2")
    total = float(spec.alpha.values[0])  # alpha_empty = sum_s p_s
    if not total > 0:
        raise ZeroSpec("all coefficients vanish")
    return spec.scaled((2 ** (spec.n - 1) - 1) / total)


def symmetric_spec(n: int) -> ConcurrenceSpec:
    """alpha_V = -1 on every proper nonempty subset."""
    if n < 2:
        raise ValueError("symmetric concurrence needs N >= 2")
    v = -np.ones(1 << n)
    v[0] = v[-1] = 2 ** (n - 1) - 1
    return ConcurrenceSpec(CoefficientsAlpha(n, v))


def kappa_spec(kappa1: float) -> ConcurrenceSpec:
    """Normalized four-party spec: kappa1 on 1- and 3-element subsets,
    kappa2 = (-14 - 8 kappa1)/6 on 2-element subsets."""
    kappa2 = (-14.0 - 8.0 * kappa1) / 6.0
    v = np.empty(16)
    for bits in range(16):
        k = _popcount(bits)
        v[bits] = 7.0 if k in (0, 4) else (kappa1 if k in (1, 3) else kappa2)
    return ConcurrenceSpec(CoefficientsAlpha(4, v))


def radicand(spec: ConcurrenceSpec, psi: PureState) -> float:
    """sum_V alpha_V Tr[(Tr_V |psi><psi|)^2]."""
    if psi.n != spec.n:
        raise DimensionMismatch(f"spec has N={spec.n}, state has {psi.n} parties")
    return float(spec.alpha.values @ all_purities(psi))


def _root(rad: float) -> float:
    if rad < 0:
        if rad < -RADICAND_ERROR:
            raise NegativeRadicand(f"radicand {rad:.3g} is negative; spec is not admissible")
        return 0.0
    return math.sqrt(rad)


def concurrence_pure(spec: ConcurrenceSpec, psi: PureState) -> float:
    """2**(1 - N/2) * sqrt(sum_V alpha_V purity_V(psi))."""
    if not spec.is_admissible:
        raise NotPositive("spec is not admissible: " + "; ".join(spec.report.lines()))
    return 2.0 ** (1 - spec.n / 2) * _root(radicand(spec, psi))
