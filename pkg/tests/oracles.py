"""Reference implementations used only by the tests.

They follow the textbook definitions as literally as possible (explicit
projector matrices, explicit index sums) and share no code paths with the
package beyond the data containers.
"""

import itertools
import math

import numpy as np

from concurrence_lab.concurrence import CoefficientsAlpha, CoefficientsP, ConcurrenceSpec


def symmetric_antisymmetric_projectors(d: int) -> tuple[np.ndarray, np.ndarray]:
    """P_+ and P_- on C^d (x) C^d assembled from orthonormal (anti)symmetric basis vectors."""
    plus = np.zeros((d * d, d * d))
    minus = np.zeros((d * d, d * d))
    for i in range(d):
        v = np.zeros(d * d)
        v[i * d + i] = 1.0
        plus += np.outer(v, v)
    for i, j in itertools.combinations(range(d), 2):
        s = np.zeros(d * d)
        s[i * d + j] = s[j * d + i] = 1 / math.sqrt(2)
        a = np.zeros(d * d)
        a[i * d + j], a[j * d + i] = 1 / math.sqrt(2), -1 / math.sqrt(2)
        plus += np.outer(s, s)
        minus += np.outer(a, a)
    return plus, minus


def operator_a(spec: ConcurrenceSpec, dims) -> np.ndarray:
    """sum_s p_s (x)_i P_{s_i}, acting on the interleaved ordering (1, 1', 2, 2', ...)."""
    n = spec.n
    projectors = [symmetric_antisymmetric_projectors(d) for d in dims]
    total = np.zeros((math.prod(dims) ** 2,) * 2)
    p = spec.p.values
    for signs in itertools.product((0, 1), repeat=n):
        minus_bits = sum(bit << i for i, bit in enumerate(signs))
        if p[minus_bits] == 0:
            continue
        op = np.ones((1, 1))
        for i in range(n):
            op = np.kron(op, projectors[i][signs[i]])
        total += p[minus_bits] * op
    return total


def expectation_concurrence(spec: ConcurrenceSpec, psi) -> float:
    """2 sqrt(<psi|<psi| A |psi>|psi>) with A materialized."""
    n = psi.n
    t = np.multiply.outer(psi.tensor(), psi.tensor())
    interleaved = [k for i in range(n) for k in (i, n + i)]
    doubled = t.transpose(interleaved).reshape(-1)
    value = np.vdot(doubled, operator_a(spec, psi.dims) @ doubled).real
    return 2 * math.sqrt(max(value, 0.0))


def brute_partial_trace(amplitudes: np.ndarray, dims, traced) -> np.ndarray:
    """Reduced density matrix on the parties not in ``traced`` via explicit index loops."""
    n = len(dims)
    kept = [i for i in range(n) if i not in traced]
    dk = math.prod(dims[i] for i in kept)
    rho = np.zeros((dk, dk), dtype=complex)
    t = amplitudes.reshape(dims)
    for left in itertools.product(*(range(dims[i]) for i in kept)):
        for right in itertools.product(*(range(dims[i]) for i in kept)):
            r = np.ravel_multi_index(left, [dims[i] for i in kept]) if kept else 0
            c = np.ravel_multi_index(right, [dims[i] for i in kept]) if kept else 0
            acc = 0j
            for env in itertools.product(*(range(dims[i]) for i in traced)):
                idx_l, idx_r = [0] * n, [0] * n
                for pos, i in enumerate(kept):
                    idx_l[i], idx_r[i] = left[pos], right[pos]
                for pos, i in enumerate(traced):
                    idx_l[i] = idx_r[i] = env[pos]
                acc += t[tuple(idx_l)] * np.conj(t[tuple(idx_r)])
            rho[r, c] = acc
    return rho


def random_admissible_spec(n: int, rng: np.random.Generator) -> ConcurrenceSpec:
    """Nonnegative random p on the sign patterns allowed by complement symmetry and
    the zero-sum rule (an even, nonzero number of minus signs), some switched off."""
    allowed = np.array([bin(s).count("1") % 2 == 0 and s != 0 for s in range(1 << n)])
    while True:
        p = rng.exponential(1.0, 1 << n) * (rng.random(1 << n) < 0.6) * allowed
        if p.any():
            return ConcurrenceSpec.from_p(CoefficientsP(n, p))


def random_cone_spec(n: int, rng: np.random.Generator) -> ConcurrenceSpec:
    """Complement-symmetric alpha <= 0 on nontrivial subsets, alpha_empty = alpha_full
    fixed by the zero-sum condition."""
    full = (1 << n) - 1
    while True:
        alpha = np.zeros(1 << n)
        for bits in range(1, full):
            if bits < full ^ bits and rng.random() < 0.75:
                alpha[bits] = alpha[full ^ bits] = -rng.exponential(1.0)
        if alpha.any():
            break
    alpha[0] = alpha[full] = -alpha[1:full].sum() / 2
    return ConcurrenceSpec(CoefficientsAlpha(n, alpha))
