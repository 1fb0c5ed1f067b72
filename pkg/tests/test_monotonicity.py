import io
import json
import math

import numpy as np
import pytest

from concurrence_lab.concurrence import ConcurrenceSpec, kappa_spec, symmetric_spec
from concurrence_lab.errors import Inapplicable
from concurrence_lab.monotonicity import (KappaScanResult, SearchConfig, ViolationWitness,
                                          analytic_counterexample, cauchy_schwarz_slack,
                                          classify_tripartite, flagged_purities, gap_direct,
                                          gap_expanded, is_permutation_symmetric, kappa2_of,
                                          kappa_scan, minimize_gap, search_violation,
                                          single_element_counterexample, sufficient_criterion,
                                          tripartite_counterexample, tripartite_region, upsilon,
                                          write_kappa_csv, write_region_csv)
from concurrence_lab.qstate import (all_purities, basis_state, bell_phi_minus, bell_phi_plus,
                                    flag_superposition, permute_parties, random_state, tensor)

from oracles import random_admissible_spec

S = 1 / math.sqrt(2)
FOUR = ConcurrenceSpec.from_p({"----": 1})
TRI = ConcurrenceSpec.from_p({"+--": 3})


def four_party_pair():
    return tensor(bell_phi_plus(), bell_phi_plus()), tensor(bell_phi_minus(), bell_phi_minus())


def test_sufficient_criterion():
    for n in (2, 3, 4, 5):
        assert sufficient_criterion(symmetric_spec(n))
    assert not sufficient_criterion(FOUR)
    assert not sufficient_criterion(TRI)


def test_permutation_symmetry_detection():
    assert is_permutation_symmetric(symmetric_spec(4))
    assert is_permutation_symmetric(FOUR)
    assert not is_permutation_symmetric(TRI)


def test_gap_vanishes_without_superposition():
    rng = np.random.default_rng(0)
    spec = random_admissible_spec(3, rng)
    psi, phi = random_state((2, 3, 2), rng), random_state((2, 3, 2), rng)
    for a, b in [(1, 0), (0, 1), (1j, 0)]:
        for fn in (gap_direct, gap_expanded):
            assert abs(fn(spec, psi, phi, a, b, 1).gap) < 1e-12


def test_gap_bookkeeping():
    rng = np.random.default_rng(1)
    spec = random_admissible_spec(3, rng)
    psi, phi = random_state((2, 2, 2), rng), random_state((2, 2, 2), rng)
    ev = gap_direct(spec, psi, phi, 0.6, 0.8, 2)
    assert ev.method == "direct"
    assert abs(ev.gap - (ev.lhs - ev.rhs_psi_term - ev.rhs_phi_term)) < 1e-14


def test_four_party_gap_value():
    psi, phi = four_party_pair()
    for fn in (gap_direct, gap_expanded):
        ev = fn(FOUR, psi, phi, S, S, 0)
        assert ev.lhs == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-12)
        assert ev.gap == pytest.approx(1 / (2 * math.sqrt(2)) - 0.5, abs=1e-12)


def test_symmetric_spec_never_violates():
    rng = np.random.default_rng(2)
    spec = symmetric_spec(3)
    worst = math.inf
    for _ in range(1000):
        psi, phi = random_state((2, 2, 2), rng), random_state((2, 2, 2), rng)
        t = rng.uniform(0, math.pi / 2)
        worst = min(worst, gap_direct(spec, psi, phi, math.cos(t), math.sin(t), int(rng.integers(3))).gap)
    assert worst >= -1e-10


def test_expanded_purities_match_the_built_state():
    rng = np.random.default_rng(3)
    psi, phi = random_state((3, 2, 2), rng), random_state((3, 2, 2), rng)
    a, b = 0.5 + 0.2j, 0.7
    for flag in range(3):
        xi = flag_superposition(psi, phi, a, b, flag)
        assert np.allclose(flagged_purities(psi, phi, a, b, flag), all_purities(xi), atol=1e-12)


def test_upsilon_boundary_values_and_tripartite_cancellation():
    rng = np.random.default_rng(4)
    psi, phi = random_state((2, 2, 2), rng), random_state((2, 2, 2), rng)
    assert upsilon(psi, phi, 0, 0) == pytest.approx(1, abs=1e-12)
    assert upsilon(psi, phi, 0b111, 0) == pytest.approx(1, abs=1e-12)
    wit = tripartite_counterexample(TRI)
    # only the cut ({1}, {2,3}) distinguishes the two states
    for bits in range(8):
        expected = 0.0 if bits in (0b001, 0b110) else 1.0 if bits in (0, 7) else 0.5
        assert upsilon(wit.psi, wit.phi, bits, 0) == pytest.approx(expected, abs=1e-12)


def test_cauchy_schwarz_bound():
    rng = np.random.default_rng(5)
    for _ in range(50):
        psi, phi = random_state((2, 3, 2), rng), random_state((2, 3, 2), rng)
        for bits in range(8):
            assert cauchy_schwarz_slack(psi, phi, bits, int(rng.integers(3))) >= -1e-12


def test_tripartite_counterexample():
    wit = tripartite_counterexample(TRI)
    assert wit.gap < 0 and wit.flag_party == 0
    assert wit.gap == pytest.approx(math.sqrt(3) * (S - 1), abs=1e-12)
    assert abs(wit.reevaluate("direct").gap - wit.gap) < 1e-10
    assert abs(wit.reevaluate("expanded").gap - wit.gap) < 1e-10
    second = ConcurrenceSpec.from_p({"-+-": 3})
    moved = tripartite_counterexample(second)
    assert moved.flag_party == 1
    zero = basis_state((2,), (0,))
    expected = permute_parties(tensor(zero, bell_phi_plus()), [1, 0, 2])
    assert np.allclose(moved.psi.amplitudes, expected.amplitudes)
    assert moved.gap == pytest.approx(wit.gap, abs=1e-12)
    with pytest.raises(Inapplicable):
        tripartite_counterexample(symmetric_spec(3))
    with pytest.raises(Inapplicable):
        tripartite_counterexample(FOUR)


def test_single_element_counterexample_four_parties():
    spec = ConcurrenceSpec.from_p({"++--": 1})
    assert spec.alpha["1"] == 1
    wit = single_element_counterexample(spec, 0)
    assert wit.gap < 0
    assert abs(gap_direct(spec, wit.psi, wit.phi, wit.a, wit.b, wit.flag_party).gap - wit.gap) < 1e-12
    with pytest.raises(Inapplicable):
        single_element_counterexample(spec, 2)
    with pytest.raises(Inapplicable):
        analytic_counterexample(FOUR)


def test_single_element_reduces_to_tripartite():
    a = single_element_counterexample(TRI, 0)
    b = tripartite_counterexample(TRI)
    assert np.array_equal(a.psi.amplitudes, b.psi.amplitudes) and a.gap == b.gap


def test_witness_json_round_trip():
    wit = tripartite_counterexample(TRI)
    data = json.loads(json.dumps(wit.to_dict()))
    assert data["flag_party"] == 1
    back = ViolationWitness.from_dict(data)
    assert back.flag_party == wit.flag_party
    assert abs(back.reevaluate().gap - wit.gap) < 1e-12


def test_flag_party_irrelevant_for_symmetric_specs():
    rng = np.random.default_rng(6)
    spec = FOUR
    psi, phi = random_state((2, 2, 2, 2), rng), random_state((2, 2, 2, 2), rng)
    order = [2, 0, 3, 1]
    base = gap_direct(spec, psi, phi, 0.6, 0.8, 2).gap
    moved = gap_direct(spec, permute_parties(psi, order), permute_parties(phi, order), 0.6, 0.8,
                       order.index(2)).gap
    assert abs(base - moved) < 1e-12


def test_search_finds_four_party_violation():
    wit = search_violation(FOUR, (2, 2, 2, 2), SearchConfig(restarts=3, seed=42))
    assert wit is not None
    assert wit.gap <= -0.14
    assert abs(wit.reevaluate("expanded").gap - wit.gap) < 1e-10


def test_search_finds_tripartite_witness():
    analytic = tripartite_counterexample(TRI).gap
    result = minimize_gap(TRI, (2, 2, 2), SearchConfig(restarts=20, seed=1))
    assert result.witness is not None
    assert result.min_gap <= analytic + 1e-6


def test_search_finds_nothing_for_symmetric_spec():
    result = minimize_gap(symmetric_spec(3), (2, 2, 2), SearchConfig(restarts=50, seed=42))
    assert result.witness is None
    assert result.min_gap >= -1e-7


def test_search_is_deterministic_and_worker_independent():
    cfg = SearchConfig(restarts=3, max_iters=400, seed=5)
    a = minimize_gap(TRI, (2, 2, 2), cfg)
    b = minimize_gap(TRI, (2, 2, 2), cfg)
    c = minimize_gap(TRI, (2, 2, 2), SearchConfig(restarts=3, max_iters=400, seed=5, workers=2))
    assert a.restart_gaps == b.restart_gaps == c.restart_gaps
    assert a.min_gap == b.min_gap == c.min_gap


def test_search_loops_over_flag_parties():
    result = minimize_gap(TRI, (2, 2, 2), SearchConfig(restarts=6, max_iters=200, seed=0))
    assert sorted({f for f, _, _ in result.restart_gaps}) == [0, 1, 2]
    pinned = minimize_gap(TRI, (2, 2, 2), SearchConfig(restarts=2, max_iters=200, flag_party=1))
    assert {f for f, _, _ in pinned.restart_gaps} == {1}


def test_kappa_relation():
    for k in np.linspace(-7, 0, 8):
        assert 8 * k + 6 * kappa2_of(k) == pytest.approx(-14)


def test_kappa_scan_small_grid_and_csv():
    cfg = SearchConfig(restarts=2, polish_iters=0)
    result = kappa_scan([-7.0, -1.0], config=cfg, refine_tol=1.0)
    assert isinstance(result, KappaScanResult)
    assert result.points[0].violated and not result.points[1].violated
    assert -7 < result.boundary_estimate < -1
    assert len(result.min_gap_per_point) == 2
    buf = io.StringIO()
    write_kappa_csv(result, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "kappa1,kappa2,min_gap,violated"
    assert lines[1].startswith("-7,7,") and lines[1].endswith(",1")


def test_kappa_scan_flags_inadmissible_points():
    result = kappa_scan([1.0], config=SearchConfig(restarts=1, max_iters=10, polish_iters=0))
    assert not result.points[0].admissible
    assert not result.points[0].violated


def test_tripartite_region():
    assert classify_tripartite(1, 1, 1).monotone
    assert not classify_tripartite(3, 0, 0).monotone
    assert classify_tripartite(1.5, 1.5, 0).monotone
    for r in (2, 5, 12):
        assert len(tripartite_region(r)) == math.comb(r + 2, 2)
    points = tripartite_region(6)
    assert all(pt.admissible for pt in points)
    buf = io.StringIO()
    write_region_csv(points, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "p1,p2,p3,admissible,monotone"
    assert len(rows) == len(points) + 1


def test_region_consistency_with_witnesses_and_search():
    for pt in tripartite_region(3):
        spec = ConcurrenceSpec.from_p({"+--": pt.p[0], "-+-": pt.p[1], "--+": pt.p[2]})
        if not pt.monotone and any(spec.alpha.values[1 << k] > 0 for k in range(3)):
            assert analytic_counterexample(spec).gap < 0
        if pt.monotone:
            assert sufficient_criterion(spec)
            result = minimize_gap(spec, (2, 2, 2), SearchConfig(restarts=2, max_iters=1000))
            assert result.witness is None
