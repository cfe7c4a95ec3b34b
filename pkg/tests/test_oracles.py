"""Best-response oracle contracts and the satisfiability reduction."""

import itertools

import numpy as np
import pytest

from infomenu.errors import InvalidInstance, NoPath, TooLarge
from infomenu.oracles import (
    CNF,
    IPSATInstance,
    MatrixOracle,
    SATOracle,
    TrafficInstance,
    TrafficOracle,
    build_sat_reduction,
    enumerate_environment,
    format_dimacs,
    max_satisfiable,
    parse_dimacs,
    parse_traffic,
    satisfied_counts,
)

TWO_EDGE_GRAPH = """# two parallel roads
0 1 3
0 1 1 3
0 1 3 1
"""


def two_edge_oracle() -> TrafficOracle:
    return TrafficOracle(parse_traffic(TWO_EDGE_GRAPH))


# --- traffic ------------------------------------------------------------------

def test_traffic_tie_takes_first_edge():
    path, util = two_edge_oracle().respond([0.5, 0.5])
    assert path == (0,)
    assert util == pytest.approx((3 - 2) / 3)


def test_traffic_known_state_picks_fast_road():
    path, util = two_edge_oracle().respond([1.0, 0.0])
    assert path == (0,)
    assert util == pytest.approx((3 - 1) / 3)
    path, util = two_edge_oracle().respond([0.0, 1.0])
    assert path == (1,)
    assert util == pytest.approx((3 - 1) / 3)


def test_traffic_skewed_belief():
    path, util = two_edge_oracle().respond([0.9, 0.1])
    assert path == (0,)
    assert util == pytest.approx((3 - 1.2) / 3)


def test_traffic_no_path():
    inst = TrafficInstance(3, [(0, 1, 1.0, 1.0)], 0, 2, 10.0)
    with pytest.raises(NoPath):
        TrafficOracle(inst).respond([0.5, 0.5])


def test_traffic_utility_of_matches_respond():
    oracle = two_edge_oracle()
    rng = np.random.default_rng(2)
    for _ in range(50):
        b = rng.dirichlet(np.ones(2))
        path, util = oracle.respond(b)
        direct = sum(b[w] * oracle.utility_of(path, w) for w in range(2))
        assert util == pytest.approx(direct, abs=1e-9)


def _enumerate_paths(inst: TrafficInstance, cap: int = 64) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []

    def walk(u, path, visited):
        if len(out) > cap:
            raise TooLarge("too many paths")
        if u == inst.sink:
            out.append(tuple(path))
            return
        for e, (a, b, _, _) in enumerate(inst.edges):
            if a == u and b not in visited:
                walk(b, path + [e], visited | {b})

    walk(inst.source, [], {inst.source})
    return out


def diamond_instance() -> TrafficInstance:
    text = """0 3 25
0 1 1 8
0 2 6 2
1 3 2 9
2 3 3 1
0 3 5 12
"""
    return parse_traffic(text)


def test_traffic_agrees_with_matrix_oracle_on_enumerable_graph():
    inst = diamond_instance()
    oracle = TrafficOracle(inst)
    paths = _enumerate_paths(inst)
    utility = np.array(
        [[oracle.utility_of(p, w) for p in paths] for w in range(2)]
    )
    matrix = MatrixOracle(np.clip(utility, 0.0, 1.0))
    rng = np.random.default_rng(4)
    for _ in range(200):
        b = rng.dirichlet(np.ones(2))
        _, u1 = oracle.respond(b)
        _, u2 = matrix.respond(b)
        assert u1 == pytest.approx(u2, abs=1e-9)


def test_traffic_lexicographic_tie_on_ties_of_paths():
    # Both two-hop routes cost 4 in every state; edge sequence (0, 2) wins.
    text = """0 3 10
0 1 2 2
0 2 2 2
1 3 2 2
2 3 2 2
"""
    oracle = TrafficOracle(parse_traffic(text))
    path, _ = oracle.respond([0.3, 0.7])
    assert path == (0, 2)


# --- oracle consistency (no probe beats the answer) ----------------------------

def test_oracle_consistency_matrix_and_traffic_and_sat():
    # No sampled probe action may ever beat the oracle's answer, and the
    # answer's utility must re-derive from utility_of under the belief.
    rng = np.random.default_rng(11)
    matrix = MatrixOracle(rng.uniform(size=(2, 30)))
    traffic = TrafficOracle(diamond_instance())
    traffic_probes = _enumerate_paths(diamond_instance())
    sat = SATOracle(build_sat_reduction(CNF(3, [[1, -2], [2, 3], [-1, -3]])))
    sat_probes = list(range(1 << 4))
    cases = [
        (matrix, list(range(30))),
        (traffic, traffic_probes),
        (sat, sat_probes),
    ]
    for oracle, probes in cases:
        picked = [probes[i] for i in rng.integers(0, len(probes), size=min(100, len(probes)))]
        probe_utils = np.array(
            [[oracle.utility_of(a, w) for a in picked] for w in range(2)]
        )
        beliefs = rng.dirichlet(np.ones(2), size=1000)
        probe_best = (beliefs @ probe_utils).max(axis=1)
        for b, cap in zip(beliefs, probe_best):
            ans, best = oracle.respond(b)
            assert cap <= best + 1e-9
            direct = sum(b[w] * oracle.utility_of(ans, w) for w in range(2))
            assert direct == pytest.approx(best, abs=1e-9)


# --- CNF and the satisfiability market -----------------------------------------

def test_parse_dimacs_round_trip():
    text = "c comment\np cnf 3 2\n1 -2 0\n2 3 0\n"
    cnf = parse_dimacs(text)
    assert cnf.num_vars == 3
    assert cnf.clauses == [[1, -2], [2, 3]]
    assert parse_dimacs(format_dimacs(cnf)).clauses == cnf.clauses


def test_satisfied_counts_lexicographic_encoding():
    cnf = CNF(2, [[1], [2]])
    # ids 0..3 are (F,F),(F,T),(T,F),(T,T) over (x1,x2)
    np.testing.assert_array_equal(satisfied_counts(cnf, np.arange(4)), [0, 1, 1, 2])


def test_max_satisfiable():
    assert max_satisfiable(CNF(1, [[1], [-1]])) == 1
    assert max_satisfiable(CNF(2, [[1, 2], [-1], [-2]])) == 2


def test_sat_reduction_structure():
    cnf = CNF(2, [[1, 2]])
    inst = build_sat_reduction(cnf)
    assert inst.formulas[0].clauses == [[1, 2, 3], [1, 3], [-1, 3]]
    assert inst.formulas[1].clauses == [[1, 2, -3], [1, -3], [-1, -3]]
    assert all(len(f.clauses) == len(cnf.clauses) + 2 for f in inst.formulas)
    np.testing.assert_allclose(inst.type_prior, [0.5, 0.5])


def test_sat_respond_uniform_belief_formula():
    # Contradictory base formula: m = 2 clauses, k = 1 by exhaustion.
    cnf = CNF(1, [[1], [-1]])
    m = len(cnf.clauses)
    k = max_satisfiable(cnf)
    assert k == 1
    oracle = SATOracle(build_sat_reduction(cnf))
    _, u = oracle.respond([0.5, 0.5])
    assert u == pytest.approx((m + k + 3) / (2 * m + 4))


def test_sat_respond_degenerate_state_belief():
    oracle = SATOracle(build_sat_reduction(CNF(1, [[1], [-1]])))
    _, u = oracle.respond([1.0, 0.0])
    assert u == pytest.approx(1.0)


def test_sat_single_clause_both_states():
    cnf = CNF(1, [[1]])
    inst = IPSATInstance([cnf, cnf])
    oracle = SATOracle(inst)
    a, u = oracle.respond([0.4, 0.6])
    assert a == 1 and u == pytest.approx(1.0)   # x1 = True satisfies everything


def test_sat_cap_raises():
    cnf = CNF(30, [[1, 2, 3]])
    with pytest.raises(TooLarge):
        SATOracle(IPSATInstance([cnf, cnf]))


def test_sat_value_is_max_of_linear_functions():
    # On a 2-state grid, the answer must equal the upper envelope of the
    # returned actions' linear utilities.
    oracle = SATOracle(build_sat_reduction(CNF(2, [[1, 2], [-1, 2], [-2, 1]])))
    grid = np.linspace(0.0, 1.0, 41)
    actions = {}
    for p in grid:
        a, u = oracle.respond([p, 1.0 - p])
        actions[a] = (oracle.utility_of(a, 0), oracle.utility_of(a, 1))
    for p in grid:
        _, u = oracle.respond([p, 1.0 - p])
        envelope = max(p * u0 + (1 - p) * u1 for u0, u1 in actions.values())
        assert u == pytest.approx(envelope, abs=1e-12)


def test_enumerate_environment_matches_utilities():
    inst = build_sat_reduction(CNF(2, [[1, 2]]))
    env = enumerate_environment(inst)
    oracle = SATOracle(inst)
    for a in range(8):
        for w in range(2):
            assert env.utility["t0"][w, a] == pytest.approx(oracle.utility_of(a, w))
    with pytest.raises(TooLarge):
        enumerate_environment(build_sat_reduction(CNF(14, [[1]])))


def test_query_count_increments():
    oracle = MatrixOracle(np.eye(2))
    assert oracle.query_count == 0
    oracle.respond([0.5, 0.5])
    oracle.respond_many(np.array([[0.2, 0.8], [0.9, 0.1]]))
    assert oracle.query_count == 3


def test_traffic_rejects_non_binary_state_belief():
    with pytest.raises(InvalidInstance):
        two_edge_oracle().respond([0.5, 0.3, 0.2])
