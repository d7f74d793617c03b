import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefopt import Instance, generate_uniform, parse_tsplib, reward, tour_length
from prefopt.errors import InvalidArgument, InvalidTour, ParseError, UnsupportedFormat
from prefopt.instances import load_dataset, make_tour, save_dataset, to_tsplib


def brute_length(coords, perm):
    total = 0.0
    for k in range(len(perm)):
        (x1, y1), (x2, y2) = coords[perm[k]], coords[perm[(k + 1) % len(perm)]]
        total += math.hypot(x2 - x1, y2 - y1)
    return total


def test_generate_is_deterministic():
    a = generate_uniform(4, 1, seed=7)
    b = generate_uniform(4, 1, seed=7)
    assert np.array_equal(a[0].coords, b[0].coords)


def test_generate_rejects_small_n():
    with pytest.raises(InvalidArgument):
        generate_uniform(2, 1, seed=0)


def test_generate_unit_square_and_distinct():
    insts = generate_uniform(10, 100, seed=1)
    assert len(insts) == 100
    for inst in insts:
        assert inst.n == 10
        assert np.all((inst.coords >= 0) & (inst.coords <= 1))
    keys = {inst.coords.tobytes() for inst in insts}
    assert len(keys) == 100
    assert len({inst.id for inst in insts}) == 100


def test_distance_matrix_invariants():
    inst = generate_uniform(12, 1, seed=3)[0]
    d = inst.dist
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    for i in range(inst.n):
        for j in range(inst.n):
            ref = math.hypot(*(inst.coords[i] - inst.coords[j]))
            assert abs(d[i, j] - ref) <= 1e-12


def test_instances_are_immutable():
    inst = generate_uniform(5, 1, seed=0)[0]
    with pytest.raises(ValueError):
        inst.coords[0, 0] = 1.0
    with pytest.raises(ValueError):
        inst.dist[0, 1] = 1.0


def test_square_and_triangle_lengths(square, triangle):
    assert tour_length(square, [0, 1, 2, 3]) == pytest.approx(4.0, abs=1e-12)
    assert tour_length(triangle, [0, 1, 2]) == pytest.approx(12.0, abs=1e-12)
    assert reward(square, [0, 1, 2, 3]) == pytest.approx(-4.0, abs=1e-12)


def test_length_matches_brute_summation(rng):
    inst = generate_uniform(8, 1, seed=11)[0]
    for _ in range(20):
        perm = rng.permutation(8)
        assert tour_length(inst, perm) == pytest.approx(brute_length(inst.coords.tolist(), perm.tolist()), abs=1e-9)


@pytest.mark.parametrize("perm", [[0, 1, 2, 2], [0, 1, 2], [0, 1, 2, 4], [0, 1, 2, 3, 0]])
def test_invalid_tours_rejected(square, perm):
    with pytest.raises(InvalidTour):
        tour_length(square, perm)


def test_tour_record(square):
    t = make_tour(square, [0, 2, 1, 3])
    assert t.length == pytest.approx(2 + 2 * math.sqrt(2))
    assert t.reward == -t.length


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), shift=st.integers(0, 20), data=st.data())
def test_length_rotation_and_reversal_invariant(seed, shift, data):
    n = data.draw(st.integers(3, 20))
    inst = generate_uniform(n, 1, seed=seed)[0]
    perm = np.random.default_rng(seed).permutation(n)
    base = tour_length(inst, perm)
    assert tour_length(inst, np.roll(perm, shift)) == pytest.approx(base, abs=1e-9)
    assert tour_length(inst, perm[::-1]) == pytest.approx(base, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_reward_strictly_decreasing_in_length(seed):
    inst = generate_uniform(6, 1, seed=seed)[0]
    g = np.random.default_rng(seed)
    p1, p2 = g.permutation(6), g.permutation(6)
    l1, l2 = brute_length(inst.coords.tolist(), p1.tolist()), brute_length(inst.coords.tolist(), p2.tolist())
    if abs(l1 - l2) > 1e-9:
        assert (reward(inst, p1) > reward(inst, p2)) == (l1 < l2)


TSP3 = """NAME : tiny
COMMENT : three nodes
TYPE : TSP
DIMENSION : 3
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 0 0
2 3 0
3 0 4
EOF
"""


def test_parse_tsplib_minimal():
    inst = parse_tsplib(TSP3)
    assert inst.n == 3
    assert inst.id == "tiny"
    assert inst.dist[0, 1] == 3.0 and inst.dist[0, 2] == 4.0 and inst.dist[1, 2] == 5.0


def test_parse_tsplib_distances_not_rounded():
    text = TSP3.replace("2 3 0", "2 1 1")
    inst = parse_tsplib(text)
    assert inst.dist[0, 1] == pytest.approx(math.sqrt(2), abs=1e-15)


def test_parse_tsplib_geo_unsupported():
    with pytest.raises(UnsupportedFormat):
        parse_tsplib(TSP3.replace("EUC_2D", "GEO"))


def test_parse_tsplib_dimension_mismatch():
    text = """NAME: burma5
TYPE: TSP
DIMENSION: 5
EDGE_WEIGHT_TYPE: EUC_2D
NODE_COORD_SECTION
1 16.47 96.10
2 16.47 94.44
3 20.09 92.54
4 22.39 93.37
EOF
"""
    with pytest.raises(ParseError):
        parse_tsplib(text)


def test_parse_tsplib_malformed_line_reports_line_number():
    text = TSP3.replace("2 3 0", "2 three 0")
    with pytest.raises(ParseError) as exc:
        parse_tsplib(text)
    assert exc.value.line == 8


def test_tsplib_round_trip_is_bit_exact():
    inst = generate_uniform(9, 1, seed=5)[0]
    back = parse_tsplib(to_tsplib(inst))
    assert np.array_equal(back.coords, inst.coords)


def test_json_round_trip_is_bit_exact(tmp_path):
    insts = generate_uniform(7, 3, seed=2)
    save_dataset(insts, tmp_path)
    back = load_dataset(tmp_path)
    assert back == insts
    obj = json.loads((tmp_path / f"{insts[0].id}.json").read_text())
    assert set(obj) == {"id", "coords"}
    assert np.array_equal(Instance.from_json(obj).coords, insts[0].coords)
