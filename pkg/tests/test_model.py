import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semfunc.errors import DegenerateDistributionError, InputError
from semfunc.model import (
    GraphTopology,
    PixieVector,
    SemanticFunction,
    SpaceConfig,
    TruthCondition,
    assembly_energy,
    assembly_weight,
    evaluate_semantic_function,
    load_model,
    log_truth,
    model_from_dict,
    model_to_dict,
    predicate_generation_distribution,
    save_model,
)

from conftest import make_model, random_model

ARG1_EDGE = GraphTopology(("x", "y"), (("y", "x", "ARG1"),))


def test_space_validation():
    assert SpaceConfig(4, 2).n_pixies == 6
    np.testing.assert_array_equal(SpaceConfig(4, 1).uniform(), [0.25] * 4)
    for d, c in [(4, 0), (4, 4), (3, 5)]:
        with pytest.raises(InputError):
            SpaceConfig(d, c)


def test_pixie_validation():
    space = SpaceConfig(4, 2)
    p = PixieVector.from_active([0, 3], space)
    np.testing.assert_array_equal(p.bits, [1, 0, 0, 1])
    with pytest.raises(InputError):
        PixieVector.from_active([0], space)
    with pytest.raises(InputError):
        PixieVector(np.array([0, 2, 0, 0]))


def test_zero_function_is_one_half():
    f = SemanticFunction(np.zeros(3), 0.0)
    assert evaluate_semantic_function(f, [1, 0, 1]) == 0.5
    assert evaluate_semantic_function(f, [0.2, 0.3, 0.5]) == 0.5


def test_logistic_value():
    f = SemanticFunction(np.array([10.0, -10.0]), 0.0)
    assert evaluate_semantic_function(f, [1, 0]) == pytest.approx(0.9999546021312976, abs=1e-15)
    assert math.exp(log_truth(f, [1, 0])) == pytest.approx(0.9999546021312976, rel=1e-14)


def test_antisymmetric_weights_at_uniform_vector():
    f = SemanticFunction(np.array([2.0, -2.0]), 0.0)
    assert f([0.5, 0.5]) == 0.5


def test_semantic_function_rejects_bad_input():
    f = SemanticFunction(np.zeros(3))
    with pytest.raises(InputError):
        f([1, 0])
    with pytest.raises(InputError):
        SemanticFunction(np.array([np.nan, 0.0]))


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-50, 50),
       st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_truth_in_unit_interval(w, b, x):
    t = SemanticFunction(np.array(w), b)(np.array(x))
    assert 0.0 <= t <= 1.0


def test_assembly_weight_hand_values():
    m = make_model(2, 1, {"a": ([0, 0], 0)}, links={"ARG1": [[1.0, 0.0], [0.0, 0.0]]})
    # the ARG1 edge runs y -> x, so the energy is y^T W x
    assert assembly_weight(ARG1_EDGE, {"x": [1, 0], "y": [1, 0]}, m) == pytest.approx(math.e, rel=1e-15)
    assert assembly_weight(ARG1_EDGE, {"x": [0, 1], "y": [1, 0]}, m) == 1.0


def test_empty_energy():
    m = make_model(4, 2, {"a": ([0] * 4, 0)}, links={"ARG1": np.zeros((4, 4))})
    assert assembly_weight(ARG1_EDGE, {"x": [1, 1, 0, 0], "y": [0, 1, 0, 1]}, m) == 1.0


def test_assembly_validation():
    m = make_model(4, 2, {"a": ([0] * 4, 0)}, links={"ARG1": np.zeros((4, 4))})
    with pytest.raises(InputError):
        assembly_energy(ARG1_EDGE, {"x": [1, 1, 0, 0]}, m)
    with pytest.raises(InputError):
        assembly_energy(ARG1_EDGE, {"x": [1, 1, 1, 0], "y": [1, 1, 0, 0]}, m)
    with pytest.raises(InputError):
        m.check_topology(GraphTopology(("x", "y"), (("y", "x", "ARG2"),)))


def test_node_bias_contributes_per_node():
    m = make_model(2, 1, {"a": ([0, 0], 0)}, links={"ARG1": np.zeros((2, 2))}, node_bias=[0.5, 0.0])
    assert assembly_energy(ARG1_EDGE, {"x": [1, 0], "y": [1, 0]}, m) == 1.0


def test_generation_distribution_examples():
    m = make_model(2, 1, {"a": ([math.log(4), 0], 0), "b": ([-math.log(4), 0], 0)})
    dist = predicate_generation_distribution(m, [1, 0])
    assert dist["a"] == pytest.approx(0.8, abs=1e-15)
    assert dist["b"] == pytest.approx(0.2, abs=1e-15)

    m = make_model(2, 1, {"a": ([0, 0], 0), "b": ([0, 0], 0)}, freqs={"a": 3.0, "b": 1.0})
    assert predicate_generation_distribution(m, [0, 1]) == {"a": 0.75, "b": 0.25}

    m = make_model(2, 1, {"a": ([1, -3], 0.2)})
    assert predicate_generation_distribution(m, [0, 1]) == {"a": 1.0}


def test_generation_distribution_degenerate():
    m = make_model(2, 1, {"a": ([-2000, 0], 0)})
    with pytest.raises(DegenerateDistributionError):
        predicate_generation_distribution(m, [1, 0])


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_generation_distribution_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, 5, 2, n_preds=4)
    x = PixieVector.from_active(rng.choice(5, 2, replace=False), m.space)
    dist = predicate_generation_distribution(m, x)
    assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(v >= 0 for v in dist.values())


def test_world_model_validation():
    with pytest.raises(InputError):
        make_model(3, 1, {"a": ([0, 0], 0)})
    with pytest.raises(InputError):
        make_model(2, 1, {"a": ([0, 0], 0)}, freqs={"a": 0.0})
    with pytest.raises(InputError):
        make_model(2, 1, {"a": ([0, 0], 0)}, links={"ARG1": np.zeros((3, 3))})
    m = make_model(2, 1, {"a": ([0, 0], 0)})
    with pytest.raises(InputError):
        m.index("zzz")
    with pytest.raises(InputError):
        m.check_conditions(GraphTopology.single(), [TruthCondition("y", "a")])


def test_topology_validation():
    with pytest.raises(InputError):
        GraphTopology(("x", "x"))
    with pytest.raises(InputError):
        GraphTopology(("x",), (("x", "y", "ARG1"),))
    with pytest.raises(InputError):
        GraphTopology(("x",), (("x", "x", "ARG1"),))
    top = GraphTopology(("x", "y", "z"), (("y", "x", "ARG1"),))
    assert sorted(map(sorted, top.components())) == [["x", "y"], ["z"]]


def test_serialisation_round_trip(tmp_path, rng):
    m = random_model(rng, 6, 2, n_preds=4, labels=("ARG1", "ARG2"), link_scale=1.0, node_bias_scale=0.3)
    path = tmp_path / "m.json"
    save_model(m, path)
    assert load_model(path) == m
    first = path.read_bytes()
    save_model(load_model(path), path)
    assert path.read_bytes() == first
    assert model_from_dict(model_to_dict(m)) == m


def test_load_model_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_model(bad)
    bad.write_text('{"version": 99}')
    with pytest.raises(InputError):
        load_model(bad)
    bad.write_text('{"version": 1, "space": {"dims": 2, "cardinality": 1}}')
    with pytest.raises(InputError):
        load_model(bad)
    with pytest.raises(InputError):
        load_model(tmp_path / "missing.json")
