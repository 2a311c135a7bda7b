import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semfunc.corpus import TripleRecord, build_vocabulary
from semfunc.errors import ConfigurationError, InputError, TrainingDivergedError
from semfunc.model import GraphTopology, SemanticFunction, SpaceConfig, evaluate_semantic_function, model_to_dict
from semfunc.training import (
    CooccurrenceCounts,
    Observation,
    TrainingConfig,
    initialize_model,
    negative_distribution,
    observation_objective,
    ppmi_transform,
    prepare,
    project_counts,
    surrogate_gradient,
    train,
)

from conftest import gradient_check, make_model, random_model

SMALL = SpaceConfig(6, 2)


def dump(model):
    return json.dumps(model_to_dict(model), sort_keys=True)


def small_corpus():
    return [
        TripleRecord("dog", "chase", "cat"),
        TripleRecord("cat", "chase", "mouse"),
        TripleRecord("dog", "bark", None),
        TripleRecord(None, "sink", "ship"),
        TripleRecord("man", "sail", "ship"),
        TripleRecord("dog", "chase", "mouse"),
    ]


def test_ppmi_hand_case():
    out = ppmi_transform(CooccurrenceCounts(["a", "b"], np.array([[2.0, 0.0], [0.0, 2.0]])))
    assert out[0, 0] == pytest.approx(math.log(2), abs=1e-15)
    assert out[1, 1] == pytest.approx(math.log(2), abs=1e-15)
    assert out[0, 1] == 0.0 and out[1, 0] == 0.0


def test_ppmi_independent_counts_give_zero():
    out = ppmi_transform(CooccurrenceCounts(["a", "b"], np.array([[1.0, 2.0], [2.0, 4.0]])))
    assert np.allclose(out, 0.0, atol=1e-15)


@given(st.lists(st.lists(st.integers(0, 9), min_size=4, max_size=4), min_size=2, max_size=5))
def test_ppmi_non_negative(rows):
    counts = np.array(rows, dtype=float)
    if counts.sum() == 0:
        return
    assert np.all(ppmi_transform(CooccurrenceCounts([str(k) for k in range(len(rows))], counts)) >= 0)


def test_project_counts_single_triple():
    c = project_counts([TripleRecord("dog", "chase", "cat")], 10, seed=0)
    row = c.predicates.index("dog_n")
    assert c.counts[row].sum() == 1
    assert c.col_totals.sum() == c.total == 4


def test_project_counts_deterministic_and_errors():
    a = project_counts(small_corpus(), 8, seed=3)
    b = project_counts(small_corpus(), 8, seed=3)
    assert np.array_equal(a.counts, b.counts) and a.predicates == b.predicates
    with pytest.raises(InputError):
        project_counts([], 8, seed=0)


def test_initial_functions_are_half_true_at_uniform():
    vocab = build_vocabulary(small_corpus())
    m = initialize_model(vocab, TrainingConfig(space=SMALL, gain=2.0))
    for p in m.predicates:
        assert evaluate_semantic_function(m.function(p), SMALL.uniform()) == pytest.approx(0.5, abs=1e-12)
    assert all(np.all(W == 0) for W in m.links.values()) and np.all(m.node_bias == 0)


def test_zero_count_predicate_is_constant_half():
    # a predicate with no contexts gets a zero PPMI row, hence zero weights and a zero bias
    predicates = ["dog_n", "chase_v", "cat_n", "ghost_n"]
    counts = project_counts([TripleRecord("dog", "chase", "cat")], 6, seed=0, predicates=predicates)
    row = ppmi_transform(counts)[3]
    assert np.all(row == 0)
    bias = -(SMALL.cardinality / SMALL.dims) * row.sum()
    assert bias == 0.0
    assert evaluate_semantic_function(SemanticFunction(row, bias), np.ones(6)) == 0.5


def test_initialisation_is_reproducible():
    vocab = build_vocabulary(small_corpus())
    cfg = TrainingConfig(space=SMALL, seed=7)
    assert dump(initialize_model(vocab, cfg)) == dump(initialize_model(vocab, cfg))


def test_constant_half_objective_is_log_half():
    m = make_model(4, 1, {"p": ([0, 0, 0, 0], 0.0)})
    obs = Observation(GraphTopology.single(), ("p",))
    cfg = TrainingConfig(space=SpaceConfig(4, 1), negative_samples=0, l2_strength=0.0)
    value, grad = observation_objective(m, obs, cfg, np.random.default_rng(0))
    assert value == pytest.approx(math.log(0.5), abs=1e-15)
    assert grad.biases[0] == pytest.approx(0.5, abs=1e-15)


def test_bias_gradient_is_one_minus_truth(rng):
    m = random_model(rng, 5, 2, n_preds=2)
    cfg = TrainingConfig(space=SpaceConfig(5, 2), negative_samples=0, l2_strength=0.0)
    prep = prepare(m, Observation(GraphTopology.single(), ("p1",)), cfg, rng)
    g = surrogate_gradient(m, prep, 0.0)
    t = evaluate_semantic_function(m.function("p1"), prep.q_plus[0])
    assert g.biases[1] == pytest.approx(1 - t, abs=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    assert gradient_check(seed) <= 1e-4


def test_negative_distribution_is_smoothed_frequency():
    m = make_model(3, 1, {p: ([0, 0, 0], 0) for p in "abc"}, freqs={"a": 1.0, "b": 10.0, "c": 100.0})
    p = negative_distribution(m, 0.75)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
    expected = np.array([1.0, 10.0, 100.0]) ** 0.75
    assert np.allclose(p, expected / expected.sum(), rtol=0, atol=1e-12)


def test_empty_vocabulary_cannot_be_sampled():
    # a model cannot hold an empty vocabulary, so negatives always have a source
    m = make_model(3, 1, {"p": ([0, 0, 0], 0)})
    with pytest.raises(InputError):
        m.replace(predicates=(), weights=np.zeros((0, 3)), biases=np.zeros(0), freqs=np.zeros(0))


def trained_setup(**changes):
    vocab = build_vocabulary(small_corpus() * 10)
    cfg = dataclasses.replace(TrainingConfig(space=SMALL, minibatch=8, seed=1), **changes)
    return initialize_model(vocab, cfg), vocab, cfg


def test_zero_epochs_returns_model_unchanged():
    m, vocab, cfg = trained_setup(epochs=0)
    out, diags = train(m, vocab.triples, cfg)
    assert dump(out) == dump(m)
    assert [d.epoch for d in diags] == [0]


def test_same_seed_gives_identical_model():
    m, vocab, cfg = trained_setup(epochs=2)
    a, _ = train(m, vocab.triples, cfg)
    b, _ = train(m, vocab.triples, cfg)
    assert dump(a) == dump(b)


def test_training_keeps_model_valid():
    m, vocab, cfg = trained_setup(epochs=2, learning_rate=0.5)
    out, diags = train(m, vocab.triples, cfg)
    assert out.predicates == m.predicates
    assert all(np.all(np.isfinite(a)) for a in (out.weights, out.biases, out.node_bias, *out.links.values()))
    assert len(diags) == 3 and all(math.isfinite(d.mean_objective) for d in diags[1:])


def test_pure_l2_shrinks_weights_monotonically():
    # saturated biases make the data terms' gradients vanish, so only the penalty acts
    m, vocab, cfg = trained_setup(negative_samples=0, l2_strength=0.05, learning_rate=0.5, epochs=1)
    m = m.replace(biases=np.full(len(m.predicates), 60.0))
    norms = [np.linalg.norm(m.weights)]
    for epoch in range(4):
        m, _ = train(m, vocab.triples, dataclasses.replace(cfg, seed=epoch))
        norms.append(np.linalg.norm(m.weights))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_divergence_is_detected():
    m, vocab, cfg = trained_setup(epochs=3, learning_rate=50.0, divergence_tolerance=1e-9)
    with pytest.raises(TrainingDivergedError) as info:
        train(m, vocab.triples, cfg)
    assert info.value.diagnostics


def test_unknown_predicates_rejected():
    m, vocab, cfg = trained_setup()
    with pytest.raises(InputError):
        train(m, [TripleRecord("zebra", "chase", "cat")], cfg)


@pytest.mark.parametrize("changes", [
    dict(learning_rate=0.0),
    dict(negative_samples=-1),
    dict(l2_strength=-1.0),
    dict(frequency_smoothing=1.5),
    dict(minibatch=0),
    dict(epochs=-1),
    dict(holdout_fraction=1.0),
    dict(link_learning_rate=0.0),
])
def test_config_validation(changes):
    with pytest.raises(ConfigurationError):
        TrainingConfig(**changes)


def test_synthetic_corpus_heldout_objective_improves():
    from semfunc.synthetic import SyntheticWorld

    vocab = build_vocabulary(SyntheticWorld().generate(2000, seed=1))
    config = TrainingConfig(space=SpaceConfig(20, 3), learning_rate=0.3, link_learning_rate=1.0,
                            epochs=2, gain=4.0, seed=0)
    _, diags = train(initialize_model(vocab, config), vocab.triples, config)
    assert diags[-1].heldout_objective > diags[0].heldout_objective
