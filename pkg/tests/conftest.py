import numpy as np
import pytest

from semfunc.inference import SVO_TOPOLOGY
from semfunc.model import SemanticFunction, SpaceConfig, WorldModel
from semfunc.training import Observation, TrainingConfig, prepare, surrogate_gradient, surrogate_objective


def make_model(dims, card, functions, freqs=None, links=None, node_bias=None):
    """``functions`` maps predicate -> (weights, bias)."""
    space = SpaceConfig(dims, card)
    freqs = freqs or {}
    vocab = {
        p: (SemanticFunction(np.asarray(w, dtype=float), b), freqs.get(p, 1.0))
        for p, (w, b) in functions.items()
    }
    return WorldModel.from_functions(space, vocab, links, node_bias)


def random_model(rng, dims, card, n_preds=3, scale=3.0, bias_scale=1.0, labels=(), link_scale=0.0,
                 node_bias_scale=0.0):
    functions = {
        f"p{k}": (rng.uniform(-scale, scale, dims), float(rng.uniform(-bias_scale, bias_scale)))
        for k in range(n_preds)
    }
    links = {l: rng.uniform(-link_scale, link_scale, (dims, dims)) for l in labels}
    nb = rng.uniform(-node_bias_scale, node_bias_scale, dims)
    return make_model(dims, card, functions, links=links, node_bias=nb)


def table_function(values):
    """Weights realising truth values ``values`` at the one-hot pixies of a
    C=1 space (bias 0, weight = logit)."""
    v = np.asarray(values, dtype=float)
    return np.log(v / (1 - v)), 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _perturbed(model, kind, key, h):
    if kind == "weights":
        k, i = key
        w = model.weights.copy()
        w[k, i] += h
        return model.replace(weights=w)
    if kind == "biases":
        b = model.biases.copy()
        b[key] += h
        return model.replace(biases=b)
    if kind == "node_bias":
        nb = model.node_bias.copy()
        nb[key] += h
        return model.replace(node_bias=nb)
    label, i, j = key
    links = {l: W.copy() for l, W in model.links.items()}
    links[label][i, j] += h
    return model.replace(links=links)


def _analytic(g, kind, key):
    if kind == "weights":
        return g.weights[key[0]][key[1]]
    if kind == "biases":
        return g.biases[key]
    if kind == "node_bias":
        return g.node_bias[key]
    label, i, j = key
    return g.links[label][i, j]


def gradient_check(seed, h=1e-5):
    """Largest relative error between analytic and central-difference
    gradients of the surrogate objective over every touched parameter."""
    rng = np.random.default_rng(seed)
    D, C = int(rng.integers(3, 7)), int(rng.integers(1, 3))
    preds = {f"p{k}": (rng.uniform(-2, 2, D), float(rng.uniform(-1, 1))) for k in range(4)}
    links = {l: rng.uniform(-1, 1, (D, D)) for l in ("ARG1", "ARG2")}
    m = make_model(D, C, preds, freqs={f"p{k}": float(k + 1) for k in range(4)}, links=links,
                   node_bias=rng.uniform(-0.5, 0.5, D))
    obs = Observation(SVO_TOPOLOGY, tuple(rng.choice(list(preds), 3)))
    cfg = TrainingConfig(space=SpaceConfig(D, C), negative_samples=2, l2_strength=0.01)
    prep = prepare(m, obs, cfg, rng)
    g = surrogate_gradient(m, prep, cfg.l2_strength)
    keys = [("weights", (k, i)) for k in g.weights for i in range(D)]
    keys += [("biases", k) for k in g.biases]
    keys += [("node_bias", i) for i in range(D)]
    keys += [("links", (l, i, j)) for l in g.links for i in range(D) for j in range(D)]
    worst = 0.0
    for kind, key in keys:
        up = surrogate_objective(_perturbed(m, kind, key, h), prep, cfg.l2_strength)
        down = surrogate_objective(_perturbed(m, kind, key, -h), prep, cfg.l2_strength)
        numeric = (up - down) / (2 * h)
        analytic = _analytic(g, kind, key)
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-12))
    return worst


# --- acceptance summary -------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail=""):
    """Remember one criterion's outcome for the end-of-run summary."""
    ACCEPTANCE[number] = (title, bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {status}: {title}" + (f" ({detail})" if detail else ""))
