"""Coordinate-ascent mean-field inference over pixie nodes.

Each node ``n`` gets a vector ``q[n]`` of independent activation probabilities.
A coordinate update compares the truth of the node's conditioned predicates
at two clamped versions of ``q[n]`` (unit ``i`` forced on, unit ``i`` forced
off, the rest rescaled so the cardinality is right) and adds the field from
neighbouring nodes through the link weights::

    q_i = 1 / (1 + (D-C)/C * t(x-)/t(x+) * exp(-sum_links W_ik y_k - b_i))

The inner loops are compiled with numba; every public entry point funnels into
the same kernels so that the single-pixie and linked updates agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import ConfigurationError, InputError
from .model import (
    GraphTopology,
    SemanticFunction,
    SpaceConfig,
    TruthCondition,
    WorldModel,
    evaluate_semantic_function,
)

EPS_Q = 1e-9
_MAX_EXP = 700.0


@dataclass(frozen=True)
class MeanFieldSettings:
    tolerance: float = 1e-4
    max_sweeps: int = 50

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        if self.max_sweeps < 1:
            raise ConfigurationError("max_sweeps must be at least 1")


@dataclass
class MeanFieldState:
    nodes: tuple
    q: np.ndarray
    sweeps: int = 0
    max_delta: float = math.inf
    converged: bool = False
    underflows: int = 0

    def __getitem__(self, node) -> np.ndarray:
        try:
            return self.q[self.nodes.index(node)]
        except ValueError:
            raise InputError(f"unknown node {node!r}") from None


# --- kernels -----------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _log_sigmoid(z):
    if z >= 0.0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@numba.njit(cache=True, nogil=True)
def _rescale_others(q, i, target, out):
    """out[j] = min(1, s * q[j]) for j != i, choosing s so the entries sum to
    ``target``; mass clipped at 1 is spread proportionally over the rest.
    Returns False if no such s exists."""
    D = q.shape[0]
    if target > D - 1:
        return False
    clipped = np.zeros(D, dtype=np.bool_)
    n_clip = 0
    s = 0.0
    while True:
        remaining = target - n_clip
        if remaining <= 0.0:
            s = 0.0
            break
        free_sum = 0.0
        for j in range(D):
            if j != i and not clipped[j]:
                free_sum += q[j]
        if free_sum <= 0.0:
            return False
        s = remaining / free_sum
        changed = False
        for j in range(D):
            if j != i and not clipped[j] and s * q[j] > 1.0:
                clipped[j] = True
                n_clip += 1
                changed = True
        if not changed:
            break
    for j in range(D):
        if j == i:
            continue
        out[j] = 1.0 if clipped[j] else s * q[j]
    return True


@numba.njit(cache=True, nogil=True)
def _clamp(q, i, C, x_plus, x_minus):
    ok_plus = _rescale_others(q, i, C - 1.0, x_plus)
    ok_minus = _rescale_others(q, i, float(C), x_minus)
    x_plus[i] = 1.0
    x_minus[i] = 0.0
    return ok_plus and ok_minus


@numba.njit(cache=True, nogil=True)
def _log_ratio(x_plus, x_minus, i, cond_w, cond_b, rows):
    """Sum over the conditioned predicates of log t(x-) - log t(x+).
    Second value is False when some t(x+) underflowed."""
    total = 0.0
    ok = True
    D = x_plus.shape[0]
    for r in rows:
        zp = cond_b[r]
        zm = cond_b[r]
        for j in range(D):
            zp += cond_w[r, j] * x_plus[j]
            zm += cond_w[r, j] * x_minus[j]
        lp = _log_sigmoid(zp)
        if not math.isfinite(lp):
            ok = False
        total += _log_sigmoid(zm) - lp
    return total, ok


@numba.njit(cache=True, nogil=True)
def _field(Q, n, i, edge_src, edge_dst, edge_W, node_bias):
    f = node_bias[i]
    D = Q.shape[1]
    for e in range(edge_src.shape[0]):
        if edge_src[e] == n:
            m = edge_dst[e]
            for k in range(D):
                f += edge_W[e, i, k] * Q[m, k]
        elif edge_dst[e] == n:
            m = edge_src[e]
            for k in range(D):
                f += edge_W[e, k, i] * Q[m, k]
    return f


@numba.njit(cache=True, nogil=True)
def _new_value(log_ratio, field, D, C, eps):
    a = log_ratio - field
    if a > _MAX_EXP:
        a = _MAX_EXP
    elif a < -_MAX_EXP:
        a = -_MAX_EXP
    v = C / (C + (D - C) * math.exp(a))
    if v < eps:
        v = eps
    elif v > 1.0 - eps:
        v = 1.0 - eps
    return v


@numba.njit(cache=True, nogil=True)
def _update(q, i, C, cond_w, cond_b, rows, field, eps, x_plus, x_minus):
    """Returns (new q_i, status); status 0 ok, 1 underflow, 2 infeasible."""
    D = q.shape[0]
    if rows.shape[0] == 0:
        return _new_value(0.0, field, D, C, eps), 0
    if not _clamp(q, i, C, x_plus, x_minus):
        return q[i], 2
    lr, ok = _log_ratio(x_plus, x_minus, i, cond_w, cond_b, rows)
    if not ok:
        return eps, 1
    return _new_value(lr, field, D, C, eps), 0


@numba.njit(cache=True, nogil=True)
def _project(v, target, lo, hi):
    """Scale v in place to sum to target, holding entries that hit a bound."""
    D = v.shape[0]
    fixed = np.zeros(D, dtype=np.bool_)
    for _ in range(D + 1):
        fixed_sum = 0.0
        free_sum = 0.0
        for j in range(D):
            if fixed[j]:
                fixed_sum += v[j]
            else:
                free_sum += v[j]
        if free_sum <= 0.0:
            return
        s = (target - fixed_sum) / free_sum
        changed = False
        for j in range(D):
            if not fixed[j]:
                v[j] *= s
                if v[j] > hi:
                    v[j] = hi
                    fixed[j] = True
                    changed = True
                elif v[j] < lo:
                    v[j] = lo
                    fixed[j] = True
                    changed = True
        if not changed:
            return


@numba.njit(cache=True, nogil=True)
def _normalize(v, target, eps):
    """Shift all logits of v by one common offset so the entries sum to
    ``target``, then repair any clamping at the bounds."""
    D = v.shape[0]
    total = 0.0
    for j in range(D):
        total += v[j]
    if abs(total - target) <= 1e-12 * target:
        return
    logits = np.empty(D)
    for j in range(D):
        logits[j] = math.log(v[j]) - math.log1p(-v[j])
    lo, hi, lam = -1.0, 1.0, 0.0
    while _shifted_sum(logits, lo) > target:
        lo *= 2.0
    while _shifted_sum(logits, hi) < target:
        hi *= 2.0
    for _ in range(200):
        g = _shifted_sum(logits, lam) - target
        if abs(g) < 1e-14 * target:
            break
        if g > 0.0:
            hi = lam
        else:
            lo = lam
        slope = 0.0
        for j in range(D):
            s = 1.0 / (1.0 + math.exp(-(logits[j] + lam)))
            slope += s * (1.0 - s)
        step = lam - g / slope if slope > 0.0 else 0.5 * (lo + hi)
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == lam:
            break
        lam = step
    for j in range(D):
        v[j] = 1.0 / (1.0 + math.exp(-(logits[j] + lam)))
        if v[j] < eps:
            v[j] = eps
        elif v[j] > 1.0 - eps:
            v[j] = 1.0 - eps
    _project(v, target, eps, 1.0 - eps)


@numba.njit(cache=True, nogil=True)
def _shifted_sum(logits, lam):
    total = 0.0
    for j in range(logits.shape[0]):
        total += 1.0 / (1.0 + math.exp(-(logits[j] + lam)))
    return total


@numba.njit(cache=True, nogil=True)
def _optimize(Q, C, cond_node, cond_w, cond_b, edge_src, edge_dst, edge_W, node_bias,
              eps, tol, max_sweeps):
    N, D = Q.shape
    x_plus = np.empty(D)
    x_minus = np.empty(D)
    prev = np.empty(D)
    underflows = 0
    sweeps = 0
    delta = np.inf
    for sweep in range(max_sweeps):
        delta = 0.0
        for n in range(N):
            rows = np.nonzero(cond_node == n)[0]
            for j in range(D):
                prev[j] = Q[n, j]
            for i in range(D):
                f = _field(Q, n, i, edge_src, edge_dst, edge_W, node_bias)
                v, status = _update(Q[n], i, C, cond_w, cond_b, rows, f, eps, x_plus, x_minus)
                if status == 2:
                    return sweep, delta, False, underflows, True
                if status == 1:
                    underflows += 1
                Q[n, i] = v
            _normalize(Q[n], float(C), eps)
            for j in range(D):
                d = abs(Q[n, j] - prev[j])
                if d > delta:
                    delta = d
        sweeps = sweep + 1
        if delta < tol:
            return sweeps, delta, True, underflows, False
    return sweeps, delta, False, underflows, False


# --- public API ----------------------------------------------------------------


def _vector(q, D=None):
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.ndim != 1 or (D is not None and len(q) != D):
        raise InputError("mean-field vector has the wrong shape")
    return q


def clamped_vectors(q, i: int, cardinality: int) -> tuple[np.ndarray, np.ndarray]:
    """``(x_plus, x_minus)``: unit ``i`` on/off, the other entries rescaled to
    total ``C - 1`` / ``C`` and kept inside [0, 1]."""
    q = _vector(q)
    D = len(q)
    if not 0 <= i < D:
        raise InputError(f"dimension {i} out of range")
    x_plus, x_minus = np.empty(D), np.empty(D)
    if not _clamp(q, i, float(cardinality), x_plus, x_minus):
        raise ConfigurationError(
            f"cannot rescale a length-{D} vector to cardinality {cardinality} around unit {i}"
        )
    return x_plus, x_minus


def _functions_arrays(functions, D):
    W = np.array([f.weights for f in functions], dtype=np.float64).reshape(len(functions), D)
    b = np.array([f.bias for f in functions], dtype=np.float64)
    return W, b


def _single_update(q, i, functions, space, field):
    q = _vector(q, space.dims)
    W, b = _functions_arrays(functions, space.dims)
    rows = np.arange(len(functions), dtype=np.int64)
    x_plus, x_minus = np.empty(space.dims), np.empty(space.dims)
    v, status = _update(q, i, float(space.cardinality), W, b, rows, field, EPS_Q, x_plus, x_minus)
    if status == 2:
        raise ConfigurationError("clamped vectors cannot be formed for this cardinality")
    return float(v)


def update_single(q, i: int, f: SemanticFunction | Sequence[SemanticFunction], space: SpaceConfig) -> float:
    """Optimal ``q_i`` for a single unlinked pixie, holding the other units fixed.

    ``f`` may also be a list of functions, whose truth ratios multiply.
    """
    functions = [f] if isinstance(f, SemanticFunction) else list(f)
    return _single_update(q, i, functions, space, 0.0)


def _edge_arrays(model: WorldModel, topology: GraphTopology):
    D = model.space.dims
    E = len(topology.edges)
    src = np.array([topology.index(s) for s, _, _ in topology.edges], dtype=np.int64)
    dst = np.array([topology.index(d) for _, d, _ in topology.edges], dtype=np.int64)
    W = np.zeros((E, D, D))
    for e, (_, _, label) in enumerate(topology.edges):
        W[e] = model.link(label)
    return src, dst, W


def update_linked(state: MeanFieldState, node, i: int, f, topology: GraphTopology, model: WorldModel) -> float:
    """Coordinate update for ``node`` including the field from its neighbours'
    current mean-field vectors (transpose for incoming links) and the node bias."""
    functions = [] if f is None else [f] if isinstance(f, SemanticFunction) else list(f)
    model.check_topology(topology)
    src, dst, W = _edge_arrays(model, topology)
    Q = np.ascontiguousarray(state.q, dtype=np.float64)
    n = topology.index(node)
    field = _field(Q, n, i, src, dst, W, np.ascontiguousarray(model.node_bias))
    return _single_update(Q[n], i, functions, model.space, field)


def _condition_arrays(model, topology, conditions):
    seen = []
    for c in conditions:
        if not c.polarity:
            raise InputError(
                f"mean-field inference only supports true conditions, got {c.predicate!r} false"
            )
        key = (topology.index(c.node), model.index(c.predicate))
        if key not in seen:
            seen.append(key)
    seen.sort()
    D = model.space.dims
    node = np.array([n for n, _ in seen], dtype=np.int64)
    W = np.ascontiguousarray(model.weights[[k for _, k in seen]]).reshape(len(seen), D)
    b = np.ascontiguousarray(model.biases[[k for _, k in seen]])
    return node, W, b


def optimize(
    model: WorldModel,
    topology: GraphTopology,
    conditions: Sequence[TruthCondition] = (),
    settings: MeanFieldSettings = MeanFieldSettings(),
) -> MeanFieldState:
    """Jointly fit one mean-field vector per node given true predicate conditions.

    Starts from the uniform C/D vector and sweeps nodes in topology order,
    dimensions in ascending order, renormalising each node to total C after
    each sweep.  Non-convergence is reported through ``state.converged``.
    """
    model.check_topology(topology)
    model.check_conditions(topology, conditions)
    cond_node, cond_w, cond_b = _condition_arrays(model, topology, conditions)
    src, dst, W = _edge_arrays(model, topology)
    C = model.space.cardinality
    Q = np.tile(model.space.uniform(), (len(topology.nodes), 1))
    sweeps, delta, converged, underflows, infeasible = _optimize(
        Q, float(C), cond_node, cond_w, cond_b, src, dst, W,
        np.ascontiguousarray(model.node_bias), EPS_Q, settings.tolerance, settings.max_sweeps,
    )
    if infeasible:
        raise ConfigurationError("clamped vectors cannot be formed for this cardinality")
    return MeanFieldState(topology.nodes, Q, int(sweeps), float(delta), bool(converged), int(underflows))


@numba.njit(cache=True, nogil=True)
def _blanket(Q, C, edge_src, edge_dst, edge_W, node_bias, eps, out):
    N, D = Q.shape
    for n in range(N):
        for i in range(D):
            f = _field(Q, n, i, edge_src, edge_dst, edge_W, node_bias)
            out[n, i] = _new_value(0.0, f, D, C, eps)
        _normalize(out[n], C, eps)


def blanket_marginals(model: WorldModel, topology: GraphTopology, q: np.ndarray) -> np.ndarray:
    """For every node, the unconditioned mean-field vector it would take if
    its neighbours were frozen at ``q``: one update of each node from the
    link field and node bias alone, renormalised to total C."""
    model.check_topology(topology)
    Q = np.ascontiguousarray(q, dtype=np.float64)
    if Q.shape != (len(topology.nodes), model.space.dims):
        raise InputError(f"expected q of shape {(len(topology.nodes), model.space.dims)}, got {Q.shape}")
    src, dst, W = _edge_arrays(model, topology)
    out = np.empty_like(Q)
    _blanket(Q, float(model.space.cardinality), src, dst, W,
             np.ascontiguousarray(model.node_bias), EPS_Q, out)
    return out


def approximate_truth(f: SemanticFunction, state: MeanFieldState, node) -> float:
    return evaluate_semantic_function(f, state[node])


def _restricted_log_q(X, q):
    q = np.clip(q, EPS_Q, 1.0 - EPS_Q)
    logq = X @ np.log(q) + (1 - X) @ np.log1p(-q)
    m = logq.max()
    return logq - (m + math.log(np.exp(logq - m).sum()))


def inclusive_kl(X: np.ndarray, posterior: np.ndarray, state: MeanFieldState, per_node: bool = False):
    """KL(P || Q) where ``P`` is an exact joint posterior over the enumerated
    pixies ``X`` (one axis per node, as from :func:`oracle.exact_posterior`)
    and ``Q`` is the product of the mean-field distributions, each restricted
    to and renormalised over the cardinality-valid pixies.

    With ``per_node=True`` returns a list with the divergence between each
    node's exact marginal and its restricted Q.
    """
    Xf = X.astype(np.float64)
    n = posterior.ndim
    if n != len(state.nodes):
        raise InputError("posterior and state disagree on the number of nodes")
    log_qs = [_restricted_log_q(Xf, state.q[k]) for k in range(n)]
    marginals = []
    for k in range(n):
        others = tuple(a for a in range(n) if a != k)
        marginals.append(posterior.sum(axis=others) if others else posterior)
    if per_node:
        out = []
        for p, lq in zip(marginals, log_qs):
            nz = p > 0
            out.append(max(0.0, float(np.sum(p[nz] * (np.log(p[nz]) - lq[nz])))))
        return out
    nz = posterior > 0
    neg_entropy = float(np.sum(posterior[nz] * np.log(posterior[nz])))
    cross = sum(float(p @ lq) for p, lq in zip(marginals, log_qs))
    return max(0.0, neg_entropy - cross)
