"""Autoregressive recurrent wavefunctions over binary spin chains and lattices.

Four cell kinds are supported:

* ``ernn``   - plain tanh recurrent cell,
* ``egru``   - gated recurrent cell (sigmoid gates, tanh candidate),
* ``hgru``   - the gated cell rebuilt from Mobius operations on the Poincare
  ball; hidden states live inside the ball, gates are Euclidean vectors
  obtained through the origin log map, and only the three biases are
  ball-valued parameters,
* ``ernn2d`` - a two-direction tanh cell for square lattices, visited along
  a boustrophedon (zigzag) path; missing neighbors at lattice boundaries
  contribute zero vectors.

A configuration ``sigma`` is a length-N array over {0, 1}, stored row-major
for lattices.  The wavefunction is ``sqrt(P(sigma)) * exp(i phi(sigma))``
where ``P`` is the product of per-site Softmax conditionals and ``phi`` sums
per-site Softsign phases (complex ansatz) plus ``pi * M_A`` when the
odd-sublattice sign factor is enabled.

Every forward routine here runs on plain numpy parameters or on autodiff
nodes, so the same code serves sampling, evaluation and gradient tapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from . import geometry as geo

CELL_KINDS = ("ernn", "egru", "hgru", "ernn2d")

EUCLIDEAN = "euclidean"
HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class AnsatzConfig:
    """Architecture of one autoregressive wavefunction."""

    cell: str
    d_h: int
    n_sites: int
    n_x: Optional[int] = None
    n_y: Optional[int] = None
    complex_output: bool = False
    curvature: float = 1.0
    marshall_sign: bool = False
    d_v: int = 2

    def __post_init__(self):
        if self.cell not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.cell!r}")
        if self.d_h < 1:
            raise ValueError("hidden size must be >= 1")
        if self.d_v != 2:
            raise ValueError("only two-level sites are supported (d_v = 2)")
        if self.n_sites < 1:
            raise ValueError("need at least one site")
        if self.cell == "ernn2d":
            if not self.n_x or not self.n_y or self.n_x * self.n_y != self.n_sites:
                raise ValueError("ernn2d needs n_x * n_y == n_sites")
        if self.cell == "hgru" and self.curvature < 0:
            raise ValueError("curvature must be >= 0")


def parameter_shapes(config: AnsatzConfig) -> List[Tuple[str, Tuple[int, ...], str]]:
    """Ordered (name, shape, manifold) triples; the order fixes checkpoint layout."""
    d_h, d_v = config.d_h, config.d_v
    bias_manifold = HYPERBOLIC if config.cell == "hgru" else EUCLIDEAN
    if config.cell == "ernn":
        shapes = [
            ("W_h", (d_h, d_h), EUCLIDEAN),
            ("U_h", (d_h, d_v), EUCLIDEAN),
            ("b_h", (d_h,), EUCLIDEAN),
        ]
    elif config.cell in ("egru", "hgru"):
        shapes = []
        for gate in ("r", "z", "h"):
            shapes.append((f"W_{gate}", (d_h, d_h), EUCLIDEAN))
            shapes.append((f"U_{gate}", (d_h, d_v), EUCLIDEAN))
            shapes.append((f"b_{gate}", (d_h,), bias_manifold))
    elif config.cell == "ernn2d":
        shapes = [
            ("W_h", (d_h, d_h), EUCLIDEAN),
            ("U_h", (d_h, d_v), EUCLIDEAN),
            ("W_v", (d_h, d_h), EUCLIDEAN),
            ("U_v", (d_h, d_v), EUCLIDEAN),
            ("b", (d_h,), EUCLIDEAN),
        ]
    else:  # pragma: no cover - guarded by AnsatzConfig
        raise ValueError(config.cell)
    shapes.append(("U1", (d_v, d_h), EUCLIDEAN))
    shapes.append(("c1", (d_v,), EUCLIDEAN))
    if config.complex_output:
        shapes.append(("U2", (d_v, d_h), EUCLIDEAN))
        shapes.append(("c2", (d_v,), EUCLIDEAN))
    return shapes


def count_parameters(config: AnsatzConfig) -> int:
    """Exact scalar count of the trainable parameters."""
    return sum(int(np.prod(shape)) for _, shape, _ in parameter_shapes(config))


@dataclass
class ParameterStore:
    """Named tensors, each tagged with the manifold its optimizer lives on."""

    tensors: Dict[str, np.ndarray]
    manifolds: Dict[str, str]
    order: Tuple[str, ...]

    @classmethod
    def initialize(cls, config: AnsatzConfig, seed: int = 0) -> "ParameterStore":
        """Glorot-uniform weights, zero biases (the ball origin for hgru biases)."""
        rng = np.random.default_rng(seed)
        tensors, manifolds, order = {}, {}, []
        for name, shape, manifold in parameter_shapes(config):
            if len(shape) == 2:
                limit = math.sqrt(6.0 / (shape[0] + shape[1]))
                tensors[name] = rng.uniform(-limit, limit, size=shape)
            else:
                tensors[name] = np.zeros(shape)
            manifolds[name] = manifold
            order.append(name)
        return cls(tensors, manifolds, tuple(order))

    def copy(self) -> "ParameterStore":
        return ParameterStore(
            {k: v.copy() for k, v in self.tensors.items()},
            dict(self.manifolds),
            self.order,
        )

    def as_nodes(self) -> Dict[str, ad.Node]:
        return {name: ad.Node.param(name, self.tensors[name]) for name in self.order}

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[name].reshape(-1) for name in self.order])

    def load_flat(self, flat: np.ndarray):
        offset = 0
        for name in self.order:
            size = self.tensors[name].size
            chunk = flat[offset:offset + size]
            if chunk.size != size:
                raise ValueError("flat buffer does not match parameter shapes")
            self.tensors[name] = chunk.reshape(self.tensors[name].shape).copy()
            offset += size
        if offset != flat.size:
            raise ValueError("flat buffer does not match parameter shapes")

    @property
    def n_parameters(self) -> int:
        return sum(self.tensors[name].size for name in self.order)


@dataclass(frozen=True)
class WavefunctionValue:
    """log amplitude and phase of one configuration."""

    log_amplitude: float
    phase: float


class ProjectionCounter:
    """Counts how often a hidden state actually needed the boundary repair."""

    def __init__(self):
        self.hits = 0

    def add(self, n: int):
        self.hits += n


# ---------------------------------------------------------------------------
# cell steps (batched over the leading axis; Node- or array-valued)

def euclidean_rnn_step(h_prev, x_prev, params):
    return ad.tanh(ad.linear(h_prev, params["W_h"]) + ad.linear(x_prev, params["U_h"]) + params["b_h"])


def euclidean_gru_step(h_prev, x_prev, params):
    r = ad.sigmoid(ad.linear(h_prev, params["W_r"]) + ad.linear(x_prev, params["U_r"]) + params["b_r"])
    z = ad.sigmoid(ad.linear(h_prev, params["W_z"]) + ad.linear(x_prev, params["U_z"]) + params["b_z"])
    h_cand = ad.tanh(ad.linear(r * h_prev, params["W_h"]) + ad.linear(x_prev, params["U_h"]) + params["b_h"])
    return (1.0 - z) * h_prev + z * h_cand


def hyperbolic_gru_step(h_prev, x_prev, params, c: float, counter: Optional[ProjectionCounter] = None):
    """One gated update built entirely from Mobius operations.

    The Euclidean input is lifted to the ball with the origin exp map; gate
    pre-activations are Mobius sums of Mobius matrix products, squashed by a
    sigmoid after the origin log map.  The candidate state applies the gated
    matrix ``W_h diag(r)`` in Mobius form, and the new state moves from the
    previous one along ``diag(z) (x) (-h (+) h_cand)``.
    """
    lifted = geo.exp0_raw(x_prev, c)

    def gate(w_name, u_name, b_name):
        pre = geo.mobius_add_raw(
            geo.mobius_add_raw(
                geo.mobius_matvec_raw(params[w_name], h_prev, c),
                geo.mobius_matvec_raw(params[u_name], lifted, c),
                c,
            ),
            params[b_name],
            c,
        )
        return ad.sigmoid(geo.log0_raw(pre, c))

    r = gate("W_r", "U_r", "b_r")
    z = gate("W_z", "U_z", "b_z")

    gated = geo.mobius_matvec_applied_raw(ad.linear(r * h_prev, params["W_h"]), h_prev, c)
    pre_h = geo.mobius_add_raw(
        geo.mobius_add_raw(gated, geo.mobius_matvec_raw(params["U_h"], lifted, c), c),
        params["b_h"],
        c,
    )
    h_cand = geo.mobius_pointwise_raw(ad.tanh, pre_h, c)

    delta = geo.mobius_add_raw(-1.0 * h_prev, h_cand, c)
    update = geo.mobius_matvec_applied_raw(z * delta, delta, c)
    h_new = geo.mobius_add_raw(h_prev, update, c)
    if counter is not None:
        counter.add(geo.projection_hits(h_new, c))
    return geo.project_raw(h_new, c)


def rnn2d_step(h_horiz, h_vert, x_horiz, x_vert, params):
    """Merge the two already-generated neighbors into one hidden state."""
    pre = (
        ad.linear(x_horiz, params["U_h"])
        + ad.linear(h_horiz, params["W_h"])
        + ad.linear(x_vert, params["U_v"])
        + ad.linear(h_vert, params["W_v"])
        + params["b"]
    )
    return ad.tanh(pre)


# ---------------------------------------------------------------------------
# heads

def conditional_dist(h, params, config: AnsatzConfig):
    """Softmax conditional over the site alphabet; ball states enter via log0."""
    ht = geo.log0_raw(h, config.curvature) if config.cell == "hgru" else h
    return ad.softmax(ad.linear(ht, params["U1"]) + params["c1"])


def phase_component(h, params, config: AnsatzConfig):
    """Per-site phase vector, bounded to (-pi, pi) by pi * Softsign."""
    ht = geo.log0_raw(h, config.curvature) if config.cell == "hgru" else h
    return math.pi * ad.softsign(ad.linear(ht, params["U2"]) + params["c2"])


def marshall_exponent(sigmas: np.ndarray) -> np.ndarray:
    """M_A: sum of site values over the odd (1-indexed) sublattice."""
    sigmas = np.atleast_2d(sigmas)
    return sigmas[:, 0::2].sum(axis=1)


# ---------------------------------------------------------------------------
# autoregressive scans

def _zigzag_path(n_x: int, n_y: int) -> List[Tuple[int, int, int]]:
    """(site, horizontal predecessor, site above) triples in visit order.

    Sites are row-major indices; -1 marks a missing neighbor.  Rows alternate
    direction so the path stays nearest-neighbor continuous.
    """
    path = []
    for row in range(n_y):
        cols = range(n_x) if row % 2 == 0 else range(n_x - 1, -1, -1)
        prev = -1
        for col in cols:
            idx = row * n_x + col
            above = (row - 1) * n_x + col if row > 0 else -1
            path.append((idx, prev, above))
            prev = idx
    return path


def _check_sigmas(config: AnsatzConfig, sigmas: np.ndarray) -> np.ndarray:
    sigmas = np.atleast_2d(np.asarray(sigmas, dtype=np.int64))
    if sigmas.shape[1] != config.n_sites:
        raise ValueError(f"expected {config.n_sites} sites, got {sigmas.shape[1]}")
    if sigmas.min() < 0 or sigmas.max() >= config.d_v:
        raise ValueError("site values must lie in {0, 1}")
    return sigmas


def _step_1d(config, params, h, x, counter):
    if config.cell == "ernn":
        return euclidean_rnn_step(h, x, params)
    if config.cell == "egru":
        return euclidean_gru_step(h, x, params)
    return hyperbolic_gru_step(h, x, params, config.curvature, counter)


def log_psi_batch(config: AnsatzConfig, params, sigmas,
                  counter: Optional[ProjectionCounter] = None):
    """(log amplitude, phase) for a batch of configurations.

    ``params`` may hold arrays (plain forward pass) or autodiff nodes (taped
    pass); the return type follows.  ``log_amplitude = 0.5 * sum_i log(y_i . s_i)``
    and the phase accumulates the Softsign head plus ``pi * M_A`` when the
    sign rule is on.
    """
    sigmas = _check_sigmas(config, sigmas)
    batch = sigmas.shape[0]
    eye = np.eye(config.d_v)

    log_amp = 0.0
    phase = 0.0
    if config.cell == "ernn2d":
        states: List = [None] * config.n_sites
        zeros_h = np.zeros((batch, config.d_h))
        zeros_x = np.zeros((batch, config.d_v))
        for idx, left, above in _zigzag_path(config.n_x, config.n_y):
            h_h = states[left] if left >= 0 else zeros_h
            x_h = eye[sigmas[:, left]] if left >= 0 else zeros_x
            h_v = states[above] if above >= 0 else zeros_h
            x_v = eye[sigmas[:, above]] if above >= 0 else zeros_x
            h = rnn2d_step(h_h, h_v, x_h, x_v, params)
            states[idx] = h
            onehot = eye[sigmas[:, idx]]
            y = conditional_dist(h, params, config)
            log_amp = log_amp + 0.5 * ad.log(ad.clamp_min(ad.dot(y, onehot), 1e-300))
            if config.complex_output:
                phase = phase + ad.dot(phase_component(h, params, config), onehot)
    else:
        h = np.zeros((batch, config.d_h))
        x = np.zeros((batch, config.d_v))
        for i in range(config.n_sites):
            h = _step_1d(config, params, h, x, counter)
            onehot = eye[sigmas[:, i]]
            y = conditional_dist(h, params, config)
            log_amp = log_amp + 0.5 * ad.log(ad.clamp_min(ad.dot(y, onehot), 1e-300))
            if config.complex_output:
                phase = phase + ad.dot(phase_component(h, params, config), onehot)
            x = onehot

    if config.marshall_sign:
        phase = phase + math.pi * marshall_exponent(sigmas)
    if not isinstance(phase, (ad.Node, np.ndarray)):
        phase = np.zeros(batch)
    elif isinstance(phase, np.ndarray) and phase.shape != (batch,):
        phase = np.broadcast_to(phase, (batch,)).copy()
    return log_amp, phase


def log_psi(config: AnsatzConfig, store: ParameterStore, sigma) -> WavefunctionValue:
    """Wavefunction value of a single configuration."""
    la, ph = log_psi_batch(config, store.tensors, np.atleast_2d(sigma))
    return WavefunctionValue(float(la[0]), float(ph[0]))


def sample_batch(config: AnsatzConfig, store: ParameterStore, n: int,
                 rng: np.random.Generator,
                 counter: Optional[ProjectionCounter] = None,
                 return_log_amp: bool = False):
    """Draw ``n`` configurations by exact ancestral sampling.

    Each site is drawn from its Softmax conditional, one-hot encoded and fed
    forward.  A fixed generator state reproduces the batch bit for bit.
    """
    params = store.tensors
    eye = np.eye(config.d_v)
    sigmas = np.zeros((n, config.n_sites), dtype=np.int64)
    running = np.zeros(n)

    def draw(y):
        u = rng.random(n)
        return (u >= y[:, 0]).astype(np.int64)

    if config.cell == "ernn2d":
        states: List = [None] * config.n_sites
        zeros_h = np.zeros((n, config.d_h))
        zeros_x = np.zeros((n, config.d_v))
        for idx, left, above in _zigzag_path(config.n_x, config.n_y):
            h_h = states[left] if left >= 0 else zeros_h
            x_h = eye[sigmas[:, left]] if left >= 0 else zeros_x
            h_v = states[above] if above >= 0 else zeros_h
            x_v = eye[sigmas[:, above]] if above >= 0 else zeros_x
            h = rnn2d_step(h_h, h_v, x_h, x_v, params)
            states[idx] = h
            y = conditional_dist(h, params, config)
            s = draw(y)
            sigmas[:, idx] = s
            running += 0.5 * np.log(y[np.arange(n), s])
    else:
        h = np.zeros((n, config.d_h))
        x = np.zeros((n, config.d_v))
        for i in range(config.n_sites):
            h = _step_1d(config, params, h, x, counter)
            y = conditional_dist(h, params, config)
            s = draw(y)
            sigmas[:, i] = s
            running += 0.5 * np.log(y[np.arange(n), s])
            x = eye[s]

    if return_log_amp:
        return sigmas, running
    return sigmas


def make_evaluator(config: AnsatzConfig, store: ParameterStore):
    """Plain-numpy batched ``sigmas -> (log_amp, phase)`` closure."""

    def evaluate(sigmas):
        return log_psi_batch(config, store.tensors, sigmas)

    return evaluate
