"""Coordinate networks: frequency-enhanced MLPs per axis joined through a
transform core, with a sine-layer expansion and a checkable smoothness
bound.

Each axis network is: Fourier encoding -> ReLU layer -> L sine layers ->
linear head. A model prediction contracts the core tensor with every axis
output; for two axes and a scalar target this is u.T M v.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .data import GridField
from .errors import ConfigError, NumericalError
from .features import FourierConfig, FourierMap, encode_batch, encoding_dim, sample_fourier_map
from .linalg import mode_n_product
from .rng import Rng

OMEGA_FIRST_DEFAULT = 30.0
OMEGA_REST_DEFAULT = 1.0

ACTIVATIONS = ("sine", "relu")


@dataclass
class SineLayer:
    """Dense layer with sin(omega0 * (W x) + b) activation."""

    weight: np.ndarray
    bias: np.ndarray
    omega0: float

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.sin(self.omega0 * (x @ self.weight.T) + self.bias)


@dataclass
class FreqMlp:
    """One axis network: frozen Fourier encoding, ReLU input layer, sine
    hidden stack, linear head.

    hidden_activation="relu" swaps every sine for a ReLU (the ablation
    variant); eval_count tracks how many coordinate rows have been pushed
    through, which the grid path uses to assert factorized complexity.
    """

    fourier: FourierMap
    input_weight: np.ndarray
    input_bias: np.ndarray
    hidden: list[SineLayer]
    head_weight: np.ndarray
    head_bias: np.ndarray
    hidden_activation: str = "sine"
    eval_count: int = dc_field(default=0, compare=False)

    @property
    def input_dim(self) -> int:
        return self.fourier.config.input_dim

    @property
    def out_dim(self) -> int:
        return self.head_weight.shape[0]

    @property
    def depth(self) -> int:
        return len(self.hidden)


def _uniform_init(rng: Rng, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform_range(-bound, bound, fan_out * fan_in).reshape(fan_out, fan_in)


def init_freq_mlp(input_dim: int, hidden_dim: int, depth: int, out_dim: int,
                  fourier: FourierConfig, seed: int,
                  omega0_first: float = OMEGA_FIRST_DEFAULT,
                  omega0_rest: float = OMEGA_REST_DEFAULT,
                  hidden_activation: str = "sine") -> FreqMlp:
    """Build one axis network.

    All weight matrices are drawn uniform on (-sqrt(6/fan_in),
    +sqrt(6/fan_in)); biases start at zero. Deterministic given seed. With
    fourier.num_maps == 0 the network consumes raw coordinates.
    """
    if min(input_dim, hidden_dim, out_dim) < 1 or depth < 0:
        raise ConfigError("all model dimensions must be positive")
    if hidden_activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {hidden_activation!r}")
    if fourier.input_dim != input_dim:
        raise ConfigError(
            f"fourier input_dim {fourier.input_dim} != axis input_dim {input_dim}"
        )
    fmap = sample_fourier_map(fourier)
    enc = encoding_dim(fourier) if fourier.num_maps > 0 else input_dim
    rng = Rng(seed)
    input_weight = _uniform_init(rng, hidden_dim, enc)
    hidden = []
    for layer in range(depth):
        omega = omega0_first if layer == 0 else omega0_rest
        hidden.append(SineLayer(
            weight=_uniform_init(rng, hidden_dim, hidden_dim),
            bias=np.zeros(hidden_dim),
            omega0=omega,
        ))
    head_weight = _uniform_init(rng, out_dim, hidden_dim)
    return FreqMlp(
        fourier=fmap,
        input_weight=input_weight,
        input_bias=np.zeros(hidden_dim),
        hidden=hidden,
        head_weight=head_weight,
        head_bias=np.zeros(out_dim),
        hidden_activation=hidden_activation,
    )


def _coerce_coords(mlp: FreqMlp, coords) -> np.ndarray:
    c = np.asarray(coords, dtype=np.float64)
    if c.ndim == 1:
        c = c.reshape(-1, 1) if mlp.input_dim == 1 else c.reshape(1, -1)
    if c.ndim != 2 or c.shape[1] != mlp.input_dim:
        raise ConfigError(
            f"expected coordinates of width {mlp.input_dim}, got shape {c.shape}"
        )
    return c


def _features(mlp: FreqMlp, coords: np.ndarray) -> np.ndarray:
    if mlp.fourier.config.num_maps == 0:
        return coords
    return encode_batch(mlp.fourier, coords)


def forward_mlp(mlp: FreqMlp, coords) -> np.ndarray:
    """Evaluate the axis network on a batch of coordinates, (b, d) -> (b, out)."""
    out, _ = forward_mlp_cached(mlp, coords)
    return out


def forward_mlp_cached(mlp: FreqMlp, coords) -> tuple[np.ndarray, dict]:
    """Forward pass that keeps the intermediates needed for backprop."""
    coords = _coerce_coords(mlp, coords)
    feats = _features(mlp, coords)
    z0 = feats @ mlp.input_weight.T + mlp.input_bias
    h = np.maximum(z0, 0.0)
    pre = []
    acts = [h]
    for layer in mlp.hidden:
        if mlp.hidden_activation == "sine":
            z = layer.omega0 * (h @ layer.weight.T) + layer.bias
            h = np.sin(z)
        else:
            z = h @ layer.weight.T + layer.bias
            h = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(h)
    out = h @ mlp.head_weight.T + mlp.head_bias
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite axis network output (exploding parameters?)")
    mlp.eval_count += coords.shape[0]
    return out, {"features": feats, "z0": z0, "pre": pre, "acts": acts}


def backward_mlp(mlp: FreqMlp, cache: dict, d_out: np.ndarray) -> dict:
    """Gradients of every trainable array given upstream d_out (b, out_dim).

    Fourier bases are frozen, so backprop stops at the encoding. Keys:
    input_weight, input_bias, hidden{i}.weight, hidden{i}.bias,
    head_weight, head_bias.
    """
    grads: dict[str, np.ndarray] = {}
    grads["head_weight"] = d_out.T @ cache["acts"][-1]
    grads["head_bias"] = d_out.sum(axis=0)
    dh = d_out @ mlp.head_weight
    for i in range(len(mlp.hidden) - 1, -1, -1):
        layer = mlp.hidden[i]
        z = cache["pre"][i]
        h_in = cache["acts"][i]
        if mlp.hidden_activation == "sine":
            dz = dh * np.cos(z)
            grads[f"hidden{i}.weight"] = layer.omega0 * (dz.T @ h_in)
            grads[f"hidden{i}.bias"] = dz.sum(axis=0)
            dh = layer.omega0 * (dz @ layer.weight)
        else:
            dz = dh * (z > 0.0)
            grads[f"hidden{i}.weight"] = dz.T @ h_in
            grads[f"hidden{i}.bias"] = dz.sum(axis=0)
            dh = dz @ layer.weight
    dz0 = dh * (cache["z0"] > 0.0)
    grads["input_weight"] = dz0.T @ cache["features"]
    grads["input_bias"] = dz0.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# Factorized model
# ---------------------------------------------------------------------------


@dataclass
class FactorizedInr:
    """Per-axis networks joined by a transform core.

    core.ndim == len(axes) for scalar targets; one trailing mode of size
    c_out handles vector-valued targets.
    """

    axes: list[FreqMlp]
    core: np.ndarray

    def __post_init__(self):
        c = len(self.axes)
        if self.core.ndim not in (c, c + 1):
            raise ConfigError(
                f"core ndim {self.core.ndim} incompatible with {c} axes"
            )
        for i, mlp in enumerate(self.axes):
            if mlp.out_dim != self.core.shape[i]:
                raise ConfigError(
                    f"axis {i} emits {mlp.out_dim} but core mode {i} has "
                    f"size {self.core.shape[i]}"
                )

    @property
    def c_in(self) -> int:
        return len(self.axes)

    @property
    def out_channels(self) -> int:
        return self.core.shape[-1] if self.core.ndim == len(self.axes) + 1 else 1

    @property
    def axis_input_dims(self) -> tuple[int, ...]:
        return tuple(mlp.input_dim for mlp in self.axes)


def superdiagonal_core(factor_dims: tuple[int, ...], out_channels: int | None = None
                       ) -> np.ndarray:
    """Ones on the superdiagonal, zeros elsewhere; for two axes this is the
    identity-initialized transform matrix."""
    shape = tuple(factor_dims) + ((out_channels,) if out_channels else ())
    core = np.zeros(shape)
    r = min(factor_dims)
    idx = (np.arange(r),) * len(factor_dims)
    if out_channels:
        core[idx + (slice(None),)] = 1.0
    else:
        core[idx] = 1.0
    return core


def init_factorized_inr(factor_dims: tuple[int, ...], hidden_dim: int, depth: int,
                        fourier_configs: list[FourierConfig], seed: int,
                        out_channels: int | None = None,
                        omega0_first: float = OMEGA_FIRST_DEFAULT,
                        omega0_rest: float = OMEGA_REST_DEFAULT,
                        hidden_activation: str = "sine") -> FactorizedInr:
    """Build the factorized model; axis i gets seed + i so streams differ."""
    if len(fourier_configs) != len(factor_dims):
        raise ConfigError("need one FourierConfig per axis")
    axes = [
        init_freq_mlp(
            input_dim=cfg.input_dim,
            hidden_dim=hidden_dim,
            depth=depth,
            out_dim=factor_dims[i],
            fourier=cfg,
            seed=seed + i,
            omega0_first=omega0_first,
            omega0_rest=omega0_rest,
            hidden_activation=hidden_activation,
        )
        for i, cfg in enumerate(fourier_configs)
    ]
    return FactorizedInr(axes=axes, core=superdiagonal_core(factor_dims, out_channels))


def reset_eval_counts(model: FactorizedInr) -> None:
    for mlp in model.axes:
        mlp.eval_count = 0


def iter_params(model: FactorizedInr) -> list[tuple[str, np.ndarray]]:
    """(name, array) pairs in declaration order: per axis the input layer,
    hidden layers, head; then the core. Arrays are live references.

    Fourier bases are frozen and not listed. Serialization, Adam state,
    and gradient checks all rely on this order.
    """
    out: list[tuple[str, np.ndarray]] = []
    for i, mlp in enumerate(model.axes):
        out.append((f"axis{i}.input_weight", mlp.input_weight))
        out.append((f"axis{i}.input_bias", mlp.input_bias))
        for l, layer in enumerate(mlp.hidden):
            out.append((f"axis{i}.hidden{l}.weight", layer.weight))
            out.append((f"axis{i}.hidden{l}.bias", layer.bias))
        out.append((f"axis{i}.head_weight", mlp.head_weight))
        out.append((f"axis{i}.head_bias", mlp.head_bias))
    out.append(("core", model.core))
    return out


def forward_factorized(model: FactorizedInr, coord) -> np.ndarray:
    """Predict at one coordinate tuple; returns a vector of out_channels.

    Each tuple element is a scalar for index axes or a vector for embedding
    axes.
    """
    if len(coord) != model.c_in:
        raise ConfigError(f"expected {model.c_in} coordinates, got {len(coord)}")
    result = model.core
    for mlp, c in zip(model.axes, coord):
        u = forward_mlp(mlp, np.atleast_1d(np.asarray(c, dtype=np.float64)).reshape(1, -1))[0]
        result = np.tensordot(u, result, axes=([0], [0]))
    return np.atleast_1d(result)


def forward_grid(model: FactorizedInr, axis_coords: list[np.ndarray]) -> GridField:
    """Evaluate on the tensor-product grid of per-axis coordinate lists.

    Axis network i runs once per point of list i (sum of grid sizes, not
    their product); the outputs are then contracted with the core through
    successive mode products.
    """
    if len(axis_coords) != model.c_in:
        raise ConfigError(f"expected {model.c_in} coordinate lists")
    stacked = []
    for mlp, coords in zip(model.axes, axis_coords):
        c = np.asarray(coords, dtype=np.float64)
        if c.size == 0:
            raise ConfigError("empty coordinate list")
        if c.ndim == 1:
            c = c.reshape(-1, 1) if mlp.input_dim == 1 else c.reshape(1, -1)
        stacked.append(forward_mlp(mlp, c))
    values = model.core
    for i, u in enumerate(stacked):
        values = mode_n_product(values, u, mode=i)
    return GridField(values=values)


# ---------------------------------------------------------------------------
# Sine layer expansion
# ---------------------------------------------------------------------------


@dataclass
class ExpandedSineLayer:
    """Equivalent two-stage form of a sine layer: a fixed cos/sin feature
    stack followed by a linear mix.

    Stage one stacks the layer weights twice with phases [pi/2, 0] per
    block, turning the activations into [cos(omega W v); sin(omega W v)];
    stage two mixes them back with diag(sin b) and diag(cos b).
    """

    feature_weight: np.ndarray
    feature_phase: np.ndarray
    omega0: float
    mix: np.ndarray

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        feats = np.sin(self.omega0 * (x @ self.feature_weight.T) + self.feature_phase)
        return feats @ self.mix.T


def expand_sine_layer(layer: SineLayer) -> ExpandedSineLayer:
    """Rewrite sin(omega (W x) + b) as a linear map over a phase-shifted
    feature stack; exact for any parameters."""
    m = layer.weight.shape[0]
    feature_weight = np.vstack([layer.weight, layer.weight])
    feature_phase = np.concatenate([np.full(m, np.pi / 2.0), np.zeros(m)])
    mix = np.concatenate(
        [np.diag(np.sin(layer.bias)), np.diag(np.cos(layer.bias))], axis=1
    )
    return ExpandedSineLayer(
        feature_weight=feature_weight,
        feature_phase=feature_phase,
        omega0=layer.omega0,
        mix=mix,
    )


# ---------------------------------------------------------------------------
# Smoothness bound
# ---------------------------------------------------------------------------


@dataclass
class LipschitzBudget:
    """Constants for the coordinate-wise smoothness bound.

    eta bounds the core (sum of absolute entries), xi the largest
    per-stage operator norm across all axis networks, stages the number of
    Lipschitz stages per axis. The certified bound for a single-axis
    perturbation is eta * xi**(n*stages) * delta**(n-1) * |e - e'|_1 with
    delta the largest homogeneous coordinate norm (|e|_1 + 1) in the
    sample.
    """

    eta: float
    xi: float
    stages: int
    n_axes: int

    def bound(self, delta: float, diff_norm: float) -> float:
        return (
            self.eta
            * self.xi ** (self.n_axes * self.stages)
            * delta ** (self.n_axes - 1)
            * diff_norm
        )


def _induced_l1(w: np.ndarray) -> float:
    """Max absolute column sum: the l1 -> l1 operator norm."""
    if w.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(w), axis=0)))


def _stage_constants(mlp: FreqMlp) -> list[float]:
    """Homogeneous l1 operator norms per stage of one axis network.

    Each affine stage x -> act(W x + b) satisfies both
    |act(Wx+b) - act(Wy+b)|_1 <= c |x-y|_1 and
    |act(Wx+b)|_1 + 1 <= c (|x|_1 + 1) with
    c = max(1, |W|_1, |b|_1 + 1), because sin and ReLU are 1-Lipschitz and
    dominated by identity. The Fourier stage gets
    c = max(1, 2*pi*|stacked bases|_1, encoding_dim + 1) since its outputs
    are bounded by 1.
    """
    consts = []
    cfg = mlp.fourier.config
    if cfg.num_maps > 0:
        stacked = np.vstack([b for b in mlp.fourier.bases for _ in range(2)])
        consts.append(max(1.0, 2.0 * np.pi * _induced_l1(stacked),
                          float(encoding_dim(cfg)) + 1.0))
    else:
        consts.append(1.0)

    def affine(w: np.ndarray, b: np.ndarray, omega: float = 1.0) -> float:
        return max(1.0, _induced_l1(omega * w), float(np.sum(np.abs(b))) + 1.0)

    consts.append(affine(mlp.input_weight, mlp.input_bias))
    for layer in mlp.hidden:
        omega = layer.omega0 if mlp.hidden_activation == "sine" else 1.0
        consts.append(affine(layer.weight, layer.bias, omega))
    consts.append(affine(mlp.head_weight, mlp.head_bias))
    return consts


def lipschitz_budget(model: FactorizedInr) -> LipschitzBudget:
    per_axis = [_stage_constants(mlp) for mlp in model.axes]
    return LipschitzBudget(
        eta=float(np.sum(np.abs(model.core))),
        xi=max(max(c) for c in per_axis),
        stages=max(len(c) for c in per_axis),
        n_axes=model.c_in,
    )


@dataclass
class LipschitzCheck:
    budget: LipschitzBudget
    delta: float
    pairs: int
    violations: int
    max_ratio: float  # largest observed |difference| / bound


def lipschitz_check(model: FactorizedInr, base_coords: list[np.ndarray],
                    perturbed_coords: list[np.ndarray], axis_choice: np.ndarray
                    ) -> LipschitzCheck:
    """Verify the smoothness bound on explicit coordinate pairs.

    Pair p perturbs only axis axis_choice[p]: the model is evaluated at the
    base tuple and at the tuple with that single coordinate replaced, and
    the output difference is compared against the certified bound.
    """
    budget = lipschitz_budget(model)
    n_pairs = len(axis_choice)
    delta = 1.0
    for i in range(model.c_in):
        delta = max(delta, float(np.max(np.sum(np.abs(base_coords[i]), axis=1))) + 1.0)
        delta = max(delta, float(np.max(np.sum(np.abs(perturbed_coords[i]), axis=1))) + 1.0)
    violations = 0
    max_ratio = 0.0
    for p in range(n_pairs):
        axis = int(axis_choice[p])
        base = [base_coords[i][p] for i in range(model.c_in)]
        moved = list(base)
        moved[axis] = perturbed_coords[axis][p]
        diff_norm = float(np.sum(np.abs(base[axis] - moved[axis])))
        lhs = float(np.sum(np.abs(
            forward_factorized(model, tuple(base)) - forward_factorized(model, tuple(moved))
        )))
        rhs = budget.bound(delta, diff_norm)
        ratio = lhs / rhs if rhs > 0.0 else (0.0 if lhs == 0.0 else np.inf)
        max_ratio = max(max_ratio, ratio)
        if lhs > rhs * (1.0 + 1e-12):
            violations += 1
    return LipschitzCheck(
        budget=budget,
        delta=delta,
        pairs=n_pairs,
        violations=violations,
        max_ratio=max_ratio,
    )
