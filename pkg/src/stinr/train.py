"""Exact reverse-mode gradients for the factorized model, Adam with
decoupled weight decay, the minibatch training loop, and a finite
difference gradient check.

The batched pass deduplicates per-axis coordinates, so a full grid batch
costs one axis-network evaluation per distinct axis point. Gradient
accumulation uses a fixed segment order, keeping runs bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .data import ObservationSet
from .errors import ConfigError, DataError, TrainingDiverged
from .model import FactorizedInr, backward_mlp, forward_mlp_cached, iter_params
from .rng import Rng

DIVERGENCE_FACTOR = 1e6


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0  # decoupled, applied to MLP weight matrices only
    batch_size: int = 1024
    total_steps: int = 2000
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be nonnegative")
        if self.log_every < 1:
            raise ConfigError("log_every must be at least 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


@dataclass
class LossCurve:
    steps: list[int] = dc_field(default_factory=list)
    losses: list[float] = dc_field(default_factory=list)

    def record(self, step: int, loss: float):
        self.steps.append(step)
        self.losses.append(loss)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("step,loss\n")
            for s, l in zip(self.steps, self.losses):
                fh.write(f"{s},{l:.17g}\n")


def mse_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean over the batch of squared l2 residual norms."""
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise DataError(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.size == 0:
        raise DataError("empty batch")
    if p.ndim == 1:
        p = p.reshape(-1, 1)
        t = t.reshape(-1, 1)
    return float(np.mean(np.sum((p - t) ** 2, axis=1)))


def _split_axes(model: FactorizedInr, coords: np.ndarray) -> list[np.ndarray]:
    dims = model.axis_input_dims
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if coords.shape[1] != sum(dims):
        raise DataError(
            f"coordinate width {coords.shape[1]} does not match axis dims {dims}"
        )
    blocks = []
    start = 0
    for d in dims:
        blocks.append(coords[:, start : start + d])
        start += d
    return blocks


def _segment_sum(values: np.ndarray, inverse: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum rows of values by segment id; every segment is nonempty
    (np.unique inverses guarantee this)."""
    order = np.argsort(inverse, kind="stable")
    sorted_vals = values[order]
    boundaries = np.searchsorted(inverse[order], np.arange(n_segments))
    return np.add.reduceat(sorted_vals, boundaries, axis=0)


def _batched_forward(model: FactorizedInr, coords: np.ndarray, with_cache: bool):
    """Shared forward machinery for predict/backward.

    Deduplicates each axis block, runs the axis networks on unique rows,
    then contracts sample by sample against the core.
    """
    blocks = _split_axes(model, coords)
    b = blocks[0].shape[0]
    uniq, inv, outs, caches = [], [], [], []
    for mlp, block in zip(model.axes, blocks):
        u, i = np.unique(block, axis=0, return_inverse=True)
        out, cache = forward_mlp_cached(mlp, u)
        uniq.append(u)
        inv.append(i.reshape(-1))
        outs.append(out)
        caches.append(cache if with_cache else None)

    # stage 0: contract the core with the unique axis-0 outputs, then gather
    s0 = np.tensordot(outs[0], model.core, axes=([1], [0]))
    stages = [s0[inv[0]]]  # per-sample partial contractions
    gathered = [None]
    for i in range(1, model.c_in):
        a = outs[i][inv[i]]
        prev = stages[-1]
        rest = prev.reshape(b, a.shape[1], -1)
        nxt = np.einsum("bk,bkr->br", a, rest)
        new_shape = (b,) + prev.shape[2:]
        stages.append(nxt.reshape(new_shape))
        gathered.append(a)
    preds = stages[-1].reshape(b, -1)  # (b, out_channels)
    state = {
        "blocks": blocks,
        "uniq": uniq,
        "inv": inv,
        "outs": outs,
        "caches": caches,
        "stages": stages,
        "gathered": gathered,
        "batch": b,
    }
    return preds, state


def predict_batch(model: FactorizedInr, coords: np.ndarray) -> np.ndarray:
    """Model predictions for stacked coordinates, (b, sum dims) -> (b, c_out)."""
    preds, _ = _batched_forward(model, coords, with_cache=False)
    return preds


def backward(model: FactorizedInr, coords: np.ndarray, targets: np.ndarray
             ) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for one batch.

    Returns the mean squared residual loss and one gradient array per
    trainable parameter (keys match iter_params). Raises on empty batches
    and on non-finite gradients.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    if targets.shape[0] == 0:
        raise DataError("empty batch")
    preds, st = _batched_forward(model, coords, with_cache=True)
    if preds.shape != targets.shape:
        raise DataError(f"target shape {targets.shape} != prediction {preds.shape}")
    b = st["batch"]
    residual = preds - targets
    loss = float(np.mean(np.sum(residual**2, axis=1)))

    grads: dict[str, np.ndarray] = {}
    d_stage = (2.0 / b) * residual  # gradient w.r.t. the final stage, (b, c_out)
    for i in range(model.c_in - 1, 0, -1):
        prev = st["stages"][i - 1]  # (b, d_i, rest...)
        a = st["gathered"][i]  # (b, d_i)
        prev3 = prev.reshape(b, a.shape[1], -1)
        d_flat = d_stage.reshape(b, -1)
        d_axis = np.einsum("bkr,br->bk", prev3, d_flat)
        d_prev = np.einsum("br,bk->bkr", d_flat, a).reshape(prev.shape)
        d_unique = _segment_sum(d_axis, st["inv"][i], st["outs"][i].shape[0])
        for key, g in backward_mlp(model.axes[i], st["caches"][i], d_unique).items():
            grads[f"axis{i}.{key}"] = g
        d_stage = d_prev

    # stage 0: d_stage is the gradient w.r.t. s0 gathered per sample
    n_u0 = st["outs"][0].shape[0]
    d_s0 = _segment_sum(d_stage.reshape(b, -1), st["inv"][0], n_u0)
    core_flat = model.core.reshape(model.core.shape[0], -1)
    d_axis0 = d_s0 @ core_flat.T
    grads["core"] = (st["outs"][0].T @ d_s0).reshape(model.core.shape)
    for key, g in backward_mlp(model.axes[0], st["caches"][0], d_axis0).items():
        grads[f"axis0.{key}"] = g

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {name}")
    return loss, grads


def init_adam_state(model: FactorizedInr) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(arr) for name, arr in iter_params(model)},
        v={name: np.zeros_like(arr) for name, arr in iter_params(model)},
    )


def _decayed(name: str) -> bool:
    # MLP weight matrices only: not biases, not the core, never Fourier bases
    return name.endswith("weight") and name != "core"


def adam_step(model: FactorizedInr, grads: dict[str, np.ndarray],
              state: AdamState, cfg: TrainConfig) -> tuple[FactorizedInr, AdamState]:
    """Bias-corrected Adam update in place, then decoupled weight decay
    w <- w * (1 - lr * weight_decay) on the MLP weight matrices."""
    state.t += 1
    b1t = 1.0 - cfg.beta1**state.t
    b2t = 1.0 - cfg.beta2**state.t
    for name, arr in iter_params(model):
        g = grads[name]
        if g.shape != arr.shape:
            raise ConfigError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        arr -= cfg.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + cfg.eps)
        if cfg.weight_decay != 0.0 and _decayed(name):
            arr *= 1.0 - cfg.learning_rate * cfg.weight_decay
    return model, state


def train(model: FactorizedInr, observations: ObservationSet, cfg: TrainConfig
          ) -> tuple[FactorizedInr, LossCurve]:
    """Run the minibatch loop: sample a batch, forward, backward, Adam.

    Batches are permutation-without-replacement epochs reshuffled from the
    data seed. The logged loss at step k is the batch loss before update k.
    Aborts with TrainingDiverged when the loss goes non-finite or exceeds
    1e6 times its initial value.
    """
    if len(observations) == 0:
        raise DataError("no training observations")
    if tuple(observations.axis_dims) != model.axis_input_dims:
        raise ConfigError(
            f"observation axis dims {observations.axis_dims} do not match "
            f"model {model.axis_input_dims}"
        )
    m = len(observations)
    rng = Rng(cfg.seed)
    curve = LossCurve()
    state = init_adam_state(model)
    order = None
    pos = m
    initial_loss = None
    for step in range(1, cfg.total_steps + 1):
        if pos >= m:
            order = rng.permutation(m)
            pos = 0
        idx = order[pos : pos + cfg.batch_size]
        pos += len(idx)
        loss, grads = backward(model, observations.coords[idx], observations.values[idx])
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        if initial_loss is None:
            initial_loss = max(loss, 1e-300)
        elif loss > DIVERGENCE_FACTOR * initial_loss:
            raise TrainingDiverged(
                f"loss {loss:.3e} exceeded {DIVERGENCE_FACTOR:.0e} x initial "
                f"{initial_loss:.3e} at step {step}"
            )
        if step % cfg.log_every == 0 or step == cfg.total_steps:
            curve.record(step, loss)
        adam_step(model, grads, state, cfg)
    return model, curve


def grad_check(model: FactorizedInr, coords: np.ndarray, targets: np.ndarray,
               epsilon: float = 1e-5) -> float:
    """Largest relative error of backward against central finite differences.

    Relative error per entry is |analytic - numeric| / max(1, |analytic|,
    |numeric|). epsilon must lie in [1e-7, 1e-3].
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ConfigError("epsilon out of the supported range [1e-7, 1e-3]")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    _, grads = backward(model, coords, targets)

    def loss_only() -> float:
        preds = predict_batch(model, coords)
        return float(np.mean(np.sum((preds - targets) ** 2, axis=1)))

    worst = 0.0
    for name, arr in iter_params(model):
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = loss_only()
            flat[j] = orig - epsilon
            down = loss_only()
            flat[j] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(1.0, abs(gflat[j]), abs(numeric))
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst
