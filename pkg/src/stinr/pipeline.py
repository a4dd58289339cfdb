"""End-to-end command pipelines shared by the CLI: config validation,
grid training, kriging on graphs, inference, and upsampling.

All randomness flows from exactly two seeds: seeds.model initializes
parameters and Fourier bases, seeds.data drives masking and batch order.
"""

from __future__ import annotations

import copy
import warnings

import numpy as np

from .data import (
    GridField,
    Normalizer,
    ObservationSet,
    _axis_transform,
    _value_stats,
    fit_grid_normalizer,
    metrics,
    sample_mask,
)
from .errors import ConfigError, DataError
from .features import DEFAULT_SCALES, FourierConfig
from .graph import GraphSpec, connected_components, spectral_embedding
from .model import FactorizedInr, forward_grid, init_factorized_inr
from .modelio import ModelBundle
from .train import LossCurve, TrainConfig, predict_batch, train

# One derived Fourier seed per axis, split off the model seed.
_FOURIER_SEED_STRIDE = 7919


def default_run_config() -> dict:
    return {
        "data": {"path": None, "layout": "matrix", "ndim": 2},
        "mask": {"mode": "pointwise", "rate": 0.15},
        "model": {
            "hidden_dim": 64,
            "depth": 2,
            "factor_dims": None,  # None -> full-dimensional: min grid size per axis
            "out_channels": None,
            "omega_first": 30.0,
            "omega_rest": 1.0,
            "activation": "sine",
            "fourier": {
                "num_maps": len(DEFAULT_SCALES),
                "scales": list(DEFAULT_SCALES),
                "rows_per_map": 4,
            },
        },
        "train": {
            "learning_rate": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 0.0,
            "batch_size": 1024,
            "total_steps": 2000,
            "log_every": 10,
        },
        "seeds": {"model": 0, "data": 0},
        "output_dir": "out",
        "figures": True,
    }


def default_krige_config() -> dict:
    cfg = default_run_config()
    cfg["graph"] = {
        "adjacency": None,
        "format": "edges",
        "ring_nodes": None,  # generate a ring instead of reading a file
        "embedding_k": 16,
    }
    cfg["hidden"] = {"rate": 0.6, "nodes": None}
    cfg["mask"] = {"mode": "column_drop", "rate": 0.6}
    return cfg


def merge_config(defaults: dict, override: dict, path: str = "") -> dict:
    """Deep-merge a user config over the defaults, rejecting unknown keys."""
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where} must be a mapping")
            out[key] = merge_config(defaults[key], value, where)
        else:
            out[key] = value
    return out


def set_dotted(cfg: dict, dotted: str, value) -> None:
    """Apply one `a.b.c=value` override in place; the leaf must exist."""
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config path: {dotted}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"unknown config path: {dotted}")
    node[keys[-1]] = value


def fourier_config_for_axis(model_cfg: dict, input_dim: int, model_seed: int,
                            axis: int) -> FourierConfig:
    f = model_cfg["fourier"]
    num_maps = int(f["num_maps"])
    scales = tuple(float(s) for s in f["scales"])[:num_maps]
    if len(scales) != num_maps:
        raise ConfigError(
            f"fourier.scales has {len(f['scales'])} entries but num_maps is {num_maps}"
        )
    return FourierConfig(
        num_maps=num_maps,
        scales=scales,
        rows_per_map=int(f["rows_per_map"]),
        input_dim=input_dim,
        seed=int(model_seed) + _FOURIER_SEED_STRIDE * (axis + 1),
    )


def build_model(model_cfg: dict, axis_input_dims: tuple[int, ...],
                grid_shape: tuple[int, ...], model_seed: int) -> FactorizedInr:
    if model_cfg["factor_dims"] is None:
        factor_dims = (min(grid_shape),) * len(axis_input_dims)
    else:
        factor_dims = tuple(int(d) for d in model_cfg["factor_dims"])
        if len(factor_dims) != len(axis_input_dims):
            raise ConfigError("factor_dims must list one size per axis")
    configs = [
        fourier_config_for_axis(model_cfg, dim, model_seed, i)
        for i, dim in enumerate(axis_input_dims)
    ]
    out_channels = model_cfg["out_channels"]
    return init_factorized_inr(
        factor_dims=factor_dims,
        hidden_dim=int(model_cfg["hidden_dim"]),
        depth=int(model_cfg["depth"]),
        fourier_configs=configs,
        seed=int(model_seed),
        out_channels=None if out_channels is None else int(out_channels),
        omega0_first=float(model_cfg["omega_first"]),
        omega0_rest=float(model_cfg["omega_rest"]),
        hidden_activation=str(model_cfg["activation"]),
    )


def train_config_from(cfg: dict, data_seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=float(t["learning_rate"]),
        beta1=float(t["beta1"]),
        beta2=float(t["beta2"]),
        eps=float(t["eps"]),
        weight_decay=float(t["weight_decay"]),
        batch_size=int(t["batch_size"]),
        total_steps=int(t["total_steps"]),
        seed=int(data_seed),
        log_every=int(t["log_every"]),
    )


def obs_to_mask(obs: ObservationSet, shape: tuple[int, ...]) -> np.ndarray:
    """Boolean mask with True at the integer cells an observation set names."""
    mask = np.zeros(shape, dtype=bool)
    if len(obs):
        idx = tuple(obs.coords[:, i].astype(int) for i in range(len(shape)))
        mask[idx] = True
    return mask


def normalized_grid_axes(norm: Normalizer, shape: tuple[int, ...]) -> list[np.ndarray]:
    return [
        norm.normalize_axis(i, np.arange(n, dtype=np.float64).reshape(-1, 1))
        for i, n in enumerate(shape)
    ]


def reconstruct_grid(model: FactorizedInr, norm: Normalizer,
                     shape: tuple[int, ...]) -> GridField:
    """Dense prediction over the full index grid, in original units."""
    axes = normalized_grid_axes(norm, shape)
    pred = forward_grid(model, axes)
    return GridField(values=norm.denormalize_values(pred.values))


class GridTrainResult:
    def __init__(self, bundle: ModelBundle, curve: LossCurve,
                 prediction: GridField, report, train_obs, held_obs):
        self.bundle = bundle
        self.curve = curve
        self.prediction = prediction
        self.report = report
        self.train_obs = train_obs
        self.held_obs = held_obs


def run_grid_training(field: GridField, cfg: dict) -> GridTrainResult:
    """Mask, normalize, train, reconstruct, and score a grid field."""
    mask_cfg = cfg["mask"]
    data_seed = int(cfg["seeds"]["data"])
    model_seed = int(cfg["seeds"]["model"])
    train_obs, held_obs = sample_mask(
        field, str(mask_cfg["mode"]), float(mask_cfg["rate"]), data_seed
    )
    train_view = GridField(values=field.values,
                           mask=obs_to_mask(train_obs, field.shape))
    norm = fit_grid_normalizer(train_view)
    model = build_model(cfg["model"], (1,) * field.values.ndim, field.shape, model_seed)
    model, curve = train(
        model, norm.normalize_observations(train_obs), train_config_from(cfg, data_seed)
    )
    prediction = reconstruct_grid(model, norm, field.shape)
    report = None
    if len(held_obs):
        report = metrics(prediction, field, obs_to_mask(held_obs, field.shape))
    bundle = ModelBundle(kind="grid", model=model, normalizer=norm)
    return GridTrainResult(bundle, curve, prediction, report, train_obs, held_obs)


class KrigeResult:
    def __init__(self, bundle: ModelBundle, curve: LossCurve, prediction: GridField,
                 report, hidden_nodes: np.ndarray, baseline_report):
        self.bundle = bundle
        self.curve = curve
        self.prediction = prediction
        self.report = report
        self.hidden_nodes = hidden_nodes
        self.baseline_report = baseline_report


def column_mean_impute(values: np.ndarray, observed_nodes: np.ndarray) -> np.ndarray:
    """Per-time mean over the observed nodes, broadcast to every node."""
    col_mean = values[observed_nodes].mean(axis=0)
    return np.broadcast_to(col_mean, values.shape).copy()


def run_krige(graph: GraphSpec, signals: GridField, cfg: dict) -> KrigeResult:
    """Missing-sensor estimation: train a vertex-time model on the spectral
    embedding of the observed nodes and score the hidden ones.

    The embedding axis consumes the per-node Laplacian coordinates, the
    time axis the normalized step index. Also scores a column-mean
    imputation baseline on the same hidden set.
    """
    if signals.values.ndim != 2:
        raise DataError("kriging expects a nodes x time signal matrix")
    n, nt = signals.values.shape
    if n != graph.n:
        raise DataError(
            f"adjacency covers {graph.n} nodes but signals have {n} rows"
        )
    data_seed = int(cfg["seeds"]["data"])
    model_seed = int(cfg["seeds"]["model"])
    hidden_cfg = cfg["hidden"]
    if hidden_cfg["nodes"] is not None:
        hidden_nodes = np.unique(np.asarray(hidden_cfg["nodes"], dtype=int))
        if hidden_nodes.size == 0 or hidden_nodes.size >= n:
            raise ConfigError("hidden node list must name some, not all, nodes")
        if hidden_nodes.min() < 0 or hidden_nodes.max() >= n:
            raise ConfigError("hidden node id out of range")
    else:
        rate = float(hidden_cfg["rate"])
        if not 0.0 < rate < 1.0:
            raise ConfigError("hidden.rate must be in (0, 1): kriging needs both "
                              "observed and hidden nodes")
        train_tmp, _ = sample_mask(signals, "column_drop", rate, data_seed)
        observed = np.unique(train_tmp.axis_columns(0)[:, 0].astype(int))
        hidden_nodes = np.setdiff1d(np.arange(n), observed)
    observed_nodes = np.setdiff1d(np.arange(n), hidden_nodes)

    labels = connected_components(graph)
    observed_comps = set(labels[observed_nodes].tolist())
    stranded = [int(v) for v in hidden_nodes if labels[v] not in observed_comps]
    if stranded:
        warnings.warn(
            f"{len(stranded)} hidden nodes are disconnected from every observed "
            f"node (e.g. node {stranded[0]}); their predictions are extrapolations",
            stacklevel=2,
        )

    emb = spectral_embedding(graph, int(cfg["graph"]["embedding_k"]))

    # coordinate normalization: embedding extents over all nodes (graph only,
    # no signal leakage), time over the index range, values over training cells
    emb_off, emb_scale = _axis_transform(emb.coords.min(axis=0), emb.coords.max(axis=0))
    t_off, t_scale = _axis_transform(np.zeros(1), np.full(1, float(nt - 1)))
    train_values = signals.values[observed_nodes][
        signals.observed_mask()[observed_nodes]
    ]
    if train_values.size == 0:
        raise DataError("no observed training values")
    mean, std = _value_stats(train_values)
    norm = Normalizer(
        axis_offsets=(emb_off, t_off),
        axis_scales=(emb_scale, t_scale),
        value_mean=mean,
        value_std=std,
        grid_sizes=(n, nt),
    )

    cell_mask = signals.observed_mask().copy()
    cell_mask[hidden_nodes, :] = False
    cells = np.argwhere(cell_mask)
    coords = np.column_stack([
        emb.coords[cells[:, 0]],
        cells[:, 1].astype(np.float64).reshape(-1, 1),
    ])
    train_obs = ObservationSet(
        coords=coords,
        values=signals.values[cell_mask],
        axis_dims=(emb.k, 1),
    )

    model = build_model(cfg["model"], (emb.k, 1), (n, nt), model_seed)
    model, curve = train(
        model, norm.normalize_observations(train_obs), train_config_from(cfg, data_seed)
    )

    axis_coords = [
        norm.normalize_axis(0, emb.coords),
        norm.normalize_axis(1, np.arange(nt, dtype=np.float64).reshape(-1, 1)),
    ]
    pred = forward_grid(model, axis_coords)
    prediction = GridField(values=norm.denormalize_values(pred.values))

    eval_mask = signals.observed_mask().copy()
    keep = np.zeros(n, dtype=bool)
    keep[hidden_nodes] = True
    eval_mask &= keep[:, None]
    report = metrics(prediction, signals, eval_mask)
    baseline = column_mean_impute(signals.values, observed_nodes)
    baseline_report = metrics(baseline, signals, eval_mask)

    bundle = ModelBundle(kind="graph", model=model, normalizer=norm,
                         embedding=emb.coords)
    return KrigeResult(bundle, curve, prediction, report, hidden_nodes,
                       baseline_report)


def infer_points(bundle: ModelBundle, raw_coords: np.ndarray,
                 warn_outside: bool = True) -> np.ndarray:
    """Evaluate a trained bundle at raw coordinates, returning original units.

    Grid models take one column per axis. Graph models take a node id
    column (looked up in the stored embedding) followed by the time
    column. Coordinates outside the trained domain warn but still
    evaluate.
    """
    raw = np.atleast_2d(np.asarray(raw_coords, dtype=np.float64))
    model = bundle.model
    norm = bundle.normalizer
    if bundle.kind == "graph":
        if raw.shape[1] != 2:
            raise DataError("graph queries need `node,t` rows")
        node_ids = raw[:, 0].astype(int)
        if node_ids.min(initial=0) < 0 or node_ids.max(initial=-1) >= bundle.embedding.shape[0]:
            raise DataError("node id outside the stored embedding")
        blocks = [bundle.embedding[node_ids], raw[:, 1].reshape(-1, 1)]
    else:
        if raw.shape[1] != model.c_in:
            raise DataError(f"expected {model.c_in} coordinate columns, got {raw.shape[1]}")
        blocks = [raw[:, i].reshape(-1, 1) for i in range(model.c_in)]
    normed = []
    for i, block in enumerate(blocks):
        if warn_outside and norm.coords_outside_domain(i, block):
            warnings.warn(
                f"axis {i} queries fall outside the trained coordinate range; "
                "evaluating anyway",
                stacklevel=2,
            )
        normed.append(norm.normalize_axis(i, block))
    preds = predict_batch(model, np.concatenate(normed, axis=1))
    return norm.denormalize_values(preds)


def upsample_grid(bundle: ModelBundle, factor: int) -> GridField:
    """Evaluate a grid model on a factor-times finer index lattice.

    New axis coordinates are j / factor, so every original index appears
    exactly and each axis size scales by the factor.
    """
    if factor < 1:
        raise ConfigError("upsample factor must be at least 1")
    if bundle.kind != "grid":
        raise ConfigError("upsampling applies to grid models")
    sizes = bundle.normalizer.grid_sizes
    if not sizes:
        raise DataError("model bundle does not record its training grid sizes")
    axis_coords = []
    for i, nsize in enumerate(sizes):
        raw = np.arange(factor * nsize, dtype=np.float64).reshape(-1, 1) / factor
        axis_coords.append(bundle.normalizer.normalize_axis(i, raw))
    pred = forward_grid(bundle.model, axis_coords)
    return GridField(values=bundle.normalizer.denormalize_values(pred.values))
