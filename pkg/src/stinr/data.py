"""Field ingestion, observation sampling, normalization, metrics, and the
synthetic generators used for desk-scale experiments.

CSV conventions: 2-D fields are dense matrices (rows = space index,
columns = time index, empty cell = unobserved); N-D fields use a long
format `i1,...,ic,value[,observed]`. Floats are serialized with 17
significant digits so save/load roundtrips are exact.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, ConvergenceError, DataError
from .rng import Rng


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class GridField:
    """Dense axis-aligned field with an optional observation mask."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise DataError(
                    f"mask shape {self.mask.shape} does not match values "
                    f"shape {self.values.shape}"
                )
        observed = self.values if self.mask is None else self.values[self.mask]
        if observed.size and not np.all(np.isfinite(observed)):
            raise DataError("observed values must be finite")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def observed_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.mask


@dataclass
class ObservationSet:
    """Sparse training pairs: stacked per-axis coordinates and target values.

    coords has one column block per axis; axis_dims gives the block widths
    (all 1 for plain index grids, k for a spectral-embedding axis).
    """

    coords: np.ndarray
    values: np.ndarray
    axis_dims: tuple[int, ...]

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        if self.coords.shape[0] != self.values.shape[0]:
            raise DataError("coords and values must have equal length")
        if self.coords.shape[1] != sum(self.axis_dims):
            raise DataError(
                f"coords width {self.coords.shape[1]} does not match "
                f"axis_dims {self.axis_dims}"
            )

    def __len__(self) -> int:
        return self.coords.shape[0]

    def axis_columns(self, i: int) -> np.ndarray:
        start = sum(self.axis_dims[:i])
        return self.coords[:, start : start + self.axis_dims[i]]


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def save_grid_csv(field: GridField, path, layout: str = "matrix") -> None:
    if layout == "matrix":
        if field.values.ndim != 2:
            raise DataError("matrix layout requires a 2-D field")
        mask = field.observed_mask()
        with open(path, "w") as fh:
            for i in range(field.values.shape[0]):
                cells = [
                    _fmt(field.values[i, j]) if mask[i, j] else ""
                    for j in range(field.values.shape[1])
                ]
                fh.write(",".join(cells) + "\n")
    elif layout == "long":
        mask = field.observed_mask()
        with open(path, "w") as fh:
            for idx in np.ndindex(*field.values.shape):
                if mask[idx]:
                    cols = [str(k) for k in idx] + [_fmt(field.values[idx])]
                    fh.write(",".join(cols) + "\n")
    else:
        raise ConfigError(f"unknown layout {layout!r}")


def load_grid_csv(path, layout: str = "matrix", ndim: int = 2,
                  shape: tuple[int, ...] | None = None) -> GridField:
    """Load a field from CSV.

    For the long layout the number of index columns must be given via ndim;
    the grid shape is inferred from the maximum index unless passed
    explicitly. Duplicate coordinates are rejected with their line number.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows = [line for line in lines if line.strip() != ""]
    if not rows:
        raise DataError(f"{path}: file is empty")

    if layout == "matrix":
        ncols = len(rows[0].split(","))
        values = np.zeros((len(rows), ncols))
        mask = np.zeros((len(rows), ncols), dtype=bool)
        for i, line in enumerate(rows):
            cells = line.split(",")
            if len(cells) != ncols:
                raise DataError(f"{path}: ragged row at line {i + 1}")
            for j, cell in enumerate(cells):
                cell = cell.strip()
                if cell == "":
                    continue
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at line {i + 1}"
                    ) from None
                mask[i, j] = True
        return GridField(values=values, mask=mask)

    if layout == "long":
        entries = []
        for lineno, line in enumerate(rows, start=1):
            cells = [c.strip() for c in line.split(",")]
            if len(cells) == ndim + 1:
                observed = True
            elif len(cells) == ndim + 2:
                observed = cells[-1] not in ("0", "false", "False")
                cells = cells[:-1]
            else:
                raise DataError(
                    f"{path}: expected {ndim + 1} or {ndim + 2} columns "
                    f"at line {lineno}, got {len(cells)}"
                )
            try:
                idx = tuple(int(c) for c in cells[:ndim])
                val = float(cells[ndim])
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell at line {lineno}"
                ) from None
            entries.append((lineno, idx, val, observed))
        if shape is None:
            shape = tuple(
                max(e[1][d] for e in entries) + 1 for d in range(ndim)
            )
        values = np.zeros(shape)
        mask = np.zeros(shape, dtype=bool)
        seen: dict[tuple[int, ...], int] = {}
        for lineno, idx, val, observed in entries:
            if any(i < 0 or i >= shape[d] for d, i in enumerate(idx)):
                raise DataError(f"{path}: index {idx} out of bounds at line {lineno}")
            if idx in seen:
                raise DataError(
                    f"{path}: duplicate coordinate {idx} at line {lineno} "
                    f"(first seen at line {seen[idx]})"
                )
            seen[idx] = lineno
            if observed:
                values[idx] = val
                mask[idx] = True
        return GridField(values=values, mask=mask)

    raise ConfigError(f"unknown layout {layout!r}")


# ---------------------------------------------------------------------------
# Observation sampling
# ---------------------------------------------------------------------------

MASK_MODES = ("pointwise", "column_drop", "row_drop")


def sample_mask(field: GridField, mode: str, rate: float, seed: int
                ) -> tuple[ObservationSet, ObservationSet]:
    """Split the observed cells of a field into train and heldout sets.

    pointwise: `rate` is the fraction of observed cells kept for training.
    column_drop: `rate` is the fraction of axis-0 slices hidden entirely
    (the missing-sensor protocol); row_drop does the same on axis 1.
    Counts are exact: round(rate * population). Deterministic given seed.
    """
    if mode not in MASK_MODES:
        raise ConfigError(f"unknown mask mode {mode!r}, expected one of {MASK_MODES}")
    if not 0.0 < rate < 1.0:
        raise ConfigError(f"rate must be in (0, 1), got {rate}")
    observed = field.observed_mask()
    ndim = field.values.ndim
    rng = Rng(seed)

    if mode == "pointwise":
        cells = np.argwhere(observed)
        n_obs = cells.shape[0]
        n_train = min(_round_half_up(rate * n_obs), n_obs)
        if n_train == 0:
            raise DataError("rate leaves zero training points")
        perm = rng.permutation(n_obs)
        train_cells = cells[perm[:n_train]]
        held_cells = cells[perm[n_train:]]
    else:
        axis = 0 if mode == "column_drop" else 1
        if ndim <= axis:
            raise DataError(f"{mode} requires at least {axis + 1} axes")
        n_slices = field.values.shape[axis]
        n_hidden = min(_round_half_up(rate * n_slices), n_slices)
        if n_hidden == 0:
            raise DataError("rate hides zero slices")
        if n_hidden == n_slices:
            raise DataError("rate leaves zero training points")
        hidden = np.zeros(n_slices, dtype=bool)
        hidden[rng.permutation(n_slices)[:n_hidden]] = True
        cells = np.argwhere(observed)
        in_hidden = hidden[cells[:, axis]]
        train_cells = cells[~in_hidden]
        held_cells = cells[in_hidden]
        if train_cells.shape[0] == 0:
            raise DataError("rate leaves zero training points")

    axis_dims = (1,) * ndim

    def build(cell_idx: np.ndarray) -> ObservationSet:
        if cell_idx.shape[0] == 0:
            return ObservationSet(
                coords=np.zeros((0, ndim)),
                values=np.zeros((0, 1)),
                axis_dims=axis_dims,
            )
        vals = field.values[tuple(cell_idx.T)]
        return ObservationSet(
            coords=cell_idx.astype(np.float64),
            values=vals,
            axis_dims=axis_dims,
        )

    return build(train_cells), build(held_cells)


def hidden_slices(train: ObservationSet, field: GridField, axis: int = 0) -> np.ndarray:
    """Indices along `axis` that carry no training observation."""
    present = np.zeros(field.values.shape[axis], dtype=bool)
    col = train.axis_columns(axis)[:, 0].astype(int)
    present[col] = True
    return np.nonzero(~present)[0]


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass
class Normalizer:
    """Per-axis affine coordinate maps onto [-1, 1] plus value standardization.

    normalized = (raw - offset) * scale per axis component;
    standardized = (value - mean) / std.
    """

    axis_offsets: tuple[np.ndarray, ...]
    axis_scales: tuple[np.ndarray, ...]
    value_mean: float
    value_std: float
    grid_sizes: tuple[int, ...] = dc_field(default=())

    def normalize_axis(self, i: int, raw: np.ndarray) -> np.ndarray:
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        return (raw - self.axis_offsets[i]) * self.axis_scales[i]

    def denormalize_axis(self, i: int, norm: np.ndarray) -> np.ndarray:
        norm = np.atleast_2d(np.asarray(norm, dtype=np.float64))
        return norm / self.axis_scales[i] + self.axis_offsets[i]

    def normalize_values(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=np.float64) - self.value_mean) / self.value_std

    def denormalize_values(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) * self.value_std + self.value_mean

    def normalize_observations(self, obs: ObservationSet) -> ObservationSet:
        blocks = [
            self.normalize_axis(i, obs.axis_columns(i))
            for i in range(len(obs.axis_dims))
        ]
        return ObservationSet(
            coords=np.concatenate(blocks, axis=1),
            values=self.normalize_values(obs.values),
            axis_dims=obs.axis_dims,
        )

    def coords_outside_domain(self, i: int, raw: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.any(np.abs(self.normalize_axis(i, raw)) > 1.0 + tol))


def _axis_transform(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    extent = hi - lo
    if np.any(extent <= 0.0):
        raise DataError("constant axis: cannot normalize a zero-extent coordinate")
    return (lo + hi) / 2.0, 2.0 / extent


def _value_stats(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    std = float(np.std(values))
    if std == 0.0:
        warnings.warn("zero-variance values: clamping std to 1", stacklevel=3)
        std = 1.0
    return mean, std


def fit_grid_normalizer(field: GridField) -> Normalizer:
    """Normalizer for an index grid: axis i spans {0..n_i - 1} -> [-1, 1],
    value statistics taken over the field's observed cells only."""
    offsets, scales = [], []
    for n in field.values.shape:
        if n < 2:
            raise DataError("constant axis: grid axes need at least 2 points")
        off, sc = _axis_transform(np.zeros(1), np.full(1, float(n - 1)))
        offsets.append(off)
        scales.append(sc)
    observed = field.values[field.observed_mask()]
    if observed.size == 0:
        raise DataError("cannot fit a normalizer with zero observed cells")
    mean, std = _value_stats(observed)
    return Normalizer(
        axis_offsets=tuple(offsets),
        axis_scales=tuple(scales),
        value_mean=mean,
        value_std=std,
        grid_sizes=tuple(field.values.shape),
    )


def fit_observation_normalizer(obs: ObservationSet) -> Normalizer:
    """Normalizer fitted on the coordinate extents and values of a sample."""
    offsets, scales = [], []
    for i in range(len(obs.axis_dims)):
        block = obs.axis_columns(i)
        off, sc = _axis_transform(block.min(axis=0), block.max(axis=0))
        offsets.append(off)
        scales.append(sc)
    mean, std = _value_stats(obs.values)
    return Normalizer(
        axis_offsets=tuple(offsets),
        axis_scales=tuple(scales),
        value_mean=mean,
        value_std=std,
    )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    wmape: float  # percent
    rmse: float
    mae: float
    count: int

    def as_dict(self) -> dict:
        return {
            "wmape_percent": self.wmape,
            "rmse": self.rmse,
            "mae": self.mae,
            "count": self.count,
        }

    def __str__(self) -> str:
        return (
            f"WMAPE {self.wmape:.2f}%  RMSE {self.rmse:.6g}  "
            f"MAE {self.mae:.6g}  ({self.count} points)"
        )


def metrics(pred, truth, eval_mask: np.ndarray) -> MetricsReport:
    """WMAPE / RMSE / MAE over the cells flagged in eval_mask.

    WMAPE is sum |y - yhat| / sum |y|, reported in percent. Inputs may be
    GridFields or plain arrays and must be in original (denormalized)
    units.
    """
    p = pred.values if isinstance(pred, GridField) else np.asarray(pred, dtype=np.float64)
    t = truth.values if isinstance(truth, GridField) else np.asarray(truth, dtype=np.float64)
    eval_mask = np.asarray(eval_mask, dtype=bool)
    if p.shape != t.shape or eval_mask.shape != t.shape:
        raise DataError(
            f"shape mismatch: pred {p.shape}, truth {t.shape}, mask {eval_mask.shape}"
        )
    if not eval_mask.any():
        raise DataError("evaluation mask is empty")
    err = p[eval_mask] - t[eval_mask]
    denom = float(np.sum(np.abs(t[eval_mask])))
    if denom == 0.0:
        raise DataError("WMAPE undefined: evaluation values sum to zero magnitude")
    return MetricsReport(
        wmape=100.0 * float(np.sum(np.abs(err))) / denom,
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        count=int(eval_mask.sum()),
    )


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


def synth_wave_field(nx: int, nt: int, *, free_speed: float = 60.0,
                     congested_speed: float = 20.0, band_width: float = 8.0,
                     wave_speed: float = -0.3, band_spacing: float | None = 24.0,
                     x0: float | None = None, noise_std: float = 0.0,
                     seed: int = 0) -> GridField:
    """Speed field with a reduced-speed band sweeping across the domain.

    The band edge is a hard step, so the field carries genuine
    high-frequency content. With band_spacing set, bands repeat
    periodically (stop-and-go stripes); with band_spacing=None a single
    band moves along x = x0 + wave_speed * t.
    """
    if nx < 8 or nt < 8:
        raise ConfigError("wave field needs nx >= 8 and nt >= 8")
    if band_width < 0:
        raise ConfigError("band_width must be nonnegative")
    if x0 is None:
        x0 = nx / 2.0
    x = np.arange(nx, dtype=np.float64)[:, None]
    t = np.arange(nt, dtype=np.float64)[None, :]
    values = np.full((nx, nt), float(free_speed))
    if band_width > 0:
        if band_spacing is None:
            inside = np.abs(x - (x0 + wave_speed * t)) < band_width / 2.0
        else:
            if band_spacing <= 0:
                raise ConfigError("band_spacing must be positive")
            offset = np.mod(x - wave_speed * t - x0, band_spacing)
            inside = offset < band_width
        values[inside] = float(congested_speed)
    if noise_std > 0:
        rng = Rng(seed)
        values = values + noise_std * rng.normal(nx * nt).reshape(nx, nt)
    return GridField(values=values)


def synth_low_rank(n: int, t: int, r: int, seed: int) -> GridField:
    """Exact rank-r matrix built from smooth random factors.

    Columns of each factor are random low-frequency Fourier series, and the
    factor product carries geometrically decaying weights, so the singular
    spectrum has r well-separated nonzero values and nothing else.
    """
    if not 1 <= r <= min(n, t):
        raise ConfigError(f"rank {r} out of range for a {n}x{t} matrix")
    rng = Rng(seed)

    def smooth_factor(m: int) -> np.ndarray:
        grid = np.arange(m, dtype=np.float64) / m
        cols = []
        for _ in range(r):
            col = np.full(m, rng.uniform_range(-1.0, 1.0, 1)[0])
            for f in range(1, 4):
                amp = rng.normal(1)[0]
                phase = rng.uniform_range(0.0, 2.0 * np.pi, 1)[0]
                col = col + amp * np.sin(2.0 * np.pi * f * grid + phase)
            cols.append(col)
        return np.column_stack(cols)

    weights = 1.5 ** -np.arange(r)
    for _ in range(100):
        u = smooth_factor(n)
        v = smooth_factor(t)
        values = (u * weights) @ v.T
        # guard against an accidentally ill-conditioned draw
        sv = np.linalg.svd(values, compute_uv=False)
        if sv[r - 1] > 1e-8 * sv[0]:
            return GridField(values=values)
    raise ConvergenceError("could not draw a well-conditioned low-rank matrix")


def synth_graph_signal(graph, nt: int, bandwidth: int, seed: int) -> GridField:
    """Graph-smooth signal: every time slice lies in the span of the first
    `bandwidth` eigenvectors of the symmetric normalized Laplacian, and the
    coefficients evolve as sinusoids in time."""
    from .graph import normalized_laplacian
    from .linalg import sym_eig

    n = graph.n
    if not 1 <= bandwidth <= n:
        raise ConfigError(f"bandwidth {bandwidth} out of range for {n} nodes")
    if nt < 1:
        raise ConfigError("nt must be positive")
    eig = sym_eig(normalized_laplacian(graph))
    basis = eig.eigenvectors[:, :bandwidth]
    rng = Rng(seed)
    tgrid = np.arange(nt, dtype=np.float64) / nt
    coeff = np.zeros((bandwidth, nt))
    for k in range(bandwidth):
        level = 2.0 * bandwidth if k == 0 else 0.0
        amp = rng.uniform_range(0.5, 2.0, 1)[0]
        cycles = 1 + int(rng.uniform(1)[0] * 4.0)
        phase = rng.uniform_range(0.0, 2.0 * np.pi, 1)[0]
        coeff[k] = level + amp * np.sin(2.0 * np.pi * cycles * tgrid + phase)
    return GridField(values=basis @ coeff)
