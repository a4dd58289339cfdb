"""Binary model files: magic "STINR\\x01", little-endian header, then the
parameter arrays in declaration order as raw 64-bit floats.

The header carries the model kind, per-axis architecture (dims, depth,
omega values, Fourier config including seed and scales), the normalizer
state, and the core shape. Fourier bases are regenerated from their seed
on load, so roundtrips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Normalizer
from .errors import FormatError
from .features import FourierConfig, sample_fourier_map
from .model import FactorizedInr, FreqMlp, SineLayer, iter_params

MAGIC = b"STINR\x01"
FORMAT_VERSION = 1

_KINDS = {"grid": 0, "graph": 1}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}
_ACTS = {"sine": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACTS.items()}


@dataclass
class ModelBundle:
    """Everything needed to evaluate a trained model in raw units."""

    kind: str
    model: FactorizedInr
    normalizer: Normalizer
    embedding: np.ndarray | None = None
    version: int = FORMAT_VERSION


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def u8(self, v: int):
        self.chunks.append(struct.pack("<B", v))

    def i64(self, v: int):
        self.chunks.append(struct.pack("<q", int(v)))

    def f64(self, v: float):
        self.chunks.append(struct.pack("<d", float(v)))

    def array(self, a: np.ndarray):
        if not np.all(np.isfinite(a)):
            raise FormatError("refusing to serialize non-finite parameters")
        self.chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated model file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(8 * count)
        a = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(a)):
            raise FormatError("model file contains non-finite parameters")
        return a

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(
                f"trailing bytes in model file ({len(self.data) - self.pos} extra)"
            )


def _write_axis_header(w: _Writer, mlp: FreqMlp):
    cfg = mlp.fourier.config
    w.i64(mlp.input_dim)
    w.i64(mlp.input_weight.shape[0])
    w.i64(mlp.depth)
    w.i64(mlp.out_dim)
    w.u8(_ACTS[mlp.hidden_activation])
    for layer in mlp.hidden:
        w.f64(layer.omega0)
    w.i64(cfg.num_maps)
    w.i64(cfg.rows_per_map)
    w.i64(cfg.seed)
    for s in cfg.scales:
        w.f64(s)


def _read_axis_header(r: _Reader) -> dict:
    input_dim = r.i64()
    hidden_dim = r.i64()
    depth = r.i64()
    out_dim = r.i64()
    act = r.u8()
    if act not in _ACT_NAMES:
        raise FormatError(f"unknown activation tag {act}")
    omegas = [r.f64() for _ in range(depth)]
    num_maps = r.i64()
    rows_per_map = r.i64()
    seed = r.i64()
    scales = tuple(r.f64() for _ in range(num_maps))
    return {
        "input_dim": input_dim,
        "hidden_dim": hidden_dim,
        "depth": depth,
        "out_dim": out_dim,
        "activation": _ACT_NAMES[act],
        "omegas": omegas,
        "fourier": FourierConfig(
            num_maps=num_maps,
            scales=scales,
            rows_per_map=rows_per_map,
            input_dim=input_dim,
            seed=seed,
        ),
    }


def save_model(bundle: ModelBundle, path) -> None:
    if bundle.kind not in _KINDS:
        raise FormatError(f"unknown model kind {bundle.kind!r}")
    model = bundle.model
    norm = bundle.normalizer
    w = _Writer()
    w.chunks.append(MAGIC)
    w.u8(_KINDS[bundle.kind])
    w.u8(model.c_in)
    w.i64(model.core.shape[-1] if model.core.ndim == model.c_in + 1 else 0)
    for mlp in model.axes:
        _write_axis_header(w, mlp)
    for i in range(model.c_in):
        dim = len(norm.axis_offsets[i])
        w.i64(dim)
        w.array(norm.axis_offsets[i])
        w.array(norm.axis_scales[i])
    w.f64(norm.value_mean)
    w.f64(norm.value_std)
    w.u8(1 if norm.grid_sizes else 0)
    if norm.grid_sizes:
        for n in norm.grid_sizes:
            w.i64(n)
    w.u8(model.core.ndim)
    for d in model.core.shape:
        w.i64(d)
    if bundle.kind == "graph":
        if bundle.embedding is None:
            raise FormatError("graph models must carry their spectral embedding")
        w.i64(bundle.embedding.shape[0])
        w.i64(bundle.embedding.shape[1])
    for _, arr in iter_params(model):
        w.array(arr)
    if bundle.kind == "graph":
        w.array(bundle.embedding)
    with open(path, "wb") as fh:
        fh.write(w.bytes())


def load_model(path) -> ModelBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) or data[:5] != MAGIC[:5]:
        raise FormatError("bad magic: not a model file")
    if data[5] != MAGIC[5]:
        raise FormatError(f"unsupported format version {data[5]}")
    r = _Reader(data)
    r.take(len(MAGIC))
    kind_tag = r.u8()
    if kind_tag not in _KIND_NAMES:
        raise FormatError(f"unknown model kind tag {kind_tag}")
    kind = _KIND_NAMES[kind_tag]
    c_in = r.u8()
    out_channels = r.i64()
    headers = [_read_axis_header(r) for _ in range(c_in)]
    offsets, scales = [], []
    for _ in range(c_in):
        dim = r.i64()
        offsets.append(r.array((dim,)))
        scales.append(r.array((dim,)))
    value_mean = r.f64()
    value_std = r.f64()
    grid_sizes: tuple[int, ...] = ()
    if r.u8():
        grid_sizes = tuple(r.i64() for _ in range(c_in))
    core_ndim = r.u8()
    core_shape = tuple(r.i64() for _ in range(core_ndim))
    if core_ndim == c_in + 1 and core_shape[-1] != out_channels:
        raise FormatError("core shape disagrees with declared output channels")
    emb_shape = None
    if kind == "graph":
        emb_shape = (r.i64(), r.i64())

    axes = []
    for h in headers:
        fmap = sample_fourier_map(h["fourier"])
        enc = (
            2 * h["fourier"].rows_per_map * h["fourier"].num_maps
            if h["fourier"].num_maps > 0
            else h["input_dim"]
        )
        input_weight = r.array((h["hidden_dim"], enc))
        input_bias = r.array((h["hidden_dim"],))
        hidden = []
        for l in range(h["depth"]):
            weight = r.array((h["hidden_dim"], h["hidden_dim"]))
            bias = r.array((h["hidden_dim"],))
            hidden.append(SineLayer(weight=weight, bias=bias, omega0=h["omegas"][l]))
        head_weight = r.array((h["out_dim"], h["hidden_dim"]))
        head_bias = r.array((h["out_dim"],))
        axes.append(FreqMlp(
            fourier=fmap,
            input_weight=input_weight,
            input_bias=input_bias,
            hidden=hidden,
            head_weight=head_weight,
            head_bias=head_bias,
            hidden_activation=h["activation"],
        ))
    core = r.array(core_shape)
    embedding = None
    if kind == "graph":
        embedding = r.array(emb_shape)
    r.done()
    model = FactorizedInr(axes=axes, core=core)
    normalizer = Normalizer(
        axis_offsets=tuple(offsets),
        axis_scales=tuple(scales),
        value_mean=value_mean,
        value_std=value_std,
        grid_sizes=grid_sizes,
    )
    return ModelBundle(kind=kind, model=model, normalizer=normalizer,
                       embedding=embedding)
