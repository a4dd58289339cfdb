"""Command-line surface: synthesize data, train and apply models, run
baselines, and emit diagnostics. Every command writes its delimited
outputs plus a manifest; report paths also render figures unless
--no-figures is given.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .baselines import (
    MfConfig,
    SvtConfig,
    fourier_spectrum,
    lowrank_track,
    lowrank_track_csv,
    mf_als,
    spectrum_csv,
    svt_complete,
)
from .data import (
    GridField,
    load_grid_csv,
    metrics,
    sample_mask,
    save_grid_csv,
    synth_graph_signal,
    synth_low_rank,
    synth_wave_field,
)
from .errors import ConfigError, DataError, NumericalError, StinrError
from .features import composed_kernel
from .graph import load_adjacency, make_graph_spec, ring_adjacency
from .model import lipschitz_check
from .modelio import load_model, save_model
from .pipeline import (
    default_krige_config,
    default_run_config,
    infer_points,
    merge_config,
    obs_to_mask,
    run_grid_training,
    run_krige,
    set_dotted,
    upsample_grid,
)
from .rng import Rng


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _manifest(out_dir, command: str, config: dict, outputs: list[str],
              extra: dict | None = None) -> None:
    payload = {
        "command": command,
        "package_version": __version__,
        "config": config,
        "outputs": sorted(outputs),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        payload.update(extra)
    _write_json(os.path.join(out_dir, "manifest.json"), payload)


def _load_config(path: str | None, sets: list[str], defaults: dict) -> dict:
    user: dict = {}
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config document must be a JSON object")
    cfg = merge_config(defaults, user)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        set_dotted(cfg, key.strip(), value)
    return cfg


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _load_field(cfg: dict) -> GridField:
    data = cfg["data"]
    if not data["path"]:
        raise ConfigError("data.path is required")
    return load_grid_csv(data["path"], layout=str(data["layout"]),
                         ndim=int(data["ndim"]))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out_dir = _ensure_outdir(args.out)
    outputs = []
    params: dict = {"kind": args.kind, "seed": args.seed}
    if args.kind == "wave":
        field = synth_wave_field(
            args.nx, args.nt,
            free_speed=args.free_speed, congested_speed=args.congested_speed,
            band_width=args.band_width, wave_speed=args.wave_speed,
            band_spacing=args.band_spacing, noise_std=args.noise_std,
            seed=args.seed,
        )
        params.update(
            nx=args.nx, nt=args.nt, free_speed=args.free_speed,
            congested_speed=args.congested_speed, band_width=args.band_width,
            wave_speed=args.wave_speed, band_spacing=args.band_spacing,
            noise_std=args.noise_std,
        )
    elif args.kind == "lowrank":
        field = synth_low_rank(args.nx, args.nt, args.rank, args.seed)
        params.update(nx=args.nx, nt=args.nt, rank=args.rank)
    elif args.kind == "graph-signal":
        if args.ring:
            graph = make_graph_spec(ring_adjacency(args.ring))
        elif args.adjacency:
            graph = load_adjacency(args.adjacency, fmt=args.adjacency_format)
        else:
            raise ConfigError("graph-signal needs --ring N or --adjacency FILE")
        field = synth_graph_signal(graph, args.nt, args.bandwidth, args.seed)
        params.update(nt=args.nt, bandwidth=args.bandwidth,
                      nodes=graph.n, ring=args.ring)
        if args.ring:
            adj_path = os.path.join(out_dir, "adjacency.csv")
            with open(adj_path, "w") as fh:
                for i in range(graph.n):
                    j = (i + 1) % graph.n
                    fh.write(f"{i},{j},1\n")
            outputs.append("adjacency.csv")
    else:
        raise ConfigError(f"unknown synth kind {args.kind!r}")
    data_path = os.path.join(out_dir, "data.csv")
    save_grid_csv(field, data_path, layout="matrix")
    outputs.append("data.csv")
    if not args.no_figures:
        from .report import save_heatmap

        save_heatmap(field.values, os.path.join(out_dir, "data.png"),
                     title=f"synthetic {args.kind}")
        outputs.append("data.png")
    _manifest(out_dir, "synth", params, outputs)
    print(f"wrote {data_path} ({field.values.shape[0]}x{field.values.shape[1]})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.set, default_run_config())
    out_dir = _ensure_outdir(cfg["output_dir"])
    field = _load_field(cfg)
    result = run_grid_training(field, cfg)

    outputs = []
    model_path = os.path.join(out_dir, "model.stinr")
    save_model(result.bundle, model_path)
    outputs.append("model.stinr")
    result.curve.to_csv(os.path.join(out_dir, "loss.csv"))
    outputs.append("loss.csv")
    if result.prediction.values.ndim == 2:
        save_grid_csv(result.prediction, os.path.join(out_dir, "prediction.csv"))
    else:
        save_grid_csv(result.prediction, os.path.join(out_dir, "prediction.csv"),
                      layout="long")
    outputs.append("prediction.csv")
    metrics_payload = {
        "heldout": result.report.as_dict() if result.report else None,
        "train_points": len(result.train_obs),
        "heldout_points": len(result.held_obs),
    }
    _write_json(os.path.join(out_dir, "metrics.json"), metrics_payload)
    outputs.append("metrics.json")
    if cfg["figures"] and not args.no_figures:
        from .report import save_heatmap, save_loss_curve

        save_loss_curve(result.curve.steps, result.curve.losses,
                        os.path.join(out_dir, "loss.png"))
        outputs.append("loss.png")
        if field.values.ndim == 2:
            save_heatmap(field.values, os.path.join(out_dir, "observed.png"),
                         title="training observations",
                         mask=obs_to_mask(result.train_obs, field.shape))
            save_heatmap(result.prediction.values,
                         os.path.join(out_dir, "prediction.png"),
                         title="reconstruction")
            outputs += ["observed.png", "prediction.png"]
    _manifest(out_dir, "train", cfg, outputs)
    if result.report:
        print(f"heldout: {result.report}")
    print(f"model written to {model_path}")
    return 0


def cmd_infer(args) -> int:
    bundle = load_model(args.model)
    try:
        raw = np.loadtxt(args.coords, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"could not read query coordinates: {exc}") from None
    preds = infer_points(bundle, raw)
    with open(args.out, "w") as fh:
        for row, pred in zip(raw, preds):
            cells = [f"{c:.17g}" for c in row] + [f"{p:.17g}" for p in pred]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_upsample(args) -> int:
    bundle = load_model(args.model)
    field = upsample_grid(bundle, args.factor)
    out_dir = _ensure_outdir(os.path.dirname(os.path.abspath(args.out)) or ".")
    save_grid_csv(field, args.out)
    if not args.no_figures:
        from .report import save_heatmap

        save_heatmap(field.values, os.path.splitext(args.out)[0] + ".png",
                     title=f"{args.factor}x upsampled field")
    print(f"wrote {field.values.shape[0]}x{field.values.shape[1]} grid to {args.out}")
    return 0


def cmd_krige(args) -> int:
    cfg = _load_config(args.config, args.set, default_krige_config())
    out_dir = _ensure_outdir(cfg["output_dir"])
    gcfg = cfg["graph"]
    if gcfg["ring_nodes"]:
        graph = make_graph_spec(ring_adjacency(int(gcfg["ring_nodes"])))
    elif gcfg["adjacency"]:
        graph = load_adjacency(gcfg["adjacency"], fmt=str(gcfg["format"]))
    else:
        raise ConfigError("graph.adjacency or graph.ring_nodes is required")
    signals = _load_field(cfg)
    result = run_krige(graph, signals, cfg)

    outputs = []
    model_path = os.path.join(out_dir, "model.stinr")
    save_model(result.bundle, model_path)
    outputs.append("model.stinr")
    result.curve.to_csv(os.path.join(out_dir, "loss.csv"))
    outputs.append("loss.csv")
    save_grid_csv(result.prediction, os.path.join(out_dir, "prediction.csv"))
    outputs.append("prediction.csv")
    _write_json(os.path.join(out_dir, "metrics.json"), {
        "hidden_nodes": [int(v) for v in result.hidden_nodes],
        "model": result.report.as_dict(),
        "column_mean_baseline": result.baseline_report.as_dict(),
    })
    outputs.append("metrics.json")
    if cfg["figures"] and not args.no_figures:
        from .report import save_heatmap, save_loss_curve

        save_loss_curve(result.curve.steps, result.curve.losses,
                        os.path.join(out_dir, "loss.png"))
        save_heatmap(result.prediction.values,
                     os.path.join(out_dir, "prediction.png"),
                     title="kriged signals")
        outputs += ["loss.png", "prediction.png"]
    _manifest(out_dir, "krige", cfg, outputs)
    print(f"hidden-node metrics: {result.report}")
    print(f"column-mean baseline: {result.baseline_report}")
    return 0


def cmd_baseline(args) -> int:
    field = load_grid_csv(args.data, layout="matrix")
    out_dir = _ensure_outdir(args.out)
    train_obs, held_obs = sample_mask(field, args.mask_mode, args.rate, args.seed)
    train_view = GridField(values=field.values,
                           mask=obs_to_mask(train_obs, field.shape))
    if args.method == "mf":
        result = mf_als(train_view, MfConfig(rank=args.rank, ridge=args.ridge,
                                             max_iters=args.max_iters))
        completed = result.completed
        extra = {"converged": result.converged, "iterations": result.iterations}
    else:
        result = svt_complete(train_view, SvtConfig(threshold=args.threshold,
                                                    max_iters=args.max_iters))
        completed = result.completed
        extra = {
            "converged": result.converged,
            "iterations": result.iterations,
            "nuclear_norm": result.nuclear_norm,
        }
    outputs = ["completed.csv", "metrics.json"]
    save_grid_csv(GridField(values=completed), os.path.join(out_dir, "completed.csv"))
    report = None
    if len(held_obs):
        report = metrics(completed, field, obs_to_mask(held_obs, field.shape))
    _write_json(os.path.join(out_dir, "metrics.json"), {
        "method": args.method,
        "heldout": report.as_dict() if report else None,
        **extra,
    })
    if not args.no_figures:
        from .report import save_heatmap

        save_heatmap(completed, os.path.join(out_dir, "completed.png"),
                     title=f"{args.method} completion")
        outputs.append("completed.png")
    _manifest(out_dir, f"baseline-{args.method}", _args_dict(args),
              outputs)
    if report:
        print(f"heldout: {report}")
    return 0


def _diagnose_spectrum(args, out_dir: str) -> list[str]:
    if not args.data:
        raise ConfigError("spectrum diagnostic needs --data")
    field = load_grid_csv(args.data, layout="matrix")
    if args.row is not None:
        series = field.values[args.row, :]
        label = f"row {args.row}"
    elif args.col is not None:
        series = field.values[:, args.col]
        label = f"col {args.col}"
    else:
        series = field.values.mean(axis=0)
        label = "column mean"
    freqs, mags = fourier_spectrum(series)
    spectrum_csv(freqs, mags, os.path.join(out_dir, "spectrum.csv"))
    outputs = ["spectrum.csv"]
    if not args.no_figures:
        from .report import save_spectrum

        save_spectrum(freqs, mags, os.path.join(out_dir, "spectrum.png"),
                      title=f"spectrum ({label})")
        outputs.append("spectrum.png")
    print(f"spectrum of {label}: peak bin "
          f"{int(np.argmax(mags[1:]) + 1) if len(mags) > 1 else 0}")
    return outputs


def _diagnose_lowrank(args, out_dir: str) -> list[str]:
    if not args.inputs:
        raise ConfigError("lowrank diagnostic needs at least one grid CSV")
    mats = [load_grid_csv(p, layout="matrix").values for p in args.inputs]
    points = lowrank_track(mats)
    lowrank_track_csv(points, os.path.join(out_dir, "lowrank.csv"))
    outputs = ["lowrank.csv"]
    if not args.no_figures:
        from .report import save_lowrank_track

        save_lowrank_track(points, os.path.join(out_dir, "lowrank.png"))
        outputs.append("lowrank.png")
    for p in points:
        print(f"snapshot {p.step}: nuclear {p.nuclear_norm:.4f} "
              f"effective rank {p.effective_rank:.3f}")
    return outputs


def _diagnose_kernel(args, out_dir: str) -> list[str]:
    if not args.model:
        raise ConfigError("kernel diagnostic needs --model")
    bundle = load_model(args.model)
    fmap = bundle.model.axes[args.axis].fourier
    if fmap.config.num_maps == 0:
        raise ConfigError("model axis has no Fourier encoding to diagnose")
    dim = fmap.config.input_dim
    offsets = np.linspace(-2.0, 2.0, 201)
    direction = np.zeros(dim)
    direction[0] = 1.0
    base = np.zeros(dim)
    values = [composed_kernel(fmap, base, base + o * direction) for o in offsets]
    rng = Rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        u = rng.uniform_range(-1, 1, dim)
        v = rng.uniform_range(-1, 1, dim)
        c = rng.uniform_range(-1, 1, dim)
        worst = max(worst, abs(
            composed_kernel(fmap, u, v) - composed_kernel(fmap, u + c, v + c)
        ))
    path = os.path.join(out_dir, "kernel.csv")
    with open(path, "w") as fh:
        fh.write("offset,kernel\n")
        for o, v in zip(offsets, values):
            fh.write(f"{o:.17g},{v:.17g}\n")
    outputs = ["kernel.csv"]
    if not args.no_figures:
        from .report import save_kernel_slice

        save_kernel_slice(offsets, values, os.path.join(out_dir, "kernel.png"))
        outputs.append("kernel.png")
    print(f"max shift-invariance violation over {args.samples} triples: {worst:.3e}")
    return outputs


def _diagnose_lipschitz(args, out_dir: str) -> list[str]:
    if not args.model:
        raise ConfigError("lipschitz diagnostic needs --model")
    bundle = load_model(args.model)
    model = bundle.model
    rng = Rng(args.seed)
    n_pairs = args.samples
    base, moved = [], []
    for mlp in model.axes:
        d = mlp.input_dim
        base.append(rng.uniform_range(-1, 1, n_pairs * d).reshape(n_pairs, d))
        moved.append(rng.uniform_range(-1, 1, n_pairs * d).reshape(n_pairs, d))
    axis_choice = (rng.uniform(n_pairs) * model.c_in).astype(int)
    check = lipschitz_check(model, base, moved, axis_choice)
    path = os.path.join(out_dir, "lipschitz.csv")
    with open(path, "w") as fh:
        fh.write("eta,xi,stages,axes,delta,pairs,violations,max_ratio\n")
        b = check.budget
        fh.write(
            f"{b.eta:.17g},{b.xi:.17g},{b.stages},{b.n_axes},"
            f"{check.delta:.17g},{check.pairs},{check.violations},"
            f"{check.max_ratio:.17g}\n"
        )
    print(
        f"smoothness bound: eta={check.budget.eta:.4g} xi={check.budget.xi:.4g} "
        f"delta={check.delta:.4g}; {check.violations}/{check.pairs} violations "
        f"(max ratio {check.max_ratio:.3e})"
    )
    return ["lipschitz.csv"]


def cmd_diagnose(args) -> int:
    out_dir = _ensure_outdir(args.out)
    if args.which == "spectrum":
        outputs = _diagnose_spectrum(args, out_dir)
    elif args.which == "lowrank":
        outputs = _diagnose_lowrank(args, out_dir)
    elif args.which == "kernel":
        outputs = _diagnose_kernel(args, out_dir)
    elif args.which == "lipschitz":
        outputs = _diagnose_lipschitz(args, out_dir)
    else:
        raise ConfigError(f"unknown diagnostic {args.which!r}")
    _manifest(out_dir, f"diagnose-{args.which}", _args_dict(args),
              outputs)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stinr",
        description="Reconstruct sparse spatiotemporal fields with "
                    "frequency-encoded factorized coordinate networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic field")
    p.add_argument("kind", choices=["wave", "lowrank", "graph-signal"])
    p.add_argument("--out", default="out-synth")
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--nt", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--free-speed", type=float, default=60.0)
    p.add_argument("--congested-speed", type=float, default=20.0)
    p.add_argument("--band-width", type=float, default=8.0)
    p.add_argument("--wave-speed", type=float, default=-0.3)
    p.add_argument("--band-spacing", type=float, default=24.0)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--bandwidth", type=int, default=8)
    p.add_argument("--ring", type=int, default=None,
                   help="generate a ring graph with N nodes")
    p.add_argument("--adjacency", default=None)
    p.add_argument("--adjacency-format", choices=["edges", "dense"], default="edges")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a grid model from a config")
    p.add_argument("--config", default=None, help="JSON run config")
    p.add_argument("--set", action="append", default=[],
                   metavar="KEY.PATH=VALUE", help="override a config leaf")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="evaluate a model at query coordinates")
    p.add_argument("--model", required=True)
    p.add_argument("--coords", required=True, help="CSV of raw query coordinates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("upsample", help="evaluate a grid model on a finer lattice")
    p.add_argument("--model", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("krige", help="missing-sensor estimation on a graph")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", default=[],
                   metavar="KEY.PATH=VALUE")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_krige)

    p = sub.add_parser("baseline", help="run a low-rank reference method")
    p.add_argument("method", choices=["mf", "svt"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="out-baseline")
    p.add_argument("--mask-mode", choices=["pointwise", "column_drop", "row_drop"],
                   default="pointwise")
    p.add_argument("--rate", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("diagnose", help="spectrum / lowrank / kernel / lipschitz")
    p.add_argument("which", choices=["spectrum", "lowrank", "kernel", "lipschitz"])
    p.add_argument("--out", default="out-diagnose")
    p.add_argument("--data", default=None, help="grid CSV (spectrum)")
    p.add_argument("--row", type=int, default=None)
    p.add_argument("--col", type=int, default=None)
    p.add_argument("--inputs", nargs="*", default=[], help="grid CSVs (lowrank)")
    p.add_argument("--model", default=None, help="model file (kernel, lipschitz)")
    p.add_argument("--axis", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_diagnose)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except StinrError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
