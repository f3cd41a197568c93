"""Command-line surface: simulate | stack | train | reconstruct | vfi4 |
vfi11 | vfp | bound-check | eval.

Settings resolve in order: built-in defaults, then a flat key=value config
file (--config), then explicit flags, then the E2F_SEED environment
variable. --dump-config writes the resolved settings back out so a run can
be reproduced exactly from the dumped file.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import diffusion, events, guidance, metrics, sampler, simulator, zeroshot

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "frames": 12,
    "duration": 1.0,
    "width": 0,
    "height": 0,
    "steps": 30,
    "sigma_min": 0.002,
    "sigma_max": 80.0,
    "rho": 7.0,
    "sigma_data": 0.5,
    "latent_channels": 1,
    "contrast": 0.1,
    "guidance.mode": "linear",
    "guidance.s_max": 0.1,
    "guidance.window": 10,
    "weight.mode": "nonlinear",
    "weight.sigma_scale": 1.0,
    "noise.eta": 0.0,
    "noise.mode": "scaled",
    "no_events": 0,
    "repartition": 0,
    "train.iterations": 2000,
    "train.lr": 0.01,
    "train.kind": "mlp",
    "train.hidden": 16,
    "train.log_every": 100,
    "dump_every": 0,
}

TASK_COMMANDS = ("reconstruct", "vfi4", "vfi11", "vfp")


def _dest(key: str) -> str:
    return "opt_" + key.replace(".", "_")


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def parse_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve_config(args, keys: tuple[str, ...]) -> dict[str, object]:
    cfg = {k: DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        for key, raw in parse_config_file(args.config).items():
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            if key in cfg:
                cfg[key] = _coerce(key, raw)
    for key in keys:
        raw = getattr(args, _dest(key), None)
        if raw is not None:
            cfg[key] = _coerce(key, raw)
    if "seed" in cfg and os.environ.get("E2F_SEED"):
        cfg["seed"] = int(os.environ["E2F_SEED"])
    if getattr(args, "dump_config", None):
        lines = [f"{k}={cfg[k]!r}" if isinstance(cfg[k], float) else f"{k}={cfg[k]}"
                 for k in sorted(cfg)]
        Path(args.dump_config).write_text("\n".join(lines) + "\n")
    return cfg


def _add_common(p, keys: tuple[str, ...]):
    p.add_argument("--config", default=None, help="flat key=value settings file")
    p.add_argument("--dump-config", default=None,
                   help="write the resolved settings to this path")
    for key in keys:
        flag = "--" + key.replace(".", "-").replace("_", "-")
        p.add_argument(flag, dest=_dest(key), default=None, metavar="V")


def _load_stream(path, cfg) -> events.EventStream:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == events.EVENT_MAGIC:
        return events.load_events_binary(path)
    if not (cfg.get("width") and cfg.get("height")):
        raise ValueError("text event input needs --width, --height and --duration")
    return events.load_events_text(path, int(cfg["width"]), int(cfg["height"]),
                                   float(cfg["duration"]))


def _save_stream(path, stream) -> None:
    if str(path).endswith(".txt"):
        events.save_events_text(path, stream)
    else:
        events.save_events_binary(path, stream)


# -- commands -----------------------------------------------------------------

SIMULATE_KEYS = ("contrast", "duration")


def cmd_simulate(args) -> int:
    cfg = resolve_config(args, SIMULATE_KEYS)
    frames = simulator.load_frames(args.frames, duration=float(cfg["duration"]))
    config = simulator.SimConfig(float(cfg["contrast"]))
    stream = simulator.simulate_events(frames, config)
    _save_stream(args.out_events, stream)
    if args.out_volume:
        groups = events.group_events(stream, frames.timeline)
        vol = events.stack_events(groups, frames.width, frames.height)
        events.save_volume(args.out_volume, vol)
    print(f"simulated {len(stream)} events over {frames.frames} frames")
    return 0


STACK_KEYS = ("frames", "duration", "width", "height", "seed",
              "noise.eta", "noise.mode", "repartition")


def cmd_stack(args) -> int:
    cfg = resolve_config(args, STACK_KEYS)
    stream = _load_stream(args.events, cfg)
    timeline = events.FrameTimeline.uniform(int(cfg["frames"]), stream.duration)
    groups = events.group_events(stream, timeline)
    k = int(cfg["repartition"])
    if k:
        if len(groups) < 3:
            raise ValueError("repartition needs at least three groups")
        interior = events.repartition_groups(groups[1:-1], k)
        groups = [groups[0], *interior, groups[-1]]
    vol = events.stack_events(groups, stream.width, stream.height)
    eta = float(cfg["noise.eta"])
    if eta > 0 or cfg["noise.mode"] == "baseline":
        vol = events.inject_noise(vol, eta, int(cfg["seed"]),
                                  mode=str(cfg["noise.mode"]))
    events.save_volume(args.out, vol)
    print(f"stacked {len(stream)} events into {vol.frames} slices")
    return 0


TRAIN_KEYS = ("seed", "frames", "duration", "sigma_min", "sigma_max",
              "sigma_data", "train.iterations", "train.lr", "train.kind",
              "train.hidden", "train.log_every")


def _load_pairs(data_dir, cfg):
    data_dir = Path(data_dir)
    pairs = []
    for frames_path in sorted(data_dir.glob("*.frames")):
        events_path = frames_path.with_suffix(".events")
        if not events_path.exists():
            raise FileNotFoundError(f"no event file for {frames_path}")
        frames = simulator.load_frames(frames_path, duration=float(cfg["duration"]))
        stream = events.load_events_binary(events_path)
        timeline = events.FrameTimeline.uniform(frames.frames, stream.duration)
        groups = events.group_events(stream, timeline)
        vol = events.stack_events(groups, stream.width, stream.height)
        pairs.append((frames.data, vol))
    if not pairs:
        raise FileNotFoundError(f"no *.frames/*.events pairs under {data_dir}")
    return pairs


def cmd_train(args) -> int:
    cfg = resolve_config(args, TRAIN_KEYS)
    pairs = _load_pairs(args.data, cfg)
    kind = str(cfg["train.kind"])
    if kind == "affine":
        model = diffusion.AffineDenoiser(seed=int(cfg["seed"]))
    elif kind == "mlp":
        model = diffusion.MlpDenoiser(hidden=int(cfg["train.hidden"]),
                                      sigma_data=float(cfg["sigma_data"]),
                                      seed=int(cfg["seed"]))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    config = diffusion.TrainConfig(
        iterations=int(cfg["train.iterations"]),
        learning_rate=float(cfg["train.lr"]),
        sigma_min=float(cfg["sigma_min"]),
        sigma_max=float(cfg["sigma_max"]),
        sigma_data=float(cfg["sigma_data"]),
        seed=int(cfg["seed"]),
        log_every=int(cfg["train.log_every"]),
    )
    report = diffusion.train_denoiser(pairs, model, config)
    diffusion.save_model(args.model, model)
    lines = [
        f"kind={kind}",
        f"iterations={config.iterations}",
        f"pairs={len(pairs)}",
        f"initial_loss_avg={report.initial_average!r}",
        f"final_loss_avg={report.final_average!r}",
    ]
    Path(str(args.model) + ".report.txt").write_text("\n".join(lines) + "\n")
    print(f"trained {kind} model on {len(pairs)} pairs; "
          f"final loss avg {report.final_average:.6g}")
    return 0


RUN_KEYS = ("seed", "frames", "steps", "sigma_min", "sigma_max", "rho",
            "sigma_data", "latent_channels", "contrast", "guidance.mode",
            "guidance.s_max", "guidance.window", "weight.mode",
            "weight.sigma_scale", "noise.eta", "noise.mode", "no_events",
            "dump_every")


def cmd_run(args) -> int:
    cfg = resolve_config(args, RUN_KEYS)
    task = args.task
    stream = events.load_events_binary(args.events)
    n_frames = int(cfg["frames"])
    timeline = events.FrameTimeline.uniform(n_frames, stream.duration)
    groups = events.group_events(stream, timeline)
    volume = events.stack_events(groups, stream.width, stream.height)
    eta = float(cfg["noise.eta"])
    if eta > 0 or cfg["noise.mode"] == "baseline":
        volume = events.inject_noise(volume, eta, int(cfg["seed"]),
                                     mode=str(cfg["noise.mode"]))
    if int(cfg["no_events"]):
        volume = events.EventVolume(np.zeros_like(volume.data))

    model = diffusion.load_model(args.model)
    schedule = diffusion.make_schedule(float(cfg["sigma_min"]),
                                       float(cfg["sigma_max"]),
                                       int(cfg["steps"]), float(cfg["rho"]),
                                       float(cfg["sigma_data"]))
    decoder = sampler.Decoder.identity()

    hooks: list = []
    if task != "reconstruct":
        ref_indices, _ = zeroshot.vfi_layout(task, n_frames)
        if not args.refs:
            raise ValueError(f"task {task} requires --refs")
        ref_frames = simulator.load_frames(args.refs)
        if ref_frames.frames != len(ref_indices):
            raise ValueError(f"task {task} needs {len(ref_indices)} reference "
                             f"frames, got {ref_frames.frames}")
        ref_latents = decoder.encode(ref_frames.data)
        wsched = zeroshot.WeightSchedule(str(cfg["weight.mode"]),
                                         float(cfg["weight.sigma_scale"]))
        if task == "vfi4":
            anchors = list(zip(ref_indices, ref_latents))
            hooks.append(zeroshot.make_segmented_hook(anchors, wsched))
        elif task == "vfi11":
            refs = zeroshot.ReferenceSet(ref_latents[0], ref_latents[1],
                                         "interpolation")
            hooks.append(zeroshot.make_modulation_hook(refs, wsched))
        else:  # vfp
            refs = zeroshot.ReferenceSet(ref_latents[0], mode="prediction")
            hooks.append(zeroshot.make_modulation_hook(refs, wsched))

    gsched = guidance.GuidanceSchedule(str(cfg["guidance.mode"]),
                                       float(cfg["guidance.s_max"]),
                                       int(cfg["guidance.window"]))
    if gsched.mode != "off" and gsched.window > 0:
        if gsched.window > schedule.steps:
            raise ValueError("guidance window exceeds the step count")
        predictor = guidance.OracleResidualPredictor(float(cfg["contrast"]))
        hooks.append(guidance.make_guidance_hook(predictor(volume), gsched,
                                                 decoder))

    config = sampler.SamplerConfig(schedule, tuple(hooks), int(cfg["seed"]),
                                   int(cfg["latent_channels"]),
                                   int(cfg["dump_every"]), args.dump_dir)
    latent = sampler.sample(model, volume, config)
    out_frames = sampler.decode(latent, decoder, timeline)
    simulator.save_frames(args.out, out_frames)
    if args.viz_dir:
        viz = Path(args.viz_dir)
        viz.mkdir(parents=True, exist_ok=True)
        for f in range(out_frames.frames):
            img = np.clip(out_frames.data[f], 0.0, 1.0)
            if img.shape[0] == 3:
                simulator.save_ppm(viz / f"frame{f:03d}.ppm", img)
            else:
                simulator.save_pgm(viz / f"frame{f:03d}.pgm", img[0])
    print(f"{task}: wrote {out_frames.frames} frames to {args.out}")
    return 0


BOUND_KEYS = ("seed",)


def cmd_bound_check(args) -> int:
    cfg = resolve_config(args, BOUND_KEYS)
    base_seed = int(cfg["seed"])
    rows = []
    all_hold = True
    for i in range(args.n):
        inst = bounds_mod.random_instance(base_seed + i)
        rep = bounds_mod.check_bound(inst)
        all_hold &= rep.holds
        rows.append((base_seed + i, rep))
    with open(args.out, "w") as fh:
        fh.write(f"# {bounds_mod.ANCHORING_NOTE}\n")
        fh.write("seed,L,kappa,C,epsilon,loss,lhs,rhs,holds\n")
        for seed, rep in rows:
            fh.write(f"{seed},{rep.lipschitz!r},{rep.kappa!r},{rep.contrast!r},"
                     f"{rep.epsilon!r},{rep.loss!r},{rep.lhs!r},{rep.rhs!r},"
                     f"{int(rep.holds)}\n")
    print(f"bound-check: {args.n} instances, "
          f"{'all hold' if all_hold else 'VIOLATION found'}")
    return 0 if all_hold else 1


def cmd_eval(args) -> int:
    pred = simulator.load_frames(args.pred)
    gt = simulator.load_frames(args.gt)
    mse_pf, mse_mean = metrics.mse(pred, gt)
    ssim_pf, ssim_mean = metrics.ssim(pred, gt)
    with open(args.out, "w") as fh:
        fh.write(f"# {metrics.SSIM_CONVENTION}\n")
        fh.write("frame_index,mse,ssim\n")
        for f in range(mse_pf.size):
            fh.write(f"{f},{float(mse_pf[f])!r},{float(ssim_pf[f])!r}\n")
        fh.write(f"mean,{mse_mean!r},{ssim_mean!r}\n")
    print(f"eval: mse {mse_mean:.6g}, ssim {ssim_mean:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="e2f",
        description="event-to-frame diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="frames -> event stream (+volume)")
    p.add_argument("--frames", required=True)
    p.add_argument("--out-events", required=True)
    p.add_argument("--out-volume", default=None)
    _add_common(p, SIMULATE_KEYS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stack", help="event stream -> conditioning volume")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, STACK_KEYS)
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("train", help="fit a toy conditional denoiser")
    p.add_argument("--data", required=True, help="dir of *.frames/*.events pairs")
    p.add_argument("--model", required=True)
    _add_common(p, TRAIN_KEYS)
    p.set_defaults(func=cmd_train)

    for task in TASK_COMMANDS:
        p = sub.add_parser(task, help=f"run the {task} task")
        p.add_argument("--events", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--refs", default=None,
                       help="reference frames file (layout order)")
        p.add_argument("--viz-dir", default=None)
        p.add_argument("--dump-dir", default=None)
        _add_common(p, RUN_KEYS)
        p.set_defaults(func=cmd_run, task=task)

    p = sub.add_parser("bound-check", help="verify the error bound on random instances")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", required=True)
    _add_common(p, BOUND_KEYS)
    p.set_defaults(func=cmd_bound_check)

    p = sub.add_parser("eval", help="per-frame mse/ssim CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, ())
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
