"""Command-line surface: degrade, sr, metrics, report, gradcheck, train, ablate.

Exit codes: 0 ok, 1 usage/config error, 2 partial data failure,
3 verification failure. SFG_THREADS caps worker parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from sfgsr import functional as F
from sfgsr import serialize, swin, tensor
from sfgsr.degrade import DegradationConfig, degrade, extract_patch_pairs
from sfgsr.losses import LossWeights, mae, psnr, ssim_score
from sfgsr.model import (
    ModelConfig,
    build_model,
    count_params,
    flops_breakdown,
    forward,
    full_config,
    tiny_config,
)
from sfgsr.rng import CounterRng
from sfgsr.sfg_ffn import sfg_ffn_forward, sfg_ffn_init
from sfgsr.tensor import (
    ConfigurationError,
    ShapeError,
    Tensor,
    UsageError,
    gelu,
    grad_check,
    layernorm,
    linear,
    matmul,
    sigmoid,
    softmax,
    tabs,
    texp,
    tlog,
    tmean,
    tsqrt,
    tsum,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_VERIFY = 3


def _max_workers() -> int:
    cap = int(os.environ.get("SFG_THREADS", "0") or "0")
    auto = os.cpu_count() or 1
    return auto if cap <= 0 else min(cap, auto)


def _list_images(d: str) -> list[str]:
    names = [
        n
        for n in sorted(os.listdir(d))
        if os.path.isfile(os.path.join(d, n))
        and not n.endswith(".bands")
        and not n.endswith(".meta")
    ]
    return names


def _require_dir(path: str, label: str):
    if not os.path.isdir(path):
        raise UsageError(f"{label} {path!r} is not a directory")


# -- degrade ----------------------------------------------------------------------


def cmd_degrade(args) -> int:
    _require_dir(args.in_dir, "input directory")
    os.makedirs(args.out_dir, exist_ok=True)
    config = DegradationConfig(
        blur_sigma=args.blur_sigma,
        blur_kernel_size=args.kernel_size,
        scale=args.scale,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    config.validate()
    names = _list_images(args.in_dir)
    failures = []

    def work(item):
        index, name = item
        try:
            hr = serialize.read_image(os.path.join(args.in_dir, name))
            lr = degrade(hr, config, image_index=index)
        except (UsageError, ShapeError, OSError) as e:
            return name, str(e)
        out_path = os.path.join(args.out_dir, name)
        serialize.write_image(out_path, lr)
        meta = (
            f"source = {name}\n"
            f"blur_sigma = {config.blur_sigma}\n"
            f"blur_kernel_size = {config.blur_kernel_size}\n"
            f"scale = {config.scale}\n"
            f"noise_sigma = {config.noise_sigma}\n"
            f"seed = {config.seed}\n"
            f"image_index = {index}\n"
        )
        serialize._atomic_write(out_path + ".meta", meta.encode("ascii"))
        return None

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        for bad in pool.map(work, enumerate(names)):
            if bad is not None:
                failures.append(bad)
    for name, why in failures:
        print(f"degrade: skipped {name}: {why}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


# -- sr ---------------------------------------------------------------------------


def cmd_sr(args) -> int:
    if not os.path.isfile(args.checkpoint):
        raise UsageError(f"checkpoint {args.checkpoint!r} not found")
    _require_dir(args.in_dir, "input directory")
    os.makedirs(args.out_dir, exist_ok=True)
    model, _, _ = serialize.load_model_checkpoint(args.checkpoint)
    bands = model.config.bands
    names = _list_images(args.in_dir)
    images = []
    for name in names:
        img = serialize.read_image(os.path.join(args.in_dir, name))
        if img.shape[0] != bands:
            raise UsageError(
                f"{name}: {img.shape[0]} bands but checkpoint expects {bands}"
            )
        images.append(img)

    def work(item):
        name, img = item
        sr = forward(model, Tensor(img[None].astype(np.float32))).data[0]
        serialize.write_image(os.path.join(args.out_dir, name), np.clip(sr, 0.0, 1.0))

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        list(pool.map(work, zip(names, images)))
    return EXIT_OK


# -- metrics ----------------------------------------------------------------------


def _format_table(headers, rows) -> str:
    cells = [headers] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def cmd_metrics(args) -> int:
    _require_dir(args.sr_dir, "sr directory")
    _require_dir(args.ref_dir, "reference directory")
    sr_names = set(_list_images(args.sr_dir))
    ref_names = set(_list_images(args.ref_dir))
    unpaired = sorted(sr_names ^ ref_names)
    if unpaired:
        for name in unpaired:
            side = "reference" if name in sr_names else "sr"
            print(f"metrics: {name} has no {side} counterpart", file=sys.stderr)
        return EXIT_PARTIAL
    names = sorted(sr_names)

    def work(name):
        a = serialize.read_image(os.path.join(args.sr_dir, name))
        b = serialize.read_image(os.path.join(args.ref_dir, name))
        return name, psnr(a, b), ssim_score(a, b), mae(a, b)

    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        rows = list(pool.map(work, names))
    means = [float(np.mean([r[i] for r in rows])) for i in (1, 2, 3)]
    display = [
        (n, f"{p:.4f}" if math.isfinite(p) else "inf", f"{s:.6f}", f"{m:.6f}")
        for n, p, s, m in rows
    ]
    display.append(
        (
            "mean",
            f"{means[0]:.4f}" if math.isfinite(means[0]) else "inf",
            f"{means[1]:.6f}",
            f"{means[2]:.6f}",
        )
    )
    print(_format_table(["image", "psnr", "ssim", "mae"], display))
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["image", "psnr", "ssim", "mae"])
            for row in display:
                wr.writerow(row)
    return EXIT_OK


# -- report -----------------------------------------------------------------------


def _load_config(path: str) -> ModelConfig:
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == serialize.CHECKPOINT_MAGIC:
        lines, _ = serialize.load_checkpoint(path)
        return serialize.config_from_lines(lines)
    return serialize.parse_config_file(path)


def cmd_report(args) -> int:
    if args.source == "full-sfg":
        config = full_config("sfg")
    elif args.source == "full-baseline":
        config = full_config("baseline")
    elif args.source == "tiny":
        config = tiny_config()
    else:
        if not os.path.isfile(args.source):
            raise UsageError(f"config/checkpoint {args.source!r} not found")
        config = _load_config(args.source)
    config.validate()
    model = build_model(config)
    n = count_params(model)
    h, w = args.input_size
    parts = flops_breakdown(config, (h, w))
    print(f"ffn_kind: {config.ffn_kind}")
    print(f"parameters: {n} ({n / 1e6:.3f}M)")
    print(f"analytic FLOPs at assumed input {config.bands}x{h}x{w}:")
    for key in ("shallow", "attention", "ffn", "stage_convs", "reconstruction"):
        print(f"  {key:>14}: {parts[key] / 1e9:.3f}G")
    print(f"  {'total':>14}: {parts['total'] / 1e9:.3f}G")
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------------------


def _op_checks(seed: int):
    rng = CounterRng(seed)

    def rand(*shape):
        return Tensor(rng.normal(int(np.prod(shape))).reshape(shape) * 0.5)

    x = rand(3, 4)
    pos = Tensor(np.abs(x.data) + 0.5)
    img = rand(1, 2, 6, 6)
    kern = rand(2, 3, 3)
    full_k = rand(3, 2, 3, 3)
    w = rand(4, 5)
    b = rand(5)
    gamma, beta = Tensor(np.abs(rand(4).data) + 0.5), rand(4)
    shuffle_in = rand(1, 4, 3, 3)
    fft_in = rand(1, 1, 4, 4)
    return [
        ("mul_div", x, lambda t: tsum(t * t / (t * t + 1.0))),
        ("exp_log_sqrt", pos, lambda t: tsum(texp(-t) + tlog(t) + tsqrt(t))),
        ("abs", x, lambda t: tsum(tabs(t))),
        ("sigmoid", x, lambda t: tsum(sigmoid(t))),
        ("gelu", x, lambda t: tsum(gelu(t))),
        ("softmax", x, lambda t: tsum(softmax(t) * Tensor(np.arange(4.0)))),
        (
            "layernorm",
            x,
            lambda t: tsum(
                layernorm(t, Tensor(gamma.data.copy()), Tensor(beta.data.copy()))
                * Tensor(np.arange(4.0))
            ),
        ),
        ("matmul", x, lambda t: tsum(matmul(t, Tensor(x.data.T.copy())))),
        ("linear", x, lambda t: tsum(tabs(linear(t, w, b)))),
        (
            "depthwise_conv",
            img,
            lambda t: tsum(tabs(F.depthwise_conv2d(t, kern, pad_mode="replicate"))),
        ),
        ("conv", img, lambda t: tsum(tabs(F.conv2d(t, full_k)))),
        (
            "pixel_shuffle",
            shuffle_in,
            lambda t: tsum(tabs(F.pixel_shuffle(t, 2))),
        ),
        (
            "pad_reflect",
            img,
            lambda t: tsum(tabs(F.pad2d(t, (2, 3), mode="reflect"))),
        ),
        ("dft2", fft_in, lambda t: tsum(tabs(F.dft2(t)[0])) + tsum(tabs(F.dft2(t)[1]))),
        ("mean", x, lambda t: tmean(t * t)),
    ]


def _sfg_checks(seed: int):
    p = sfg_ffn_init(8, 2.0, 5, 8, seed)
    rng = CounterRng(seed + 1)
    x = Tensor(rng.normal(2 * 16 * 8).reshape(2, 16, 8) * 0.5)

    def run(t):
        return tsum(tabs(sfg_ffn_forward(t, p, 4, 4)))

    return [("sfg_ffn", x, run)]


def _swin_checks(seed: int):
    p = swin.swin_block_init(
        8, 2, 4, 0, seed, ffn_kind="sfg", blur_k=5, pos_bias="table"
    )
    rng = CounterRng(seed + 1)
    x = Tensor(rng.normal(1 * 64 * 8).reshape(1, 64, 8) * 0.5)

    def run(t):
        return tsum(tabs(swin.swin_block_forward(t, p, 8, 8)))

    return [("swin_block", x, run)]


def _model_checks(seed: int):
    model = build_model(tiny_config(seed=seed))
    rng = CounterRng(seed + 1)
    x = Tensor(rng.uniform(3 * 8 * 8).reshape(1, 3, 8, 8))

    def run(t):
        return tsum(tabs(forward(model, t)))

    return [("tiny_model", x, run)]


GRADCHECK_SCOPES = {
    "ops": _op_checks,
    "sfg_ffn": _sfg_checks,
    "swin": _swin_checks,
    "model": _model_checks,
}


def cmd_gradcheck(args) -> int:
    for name in os.environ.get("SFG_FAULT_INJECT", "").split(","):
        name = name.strip()
        if name:
            if name not in tensor._FAULT_INJECT:
                raise UsageError(f"unknown fault hook {name!r}")
            tensor._FAULT_INJECT[name] = True
    scopes = list(GRADCHECK_SCOPES) if args.scope == "all" else [args.scope]
    failed = False
    for scope in scopes:
        tol = 1e-3 if scope == "model" else 1e-4
        for s in range(args.seeds):
            for name, x, fn in GRADCHECK_SCOPES[scope](args.seed + 17 * s):
                report = grad_check(fn, x, tol=tol)
                status = "pass" if report.passed else "FAIL"
                print(f"{name} seed={args.seed + 17 * s} "
                      f"max_rel_err={report.max_rel_err:.3e} {status}")
                failed = failed or not report.passed
    return EXIT_VERIFY if failed else EXIT_OK


# -- train / ablate -----------------------------------------------------------------


def _build_pairs(args) -> list:
    _require_dir(args.data_dir, "data directory")
    config = DegradationConfig(scale=args.scale, seed=args.degrade_seed)
    names = _list_images(args.data_dir)
    if not names:
        raise UsageError(f"no images in {args.data_dir!r}")
    pairs = []
    for index, name in enumerate(names):
        hr = serialize.read_image(os.path.join(args.data_dir, name))
        lr = degrade(hr, config, image_index=index)
        if args.patch_size:
            pairs.extend(
                extract_patch_pairs(
                    hr, lr, args.patch_size, args.scale,
                    args.patches_per_image, args.degrade_seed + index,
                )
            )
        else:
            pairs.append((lr, hr))
    return pairs


def _parse_loss_terms(spec: str) -> LossWeights:
    terms = [t.strip() for t in spec.split(",") if t.strip()]
    for t in terms:
        if t not in ("l1", "ssim", "edge", "freq"):
            raise UsageError(f"unknown loss term {t!r}")
    return LossWeights.only(*terms)


def _write_history_csv(path: str, history: list):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["step", "lr", "total", "l1", "ssim", "edge", "freq"])
        for row in history:
            wr.writerow([row["step"], f"{row['lr']:.8e}", f"{row['total']:.8e}",
                         row["l1"], row["ssim"], row["edge"], row["freq"]])


def cmd_train(args) -> int:
    from sfgsr.trainer import TrainConfig, evaluate, train

    pairs = _build_pairs(args)
    os.makedirs(args.out_dir, exist_ok=True)

    cfg = TrainConfig(
        lr0=args.lr0,
        lr_min=args.lr_min,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        total_steps=args.steps,
        seed=args.seed,
        loss=_parse_loss_terms(args.loss_terms),
        checkpoint_every=args.checkpoint_every,
    )
    if args.resume:
        model, opt_state, step, data_c, reg_c = serialize.load_training_checkpoint(
            args.resume
        )
        history = train(
            model, pairs, cfg, out_dir=args.out_dir, start_step=step,
            opt_state=opt_state, data_counter=data_c, reg_counter=reg_c,
        )
    else:
        if args.config:
            mcfg = serialize.parse_config_file(args.config)
        else:
            mcfg = tiny_config(seed=args.seed)
        mcfg.ffn_kind = args.ffn
        mcfg.validate()
        model = build_model(mcfg)
        history = train(model, pairs, cfg, out_dir=args.out_dir)

    _write_history_csv(os.path.join(args.out_dir, "history.csv"), history)
    serialize.save_model_checkpoint(os.path.join(args.out_dir, "final.sfgc"), model)
    metrics = evaluate(model, pairs)
    if history:
        print(f"final total loss: {history[-1]['total']:.6f}")
    print(
        f"train-set metrics: psnr={metrics['psnr']:.4f} "
        f"ssim={metrics['ssim']:.6f} mae={metrics['mae']:.6f}"
    )
    return EXIT_OK


def cmd_ablate(args) -> int:
    from sfgsr.trainer import run_ablation

    pairs = _build_pairs(args)
    rows = run_ablation(pairs, steps=args.steps, seed=args.seed)
    display = [
        (
            r["backbone"],
            r["loss_terms"],
            f"{r['final_loss']:.6f}",
            f"{r['psnr']:.4f}" if math.isfinite(r["psnr"]) else "inf",
            f"{r['ssim']:.6f}",
            f"{r['mae']:.6f}",
        )
        for r in rows
    ]
    print(_format_table(
        ["backbone", "loss_terms", "final_loss", "psnr", "ssim", "mae"], display
    ))
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["backbone", "loss_terms", "final_loss", "psnr", "ssim", "mae"])
            for row in display:
                wr.writerow(row)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def _add_data_args(p):
    p.add_argument("data_dir", help="directory of HR images")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--degrade-seed", type=int, default=42)
    p.add_argument("--patch-size", type=int, default=0,
                   help="LR patch size; 0 trains on whole images")
    p.add_argument("--patches-per-image", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfgsr", description="Spatial-frequency gated Swin super-resolution"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="simulate HR -> LR acquisition")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--blur-sigma", type=float, default=1.0)
    p.add_argument("--kernel-size", type=int, default=7)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--noise-sigma", type=float, default=2.0 / 255.0)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("sr", help="run checkpoint inference over a directory")
    p.add_argument("checkpoint")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("metrics", help="PSNR/SSIM/MAE over paired directories")
    p.add_argument("sr_dir")
    p.add_argument("ref_dir")
    p.add_argument("--csv", default="")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="parameter and FLOP report")
    p.add_argument("source", help="config file, checkpoint, or "
                                  "full-sfg | full-baseline | tiny")
    p.add_argument("--input-size", type=int, nargs=2, default=(64, 64),
                   metavar=("H", "W"))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--scope", choices=[*GRADCHECK_SCOPES, "all"], default="all")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="train on degraded patches")
    _add_data_args(p)
    p.add_argument("out_dir")
    p.add_argument("--config", default="", help="model config file")
    p.add_argument("--ffn", choices=["sfg", "baseline"], default="sfg")
    p.add_argument("--loss-terms", default="l1,ssim,edge,freq")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr0", type=float, default=2e-4)
    p.add_argument("--lr-min", type=float, default=1e-6)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--resume", default="")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="run the backbone/loss ablation grid")
    _add_data_args(p)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--csv", default="")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ShapeError, UsageError, OSError) as e:
        print(f"sfgsr {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
