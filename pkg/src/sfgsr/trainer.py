"""Desk-scale training loop: AdamW with decoupled weight decay, cosine
annealing, seeded batching, checkpointing, and the ablation grid runner.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from sfgsr.losses import LossWeights, mae, psnr, ssim_score, total_loss
from sfgsr.model import Model, build_model, forward, model_params, tiny_config
from sfgsr.rng import CounterRng, derive_seed
from sfgsr.tensor import ShapeError, Tape, Tensor, UsageError, backward


@dataclass
class TrainConfig:
    lr0: float = 2e-4
    lr_min: float = 1e-6
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    total_steps: int = 200
    seed: int = 42
    loss: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    grad_clip: float = 0.0     # 0 disables clipping

    def validate(self):
        if self.lr_min > self.lr0:
            raise UsageError(f"lr_min {self.lr_min} > lr0 {self.lr0}")
        if self.total_steps < 1:
            raise UsageError(f"total_steps {self.total_steps} must be >= 1")
        for b in (self.beta1, self.beta2):
            if not 0.0 <= b < 1.0:
                raise UsageError(f"betas must be in [0,1), got {b}")


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0


def cosine_lr(step: int, total_steps: int, lr0: float, lr_min: float) -> float:
    """lr_min + 0.5*(lr0 - lr_min)*(1 + cos(pi * step / total_steps))."""
    if not 0 <= step <= total_steps:
        raise UsageError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def init_optimizer(params) -> OptimizerState:
    return OptimizerState(
        m={n: np.zeros_like(t.data) for n, t in params},
        v={n: np.zeros_like(t.data) for n, t in params},
    )


def adamw_step(params, state: OptimizerState, lr: float, cfg: TrainConfig):
    """Bias-corrected Adam plus decoupled decay -lr*wd*theta.

    Norm scales/shifts and biases (ndim <= 1 tensors) are excluded from
    weight decay. Parameters with no gradient are decayed only.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params:
        g = p.grad
        theta = p.data
        if g is not None:
            if g.shape != theta.shape:
                raise ShapeError(f"grad {g.shape} vs param {theta.shape} for {name}")
            if cfg.grad_clip > 0:
                norm = float(np.sqrt((g.astype(np.float64) ** 2).sum()))
                if norm > cfg.grad_clip:
                    g = g * (cfg.grad_clip / norm)
            m = state.m[name]
            v = state.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
            theta -= (lr * update).astype(theta.dtype)
        if cfg.weight_decay > 0 and p.ndim > 1:
            theta -= np.asarray(lr * cfg.weight_decay, dtype=theta.dtype) * theta


def _stack_batch(pairs, idx, dtype=np.float32):
    lr = np.stack([pairs[i][0] for i in idx]).astype(dtype)
    hr = np.stack([pairs[i][1] for i in idx]).astype(dtype)
    return Tensor(lr), Tensor(hr)


def train(
    model: Model,
    pairs,
    cfg: TrainConfig,
    out_dir: str = None,
    start_step: int = 0,
    opt_state: OptimizerState = None,
    data_counter: int = 0,
    reg_counter: int = 0,
) -> list[dict]:
    """Run (total_steps - start_step) optimization steps; returns history rows.

    Fully deterministic given (model init, pairs, cfg): batch order,
    dropout, and stochastic depth all draw from counter-based streams.
    Periodic checkpoints carry everything needed for bitwise resume.
    """
    cfg.validate()
    if not pairs:
        raise UsageError("train: empty patch source")
    params = model_params(model)
    if opt_state is None:
        opt_state = init_optimizer(params)
    data_rng = CounterRng(derive_seed(cfg.seed, 1), counter=data_counter)
    reg_rng = CounterRng(derive_seed(cfg.seed, 2), counter=reg_counter)

    history = []
    for step in range(start_step, cfg.total_steps):
        idx = data_rng.integers(cfg.batch_size, len(pairs))
        lr_t, hr_t = _stack_batch(pairs, idx)
        with Tape() as tape:
            sr = forward(model, lr_t, training=True, rng=reg_rng)
            loss, terms = total_loss(sr, hr_t, cfg.loss)
        loss_val = float(loss.data)
        if not math.isfinite(loss_val):
            raise UsageError(
                f"non-finite loss at step {step}, batch indices {idx.tolist()}"
            )
        backward(tape, loss)
        lr = cosine_lr(step, cfg.total_steps, cfg.lr0, cfg.lr_min)
        adamw_step(params, opt_state, lr, cfg)
        for _, p in params:
            p.grad = None
        row = {"step": step, "lr": lr, "total": loss_val}
        row.update(terms)
        history.append(row)

        done = step + 1
        if out_dir and cfg.checkpoint_every and (
            done % cfg.checkpoint_every == 0 or done == cfg.total_steps
        ):
            from sfgsr import serialize

            path = os.path.join(out_dir, f"step{done:06d}.sfgc")
            serialize.save_training_checkpoint(
                path, model, opt_state, done, data_rng.counter, reg_rng.counter
            )
    return history


def evaluate(model: Model, pairs) -> dict:
    """Mean PSNR/SSIM/MAE of model outputs over (lr, hr) pairs."""
    ps, ss, ms = [], [], []
    for lr, hr in pairs:
        sr = forward(model, Tensor(lr[None].astype(np.float32))).data[0]
        sr = np.clip(sr, 0.0, 1.0)
        ps.append(psnr(sr, hr))
        ss.append(ssim_score(sr, hr))
        ms.append(mae(sr, hr))
    return {
        "psnr": float(np.mean(ps)),
        "ssim": float(np.mean(ss)),
        "mae": float(np.mean(ms)),
    }


ABLATION_GRID = (
    ("baseline", ("l1",)),
    ("baseline", ("l1", "ssim", "edge", "freq")),
    ("sfg", ("l1",)),
    ("sfg", ("l1", "ssim")),
    ("sfg", ("l1", "ssim", "edge", "freq")),
)


def run_ablation(pairs, steps: int = 50, seed: int = 42, train_cfg: TrainConfig = None):
    """Train the 5-row backbone/loss grid at tiny scale; returns result rows."""
    rows = []
    for ffn_kind, terms in ABLATION_GRID:
        cfg = TrainConfig() if train_cfg is None else TrainConfig(**vars(train_cfg))
        cfg.total_steps = steps
        cfg.seed = seed
        cfg.loss = LossWeights.only(*terms)
        model = build_model(tiny_config(ffn_kind=ffn_kind, seed=seed))
        history = train(model, pairs, cfg)
        metrics = evaluate(model, pairs)
        rows.append(
            {
                "backbone": ffn_kind,
                "loss_terms": "+".join(terms),
                "final_loss": history[-1]["total"],
                **metrics,
            }
        )
    return rows
