"""Denoising score-matching training loop.

Each step draws per-row noise levels from a log-normal, corrupts the batch
additively, and regresses the preconditioned network output back onto the
clean features under the weighting (sigma^2 + sigma_data^2) / (sigma *
sigma_data)^2, which keeps the effective loss scale flat across noise
levels.  Optimization is Adam with decoupled weight decay, an inverse
time-decay learning rate, and an exponential moving average of the
weights kept alongside the raw ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import autodiff as ad
from .network import DenoiserParams, Preconditioner, fourier_embed, forward_raw, scalings
from .rng import Rng


@dataclass(frozen=True)
class TrainNoiseConfig:
    """Log-normal over training noise levels: ln sigma ~ N(p_mean, p_std^2)."""

    p_mean: float = -1.2
    p_std: float = 1.2

    def __post_init__(self):
        if not np.isfinite(self.p_mean) or not np.isfinite(self.p_std) or self.p_std <= 0:
            raise ValueError(f"need finite p_mean and p_std > 0, got ({self.p_mean}, {self.p_std})")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8192
    base_lr: float = 2e-4
    weight_decay: float = 1e-4
    inv_gamma: float = 20000.0
    power: float = 1.0
    ema_decay: float = 0.999

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.base_lr <= 0 or self.inv_gamma <= 0 or self.power < 0:
            raise ValueError("learning rate schedule parameters must be positive")
        if not 0 <= self.ema_decay < 1:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


def sample_train_sigma(rng: Rng, cfg: TrainNoiseConfig, n: int) -> np.ndarray:
    """n log-normal noise levels, one per batch row."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    z = rng.standard_normal(n, dtype=np.float64)
    return np.exp(cfg.p_mean + cfg.p_std * z)


def loss_weight(p: Preconditioner, sigma):
    """(sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.

    Exactly cancels c_out^2, so every noise level contributes at unit
    scale to the training objective.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be > 0")
    sd = p.sigma_data
    return (sigma**2 + sd**2) / (sigma * sd) ** 2


def _var_view(params: DenoiserParams):
    """params with every trainable tensor wrapped as an autodiff leaf."""
    names = DenoiserParams._TRAINABLE
    leaves = []
    layers = []
    for lay in params.layers:
        wrapped = {n: ad.Var(getattr(lay, n), requires_grad=True) for n in names}
        leaves.extend(wrapped[n] for n in names)
        layers.append(SimpleNamespace(**wrapped))
    out_w = ad.Var(params.out_w, requires_grad=True)
    out_b = ad.Var(params.out_b, requires_grad=True)
    leaves.extend([out_w, out_b])
    view = SimpleNamespace(config=params.config, freqs=params.freqs,
                           layers=layers, out_w=out_w, out_b=out_b)
    return view, leaves


def dsm_loss(params: DenoiserParams, p: Preconditioner, x: np.ndarray,
             sigma: np.ndarray, rng: Rng):
    """Weighted reconstruction loss on one batch, plus parameter gradients.

    Returns (loss, grads): the loss reduced in float64, and gradients
    aligned with params.trainable().  The corruption eps is drawn from
    rng inside, one standard-normal row per instance.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a nonempty 2-D batch, got shape {x.shape}")
    n, d = x.shape
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (n,):
        raise ValueError(f"sigma must have shape ({n},), got {sigma.shape}")

    dt = params.dtype
    eps = rng.standard_normal(x.shape, dtype=np.float64)
    noised = x.astype(np.float64) + eps * sigma[:, None]

    c_skip, c_out, c_in, c_noise = scalings(p, sigma)
    lam = loss_weight(p, sigma)
    emb = fourier_embed(params, c_noise)

    view, leaves = _var_view(params)
    f = forward_raw(view, (c_in[:, None] * noised).astype(dt), None, embedding=emb)
    denoised = ad.add(ad.mul(f, c_out[:, None].astype(dt)),
                      (c_skip[:, None] * noised).astype(dt))
    diff = ad.sub(denoised, x.astype(dt))
    row_err = ad.vsum(ad.mul(diff, diff), axis=1)
    total = ad.vsum(ad.mul(row_err, lam.astype(dt)))
    loss = ad.mul(total, dt.type(1.0 / (n * d)))
    ad.backward(loss)
    grads = [v.grad if v.grad is not None else np.zeros_like(v.value) for v in leaves]

    resid = denoised.value.astype(np.float64) - x.astype(np.float64)
    reported = float(np.sum(np.sum(resid**2, axis=1) * lam) / (n * d))
    return reported, grads


@dataclass
class OptimizerState:
    """Adam moments plus every knob the update rule needs, EMA included."""

    m: list
    v: list
    ema: DenoiserParams
    step: int = 0
    base_lr: float = 2e-4
    weight_decay: float = 1e-4
    inv_gamma: float = 20000.0
    power: float = 1.0
    ema_decay: float = 0.999
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: DenoiserParams, cfg: TrainConfig) -> "OptimizerState":
        tensors = params.trainable()
        return cls(
            m=[np.zeros_like(t) for t in tensors],
            v=[np.zeros_like(t) for t in tensors],
            ema=params.copy(),
            base_lr=cfg.base_lr,
            weight_decay=cfg.weight_decay,
            inv_gamma=cfg.inv_gamma,
            power=cfg.power,
            ema_decay=cfg.ema_decay,
        )


def inverse_lr(state: OptimizerState) -> float:
    """base_lr / (1 + step / inv_gamma)^power; equals base_lr at step 0."""
    if state.step < 0:
        raise ValueError(f"step must be >= 0, got {state.step}")
    return state.base_lr / (1.0 + state.step / state.inv_gamma) ** state.power


def adam_step(state: OptimizerState, params: DenoiserParams, grads) -> DenoiserParams:
    """One in-place Adam update with decoupled weight decay (lr * wd * p)."""
    tensors = params.trainable()
    if len(grads) != len(state.m) or len(tensors) != len(state.m):
        raise ValueError("tensor, gradient, and state counts must match")
    for p_, g in zip(tensors, grads):
        if p_.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p_.shape}")
    lr = inverse_lr(state)
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p_, g, m, v in zip(tensors, grads, state.m, state.v):
        g = g.astype(p_.dtype, copy=False)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p_ -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            p_ -= (lr * state.weight_decay) * p_
    return params


def ema_update(state: OptimizerState, params: DenoiserParams) -> DenoiserParams:
    """ema <- decay * ema + (1 - decay) * params, trainable tensors only."""
    d = state.ema_decay
    for e, p_ in zip(state.ema.trainable(), params.trainable()):
        e *= d
        e += (1.0 - d) * p_
    return state.ema


@dataclass
class EpochLog:
    epoch: int
    step: int
    lr: float
    mean_loss: float


def fit(dataset, params: DenoiserParams, p: Preconditioner, cfg: TrainConfig,
        noise_cfg: TrainNoiseConfig, rng: Rng,
        on_epoch=None) -> tuple[DenoiserParams, list[EpochLog]]:
    """Train params in place on the dataset's feature rows.

    `dataset` is a FeatureSet or a plain (n, dim) array; only the feature
    matrix is ever touched, so labels cannot influence the result.  The
    final short batch of an epoch is used, not dropped.  Returns the EMA
    weights and one log entry per epoch: (epoch index, total optimizer
    steps completed, learning rate at the epoch start, mean batch loss).
    Raises FloatingPointError as soon as a batch loss stops being finite.
    """
    x = np.asarray(getattr(dataset, "features", dataset))
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a nonempty 2-D feature array, got shape {x.shape}")
    n = x.shape[0]

    shuffle_rng = rng.split("shuffle")
    noise_rng = rng.split("train-noise")
    state = OptimizerState.init(params, cfg)
    history: list[EpochLog] = []
    for epoch in range(cfg.epochs):
        lr_epoch = inverse_lr(state)
        perm = shuffle_rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            batch = x[perm[lo : lo + cfg.batch_size]]
            sigma = sample_train_sigma(noise_rng, noise_cfg, batch.shape[0])
            loss, grads = dsm_loss(params, p, batch, sigma, noise_rng)
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, step {state.step}"
                )
            adam_step(state, params, grads)
            ema_update(state, params)
            losses.append(loss)
        entry = EpochLog(epoch, state.step, lr_epoch, float(np.mean(losses)))
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
    return state.ema, history
