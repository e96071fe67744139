"""Noise schedule and the probability-flow ODE sampler.

Sampling integrates dx/dsigma = (x - D(x; sigma)) / sigma from high noise
down to zero along a rho-spaced sigma grid.  The multistep update fits a
polynomial through the most recent derivatives and integrates it exactly
over [sigma_i, sigma_{i+1}]; with order 1 it reduces to the Euler method.

The denoiser enters as a plain callable (x, sigma) -> x_hat; see
network.as_denoiser for the standard preconditioned network wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .rng import Rng
from .training import TrainNoiseConfig

Denoiser = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ScheduleConfig:
    sigma_min: float = 0.02
    sigma_max: float = 80.0
    rho: float = 7.0
    steps: int = 10

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise ValueError(
                f"need 0 < sigma_min < sigma_max, got ({self.sigma_min}, {self.sigma_max})"
            )
        if not np.isfinite(self.sigma_max):
            raise ValueError("sigma_max must be finite")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.steps < 2:
            raise ValueError(f"steps must be >= 2, got {self.steps}")


def noise_bounds(cfg: TrainNoiseConfig) -> tuple[float, float]:
    """(sigma_min, sigma_max) spanning five log-normal standard deviations
    around the training noise distribution: e^(p_mean -+ 5 p_std).
    """
    return (
        float(np.exp(cfg.p_mean - 5.0 * cfg.p_std)),
        float(np.exp(cfg.p_mean + 5.0 * cfg.p_std)),
    )


def karras_schedule(cfg: ScheduleConfig) -> np.ndarray:
    """Decreasing sigma grid of length steps + 1, ending at exactly 0.

    The first and last nonzero entries are pinned to sigma_max and
    sigma_min so downstream code can rely on exact endpoints.
    """
    t = cfg.steps
    inv_rho = 1.0 / cfg.rho
    ramp = np.arange(t, dtype=np.float64) / (t - 1)
    lo, hi = cfg.sigma_min**inv_rho, cfg.sigma_max**inv_rho
    sigmas = (hi + ramp * (lo - hi)) ** cfg.rho
    sigmas[0] = cfg.sigma_max
    sigmas[-1] = cfg.sigma_min
    return np.append(sigmas, 0.0)


def ode_derivative(denoiser: Denoiser, x: np.ndarray, sigma: float) -> np.ndarray:
    """dx/dsigma = (x - D(x; sigma)) / sigma, i.e. -sigma times the score."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return (x - denoiser(x, sigma)) / sigma


def multistep_coeff(sigmas, i: int, j: int, cur_order: int) -> float:
    """Integral over [sigmas[i], sigmas[i+1]] of the Lagrange basis polynomial
    that is 1 at node sigmas[i - j] and 0 at the other cur_order - 1 nodes
    sigmas[i - k].  Built and integrated in closed form; for cur_order 1
    this is exactly sigmas[i+1] - sigmas[i].
    """
    if not 0 <= j < cur_order:
        raise ValueError(f"j must lie in [0, {cur_order}), got {j}")
    poly = Polynomial([1.0])
    xj = sigmas[i - j]
    for k in range(cur_order):
        if k == j:
            continue
        xk = sigmas[i - k]
        poly = poly * Polynomial([-xk, 1.0]) / (xj - xk)
    anti = poly.integ()
    return float(anti(sigmas[i + 1]) - anti(sigmas[i]))


def lms_sample(denoiser: Denoiser, x: np.ndarray, sigmas: np.ndarray,
               order: int = 4, start_index: int = 0) -> np.ndarray:
    """Integrate the ODE from sigmas[start_index] down to the final 0.

    `x` must already be at noise level sigmas[start_index].  With
    start_index == len(sigmas) - 1 (the zero entry) the input is returned
    unchanged.  Derivative history grows from 1 up to `order` entries, so
    the first step is exactly an Euler step.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    n_steps = len(sigmas) - 1
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if not 0 <= start_index <= n_steps:
        raise ValueError(f"start_index {start_index} outside [0, {n_steps}]")
    x = np.array(x, copy=True)
    history: list[np.ndarray] = []
    for i in range(start_index, n_steps):
        d = ode_derivative(denoiser, x, float(sigmas[i]))
        history.append(d)
        if len(history) > order:
            history.pop(0)
        cur_order = len(history)
        coeffs = [multistep_coeff(sigmas, i, j, cur_order) for j in range(cur_order)]
        for coeff, deriv in zip(coeffs, reversed(history)):
            x = x + coeff * deriv
    return x


def partial_reconstruct(denoiser: Denoiser, x0: np.ndarray, sigmas: np.ndarray,
                        t: int, rng: Rng, order: int = 4) -> np.ndarray:
    """Noise clean features up to sigmas[t], then integrate back down to 0.

    The corruption is additive, x0 + eps * sigmas[t] with standard normal
    eps, so t close to the end of the grid perturbs only slightly.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if not 0 <= t < len(sigmas) - 1:
        raise ValueError(f"t must lie in [0, {len(sigmas) - 2}], got {t}")
    x0 = np.asarray(x0)
    eps = rng.standard_normal(x0.shape, dtype=np.float64)
    noised = x0.astype(np.float64) + eps * sigmas[t]
    return lms_sample(denoiser, noised, sigmas, order=order, start_index=t)
