"""Mutual-information estimation with the Donsker-Varadhan lower bound.

The statistics network T(x, y) is a small MLP trained to maximize
mean_joint[T] - log(mean_marginal[exp T]); at the optimum the bound
approaches I(X; Y).  The gradient of the log-partition term is biased on
minibatches, so the denominator is tracked with an exponential moving
average when forming the training loss (the reported bound itself is the
plain batch estimate).

Synthetic correlated Gaussians provide the oracle: per-dimension
correlation rho gives I = -dim/2 * ln(1 - rho^2) nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class GaussianToySpec:
    dim: int = 1
    rho: float = 0.9
    n_samples: int = 4096
    seed: int = 0

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")


def analytic_gaussian_mi(rho: float, dim: int = 1) -> float:
    """Exact MI of per-coordinate-correlated Gaussians, in nats."""
    return -0.5 * dim * math.log(1.0 - rho * rho)


def sample_correlated_gaussians(spec: GaussianToySpec) -> tuple[torch.Tensor, torch.Tensor]:
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.n_samples, spec.dim))
    eps = rng.standard_normal((spec.n_samples, spec.dim))
    y = spec.rho * x + math.sqrt(1.0 - spec.rho**2) * eps
    return torch.from_numpy(x), torch.from_numpy(y)


@dataclass(frozen=True)
class LossConfigL1:
    """Semi-supervised loss weights: beta * SE - alpha * I(X; Y), plus the
    statistics-network hyperparameters for the MI term."""

    beta: float = 1.0
    alpha: float = 1.0
    mine_hidden: tuple[int, ...] = (64, 64)
    ma_rate: float = 0.01
    lr: float = 1e-3

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")


class StatsNet(nn.Module):
    def __init__(self, dim_x: int, dim_y: int, hidden=(64, 64)):
        super().__init__()
        sizes = [dim_x + dim_y, *hidden, 1]
        layers: list[nn.Module] = []
        for a, b in zip(sizes, sizes[1:]):
            layers.append(nn.Linear(a, b))
            layers.append(nn.ELU())
        layers.pop()  # no activation on the scalar output
        self.net = nn.Sequential(*layers).double()

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([x, y], dim=-1)).squeeze(-1)


def mine_lower_bound(x: torch.Tensor, y: torch.Tensor, stats_net: nn.Module) -> float:
    """DV bound on a batch: mean T over joint pairs minus log mean e^T over
    shuffled pairs (a one-position roll decouples x from y)."""
    if x.shape[0] != y.shape[0]:
        raise ValueError("batches must have equal size")
    if x.shape[0] < 2:
        raise ValueError("need a batch of at least 2 to form marginal pairs")
    with torch.no_grad():
        joint = stats_net(x, y).mean()
        marg = stats_net(x, torch.roll(y, 1, dims=0))
        bound = joint - torch.logsumexp(marg, dim=0) + math.log(marg.shape[0])
    return float(bound)


class MineEstimator:
    def __init__(self, dim_x: int, dim_y: int, cfg: LossConfigL1 = LossConfigL1(), seed: int = 0):
        torch.manual_seed(seed)
        self.cfg = cfg
        self.net = StatsNet(dim_x, dim_y, cfg.mine_hidden)
        self.opt = torch.optim.Adam(self.net.parameters(), lr=cfg.lr)
        self.ema_denom: torch.Tensor | None = None
        self._shuffle_rng = np.random.default_rng(seed)

    def step(self, x: torch.Tensor, y: torch.Tensor) -> float:
        """One maximization step; returns the batch DV bound."""
        perm = torch.from_numpy(self._shuffle_rng.permutation(y.shape[0]))
        joint = self.net(x, y).mean()
        marg = self.net(x, y[perm])
        denom = torch.exp(marg).mean()
        if self.ema_denom is None:
            self.ema_denom = denom.detach()
        else:
            self.ema_denom = (
                (1.0 - self.cfg.ma_rate) * self.ema_denom + self.cfg.ma_rate * denom.detach()
            )
        # EMA-corrected gradient of the log-partition term
        loss = -(joint - denom / self.ema_denom)
        self.opt.zero_grad()
        loss.backward()
        self.opt.step()
        return float((joint - torch.log(denom)).detach())

    def fit(
        self,
        x: torch.Tensor,
        y: torch.Tensor,
        steps: int = 1500,
        batch: int = 512,
    ) -> np.ndarray:
        """Train on random minibatches; returns the per-step bound curve."""
        n = x.shape[0]
        curve = np.empty(steps)
        for i in range(steps):
            idx = torch.from_numpy(self._shuffle_rng.integers(0, n, size=min(batch, n)))
            curve[i] = self.step(x[idx], y[idx])
        return curve

    def estimate(self, x: torch.Tensor, y: torch.Tensor) -> float:
        return mine_lower_bound(x, y, self.net)


def estimate_gaussian_mi(
    rho: float,
    dim: int = 1,
    seed: int = 0,
    steps: int = 1500,
    batch: int = 512,
    n_samples: int = 4096,
    cfg: LossConfigL1 = LossConfigL1(),
) -> tuple[float, np.ndarray]:
    """Train MINE on synthetic Gaussians; returns (held-out bound, curve)."""
    train = sample_correlated_gaussians(GaussianToySpec(dim, rho, n_samples, seed))
    held = sample_correlated_gaussians(GaussianToySpec(dim, rho, n_samples, seed + 10_000))
    est = MineEstimator(dim, dim, cfg, seed)
    curve = est.fit(*train, steps=steps, batch=batch)
    return est.estimate(*held), curve


# ---------------------------------------------------------------------------
# closed-form DV pieces (used by the gradient checks)


def dv_bound(t_joint: np.ndarray, t_marg: np.ndarray) -> float:
    return float(np.mean(t_joint) - np.log(np.mean(np.exp(t_marg))))


def dv_bound_grad(t_joint: np.ndarray, t_marg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the DV bound wrt the statistics values themselves."""
    g_joint = np.full_like(t_joint, 1.0 / t_joint.size)
    e = np.exp(t_marg)
    g_marg = -e / e.sum()
    return g_joint, g_marg
