"""Noise schedules for discrete-time and continuous-time samplers.

Two discretizations are built here and used everywhere else:

* ``DiscreteNoiseSchedule`` -- the classic variance schedule {beta_t} of an
  ancestral (DDPM-style) chain, with the derived quantities alpha_t = 1 - beta_t,
  alpha_bar_t = prod_{i<=t} alpha_i and the reverse-posterior variances
  beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.
* ``ContinuousTimeGrid`` -- a strictly decreasing sigma grid for ODE/SDE
  solvers, built by power interpolation between sigma_max and sigma_min with a
  terminal 0 appended.

Both are computed eagerly at construction, validated, and frozen; they are safe
to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiscreteNoiseSchedule",
    "ContinuousTimeGrid",
    "linear_beta_schedule",
    "power_sigma_grid",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DiscreteNoiseSchedule:
    """Variance schedule of a T-step discrete noising chain.

    Arrays are 0-indexed internally: ``betas[i]`` holds beta_{i+1}.  The
    1-based accessors (`beta`, `alpha`, `alpha_bar`, `posterior_beta`) match
    the conventional t = 1..T indexing of the chain.

    beta_tilde_1 is defined to be 0 (alpha_bar_0 := 1), so the final ancestral
    step adds no noise.
    """

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)
    posterior_betas: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        betas = np.atleast_1d(np.asarray(self.betas, dtype=np.float64))
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a nonempty 1-D sequence (T >= 1)")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ValueError("every beta_t must lie strictly inside (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        if not np.all(np.diff(alpha_bars) < 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        # alpha_bar_0 := 1 makes beta_tilde_1 = 0 exactly.
        prev_bars = np.concatenate(([1.0], alpha_bars[:-1]))
        posterior = (1.0 - prev_bars) / (1.0 - alpha_bars) * betas
        object.__setattr__(self, "betas", _frozen(betas))
        object.__setattr__(self, "alphas", _frozen(alphas))
        object.__setattr__(self, "alpha_bars", _frozen(alpha_bars))
        object.__setattr__(self, "posterior_betas", _frozen(posterior))

    @property
    def step_count(self) -> int:
        return int(self.betas.size)

    # ---- 1-based accessors, t in 1..T -------------------------------------

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.step_count:
            raise IndexError(f"step index t={t} outside 1..{self.step_count}")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self._check_t(t) - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_t(t) - 1])

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[self._check_t(t) - 1])

    def alpha_bar_prev(self, t: int) -> float:
        """alpha_bar_{t-1}, with alpha_bar_0 = 1."""
        t = self._check_t(t)
        return 1.0 if t == 1 else float(self.alpha_bars[t - 2])

    def posterior_beta(self, t: int) -> float:
        return float(self.posterior_betas[self._check_t(t) - 1])

    def to_json(self) -> dict:
        return {"T": self.step_count, "betas": self.betas.tolist()}


@dataclass(frozen=True)
class ContinuousTimeGrid:
    """Strictly decreasing sigma grid with an exact terminal zero.

    ``sigmas`` has N+1 entries: sigmas[0] = sigma_max, sigmas[N-1] = sigma_min
    and sigmas[N] = 0.  An N-step solver takes one step per adjacent pair, so
    N counts slope intervals (the final interval lands exactly at sigma = 0).
    """

    sigmas: np.ndarray
    sigma_min: float
    sigma_max: float
    rho: float

    def __post_init__(self) -> None:
        sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if sigmas.ndim != 1 or sigmas.size < 2:
            raise ValueError("sigma grid needs at least one live node plus terminal 0")
        if sigmas[-1] != 0.0:
            raise ValueError("sigma grid must end at exactly 0")
        if not np.all(np.diff(sigmas) < 0.0):
            raise ValueError("sigma grid must be strictly decreasing")
        object.__setattr__(self, "sigmas", _frozen(sigmas))

    @property
    def node_count(self) -> int:
        """Number of live (nonzero) nodes, equal to the solver step count."""
        return int(self.sigmas.size) - 1

    def to_json(self) -> dict:
        return {"sigmas": self.sigmas.tolist()}


def linear_beta_schedule(
    T: int, beta_start: float = 1e-4, beta_end: float = 0.02
) -> DiscreteNoiseSchedule:
    """Linearly interpolated beta schedule from beta_start (t=1) to beta_end (t=T)."""
    T = int(T)
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise ValueError("beta endpoints must lie strictly inside (0, 1)")
    if beta_start > beta_end:
        raise ValueError("beta_start must not exceed beta_end")
    betas = np.linspace(beta_start, beta_end, T)
    return DiscreteNoiseSchedule(betas=betas)


def power_sigma_grid(
    N: int, sigma_min: float = 0.002, sigma_max: float = 80.0, rho: float = 7.0
) -> ContinuousTimeGrid:
    """Power-interpolated sigma grid: rho=7 front-loads resolution at small sigma.

    sigmas[i] = (sigma_max^(1/rho) + i/(N-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho
    for i = 0..N-1, with a terminal 0 appended.  rho=1 reduces to a uniform grid.
    """
    N = int(N)
    if N < 2:
        raise ValueError("N must be >= 2 (need distinct sigma_max and sigma_min nodes)")
    if not (0.0 < sigma_min < sigma_max):
        raise ValueError("require 0 < sigma_min < sigma_max")
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    ramp = np.arange(N, dtype=np.float64) / (N - 1)
    inv = 1.0 / rho
    live = (sigma_max**inv + ramp * (sigma_min**inv - sigma_max**inv)) ** rho
    # Pin the endpoints exactly; the power round trip can wobble in the last ulp.
    live[0] = sigma_max
    live[-1] = sigma_min
    sigmas = np.concatenate((live, [0.0]))
    return ContinuousTimeGrid(
        sigmas=sigmas, sigma_min=float(sigma_min), sigma_max=float(sigma_max), rho=float(rho)
    )
