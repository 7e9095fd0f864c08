"""Reference volatility sequences for the feedback simulation.

Three kinds:

``gaussian``
    sigma = 1 everywhere; all randomness then comes from the Gaussian noise.
``ez``
    Eguíluz-Zimmermann herding market. Agents form clusters that merge
    over time and dissolve when they trade; sigma is the size of each trading
    cluster. Fat tailed, without volatility memory.
``longmemory``
    Log-normal stochastic volatility exp(g) with g a fractional Gaussian
    noise of Hurst index H > 1/2. Fat tailed with power-law volatility
    memory. Stands in for a herding model with both properties.

Every sequence is rescaled to unit mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadParameters

KINDS = ("gaussian", "ez", "longmemory")

EZ_DEFAULTS = {"n_agents": 10_000, "a": 0.3}
LONGMEMORY_DEFAULTS = {"hurst": 0.85, "vol_of_logvol": 0.8}

# Merge/trade steps run before recording, per agent.
EZ_WARMUP_PER_AGENT = 10


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    length: int
    seed: int = 0
    n_agents: int = EZ_DEFAULTS["n_agents"]
    a: float = EZ_DEFAULTS["a"]
    hurst: float = LONGMEMORY_DEFAULTS["hurst"]
    vol_of_logvol: float = LONGMEMORY_DEFAULTS["vol_of_logvol"]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadParameters(f"unknown generator {self.kind!r}; choose from {KINDS}")
        if self.length < 1:
            raise BadParameters("length must be at least 1")
        if self.kind == "ez":
            if self.n_agents < 2:
                raise BadParameters("EZ model needs at least 2 agents")
            if not 0 < self.a < 1:
                raise BadParameters("EZ activity a must lie in (0, 1)")
        if self.kind == "longmemory":
            if not 0.5 < self.hurst < 1:
                raise BadParameters("hurst must lie in (0.5, 1)")
            if not self.vol_of_logvol > 0:
                raise BadParameters("vol_of_logvol must be positive")

    def describe(self) -> dict:
        d = {"kind": self.kind, "length": self.length, "seed": self.seed}
        if self.kind == "ez":
            d.update(n_agents=self.n_agents, a=self.a, warmup_steps=EZ_WARMUP_PER_AGENT * self.n_agents)
        elif self.kind == "longmemory":
            d.update(hurst=self.hurst, vol_of_logvol=self.vol_of_logvol, method="circulant embedding (Davies-Harte)")
        return d


def fgn_autocovariance(n: int, hurst: float) -> np.ndarray:
    """Autocovariance of unit-variance fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


def fractional_gaussian_noise(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Exact fGn sample of length n by circulant embedding.

    The autocovariance row is embedded in a circulant matrix of size 2n, whose
    eigenvalues come from one FFT; for H >= 1/2 they are non-negative.
    """
    if n < 1:
        raise BadParameters("n must be positive")
    if n == 1:
        return rng.standard_normal(1)
    gamma = fgn_autocovariance(n + 1, hurst)
    row = np.concatenate([gamma[: n + 1], gamma[n - 1 : 0 : -1]])
    m = len(row)
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise BadParameters(f"circulant embedding not positive definite for H={hurst}")
    lam = np.clip(lam, 0.0, None)
    w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(np.sqrt(lam / m) * w).real[:n]


class EZState:
    """Cluster partition of the EZ market.

    ``label[i]`` is the cluster id of agent i, or -1 for a lone agent;
    ``members`` maps ids of clusters with two or more agents to their agents.
    """

    def __init__(self, n_agents: int):
        self.n_agents = n_agents
        self.label = [-1] * n_agents
        self.members: dict[int, list[int]] = {}
        self._next_id = 0

    def cluster_of(self, i: int) -> list[int]:
        c = self.label[i]
        return [i] if c < 0 else self.members[c]

    def cluster_sizes(self) -> list[int]:
        singles = sum(1 for c in self.label if c < 0)
        return [len(m) for m in self.members.values()] + [1] * singles

    def dissolve(self, i: int) -> int:
        c = self.label[i]
        if c < 0:
            return 1
        agents = self.members.pop(c)
        for j in agents:
            self.label[j] = -1
        return len(agents)

    def merge(self, i: int, j: int) -> bool:
        ci, cj = self.label[i], self.label[j]
        if ci >= 0 and ci == cj:
            return False
        big, small = self.cluster_of(i), self.cluster_of(j)
        if len(big) < len(small):
            big, small, ci, cj = small, big, cj, ci
        if ci < 0:
            ci = self._next_id
            self._next_id += 1
            self.members[ci] = big
            self.label[big[0]] = ci
        for a in small:
            self.label[a] = ci
        big.extend(small)
        if cj >= 0:
            del self.members[cj]
        return True


def ez_step(state: EZState, a: float, rng: np.random.Generator) -> tuple[EZState, float]:
    """One update of the EZ market; the state is modified in place.

    With probability ``a`` the cluster of a random agent trades: it emits a
    return of +-size/n_agents (fair sign) and breaks up into lone agents.
    Otherwise the clusters of two distinct random agents merge and the
    emitted return is 0.
    """
    n = state.n_agents
    if rng.random() < a:
        size = state.dissolve(int(rng.integers(n)))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return state, sign * size / n
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    state.merge(i, j)
    return state, 0.0


def ez_returns(n_agents: int, a: float, n_trades: int, rng: np.random.Generator, warmup: int = 0) -> np.ndarray:
    """Signed returns of the first ``n_trades`` trades after ``warmup`` steps."""
    state = EZState(n_agents)
    for _ in range(warmup):
        ez_step(state, a, rng)
    out = np.empty(n_trades)
    k = 0
    while k < n_trades:
        _, ret = ez_step(state, a, rng)
        if ret != 0.0:
            out[k] = ret
            k += 1
    return out


def generate_sigma(spec: GeneratorSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        return np.ones(spec.length)
    if spec.kind == "ez":
        warmup = EZ_WARMUP_PER_AGENT * spec.n_agents
        sizes = np.abs(ez_returns(spec.n_agents, spec.a, spec.length, rng, warmup))
        return sizes / sizes.mean()
    g = spec.vol_of_logvol * fractional_gaussian_noise(spec.length, spec.hurst, rng)
    sigma = np.exp(g)
    return sigma / sigma.mean()
