"""Scenario generators and a Monte Carlo harness for comparing estimators.

Randomness: each replicate ``rep`` gets its own Philox stream keyed by
``(seed, rep)``. Unit i always consumes row i of an ``n x (2 + B)`` block
of uniforms (prior draw, latent variance draw, then one per replicate), and
every draw is an inverse-CDF transform of its uniform. Results therefore do
not depend on how reps are scheduled across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from scipy.special import ndtri

from .core import ReplicateMatrix, validate_matrix
from .errors import InvalidConfig, LengthMismatch, ScenarioFailure
from .estimators import EXTRA_METHODS, METHODS, MethodOptions, run_method
from .oracles import NormalNormalSpec, discrete_posterior_mean, nn_posterior_mean


# --------------------------------------------------------------------------
# priors

@dataclass(frozen=True)
class NormalPrior:
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not self.var >= 0:
            raise InvalidConfig(f"variance must be >= 0, got {self.var}", "prior.var")

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return self.mean + math.sqrt(self.var) * ndtri(u)


@dataclass(frozen=True)
class ThreePointPrior:
    """Equal mass on ``-a, 0, a`` with ``a = sqrt(3 var / 2)`` (variance ``var``)."""

    var: float = 1.0

    def __post_init__(self):
        if not self.var >= 0:
            raise InvalidConfig(f"variance must be >= 0, got {self.var}", "prior.var")

    @property
    def atoms(self) -> np.ndarray:
        a = math.sqrt(1.5 * self.var)
        return np.array([-a, 0.0, a])

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return self.atoms[np.minimum((u * 3.0).astype(np.intp), 2)]


@dataclass(frozen=True)
class UniformPrior:
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not self.low <= self.high:
            raise InvalidConfig(f"need low <= high, got [{self.low}, {self.high}]", "prior")

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return self.low + (self.high - self.low) * u


@dataclass(frozen=True)
class PointPrior:
    value: float = 0.0

    def quantile(self, u: np.ndarray) -> np.ndarray:
        return np.full(u.shape, float(self.value))


PriorSpec = Union[NormalPrior, ThreePointPrior, UniformPrior, PointPrior]


# --------------------------------------------------------------------------
# likelihoods; noise(mu, var_i, u) maps uniforms of shape (n, B) to draws

def _normal_noise(u, sd):
    return sd * ndtri(u)


def _laplace_noise(u, sd):
    b = sd / math.sqrt(2.0)
    return np.where(u < 0.5, b * np.log(2.0 * u), -b * np.log(2.0 * (1.0 - u)))


def _rect_noise(u, sd):
    return math.sqrt(3.0) * sd * (2.0 * u - 1.0)


_BASE_NOISE = {"normal": _normal_noise, "laplace": _laplace_noise, "rectangular": _rect_noise}


@dataclass(frozen=True)
class LocationLikelihood:
    """Location family with fixed variance: normal, laplace or rectangular."""

    family: str = "normal"
    var: float = 1.0

    def __post_init__(self):
        if self.family not in _BASE_NOISE:
            raise InvalidConfig(f"unknown family {self.family!r}", "likelihood.type")
        if not self.var > 0:
            raise InvalidConfig(f"variance must be > 0, got {self.var}", "likelihood.var")

    def draw(self, mu, u_latent, u):
        return mu[:, None] + _BASE_NOISE[self.family](u, math.sqrt(self.var)), mu


@dataclass(frozen=True)
class ParetoLikelihood:
    """Pareto with tail index ``alpha`` and scale chosen so the mean is mu."""

    alpha: float = 3.0

    def __post_init__(self):
        if not self.alpha > 1:
            raise InvalidConfig(f"tail index must be > 1, got {self.alpha}", "likelihood.alpha")

    def draw(self, mu, u_latent, u):
        if np.any(mu <= 0):
            raise InvalidConfig("Pareto likelihood needs a prior on (0, inf)", "prior")
        xm = mu * (self.alpha - 1.0) / self.alpha
        return xm[:, None] * u ** (-1.0 / self.alpha), mu


@dataclass(frozen=True)
class HeteroLikelihood:
    """Unit-specific variance: ``vbar_i ~ U[var_low, var_high]`` and each
    replicate has variance ``vbar_i * B``, so the unit mean has variance vbar_i.
    With ``mean_link='equal_to_var'`` the unit mean is replaced by vbar_i."""

    base: str = "normal"
    var_low: float = 0.1
    var_high: float = 1.0
    mean_link: str = "independent"

    def __post_init__(self):
        if self.base not in ("normal", "rectangular"):
            raise InvalidConfig(f"base must be normal or rectangular, got {self.base!r}",
                                "likelihood.base")
        if not 0 < self.var_low <= self.var_high:
            raise InvalidConfig(f"need 0 < var_low <= var_high, got {self.var_low}, {self.var_high}",
                                "likelihood")
        if self.mean_link not in ("independent", "equal_to_var"):
            raise InvalidConfig(f"unknown mean_link {self.mean_link!r}", "likelihood.mean_link")

    def draw(self, mu, u_latent, u):
        B = u.shape[1]
        vbar = self.var_low + (self.var_high - self.var_low) * u_latent
        if self.mean_link == "equal_to_var":
            mu = vbar
        sd = np.sqrt(vbar * B)[:, None]
        return mu[:, None] + _BASE_NOISE[self.base](u, sd), mu


LikelihoodSpec = Union[LocationLikelihood, ParetoLikelihood, HeteroLikelihood]


# --------------------------------------------------------------------------
# scenarios

SIM_METHODS = tuple(METHODS) + tuple(EXTRA_METHODS) + ("oracle-bayes",)


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    B: int
    reps: int
    seed: int
    prior: PriorSpec
    likelihood: LikelihoodSpec
    methods: tuple[str, ...] = ("mean",)
    options: MethodOptions = field(default_factory=MethodOptions)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.n < 1:
            raise InvalidConfig(f"must be >= 1, got {self.n}", "n")
        if self.B < 2:
            raise InvalidConfig(f"must be >= 2, got {self.B}", "B")
        if self.reps < 1:
            raise InvalidConfig(f"must be >= 1, got {self.reps}", "reps")
        if self.seed < 0:
            raise InvalidConfig(f"must be >= 0, got {self.seed}", "seed")
        if not self.methods:
            raise InvalidConfig("at least one method is required", "methods")
        for i, m in enumerate(self.methods):
            if m not in SIM_METHODS:
                raise InvalidConfig(f"unknown method {m!r}; valid methods: {', '.join(SIM_METHODS)}",
                                    f"methods[{i}]")

    def resolved_options(self) -> MethodOptions:
        """Options with the James-Stein variance filled in from a homoskedastic likelihood."""
        o = self.options
        if o.sigma2 is None and isinstance(self.likelihood, LocationLikelihood):
            o = replace(o, sigma2=self.likelihood.var)
        return o


def _uniforms(seed: int, rep: int, n: int, width: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    rng = np.random.Generator(np.random.Philox(ss))
    # k / 2**53 shifted by half a step lands strictly inside (0, 1)
    return rng.random((n, width)) + 2.0 ** -54


def sample_scenario(config: ScenarioConfig, rep_index: int) -> tuple[np.ndarray, ReplicateMatrix]:
    """Draw the true unit means and the replicate matrix for one Monte Carlo rep."""
    if rep_index < 0:
        raise InvalidConfig(f"rep index must be >= 0, got {rep_index}", "rep")
    U = _uniforms(config.seed, rep_index, config.n, config.B + 2)
    mu = config.prior.quantile(U[:, 0])
    Z, mu = config.likelihood.draw(mu, U[:, 1], U[:, 2:])
    return mu, validate_matrix(Z, allow_b2=True)


def mse(estimates, truth) -> float:
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if est.shape != tru.shape:
        raise LengthMismatch(f"estimates have shape {est.shape}, truth {tru.shape}")
    d = est - tru
    return float(d @ d / d.size)


def oracle_bayes(config: ScenarioConfig, data) -> np.ndarray:
    """The Bayes rule for the configured prior when it has a closed form."""
    Z = np.asarray(data, dtype=np.float64)
    prior, lik = config.prior, config.likelihood
    if isinstance(prior, PointPrior):
        return np.full(Z.shape[0], float(prior.value))
    if isinstance(lik, LocationLikelihood) and lik.family == "normal":
        if isinstance(prior, NormalPrior):
            spec = NormalNormalSpec(prior.var, lik.var, prior.mean, Z.shape[1])
            return nn_posterior_mean(spec, Z)
        if isinstance(prior, ThreePointPrior):
            return discrete_posterior_mean(prior.atoms, np.full(3, 1.0 / 3.0), lik.var, Z)
    raise InvalidConfig("oracle-bayes needs a normal likelihood with a normal, three-point "
                        "or point prior", "methods")


@dataclass(frozen=True)
class MethodRisk:
    method: str
    mse: float
    se: float
    reps: int
    per_rep: tuple[float, ...] = field(repr=False)

    @property
    def se_degenerate(self) -> bool:
        """True when reps == 1 and se is reported as 0 by convention."""
        return self.reps == 1


@dataclass(frozen=True)
class RiskReport:
    config: ScenarioConfig
    results: tuple[MethodRisk, ...]

    def __getitem__(self, method: str) -> MethodRisk:
        for r in self.results:
            if r.method == method:
                return r
        raise KeyError(method)

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(r.method for r in self.results)


def run_rep(config: ScenarioConfig, rep: int) -> list[float]:
    """MSE of every configured method on replicate ``rep``."""
    mu, data = sample_scenario(config, rep)
    opts = config.resolved_options()
    out = []
    for m in config.methods:
        try:
            if m == "oracle-bayes":
                est = oracle_bayes(config, data)
            else:
                est = run_method(m, data, opts)
        except Exception as exc:
            raise ScenarioFailure(m, rep, exc) from exc
        out.append(mse(est, mu))
    return out


def _run_rep_args(args):
    return run_rep(*args)


def run_scenario(config: ScenarioConfig, workers: int = 1) -> RiskReport:
    """Monte Carlo MSE and its standard error for every method.

    With ``workers > 1`` reps run in separate processes; results are
    collected in rep order so the report does not depend on ``workers``.
    """
    jobs = [(config, r) for r in range(config.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_rep_args, jobs))
    else:
        rows = [run_rep(*job) for job in jobs]
    M = np.array(rows, dtype=np.float64).reshape(config.reps, len(config.methods))
    results = []
    for c, m in enumerate(config.methods):
        col = M[:, c]
        se = float(col.std(ddof=1) / math.sqrt(config.reps)) if config.reps > 1 else 0.0
        results.append(MethodRisk(m, float(col.mean()), se, config.reps, tuple(col.tolist())))
    return RiskReport(config, tuple(results))
