"""Individual-based stochastic counterpart of the two-habitat model.

Non-overlapping generations. Each generation applies, in order:

1. reproduction-selection: an individual with phenotype x in habitat i
   leaves Poisson(exp(r_i(x))) offspring and dies;
2. mutation: each offspring receives Poisson(U) mutations, each an
   independent N(0, lambda_var I_n) displacement added to its phenotype;
3. migration: Poisson(delta * N_i) individuals (capped at N_i, sampled
   uniformly without replacement) move out of habitat i, both directions
   simultaneously.

The diffusive scale of the density model is recovered as mu^2 = U * lambda_var.

Populations are stored as (N_i, n) float arrays. All draws come from one
numpy Generator in a fixed order (habitat 1 before habitat 2; counts before
displacements), so a run is bit-reproducible given its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pde import Trajectory


class IbmOverflowError(RuntimeError):
    """Population exceeded the configured cap (runaway growth)."""


@dataclass(frozen=True)
class IbmParams:
    """Simulation parameters.

    Attributes:
        n: phenotype dimension.
        U: expected mutations per individual per generation.
        lambda_var: variance of a single mutation step per trait.
        delta: per-capita emigration intensity.
        rmax: fitness at either optimum.
        beta: half-distance between the optima (optima at -/+ beta on axis 1).
        N0: founding individuals per habitat.
        T: generations to simulate.
        cap: abort threshold on total population size.
    """

    n: int
    U: float
    lambda_var: float
    delta: float
    rmax: float
    beta: float
    N0: int
    T: int
    cap: int = 10_000_000

    def __post_init__(self) -> None:
        errors = []
        if not isinstance(self.n, int) or self.n < 1:
            errors.append(f"n must be an integer >= 1, got {self.n!r}")
        if not (self.U >= 0) or not math.isfinite(self.U):
            errors.append(f"U must be >= 0, got {self.U!r}")
        if not (self.lambda_var > 0) or not math.isfinite(self.lambda_var):
            errors.append(f"lambda_var must be > 0, got {self.lambda_var!r}")
        if not (self.delta >= 0) or not math.isfinite(self.delta):
            errors.append(f"delta must be >= 0, got {self.delta!r}")
        if not math.isfinite(self.rmax):
            errors.append(f"rmax must be finite, got {self.rmax!r}")
        if not (self.beta >= 0) or not math.isfinite(self.beta):
            errors.append(f"beta must be >= 0, got {self.beta!r}")
        if not isinstance(self.N0, int) or self.N0 < 1:
            errors.append(f"N0 must be an integer >= 1, got {self.N0!r}")
        if not isinstance(self.T, int) or self.T < 0:
            errors.append(f"T must be an integer >= 0, got {self.T!r}")
        if not isinstance(self.cap, int) or self.cap < 1:
            errors.append(f"cap must be an integer >= 1, got {self.cap!r}")
        if errors:
            raise ValueError("invalid IbmParams: " + "; ".join(errors))

    @property
    def mu2(self) -> float:
        """Diffusive scale mu^2 = U * lambda_var of the matching density model."""
        return self.U * self.lambda_var


@dataclass
class IbmState:
    """Populations of both habitats plus the generation counter and RNG."""

    pop1: np.ndarray
    pop2: np.ndarray
    generation: int
    rng: np.random.Generator


def _fitness(params: IbmParams, habitat: int, pop: np.ndarray) -> np.ndarray:
    opt1 = -params.beta if habitat == 1 else params.beta
    sq = np.square(pop[:, 0] - opt1)
    if params.n > 1:
        sq = sq + np.sum(np.square(pop[:, 1:]), axis=1)
    return params.rmax - 0.5 * sq


def init_clonal(params: IbmParams, seed=0) -> IbmState:
    """Both habitats founded by N0 identical individuals at the midpoint
    between the optima (the origin)."""
    return IbmState(
        pop1=np.zeros((params.N0, params.n)),
        pop2=np.zeros((params.N0, params.n)),
        generation=0,
        rng=np.random.default_rng(seed),
    )


def reproduction_selection(state: IbmState, params: IbmParams) -> None:
    """Replace each habitat by its offspring, Poisson(exp(r)) per parent."""
    pops = []
    for habitat, pop in ((1, state.pop1), (2, state.pop2)):
        counts = state.rng.poisson(np.exp(_fitness(params, habitat, pop)))
        pops.append(np.repeat(pop, counts, axis=0))
    total = pops[0].shape[0] + pops[1].shape[0]
    if total > params.cap:
        raise IbmOverflowError(
            f"population {total} exceeds cap {params.cap} at generation {state.generation}")
    state.pop1, state.pop2 = pops


def mutation(state: IbmState, params: IbmParams) -> None:
    """Add the compound-Poisson mutation displacement to every individual.

    K ~ Poisson(U) mutations, each N(0, lambda_var I), sum to a
    N(0, K lambda_var I) displacement; drawn as sqrt(K lambda_var) * N(0, I).
    """
    for pop in (state.pop1, state.pop2):
        n_ind = pop.shape[0]
        if n_ind == 0:
            continue
        k = state.rng.poisson(params.U, size=n_ind)
        disp = state.rng.standard_normal((n_ind, params.n))
        pop += disp * np.sqrt(k * params.lambda_var)[:, None]


def migration(state: IbmState, params: IbmParams) -> None:
    """Swap Poisson(delta * N_i) uniform individuals, both directions at once.

    Draw sizes are capped at the current population; totals are conserved
    exactly.
    """
    n1, n2 = state.pop1.shape[0], state.pop2.shape[0]
    m1 = min(int(state.rng.poisson(params.delta * n1)), n1) if n1 else 0
    m2 = min(int(state.rng.poisson(params.delta * n2)), n2) if n2 else 0
    idx1 = state.rng.choice(n1, size=m1, replace=False) if m1 else np.empty(0, dtype=int)
    idx2 = state.rng.choice(n2, size=m2, replace=False) if m2 else np.empty(0, dtype=int)
    movers1 = state.pop1[idx1]
    movers2 = state.pop2[idx2]
    keep1 = np.delete(state.pop1, idx1, axis=0)
    keep2 = np.delete(state.pop2, idx2, axis=0)
    state.pop1 = np.concatenate([keep1, movers2], axis=0)
    state.pop2 = np.concatenate([keep2, movers1], axis=0)


def _record(params: IbmParams, state: IbmState):
    n1, n2 = state.pop1.shape[0], state.pop2.shape[0]
    rb1 = float(np.mean(_fitness(params, 1, state.pop1))) if n1 else math.nan
    rb2 = float(np.mean(_fitness(params, 2, state.pop2))) if n2 else math.nan
    return n1, n2, rb1, rb2


def step(state: IbmState, params: IbmParams) -> None:
    """Advance one generation in place."""
    reproduction_selection(state, params)
    mutation(state, params)
    migration(state, params)
    state.generation += 1


def run(params: IbmParams, seed=0) -> Trajectory:
    """Simulate T generations from the clonal founding state.

    Returns a Trajectory sampled once per generation (t = 0 ... T); rbar is
    the population mean fitness, nan once a habitat is empty. An extinct
    population stays extinct and keeps recording zeros.
    """
    state = init_clonal(params, seed)
    rec = [_record(params, state)]
    for _ in range(params.T):
        step(state, params)
        rec.append(_record(params, state))
    arr = np.asarray(rec, dtype=float)
    return Trajectory(
        t=np.arange(params.T + 1, dtype=float),
        N1=arr[:, 0],
        N2=arr[:, 1],
        rbar1=arr[:, 2],
        rbar2=arr[:, 3],
        extinct=bool(arr[-1, 0] + arr[-1, 1] == 0),
    )


@dataclass
class ReplicateSummary:
    """Mean total-population trajectory over replicates (extinct runs count 0)."""

    t: np.ndarray
    n_total_mean: np.ndarray
    trajectories: list[Trajectory]


def run_replicates(params: IbmParams, seeds) -> ReplicateSummary:
    """Run one replicate per entry of seeds and average total population.

    Each seed may be anything numpy's default_rng accepts; pass e.g.
    [(master, k) for k in range(R)] to derive independent replicate streams
    from a master seed.
    """
    trajectories = [run(params, seed) for seed in seeds]
    if not trajectories:
        raise ValueError("run_replicates needs at least one seed")
    totals = np.stack([tr.n_total() for tr in trajectories])
    return ReplicateSummary(
        t=trajectories[0].t.copy(),
        n_total_mean=totals.mean(axis=0),
        trajectories=trajectories,
    )
