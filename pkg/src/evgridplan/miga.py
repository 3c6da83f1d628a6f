"""Mixed-integer genetic algorithm: SUS selection over rank weights,
Laplace crossover, power mutation, and randomized truncation of the
integer genes.

Minimization throughout. Raw SUS expects non-negative maximization
weights, so fitnesses are first mapped to linear rank weights with
selection pressure 1.5 (ties share the averaged rank). A single seeded
generator drives the evolution path; fitness evaluation never touches
it, which is what keeps parallel evaluation reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InputError

SELECTION_PRESSURE = 1.5


class EmptyPopulation(InputError):
    """Selection from an empty population."""


class LayoutMismatch(InputError):
    """Parents or bounds disagree on the gene layout."""


@dataclass(eq=False)
class Chromosome:
    real_genes: np.ndarray
    int_genes: np.ndarray
    fitness: float | None = None

    def copy(self) -> "Chromosome":
        return Chromosome(self.real_genes.copy(), self.int_genes.copy(), self.fitness)


@dataclass(frozen=True)
class GaConfig:
    pop_size: int
    max_gen: int
    pc: float = 0.9
    pm: float = 0.1
    laplace_a: float = 0.0
    laplace_b_real: float = 0.15
    laplace_b_int: float = 0.35
    pm_index_real: float = 10.0
    pm_index_int: float = 4.0
    elite_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 2:
            raise InputError("pop_size must be >= 2")
        if self.elite_count > self.pop_size:
            raise InputError("elite_count cannot exceed pop_size")
        if not (0 <= self.pc <= 1 and 0 <= self.pm <= 1):
            raise InputError("pc and pm must lie in [0, 1]")


@dataclass(frozen=True)
class GeneBounds:
    real_lo: np.ndarray
    real_hi: np.ndarray
    int_lo: np.ndarray
    int_hi: np.ndarray

    def __post_init__(self):
        for name in ("real_lo", "real_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("int_lo", "int_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=int))
        if self.real_lo.shape != self.real_hi.shape or self.int_lo.shape != self.int_hi.shape:
            raise LayoutMismatch("bound arrays disagree on gene layout")
        if np.any(self.real_lo > self.real_hi) or np.any(self.int_lo > self.int_hi):
            raise InputError("lower bounds exceed upper bounds")
        if not (np.all(np.isfinite(self.real_lo)) and np.all(np.isfinite(self.real_hi))):
            raise InputError("real bounds must be finite")

    @property
    def n_real(self) -> int:
        return len(self.real_lo)

    @property
    def n_int(self) -> int:
        return len(self.int_lo)


@dataclass
class GaHistory:
    best_fitness: list[float] = field(default_factory=list)
    mean_fitness: list[float] = field(default_factory=list)
    best_chromosome: list[Chromosome] = field(default_factory=list)
    final_population: list[Chromosome] = field(default_factory=list)

    def write_csv(self, path: str | Path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["generation", "best", "mean"])
            for g, (best, mean) in enumerate(zip(self.best_fitness, self.mean_fitness), 1):
                w.writerow([g, repr(best), repr(mean)])


# ---------------------------------------------------------------------------
# selection

def rank_weights(fitnesses: np.ndarray, pressure: float = SELECTION_PRESSURE) -> np.ndarray:
    """Linear rank weights for minimization; tied fitnesses share a rank.

    Rank n (best = lowest fitness) gets weight ``pressure``, rank 1 gets
    ``2 - pressure``; weights always sum to n.
    """
    n = len(fitnesses)
    if n == 1:
        return np.ones(1)
    order = np.argsort(fitnesses, kind="stable")  # ascending: best first
    sorted_f = fitnesses[order]
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_f[j + 1] == sorted_f[i]:
            j += 1
        # ascending positions i..j hold descending ranks n-i .. n-j
        ranks[order[i : j + 1]] = n - (i + j) / 2.0
        i = j + 1
    return 2 - pressure + 2 * (pressure - 1) * (ranks - 1) / (n - 1)


def sus_indices(weights: np.ndarray, k: int, offset: float) -> list[int]:
    """k equally spaced pointers over the cumulative wheel; offset in [0, 1)."""
    total = float(np.sum(weights))
    step = total / k
    pointers = offset * step + step * np.arange(k)
    cum = np.cumsum(weights)
    return np.searchsorted(cum, pointers, side="right").tolist()


def sus_select(
    population: Sequence[Chromosome],
    fitnesses: np.ndarray,
    k: int,
    rng: np.random.Generator,
) -> list[Chromosome]:
    """Stochastic universal sampling of k parents (shuffled mating pool)."""
    if len(population) == 0:
        raise EmptyPopulation("cannot select from an empty population")
    if k < 1:
        raise InputError("k must be >= 1")
    if not np.all(np.isfinite(fitnesses)):
        raise InputError("fitnesses must be finite")
    weights = rank_weights(np.asarray(fitnesses, dtype=float))
    picks = sus_indices(weights, k, rng.random())
    parents = [population[i] for i in picks]
    rng.shuffle(parents)
    return parents


# ---------------------------------------------------------------------------
# variation operators

def laplace_beta(a: float, b: float, rng: np.random.Generator) -> float:
    """One draw of the crossover spread factor, distributed Laplace(a, b)."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    r = rng.random()
    return a - b * math.log(u) if r <= 0.5 else a + b * math.log(u)


def laplace_crossover(
    p1: Chromosome,
    p2: Chromosome,
    cfg: GaConfig,
    bounds: GeneBounds,
    rng: np.random.Generator,
) -> tuple[Chromosome, Chromosome]:
    """Offspring displaced from the parents by beta * |gap| per gene.

    Both children share the same beta draw per gene; real genes clamp
    to their bounds, integer genes clamp and then pass through
    :func:`truncate`.
    """
    if p1.real_genes.shape != p2.real_genes.shape or p1.int_genes.shape != p2.int_genes.shape:
        raise LayoutMismatch("parents disagree on gene layout")
    c1 = Chromosome(p1.real_genes.copy(), p1.int_genes.copy())
    c2 = Chromosome(p2.real_genes.copy(), p2.int_genes.copy())

    for i in range(bounds.n_real):
        beta = laplace_beta(cfg.laplace_a, cfg.laplace_b_real, rng)
        gap = abs(p1.real_genes[i] - p2.real_genes[i])
        c1.real_genes[i] = np.clip(p1.real_genes[i] + beta * gap, bounds.real_lo[i], bounds.real_hi[i])
        c2.real_genes[i] = np.clip(p2.real_genes[i] + beta * gap, bounds.real_lo[i], bounds.real_hi[i])

    int1 = np.empty(bounds.n_int, dtype=int)
    int2 = np.empty(bounds.n_int, dtype=int)
    for i in range(bounds.n_int):
        beta = laplace_beta(cfg.laplace_a, cfg.laplace_b_int, rng)
        gap = abs(float(p1.int_genes[i]) - float(p2.int_genes[i]))
        y1 = np.clip(p1.int_genes[i] + beta * gap, bounds.int_lo[i], bounds.int_hi[i])
        y2 = np.clip(p2.int_genes[i] + beta * gap, bounds.int_lo[i], bounds.int_hi[i])
        int1[i] = truncate(float(y1), rng)
        int2[i] = truncate(float(y2), rng)
    c1.int_genes = int1
    c2.int_genes = int2
    return c1, c2


def power_mutation(
    x: float, lo: float, hi: float, p: float, rng: np.random.Generator
) -> float:
    """Bounded mutation with power-distributed step toward one bound.

    Degenerate bounds (lo == hi) leave the gene untouched.
    """
    if lo == hi:
        return x
    s = rng.random() ** p
    t = (x - lo) / (hi - lo)
    if rng.random() < t:
        return max(lo, x - s * (x - lo))
    return min(hi, x + s * (hi - x))


def truncate(x: float, rng: np.random.Generator) -> int:
    """Random floor/ceil: floor for r in [0, 0.5], ceil above."""
    if not math.isfinite(x):
        raise InputError("cannot truncate a non-finite value")
    return int(math.floor(x)) if rng.random() <= 0.5 else int(math.ceil(x))


# ---------------------------------------------------------------------------
# generational loop

def _initial_population(cfg: GaConfig, bounds: GeneBounds, rng: np.random.Generator) -> list[Chromosome]:
    pop = []
    for _ in range(cfg.pop_size):
        real = rng.uniform(bounds.real_lo, bounds.real_hi) if bounds.n_real else np.empty(0)
        ints = (
            rng.integers(bounds.int_lo, bounds.int_hi + 1)
            if bounds.n_int
            else np.empty(0, dtype=int)
        )
        pop.append(Chromosome(np.atleast_1d(real), np.atleast_1d(ints).astype(int)))
    return pop


def _evaluate(
    population: list[Chromosome],
    fitness_fn: Callable[[np.ndarray, np.ndarray], float],
    batch_eval: Callable[[list[Chromosome]], list[float]] | None,
) -> None:
    pending = [c for c in population if c.fitness is None]
    if not pending:
        return
    if batch_eval is not None:
        for c, value in zip(pending, batch_eval(pending)):
            c.fitness = float(value)
    else:
        for c in pending:
            c.fitness = float(fitness_fn(c.real_genes, c.int_genes))


def run_ga(
    cfg: GaConfig,
    fitness_fn: Callable[[np.ndarray, np.ndarray], float],
    bounds: GeneBounds,
    batch_eval: Callable[[list[Chromosome]], list[float]] | None = None,
) -> tuple[Chromosome, GaHistory]:
    """Generational loop; returns the best chromosome ever evaluated.

    Deterministic for a fixed seed. ``batch_eval``, when given, may
    evaluate a generation concurrently but must return fitnesses in
    input order and must not consume from the evolution RNG.
    """
    rng = np.random.default_rng(cfg.seed)
    population = _initial_population(cfg, bounds, rng)
    history = GaHistory()
    best: Chromosome | None = None

    def note_best(pop: list[Chromosome]) -> None:
        nonlocal best
        for c in pop:
            if best is None or c.fitness < best.fitness:
                best = c.copy()

    _evaluate(population, fitness_fn, batch_eval)
    note_best(population)

    for gen in range(1, cfg.max_gen + 1):
        fitnesses = np.array([c.fitness for c in population])
        i_best = int(np.argmin(fitnesses))
        history.best_fitness.append(float(fitnesses[i_best]))
        history.mean_fitness.append(float(fitnesses.mean()))
        history.best_chromosome.append(population[i_best].copy())

        if gen == cfg.max_gen:
            break

        elite_idx = np.argsort(fitnesses, kind="stable")[: cfg.elite_count]
        next_pop = [population[i].copy() for i in elite_idx]

        n_offspring = cfg.pop_size - cfg.elite_count
        if n_offspring > 0:
            parents = sus_select(population, fitnesses, n_offspring, rng)
            offspring: list[Chromosome] = []
            for a, b in zip(parents[0::2], parents[1::2]):
                if rng.random() <= cfg.pc:
                    offspring.extend(laplace_crossover(a, b, cfg, bounds, rng))
                else:
                    offspring.extend((a.copy(), b.copy()))
            if len(parents) % 2:
                offspring.append(parents[-1].copy())

            for child in offspring:
                mutated = False
                for i in range(bounds.n_real):
                    if rng.random() < cfg.pm:
                        child.real_genes[i] = power_mutation(
                            child.real_genes[i],
                            bounds.real_lo[i],
                            bounds.real_hi[i],
                            cfg.pm_index_real,
                            rng,
                        )
                        mutated = True
                for i in range(bounds.n_int):
                    if rng.random() < cfg.pm:
                        moved = power_mutation(
                            float(child.int_genes[i]),
                            float(bounds.int_lo[i]),
                            float(bounds.int_hi[i]),
                            cfg.pm_index_int,
                            rng,
                        )
                        child.int_genes[i] = truncate(moved, rng)
                        mutated = True
                if mutated:
                    child.fitness = None
            next_pop.extend(offspring)

        population = next_pop
        _evaluate(population, fitness_fn, batch_eval)
        note_best(population)

    history.final_population = [c.copy() for c in population]
    return best, history
