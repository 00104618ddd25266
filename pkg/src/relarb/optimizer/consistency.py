"""Stability of optimized portfolios as the jump sample grows."""

from dataclasses import dataclass, field

import numpy as np

from ..intensity import JumpSample
from ..io import to_jsonable
from .problem import build_problem
from .solver import solve


@dataclass
class ConsistencyReport:
    N_schedule: list
    distances: list
    objectives: list
    converged: list
    solutions: list = field(default_factory=list, repr=False)

    def trend_ok(self, factor=2.0):
        """Last distance within ``factor`` times the one before it."""
        return len(self.distances) < 2 or self.distances[-1] <= factor * self.distances[-2]

    def to_dict(self):
        return to_jsonable({"N_schedule": self.N_schedule, "distances": self.distances,
                            "objectives": self.objectives, "converged": self.converged,
                            "z": [s.z for s in self.solutions]})


def consistency_experiment(generator, N_schedule, grid, constraints=None, config=None):
    """Solve on nested samples and measure how much the weights still move.

    Parameters
    ----------
    generator : JumpSample or callable
        A sample with at least ``max(N_schedule)`` pairs, or a callable
        ``generator(N)`` returning one. The problem at size ``N`` uses the
        first ``N`` pairs.
    N_schedule : sequence of int
        Strictly increasing, at least three entries.
    grid, constraints, config
        Passed to :func:`build_problem` and :func:`solve`.

    Returns
    -------
    ConsistencyReport
        ``distances[k]`` is the largest change in ``z`` between sizes
        ``N_k`` and ``N_{k+1}`` over grid points where both samples put
        mass on ``p``.
    """
    sched = [int(n) for n in N_schedule]
    if len(sched) < 3 or any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError("N_schedule must be strictly increasing with at least three entries")
    sample = generator if isinstance(generator, JumpSample) else generator(sched[-1])
    if len(sample) < sched[-1]:
        raise ValueError(f"sample has {len(sample)} pairs, need {sched[-1]}")
    sols, masses = [], []
    for n in sched:
        prob = build_problem(sample.subsample(n), grid, constraints)
        sols.append(solve(prob, config))
        masses.append(prob.p_mass() > 0)
    dist = []
    for k in range(len(sched) - 1):
        mask = masses[k] & masses[k + 1]
        dz = np.abs(sols[k].z - sols[k + 1].z)[mask]
        dist.append(float(dz.max()) if dz.size else 0.0)
    return ConsistencyReport(sched, dist, [s.objective for s in sols], [s.converged for s in sols], sols)
