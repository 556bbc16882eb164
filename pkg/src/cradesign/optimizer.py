"""Projected proximal-gradient ascent on a box with backtracking.

The design objective is maximized, so each step is
``x+ = clip(x + kappa * h, lower, upper)`` with ``h`` the gradient, and the
step size ``kappa`` is shrunk until the sufficient-increase test::

    f(x+) >= f(x) + <h, x+ - x> - ||x+ - x||^2 / (2 kappa)

holds. This is the box-indicator proximal step used with backtracking, with
the signs flipped for ascent.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

CONVERGED = "Converged"
MAX_ITERATIONS = "MaxIterations"
LINE_SEARCH_FAILED = "LineSearchFailed"


@dataclass(frozen=True, eq=False)
class BoxFeasibleSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def uniform(cls, size: int, lower: float = 1.0, upper: float = 30.0) -> "BoxFeasibleSet":
        return cls(np.full(size, float(lower)), np.full(size, float(upper)))

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def random_point(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.lower + (self.upper - self.lower) * rng.random(self.lower.shape)


@dataclass(frozen=True)
class OptimizerConfig:
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    step_growth: float = 2.0
    max_iterations: int = 500
    objective_tolerance: float = 1e-7
    objective_window: int = 5
    step_tolerance: float = 1e-8
    max_backtracks: int = 60
    seed: int = 0

    def __post_init__(self):
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.step_growth < 1:
            raise ValueError("step_growth must be >= 1")
        if self.max_iterations < 0 or self.max_backtracks < 1 or self.objective_window < 1:
            raise ValueError("iteration counts must be positive")
        if self.objective_tolerance < 0 or self.step_tolerance < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass(frozen=True)
class Iterate:
    iteration: int
    x: np.ndarray
    value: float
    step: float
    gradient_norm: float
    terms: dict | None = None

    def record(self) -> dict:
        rec = {"iteration": self.iteration, "objective": self.value, "step": self.step,
               "gradient_norm": self.gradient_norm}
        if self.terms is not None:
            rec["terms"] = {k: float(v) for k, v in self.terms.items()}
        return rec


@dataclass
class Trajectory:
    iterates: list = field(default_factory=list)
    status: str = MAX_ITERATIONS
    message: str = ""

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1].x

    @property
    def values(self) -> np.ndarray:
        return np.array([it.value for it in self.iterates])

    @property
    def initial(self) -> Iterate:
        return self.iterates[0]

    @property
    def final(self) -> Iterate:
        return self.iterates[-1]

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for it in self.iterates:
                fh.write(json.dumps(it.record(), sort_keys=True) + "\n")
            fh.write(json.dumps({"status": self.status, "message": self.message}, sort_keys=True) + "\n")


def project(x, box: BoxFeasibleSet) -> np.ndarray:
    """Euclidean projection onto the box (component-wise clamp)."""
    return np.clip(np.asarray(x, dtype=float), box.lower, box.upper)


def step(x, h, box: BoxFeasibleSet, kappa: float) -> np.ndarray:
    """Proximal ascent step ``project(x + kappa h)``."""
    if not kappa > 0:
        raise ValueError("step size must be positive")
    return project(np.asarray(x) + kappa * np.asarray(h), box)


def _value_and_gradient(problem, x):
    if hasattr(problem, "value_and_gradient"):
        return problem.value_and_gradient(x)
    return problem.value(x), problem.gradient(x)


def run(problem, box: BoxFeasibleSet, cfg: OptimizerConfig = OptimizerConfig(), x0=None,
        record_terms: bool = False) -> Trajectory:
    """Maximize ``problem.value`` over ``box``.

    ``problem`` must provide ``value(x)`` and either ``gradient(x)`` or
    ``value_and_gradient(x)``; with ``record_terms`` it must also provide
    ``terms(x)``. Without ``x0`` the start is uniform-random in the box from
    ``cfg.seed``.
    """
    x = box.random_point(cfg.seed) if x0 is None else project(x0, box)
    if x0 is not None and not np.array_equal(x, np.asarray(x0, dtype=float)):
        raise ValueError("initial point is not feasible")
    traj = Trajectory()
    f, h = _value_and_gradient(problem, x)
    terms = problem.terms(x) if record_terms else None
    kappa = cfg.initial_step
    traj.iterates.append(Iterate(0, x.copy(), float(f), kappa, float(np.linalg.norm(h)), terms))
    history = deque([f], maxlen=cfg.objective_window + 1)

    for k in range(1, cfg.max_iterations + 1):
        kappa *= cfg.step_growth
        for trial in range(cfg.max_backtracks):
            x_new = step(x, h, box, kappa)
            d = x_new - x
            dist2 = float(d @ d)
            if dist2 == 0.0:
                if trial == 0:
                    traj.status = CONVERGED
                    traj.message = "projected gradient step is zero"
                else:
                    # the step vanished in floating point before any increase was found
                    traj.status = LINE_SEARCH_FAILED
                    traj.message = (f"step shrank to zero without sufficient increase at "
                                    f"iteration {k} after {trial} backtracks; gradient may be "
                                    "inconsistent with the objective")
                return traj
            f_new = problem.value(x_new)
            if np.isfinite(f_new) and f_new >= f + float(h @ d) - dist2 / (2.0 * kappa):
                break
            kappa *= cfg.backtrack_factor
        else:
            traj.status = LINE_SEARCH_FAILED
            traj.message = (f"no sufficient increase after {cfg.max_backtracks} backtracks at "
                            f"iteration {k}; gradient may be inconsistent with the objective")
            return traj

        x = x_new
        f, h = _value_and_gradient(problem, x)
        terms = problem.terms(x) if record_terms else None
        traj.iterates.append(Iterate(k, x.copy(), float(f), kappa, float(np.linalg.norm(h)), terms))
        history.append(f)

        if np.sqrt(dist2) / kappa < cfg.step_tolerance:
            traj.status = CONVERGED
            traj.message = "projected gradient mapping below step tolerance"
            return traj
        if len(history) > cfg.objective_window:
            change = abs(history[-1] - history[0])
            if change <= cfg.objective_tolerance * max(1.0, abs(history[-1])):
                traj.status = CONVERGED
                traj.message = "relative objective change below tolerance"
                return traj
    traj.status = MAX_ITERATIONS
    traj.message = f"reached {cfg.max_iterations} iterations"
    return traj
