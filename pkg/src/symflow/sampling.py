"""Seeded point sampling and residual aggregation for pointwise checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from symflow.errors import SamplingError
from symflow.expr import Point, evaluate_batch

DEFAULT_RANGE = (-2.0, 2.0)
POSITIVE_RANGE = (0.1, 2.0)
DEFAULT_TIME_RANGE = (0.0, 1.0)
DEFAULT_SEED = 20111


@dataclass(frozen=True)
class Sampler:
    """Uniform sampling over a box.

    Variables missing from ``box`` use ``[-2, 2]``, or ``[0.1, 2]`` when the
    system declares them positive. The time coordinate uses ``box[time]`` or
    ``[0, 1]``.
    """

    box: Mapping = field(default_factory=dict)
    n_points: int = 500
    seed: int = DEFAULT_SEED

    def ranges(self, variables, time="t", positive=()):
        out = {}
        for name in variables:
            default = POSITIVE_RANGE if name in positive else DEFAULT_RANGE
            out[name] = tuple(float(v) for v in self.box.get(name, default))
        out[time] = tuple(float(v) for v in self.box.get(time, DEFAULT_TIME_RANGE))
        return out

    def draw(self, variables, time="t", positive=()) -> dict:
        """Batch environment ``{name: array of n_points}``."""
        rng = np.random.default_rng(self.seed)
        ranges = self.ranges(variables, time, positive)
        return {name: rng.uniform(lo, hi, self.n_points) for name, (lo, hi) in ranges.items()}

    def for_system(self, ds) -> dict:
        return self.draw(ds.variables, ds.time, ds.positive)


def guard_mask(guards, env) -> np.ndarray:
    """Points where every guard expression is defined and strictly positive."""
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
    keep = np.ones(shape, dtype=bool)
    for g in guards:
        values, ok = evaluate_batch(g, env)
        keep &= ok & (values > 0)
    return keep


@dataclass
class CheckReport:
    """Aggregate of a pointwise residual over sampled points."""

    check: str
    tolerance: float
    points_sampled: int
    excluded_points: int
    max_residual: float
    mean_residual: float
    worst_point: dict | None
    seed: int | None = None
    box: dict | None = None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.points_sampled > 0 and self.max_residual <= self.tolerance

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "params": self.params,
            "seed": self.seed,
            "box": self.box,
            "tolerance": self.tolerance,
            "points_sampled": self.points_sampled,
            "excluded_points": self.excluded_points,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "worst_point": self.worst_point,
            "verdict": self.verdict,
            **({"extra": self.extra} if self.extra else {}),
        }


def _point_at(env, i, variables, time):
    return Point({n: float(env[n][i]) for n in variables}, float(env[time][i]), time)


def aggregate(check, residual, ok, env, variables, time, tol, sampler=None,
              positive=(), params=None, extra=None):
    """Build a :class:`CheckReport` from per-point residual norms.

    Points with ``ok`` False are excluded; if more than half are excluded
    the sample is not trustworthy and :class:`SamplingError` is raised.
    """
    residual = np.asarray(residual, dtype=float)
    ok = np.asarray(ok, dtype=bool) & np.isfinite(residual)
    total = residual.size
    excluded = int(total - ok.sum())
    if total == 0 or excluded * 2 > total:
        raise SamplingError(
            f"{check}: {excluded} of {total} sampled points excluded (domain errors or guards)"
        )
    valid = residual[ok]
    idx = np.flatnonzero(ok)[int(np.argmax(valid))]
    box = None
    if sampler is not None:
        box = {k: list(v) for k, v in sampler.ranges(variables, time, positive).items()}
    return CheckReport(
        check=check,
        tolerance=float(tol),
        points_sampled=int(ok.sum()),
        excluded_points=excluded,
        max_residual=float(valid.max()),
        mean_residual=float(valid.mean()),
        worst_point=_point_at(env, idx, variables, time).to_dict(),
        seed=None if sampler is None else int(sampler.seed),
        box=box,
        params=dict(params or {}),
        extra=dict(extra or {}),
        residuals=np.where(ok, residual, np.nan),
    )
