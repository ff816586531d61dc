"""Repair loop: verify, extract representative unsafe vertex pairs, correct
outputs to the nearest safe point, merge into the training data, retrain.

The loop terminates when a candidate verifies safe on every property while
holding the accuracy gate, or when the iteration budget runs out.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import LabeledDataset, TrainConfig, TrainingDivergedError, accuracy, train
from .reach import (
    MaxSetsExceeded,
    ReachOptions,
    ReachStats,
    exact_output_domain,
    projection_polygon,
    reach_unsafe_all,
)

logger = logging.getLogger(__name__)

REPAIRED = "repaired"
EXHAUSTED = "max-iterations-exhausted"

# a point is accepted as unsafe when every constraint margin is below this
CONTRACT_TOL = 1e-9


class RepairAborted(RuntimeError):
    """Repair stopped early (reach blow-up or diverging loss); carries the
    partial report."""

    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class RepairConfig:
    # boundary push factor of the output correction
    alpha: float = 0.02
    # required accuracy delta against the original network
    epsilon: float = 0.0
    # optional absolute test-accuracy floor, e.g. 0.93
    accuracy_floor: float | None = None
    max_iterations: int = 50
    train: TrainConfig = field(default_factory=TrainConfig)
    reach: ReachOptions = field(default_factory=ReachOptions)
    # safe vertex pairs merged per iteration, as a multiple of corrected pairs
    safe_pair_ratio: int = 4
    volume_samples: int = 10_000
    # output axes (i, j); when set, each iteration records the 2-d projections
    # of the exact reachable sets and unsafe regions for plotting
    projection_axes: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be a small positive scalar")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    unsafe_region_counts: dict
    unsafe_volume_ratios: dict
    accuracy: float
    wall_time_s: float
    # per property: {"reachable": [polygon, ...], "unsafe": [polygon, ...]}
    projections: dict | None = None


@dataclass
class RepairReport:
    iterations: list = field(default_factory=list)
    verdict: str = EXHAUSTED

    def to_dict(self, include_timing=True):
        out = {"verdict": self.verdict, "iterations": []}
        for rec in self.iterations:
            entry = {
                "iteration": rec.iteration,
                "unsafe_region_counts": dict(rec.unsafe_region_counts),
                "unsafe_volume_ratios": {k: float(v) for k, v in rec.unsafe_volume_ratios.items()},
                "accuracy": float(rec.accuracy),
            }
            if rec.projections is not None:
                entry["projections"] = rec.projections
            if include_timing:
                entry["wall_time_s"] = float(rec.wall_time_s)
            out["iterations"].append(entry)
        return out


def representative_pairs(regions):
    """Vertex pairs (input row, output row) of the given regions, de-duplicated
    across regions by input vertex (1e-9 tolerance)."""
    seen = set()
    pairs = []
    for region in regions:
        for x, y in zip(region.input_poly, region.output_poly):
            key = (np.round(x, 9) + 0.0).tobytes()
            if key in seen:
                continue
            seen.add(key)
            pairs.append((np.array(x), np.array(y)))
    return pairs


def correct(y, unsafe, alpha):
    """Push an unsafe output just past the nearest boundary of the domain.

    The shortest move to each constraint hyperplane is computed in closed
    form; the closest one is taken and overshot by the factor (1 + alpha), so
    the result strictly violates that constraint and exits the conjunction.
    """
    y = np.asarray(y, float)
    margins = np.array([float(a @ y) + b for a, b in unsafe.constraints])
    if (margins > CONTRACT_TOL).any():
        raise ValueError("point is not inside the unsafe domain")
    norms = np.array([float(np.linalg.norm(a)) for a, _ in unsafe.constraints])
    distances = -margins / norms
    j = int(np.argmin(distances))
    a_j, _ = unsafe.constraints[j]
    if distances[j] <= 1e-12:
        # already on the boundary: step along the normal to slack alpha
        return y + (alpha / norms[j] ** 2) * a_j
    delta = -(margins[j] / norms[j] ** 2) * a_j
    return y + (1.0 + alpha) * delta


def unsafe_volume_ratio(regions, box, samples, seed=0):
    """Monte-Carlo fraction of the box covered by the regions' input polytopes
    (expected noise on the order of 1/sqrt(samples))."""
    if samples < 1:
        raise ValueError("need at least one sample")
    lb, ub = (np.asarray(v, float) for v in box)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lb, ub, size=(samples, lb.shape[0]))
    inside = np.zeros(samples, dtype=bool)
    for region in regions:
        remaining = ~inside
        if not remaining.any():
            break
        inside[remaining] = region.contains_inputs(pts[remaining])
    return float(inside.mean())


class _TrainingPool:
    """Training pairs keyed by input vertex; re-corrected pairs overwrite
    stale targets for the same input."""

    def __init__(self, data):
        self.xs = [np.array(x) for x in data.inputs]
        self.ys = [np.array(y) for y in data.targets]
        self.index = {self._key(x): i for i, x in enumerate(self.xs)}

    @staticmethod
    def _key(x):
        return (np.round(x, 9) + 0.0).tobytes()

    def upsert(self, pairs):
        for x, y in pairs:
            key = self._key(x)
            if key in self.index:
                i = self.index[key]
                self.xs[i] = np.array(x)
                self.ys[i] = np.array(y)
            else:
                self.index[key] = len(self.xs)
                self.xs.append(np.array(x))
                self.ys.append(np.array(y))

    def dataset(self):
        return LabeledDataset(np.array(self.xs), np.array(self.ys))


def repair(net, properties, train_data, test_data, cfg=None):
    """Run the full repair loop; returns (network, report).

    Each iteration verifies every property exactly, corrects the unsafe
    vertex pairs, merges them (plus a capped sample of safe vertex pairs)
    into the training pool, and retrains the running candidate.
    """
    cfg = cfg or RepairConfig()
    if not properties:
        raise ValueError("need at least one safety property")
    if len(train_data) == 0 or len(test_data) == 0:
        raise ValueError("training and test data must be nonempty")

    base_acc = accuracy(net, test_data)
    candidate = net
    pool = _TrainingPool(train_data)
    report = RepairReport(verdict=EXHAUSTED)

    for it in range(1, cfg.max_iterations + 1):
        t0 = time.monotonic()
        stats = ReachStats()
        safe_sets = []
        try:
            regions = reach_unsafe_all(
                candidate, properties, cfg.reach, stats, safe_collector=safe_sets
            )
        except MaxSetsExceeded as exc:
            raise RepairAborted(f"reachability blew past max_sets: {exc}", report) from exc

        acc = accuracy(candidate, test_data)
        counts = {p.name: len(regions[p.name]) for p in properties}
        ratios = {
            p.name: unsafe_volume_ratio(
                regions[p.name],
                (p.input_lb, p.input_ub),
                cfg.volume_samples,
                seed=cfg.seed + it,
            )
            for p in properties
        }
        projections = None
        if cfg.projection_axes is not None:
            i, j = cfg.projection_axes
            projections = {}
            for p in properties:
                outs = exact_output_domain(candidate, p, cfg.reach)
                projections[p.name] = {
                    "reachable": [projection_polygon(o, i, j) for o in outs],
                    "unsafe": [projection_polygon(r.output_poly, i, j) for r in regions[p.name]],
                }
        record = IterationRecord(it, counts, ratios, acc, 0.0, projections)
        report.iterations.append(record)

        if all(c == 0 for c in counts.values()):
            gate = acc - base_acc >= cfg.epsilon and (
                cfg.accuracy_floor is None or acc >= cfg.accuracy_floor
            )
            if gate:
                report.verdict = REPAIRED
                record.wall_time_s = time.monotonic() - t0
                logger.info("repaired after %d iteration(s), accuracy %.4f", it, acc)
                return candidate, report

        corrected = []
        for p in properties:
            for x, y in representative_pairs(regions[p.name]):
                corrected.append((x, correct(y, p.unsafe, cfg.alpha)))

        safe_pairs = [
            (x, y) for inputs, outputs in safe_sets for x, y in zip(inputs, outputs)
        ]
        cap = cfg.safe_pair_ratio * len(corrected)
        if len(safe_pairs) > cap:
            rng = np.random.default_rng(cfg.seed + 7919 * it)
            keep = rng.choice(len(safe_pairs), size=cap, replace=False)
            safe_pairs = [safe_pairs[i] for i in sorted(keep)]

        pool.upsert(safe_pairs)
        pool.upsert(corrected)  # corrected targets win collisions
        try:
            candidate = train(candidate, pool.dataset(), cfg.train)
        except TrainingDivergedError as exc:
            raise RepairAborted(f"training diverged at iteration {it}: {exc}", report) from exc
        record.wall_time_s = time.monotonic() - t0

    return candidate, report
