"""
Variant pool simulator

Discrete-event model of one image's variant pool under a request load:
requests arrive by a Poisson process or from a recorded trace, variant
generation takes a fixed or lognormal time, and the pool follows the same
policy rules as the registry. Answers how unique, available and costly a
policy is before anyone runs a generator.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union
import heapq
import json
import logging

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..models.schemas import (
    FixedGeneration,
    PoissonArrival,
    SimConfig,
    SimResultModel,
    TraceArrival,
)

logger = logging.getLogger(__name__)

# Tie order at equal timestamps
GENERATION_COMPLETE = 0
TTL_EXPIRY = 1
ARRIVAL = 2

EVENT_LOG_COLUMNS = ["time", "event", "variant_id", "pool_fresh_count"]


class SimConfigError(Exception):
    code = "invalid_sim_config"


def load_sim_config(path: Union[str, Path]) -> SimConfig:
    try:
        with open(path, "r") as f:
            return SimConfig.model_validate(json.load(f))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise SimConfigError(f"cannot load simulator config {path}: {e}") from e


def read_trace(arrival: TraceArrival) -> np.ndarray:
    """Sorted request timestamps of a CSV trace"""
    try:
        frame = pd.read_csv(arrival.file)
    except pd.errors.EmptyDataError:
        return np.empty(0)
    except (OSError, pd.errors.ParserError) as e:
        raise SimConfigError(f"cannot read trace {arrival.file}: {e}") from e
    if arrival.column not in frame.columns:
        raise SimConfigError(f"trace {arrival.file} has no column '{arrival.column}'")
    times = pd.to_numeric(frame[arrival.column], errors="coerce")
    if times.isna().any():
        row = int(times.isna().to_numpy().argmax())
        raise SimConfigError(f"trace {arrival.file}: non-numeric timestamp in row {row}")
    values = np.sort(times.to_numpy(dtype=float))
    if values.size and values[0] < 0:
        raise SimConfigError(f"trace {arrival.file}: negative timestamp {values[0]}")
    return values


@dataclass
class _Variant:
    variant_id: str
    sequence: int
    state: str = "generating"
    deploy_count: int = 0
    created_at: float = 0.0


@dataclass
class Simulation:
    config: SimConfig
    events: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        arrivals, durations, selection = np.random.SeedSequence(self.config.rng_seed).spawn(3)
        self._arrival_rng = np.random.default_rng(arrivals)
        self._duration_rng = np.random.default_rng(durations)
        self._selection_rng = np.random.default_rng(selection)
        self._queue: List = []
        self._counter = 0
        self._variants: Dict[str, _Variant] = {}
        self._fresh: List[_Variant] = []
        self._deployed: List[_Variant] = []
        self._deferred: List[_Variant] = []
        self._generating = 0
        self._next_sequence = 0

        self.requests = 0
        self.served = 0
        self.rejected = 0
        self.fresh_serves = 0
        self.empty_events = 0
        self.generations = 0
        self._storage = 0
        self._storage_area = 0.0
        self._max_storage = 0
        self._clock = 0.0

    # ------------------------------------------------------------ plumbing

    def _schedule(self, time: float, kind: int, payload=None) -> None:
        heapq.heappush(self._queue, (time, kind, self._counter, payload))
        self._counter += 1

    def _log(self, time: float, event: str, variant: Optional[_Variant]) -> None:
        self.events.append({
            "time": time,
            "event": event,
            "variant_id": variant.variant_id if variant is not None else "",
            "pool_fresh_count": len(self._fresh),
        })

    def _advance(self, time: float) -> None:
        self._storage_area += self._storage * (time - self._clock)
        self._clock = time

    def _set_storage(self, delta: int) -> None:
        self._storage += delta
        self._max_storage = max(self._max_storage, self._storage)

    def arrival_times(self) -> np.ndarray:
        arrival = self.config.arrival
        horizon = self.config.horizon
        if isinstance(arrival, PoissonArrival):
            times = []
            t = self._arrival_rng.exponential(1.0 / arrival.rate)
            while t < horizon:
                times.append(t)
                t += self._arrival_rng.exponential(1.0 / arrival.rate)
            return np.asarray(times, dtype=float)
        times = read_trace(arrival)
        return times[times < horizon]

    def _draw_duration(self) -> float:
        model = self.config.generation_time
        if isinstance(model, FixedGeneration):
            return model.seconds
        return float(self._duration_rng.lognormal(model.mu, model.sigma))

    # ------------------------------------------------------------ policy

    def _new_variant(self) -> _Variant:
        variant = _Variant(f"v{self._next_sequence}", self._next_sequence)
        self._next_sequence += 1
        self._variants[variant.variant_id] = variant
        return variant

    def _make_fresh(self, variant: _Variant, now: float) -> None:
        variant.state = "fresh"
        variant.created_at = now
        self._fresh.append(variant)
        self._set_storage(self.config.variant_size_bytes)
        if self.config.policy.variant_ttl is not None:
            self._schedule(now + self.config.policy.variant_ttl, TTL_EXPIRY, variant.variant_id)

    def _expire(self, variant: _Variant, now: float) -> None:
        if variant.state == "fresh":
            self._fresh.remove(variant)
        elif variant.state == "deployed":
            self._deployed.remove(variant)
            if variant in self._deferred:
                self._deferred.remove(variant)
        variant.state = "expired"
        self._set_storage(-self.config.variant_size_bytes)
        self._log(now, "expired", variant)

    def _replenish(self, now: float) -> None:
        policy = self.config.policy
        while (len(self._fresh) + self._generating < policy.target_pool_size
               and self._generating < policy.generator_parallelism):
            variant = self._new_variant()
            self._generating += 1
            self._schedule(now + self._draw_duration(), GENERATION_COMPLETE, variant.variant_id)

    def _on_generated(self, now: float, variant_id: str) -> None:
        variant = self._variants[variant_id]
        self._generating -= 1
        self.generations += 1
        self._make_fresh(variant, now)
        self._log(now, "generated", variant)
        for stale in list(self._deferred):
            self._expire(stale, now)
        self._replenish(now)

    def _on_ttl(self, now: float, variant_id: str) -> None:
        variant = self._variants[variant_id]
        if variant.state in ("fresh", "deployed"):
            self._expire(variant, now)
            self._replenish(now)

    def _on_arrival(self, now: float) -> None:
        policy = self.config.policy
        self.requests += 1
        if self._fresh:
            ordered = sorted(self._fresh, key=lambda v: v.sequence)
            variant = ordered[int(self._selection_rng.integers(len(ordered)))]
            self._fresh.remove(variant)
            self._deployed.append(variant)
            variant.state = "deployed"
            first = True
        else:
            self.empty_events += 1
            if policy.on_empty == "reject" or not self._deployed:
                self.rejected += 1
                self._log(now, "reject", None)
                self._replenish(now)
                return
            variant = min(self._deployed, key=lambda v: (v.deploy_count, v.sequence))
            first = False

        variant.deploy_count += 1
        self.served += 1
        if first:
            self.fresh_serves += 1
        self._log(now, "serve_fresh" if first else "serve_reuse", variant)

        limit = policy.max_deploys_per_variant
        if limit is not None and variant.deploy_count >= limit:
            if policy.on_empty == "reject" or self._fresh:
                self._expire(variant, now)
            elif variant not in self._deferred:
                self._deferred.append(variant)
        self._replenish(now)

    # ------------------------------------------------------------ driver

    def run(self) -> SimResultModel:
        horizon = self.config.horizon
        if self.config.warmup:
            for _ in range(self.config.policy.target_pool_size):
                self._make_fresh(self._new_variant(), 0.0)
        self._replenish(0.0)
        for t in self.arrival_times():
            self._schedule(float(t), ARRIVAL)

        while self._queue and self._queue[0][0] <= horizon:
            time, kind, _, payload = heapq.heappop(self._queue)
            self._advance(time)
            if kind == GENERATION_COMPLETE:
                self._on_generated(time, payload)
            elif kind == TTL_EXPIRY:
                self._on_ttl(time, payload)
            else:
                self._on_arrival(time)
        self._advance(horizon)

        uniqueness = self.fresh_serves / self.served if self.served else 1.0
        return SimResultModel(
            requests=self.requests,
            served=self.served,
            rejected=self.rejected,
            fresh_serves=self.fresh_serves,
            uniqueness_ratio=uniqueness,
            repeat_serve_probability=1.0 - uniqueness,
            pool_empty_fraction=self.empty_events / self.requests if self.requests else 0.0,
            mean_storage_bytes=self._storage_area / horizon,
            max_storage_bytes=self._max_storage,
            generations_completed=self.generations,
            replacement_rate=self.generations / horizon,
        )

    def event_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.events, columns=EVENT_LOG_COLUMNS)


def simulate(config: SimConfig) -> SimResultModel:
    """
    Run one simulation; deterministic for a given config

    Raises:
        SimConfigError: malformed trace file
    """
    simulation = Simulation(config)
    result = simulation.run()
    if config.event_log:
        simulation.event_frame().to_csv(config.event_log, index=False)
        logger.info(f"✓ Wrote {len(simulation.events)} events to {config.event_log}")
    logger.debug(f"Simulated {result.requests} requests: uniqueness={result.uniqueness_ratio:.4f} "
                 f"empty={result.pool_empty_fraction:.4f}")
    return result
