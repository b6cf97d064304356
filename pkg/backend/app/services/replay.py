"""
Replay a simulator workload against a live registry

Drives GET /images/{name}/acquire with the simulator's arrival times
(compressed by time_scale), then compares the observed uniqueness and
empty-pool fraction with what the simulator predicts for the same config.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Union
import logging
import time

import httpx

from ..models.schemas import PoolPolicy, SimConfig, SimResultModel
from .sim import Simulation

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.03
POLICY_FIELDS = ("target_pool_size", "max_deploys_per_variant", "generator_parallelism", "on_empty")


class ReplayError(Exception):
    code = "replay_failed"


@dataclass
class ReplayReport:
    simulated: SimResultModel
    observed: Dict[str, Any]
    differences: Dict[str, float]
    policy_mismatches: List[str] = field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def divergent(self) -> bool:
        return bool(self.policy_mismatches) or any(d > self.tolerance for d in self.differences.values())

    def to_dict(self) -> Dict:
        return {
            "divergent": self.divergent,
            "tolerance": self.tolerance,
            "simulated": self.simulated.model_dump(),
            "observed": self.observed,
            "differences": self.differences,
            "policy_mismatches": self.policy_mismatches,
        }


def _policy_mismatches(simulated: PoolPolicy, live: PoolPolicy, time_scale: float) -> List[str]:
    mismatches = []
    for name in POLICY_FIELDS:
        ours, theirs = getattr(simulated, name), getattr(live, name)
        if ours != theirs:
            mismatches.append(f"{name}: simulated {ours!r}, live {theirs!r}")
    ours = simulated.variant_ttl * time_scale if simulated.variant_ttl is not None else None
    theirs = live.variant_ttl
    if (ours is None) != (theirs is None) or (ours is not None and abs(ours - theirs) > 1e-9 * max(ours, 1.0)):
        mismatches.append(f"variant_ttl: simulated {ours!r} (scaled), live {theirs!r}")
    return mismatches


class _Driver:
    def __init__(self, endpoint: Union[str, Any], timeout: float):
        self._owned = isinstance(endpoint, str)
        self.client = httpx.Client(base_url=endpoint, timeout=timeout) if self._owned else endpoint

    def get(self, path: str) -> httpx.Response:
        try:
            return self.client.get(path)
        except httpx.HTTPError as e:
            raise ReplayError(f"endpoint unreachable: {e}") from e

    def json(self, path: str) -> Dict:
        response = self.get(path)
        if response.status_code != 200:
            raise ReplayError(f"GET {path} returned {response.status_code}: {response.text}")
        return response.json()

    def close(self) -> None:
        if self._owned:
            self.client.close()


def replay_against_registry(
    config: SimConfig,
    endpoint: Union[str, Any],
    name: str,
    tolerance: float = DEFAULT_TOLERANCE,
    warm_timeout: float = 30.0,
    request_timeout: float = 10.0,
) -> ReplayReport:
    """
    Replay the config's arrivals against image `name` on a running registry

    `endpoint` is a base URL or an httpx-compatible client (a FastAPI
    TestClient works). The live image's policy should match config.policy;
    any mismatch is reported and flags divergence.

    Raises:
        ReplayError: endpoint unreachable, unknown image, or the pool never
            warmed up
    """
    driver = _Driver(endpoint, request_timeout)
    try:
        listing = driver.json("/images")
        summary = next((item for item in listing if item["name"] == name), None)
        if summary is None:
            raise ReplayError(f"image '{name}' is not stored on the registry")
        live_policy = PoolPolicy.model_validate(summary["policy"])
        mismatches = _policy_mismatches(config.policy, live_policy, config.time_scale)
        for mismatch in mismatches:
            logger.warning(f"⚠ Policy mismatch: {mismatch}")

        deadline = time.monotonic() + warm_timeout
        while True:
            metrics = driver.json(f"/images/{name}/metrics")
            if metrics["variants_by_state"]["fresh"] >= live_policy.target_pool_size:
                break
            if time.monotonic() > deadline:
                raise ReplayError(f"pool of '{name}' did not warm up within {warm_timeout} s")
            time.sleep(0.01)
        before = metrics

        simulation = Simulation(config)
        arrivals = simulation.arrival_times()
        served = fresh = rejected = 0
        started = time.monotonic()
        for t in arrivals:
            delay = started + t * config.time_scale - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            response = driver.get(f"/images/{name}/acquire")
            if response.status_code == 200:
                served += 1
                fresh += bool(response.json()["fresh"])
            elif response.status_code == 503:
                rejected += 1
            else:
                raise ReplayError(f"acquire returned {response.status_code}: {response.text}")
        after = driver.json(f"/images/{name}/metrics")
    finally:
        driver.close()

    requests = after["acquire_count"] - before["acquire_count"]
    empty = after["empty_pool_events"] - before["empty_pool_events"]
    observed = {
        "requests": requests,
        "served": served,
        "rejected": rejected,
        "fresh_serves": fresh,
        "uniqueness_ratio": fresh / served if served else 1.0,
        "pool_empty_fraction": empty / requests if requests else 0.0,
    }
    simulated = Simulation(config).run()
    differences = {
        "uniqueness_ratio": abs(simulated.uniqueness_ratio - observed["uniqueness_ratio"]),
        "pool_empty_fraction": abs(simulated.pool_empty_fraction - observed["pool_empty_fraction"]),
    }
    report = ReplayReport(simulated, observed, differences, mismatches, tolerance)
    marker = "✗" if report.divergent else "✓"
    logger.info(f"{marker} Replayed {len(arrivals)} requests against '{name}': "
                f"uniqueness sim={simulated.uniqueness_ratio:.4f} live={observed['uniqueness_ratio']:.4f}")
    return report
