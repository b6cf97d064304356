"""
Tests for replaying simulator workloads against a live registry
"""

import base64

import pandas as pd
import pytest
from fastapi.testclient import TestClient

from app.main import create_app
from app.models.schemas import SimConfig
from app.services.config import ServiceConfig
from app.services.replay import ReplayError, replay_against_registry

POLICY = {"target_pool_size": 8, "generator_parallelism": 4, "on_empty": "reject"}


def write_trace(path, count: int, spacing: float = 1.0):
    pd.DataFrame({"time": [i * spacing for i in range(count)]}).to_csv(path, index=False)
    return path


def sim_config(trace, policy=None, horizon=1000.0) -> SimConfig:
    return SimConfig.model_validate({
        "arrival": {"kind": "trace", "file": str(trace)},
        "generation_time": {"kind": "fixed", "seconds": 0.0},
        "policy": policy or POLICY,
        "horizon": horizon,
        "time_scale": 0.002,
    })


@pytest.fixture
def client(make_registry):
    registry = make_registry(data_dir=None)
    config = ServiceConfig(use_env=False, config_path="/nonexistent/mosaic_config.json")
    with TestClient(create_app(config=config, registry=registry)) as test_client:
        yield test_client


def put(client, base_image, policy):
    image = base64.b64encode(base_image.to_bytes()).decode("ascii")
    response = client.put("/images/app", json={"image": image, "policy": policy})
    assert response.status_code == 200


class TestReplay:
    def test_thousand_requests_match_the_simulator(self, client, base_image, tmp_path):
        put(client, base_image, POLICY)
        report = replay_against_registry(sim_config(write_trace(tmp_path / "trace.csv", 1000)), client, "app")
        assert report.observed["requests"] == 1000
        assert report.observed["served"] + report.observed["rejected"] == 1000
        assert report.simulated.uniqueness_ratio == 1.0
        assert report.simulated.pool_empty_fraction == 0.0
        assert report.policy_mismatches == []
        assert not report.divergent, report.to_dict()

    def test_policy_mismatch_is_divergent(self, client, base_image, tmp_path):
        put(client, base_image, {**POLICY, "target_pool_size": 4})
        report = replay_against_registry(sim_config(write_trace(tmp_path / "trace.csv", 10)), client, "app")
        assert report.policy_mismatches == ["target_pool_size: simulated 8, live 4"]
        assert report.divergent

    def test_ttl_is_compared_after_scaling(self, client, base_image, tmp_path):
        put(client, base_image, {**POLICY, "variant_ttl": 2.0})
        config = sim_config(write_trace(tmp_path / "trace.csv", 5), policy={**POLICY, "variant_ttl": 1000.0})
        report = replay_against_registry(config, client, "app")
        assert report.policy_mismatches == []

    def test_empty_trace(self, client, base_image, tmp_path):
        put(client, base_image, POLICY)
        trace = tmp_path / "trace.csv"
        trace.write_text("time\n")
        report = replay_against_registry(sim_config(trace), client, "app")
        assert report.observed["requests"] == 0
        assert report.observed["uniqueness_ratio"] == 1.0
        assert report.differences == {"uniqueness_ratio": 0.0, "pool_empty_fraction": 0.0}
        assert not report.divergent

    def test_unknown_image(self, client, tmp_path):
        with pytest.raises(ReplayError, match="not stored"):
            replay_against_registry(sim_config(write_trace(tmp_path / "trace.csv", 3)), client, "app")

    def test_unreachable_endpoint(self, tmp_path):
        with pytest.raises(ReplayError, match="unreachable"):
            replay_against_registry(sim_config(write_trace(tmp_path / "trace.csv", 3)),
                                    "http://127.0.0.1:9", "app", request_timeout=0.5)
