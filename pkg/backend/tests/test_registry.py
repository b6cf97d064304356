"""
Tests for the variant registry

Generation uses the seed-stamp generator from conftest so pools fill in
milliseconds; the real pipeline is covered by test_api and test_equivalence.
"""

from collections import Counter, defaultdict
import hashlib
import json
import threading

import numpy as np
import pytest

from app.rewriter.isa import ProgramImage
from app.services import registry as registry_module
from app.services.registry import (
    ALLOWED_TRANSITIONS,
    InvalidImageError,
    InvalidRequestError,
    PoolExhaustedError,
    RegistryService,
    UnknownImageError,
    Variant,
    VariantState,
    sleeping_generator,
)

from .conftest import load_fixture, pipeline_of, seed_stamp_generator

CHI2_CRITICAL_DF3 = 16.266


def states(registry, name):
    return Counter(v["state"] for v in registry.variants(name))


class TestUniqueness:
    def test_thousand_acquires_are_all_distinct(self, make_registry, policy, base_image):
        registry = make_registry(data_dir=None)
        registry.put_image("app", base_image, policy=policy(target_pool_size=8, generator_parallelism=4,
                                                              on_empty="reject"))
        variant_ids, digests = set(), set()
        for _ in range(1000):
            assert registry.wait_for_pool("app", fresh=1, timeout=10)
            served = registry.acquire("app")
            assert served.fresh
            variant_ids.add(served.variant["variant_id"])
            digests.add(hashlib.sha256(served.image_bytes).hexdigest())
        assert len(variant_ids) == 1000
        assert len(digests) == 1000
        assert registry.metrics("app")["uniqueness_ratio"] == 1.0

    def test_served_bytes_match_digest(self, make_registry, base_image):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        served = registry.acquire("app")
        assert hashlib.sha256(served.image_bytes).hexdigest() == served.variant["digest"]
        ProgramImage.from_bytes(served.image_bytes)


class TestSelection:
    def test_uniform_choice(self):
        registry = RegistryService(selection_seed=1234, autostart=False)
        try:
            candidates = [Variant(f"v{i}", "app", i, state=VariantState.FRESH, sequence=i) for i in range(4)]
            draws = Counter(registry._select(list(reversed(candidates))).variant_id for _ in range(10_000))
            expected = 10_000 / 4
            chi2 = sum((draws[f"v{i}"] - expected) ** 2 / expected for i in range(4))
            assert chi2 < CHI2_CRITICAL_DF3
        finally:
            registry.shutdown()

    def test_seeded_selection_is_reproducible(self):
        picks = []
        for _ in range(2):
            registry = RegistryService(selection_seed=7, autostart=False)
            candidates = [Variant(f"v{i}", "app", i, state=VariantState.FRESH, sequence=i) for i in range(5)]
            picks.append([registry._select(candidates).variant_id for _ in range(50)])
            registry.shutdown()
        assert picks[0] == picks[1]


class TestConcurrency:
    def test_stress_never_serves_expired_or_generating(self, make_registry, policy, base_image):
        registry = make_registry(data_dir=None)
        registry.put_image("app", base_image, policy=policy(target_pool_size=6, generator_parallelism=4))
        assert registry.wait_for_pool("app", fresh=1)
        served_states = []
        errors = []
        lock = threading.Lock()

        def worker():
            local = []
            for _ in range(625):
                try:
                    local.append(registry.acquire("app").variant["state"])
                except PoolExhaustedError:
                    pass
                except Exception as e:
                    errors.append(e)
            with lock:
                served_states.extend(local)

        threads = [threading.Thread(target=worker) for _ in range(16)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        assert errors == []
        assert served_states and set(served_states) == {"deployed"}
        metrics = registry.metrics("app")
        assert metrics["acquire_count"] == 16 * 625

    def test_transitions_follow_the_lifecycle(self, make_registry, policy, base_image):
        registry = make_registry(data_dir=None, track_transitions=True)
        registry.put_image("app", base_image, policy=policy(target_pool_size=4))
        for _ in range(40):
            registry.wait_for_pool("app", fresh=1)
            registry.acquire("app")
        registry.update_pipeline("app", pipeline_of(["bilr"]))
        registry.shutdown(wait=True)

        last = {}
        for variant_id, old, new in registry.transitions:
            if old is None:
                assert new == VariantState.GENERATING.value
                assert variant_id not in last
            else:
                assert (VariantState(old), VariantState(new)) in ALLOWED_TRANSITIONS
                assert last[variant_id] == old
            last[variant_id] = new


class TestPolicy:
    def test_reject_on_empty(self, make_registry, policy, base_image):
        registry = make_registry(autostart=False)
        registry.put_image("app", base_image, policy=policy(on_empty="reject"))
        with pytest.raises(PoolExhaustedError):
            registry.acquire("app")
        assert registry.metrics("app")["empty_pool_events"] == 1

    def test_nothing_stored_to_reuse(self, make_registry, base_image):
        registry = make_registry(autostart=False)
        registry.put_image("app", base_image)
        with pytest.raises(PoolExhaustedError):
            registry.acquire("app")

    def test_reuse_least_deployed_until_fresh_arrives(self, make_registry, policy, base_image):
        registry = make_registry(generator=sleeping_generator(0.3, seed_stamp_generator))
        registry.put_image("app", base_image, policy=policy(target_pool_size=1, generator_parallelism=1))
        assert registry.wait_for_pool("app", timeout=10)
        first = registry.acquire("app")
        second = registry.acquire("app")
        assert first.fresh and not second.fresh
        assert second.variant["variant_id"] == first.variant["variant_id"]
        assert second.variant["deploy_count"] == 2

        assert registry.wait_for_pool("app", fresh=1, timeout=10)
        by_id = {v["variant_id"]: v for v in registry.variants("app")}
        assert by_id[first.variant["variant_id"]]["state"] == "expired"
        assert registry.metrics("app")["uniqueness_ratio"] == 0.5

    def test_unlimited_deploys(self, make_registry, policy, base_image):
        registry = make_registry()
        registry.put_image("app", base_image, policy=policy(max_deploys_per_variant=None))
        assert registry.wait_for_pool("app")
        for _ in range(10):
            registry.acquire("app")
        assert states(registry, "app")["expired"] == 0

    def test_ttl_expiry_with_injected_clock(self, make_registry, policy, base_image):
        now = [1000.0]
        registry = make_registry(clock=lambda: now[0])
        registry.put_image("app", base_image, policy=policy(target_pool_size=4, variant_ttl=10.0))
        assert registry.wait_for_pool("app")
        assert registry.expire_sweep() == 0
        now[0] += 11.0
        assert registry.expire_sweep() == 4
        assert registry.wait_for_pool("app")
        served = registry.acquire("app")
        assert served.variant["created_at"] == now[0]


class TestImages:
    def test_invalid_image(self, make_registry):
        registry = make_registry()
        with pytest.raises(InvalidImageError):
            registry.put_image("app", b"not an image")

    def test_invalid_name(self, make_registry, base_image):
        with pytest.raises(InvalidRequestError):
            make_registry().put_image("../escape", base_image)

    def test_unknown_plugin_in_pipeline(self, make_registry, base_image):
        with pytest.raises(InvalidRequestError, match="unknown plugin"):
            make_registry().put_image("app", base_image, pipeline=pipeline_of(["scramble"]))

    def test_unknown_image(self, make_registry):
        registry = make_registry()
        with pytest.raises(UnknownImageError):
            registry.acquire("missing")
        with pytest.raises(UnknownImageError):
            registry.remove_image("missing")

    def test_reput_expires_everything(self, make_registry, base_image):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        result = registry.put_image("app", load_fixture("sum_loop").image)
        assert result["status"] == "replaced"
        assert result["expired"] >= 4
        assert registry.wait_for_pool("app")
        served = registry.acquire("app")
        assert ProgramImage.from_bytes(served.image_bytes).code == load_fixture("sum_loop").image.code

    def test_remove(self, make_registry, base_image, tmp_path):
        registry = make_registry()
        registry.put_image("app", base_image)
        registry.wait_for_pool("app")
        registry.remove_image("app")
        assert registry.list_images() == []
        assert not (tmp_path / "registry" / "images" / "app").exists()

    def test_generation_outliving_a_removed_image(self, make_registry, policy, base_image):
        entered, release = threading.Event(), threading.Event()
        calls = []

        def first_call_blocks(base, pipeline):
            calls.append(pipeline.master_seed)
            if len(calls) == 1:
                entered.set()
                release.wait(10)
            return seed_stamp_generator(base, pipeline)

        registry = make_registry(data_dir=None, generator=first_call_blocks)
        one_slot = policy(target_pool_size=1, generator_parallelism=1)
        registry.put_image("app", base_image, policy=one_slot)
        assert entered.wait(10)
        registry.remove_image("app")
        registry.put_image("app", base_image, policy=one_slot)
        assert registry.wait_for_pool("app", fresh=1)

        release.set()
        registry.shutdown(wait=True)
        record = registry._images["app"]
        assert record.in_flight == 0
        assert states(registry, "app") == Counter({"fresh": 1})

    def test_failing_generator_stops_retrying(self, make_registry, base_image):
        def broken(base, pipeline):
            raise RuntimeError("generator exploded")

        registry = make_registry(generator=broken)
        registry.put_image("app", base_image)
        registry.shutdown(wait=True)
        counts = states(registry, "app")
        assert counts["fresh"] == 0 and counts["generating"] == 0
        assert 1 <= counts["expired"] <= 2


class TestHistory:
    def test_reput_starts_an_empty_variant_map(self, make_registry, base_image):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        before = registry.variants("app")
        registry.put_image("app", load_fixture("sum_loop").image)
        assert registry.wait_for_pool("app")
        after = registry.variants("app")
        assert {v["variant_id"] for v in before}.isdisjoint(v["variant_id"] for v in after)
        assert {v["master_seed"] for v in before}.isdisjoint(v["master_seed"] for v in after)
        assert {v["state"] for v in after} == {"fresh"}

    def test_expired_variants_and_durations_are_bounded(self, make_registry, policy, base_image, monkeypatch):
        monkeypatch.setattr(registry_module, "EXPIRED_HISTORY", 16)
        monkeypatch.setattr(registry_module, "GENERATION_WINDOW", 16)
        registry = make_registry()
        registry.put_image("app", base_image, policy=policy(target_pool_size=2, on_empty="reject"))
        for _ in range(50):
            assert registry.wait_for_pool("app", fresh=1)
            registry.acquire("app")
        assert registry.wait_for_pool("app")

        history = registry.variants("app")
        assert len(history) == 16 + 2
        metrics = registry.metrics("app")
        assert metrics["variants_by_state"]["expired"] == 50
        assert metrics["generation_ms"]["count"] == 16
        assert metrics["uniqueness_ratio"] == 1.0

        registry.shutdown(wait=True)
        manifest = json.loads((registry.data_dir / "images" / "app" / "manifest.json").read_text())
        assert len(manifest["variants"]) == 16 + 2

    def test_transitions_are_not_recorded_by_default(self, make_registry, base_image):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        registry.acquire("app")
        assert registry.transitions == []


class TestPersistence:
    def test_recovers_pool(self, make_registry, base_image, tmp_path):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        deployed = registry.acquire("app").variant["variant_id"]
        assert registry.wait_for_pool("app")
        registry.shutdown(wait=True)
        before = {v["variant_id"]: v["state"] for v in registry.variants("app")}

        recovered = make_registry(autostart=False)
        after = {v["variant_id"]: v["state"] for v in recovered.variants("app")}
        assert after == before
        assert after[deployed] == "expired"
        served = recovered.acquire("app")
        assert served.fresh
        assert hashlib.sha256(served.image_bytes).hexdigest() == served.variant["digest"]
        assert recovered.metrics("app")["acquire_count"] == 2

    def test_interrupted_generation_and_lost_blob_expire(self, make_registry, base_image, tmp_path):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        registry.shutdown(wait=True)

        directory = tmp_path / "registry" / "images" / "app"
        manifest = json.loads((directory / "manifest.json").read_text())
        fresh = [v for v in manifest["variants"] if v["state"] == "fresh"]
        fresh[0]["state"] = "generating"
        (directory / "blobs" / f"{fresh[1]['digest']}.disa").unlink()
        (directory / "manifest.json").write_text(json.dumps(manifest))

        recovered = make_registry(autostart=False)
        by_id = {v["variant_id"]: v["state"] for v in recovered.variants("app")}
        assert by_id[fresh[0]["variant_id"]] == "expired"
        assert by_id[fresh[1]["variant_id"]] == "expired"
        assert by_id[fresh[2]["variant_id"]] == "fresh"


class TestMetrics:
    def test_storage_accounting(self, make_registry, base_image):
        registry = make_registry()
        registry.put_image("app", base_image)
        assert registry.wait_for_pool("app")
        registry.acquire("app")
        assert registry.wait_for_pool("app")
        stored = [v for v in registry.variants("app") if v["state"] in ("fresh", "deployed")]
        metrics = registry.metrics("app")
        assert metrics["storage_bytes"] == sum(v["size_bytes"] for v in stored)
        by_state = defaultdict(int)
        for v in stored:
            by_state[v["state"]] += v["size_bytes"]
        assert metrics["storage_by_state"] == {"fresh": by_state["fresh"], "deployed": by_state["deployed"]}

    def test_generation_percentiles(self):
        stats = RegistryService._generation_stats([float(v) for v in range(1, 101)])
        assert stats["count"] == 100
        assert stats["mean_ms"] == pytest.approx(50.5)
        assert stats["p50_ms"] == pytest.approx(50.5)
        assert stats["p95_ms"] == pytest.approx(np.percentile(np.arange(1, 101), 95))
        assert stats["p99_ms"] == pytest.approx(99.01)

    def test_aggregate(self, make_registry, base_image):
        registry = make_registry()
        registry.put_image("a", base_image)
        registry.put_image("b", base_image)
        registry.wait_for_pool("a")
        registry.wait_for_pool("b")
        registry.acquire("a")
        snapshot = registry.metrics()
        assert set(snapshot["images"]) == {"a", "b"}
        assert snapshot["aggregate"]["acquire_count"] == 1
        assert snapshot["aggregate"]["storage_bytes"] == sum(m["storage_bytes"] for m in snapshot["images"].values())
