"""
Hardened Variant Registry

Stores base images and keeps, per image, a pool of diversified variants
produced by the transform pipeline. Every acquire serves a uniformly random
fresh variant; variants expire by deploy count or TTL and the pool is
replenished in the background.

Variant lifecycle:

    generating -> fresh -> deployed (-> deployed) -> expired
    generating -> expired, fresh -> expired
"""

from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Deque, Dict, List, Optional, Sequence, Set, Tuple, Union
import hashlib
import itertools
import json
import logging
import os
import random
import re
import secrets
import threading
import time
import uuid

import numpy as np

from ..models.schemas import PipelineSpec, PoolPolicy
from ..rewriter.emitter import emit
from ..rewriter.errors import RewriterError
from ..rewriter.isa import ProgramImage, check_image
from ..rewriter.lifter import lift
from ..rewriter.transforms.pipeline import resolve, run_pipeline

logger = logging.getLogger(__name__)

NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,127}$")

# Expired variants kept per image for inspection and recovery
EXPIRED_HISTORY = 256
# Generation durations behind the percentile metrics
GENERATION_WINDOW = 1024


class VariantState(str, Enum):
    GENERATING = "generating"
    FRESH = "fresh"
    DEPLOYED = "deployed"
    EXPIRED = "expired"


ALLOWED_TRANSITIONS = frozenset({
    (VariantState.GENERATING, VariantState.FRESH),
    (VariantState.GENERATING, VariantState.EXPIRED),
    (VariantState.FRESH, VariantState.DEPLOYED),
    (VariantState.DEPLOYED, VariantState.DEPLOYED),
    (VariantState.FRESH, VariantState.EXPIRED),
    (VariantState.DEPLOYED, VariantState.EXPIRED),
})


class RegistryError(Exception):
    code = "registry_error"
    status = 500


class UnknownImageError(RegistryError):
    code = "unknown_image"
    status = 404


class PoolExhaustedError(RegistryError):
    code = "pool_exhausted"
    status = 503


class InvalidImageError(RegistryError):
    code = "invalid_image"
    status = 400


class InvalidRequestError(RegistryError):
    code = "invalid_request"
    status = 400


class IllegalTransitionError(RegistryError):
    code = "illegal_transition"
    status = 500


Generator = Callable[[ProgramImage, PipelineSpec], ProgramImage]


def default_generator(base: ProgramImage, pipeline: PipelineSpec) -> ProgramImage:
    """lift -> pipeline -> emit"""
    return emit(run_pipeline(pipeline, lift(base)).ir)


def sleeping_generator(seconds: float, inner: Generator = default_generator) -> Generator:
    """Generation hook that takes at least `seconds` (used to model generation cost)"""
    def generate(base: ProgramImage, pipeline: PipelineSpec) -> ProgramImage:
        started = time.perf_counter()
        result = inner(base, pipeline)
        remaining = seconds - (time.perf_counter() - started)
        if remaining > 0:
            time.sleep(remaining)
        return result
    return generate


@dataclass
class Variant:
    variant_id: str
    image_name: str
    master_seed: int
    state: VariantState = VariantState.GENERATING
    digest: Optional[str] = None
    deploy_count: int = 0
    created_at: Optional[float] = None
    last_deployed_at: Optional[float] = None
    generation_ms: Optional[float] = None
    size_bytes: int = 0
    sequence: int = 0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["state"] = self.state.value
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "Variant":
        data = dict(data)
        data["state"] = VariantState(data["state"])
        return cls(**data)


@dataclass
class ImageRecord:
    name: str
    base: ProgramImage
    base_digest: str
    pipeline: PipelineSpec
    policy: PoolPolicy
    created_at: float
    epoch: int = 0
    # Generating, fresh and deployed variants; expired ones move to `retired`
    variants: Dict[str, Variant] = field(default_factory=dict)
    retired: Deque[Variant] = field(default_factory=lambda: deque(maxlen=EXPIRED_HISTORY))
    expired_total: int = 0
    blobs: Dict[str, bytes] = field(default_factory=dict)
    used_seeds: Set[int] = field(default_factory=set)
    # Deployed variants over their deploy limit, kept as fallback until a fresh one exists
    deferred: Set[str] = field(default_factory=set)
    in_flight: int = 0
    acquires: int = 0
    served: int = 0
    fresh_serves: int = 0
    empty_pool_events: int = 0
    generations_completed: int = 0
    generation_failures: int = 0
    generation_durations: Deque[float] = field(default_factory=lambda: deque(maxlen=GENERATION_WINDOW))
    last_error: Optional[str] = None
    next_sequence: int = 0

    def in_state(self, state: VariantState) -> List[Variant]:
        if state is VariantState.EXPIRED:
            return list(self.retired)
        return [v for v in self.variants.values() if v.state is state]

    def history(self) -> List[Variant]:
        return sorted([*self.variants.values(), *self.retired], key=lambda v: v.sequence)

    def counters(self) -> Dict:
        return {
            "acquires": self.acquires,
            "served": self.served,
            "fresh_serves": self.fresh_serves,
            "empty_pool_events": self.empty_pool_events,
            "generations_completed": self.generations_completed,
            "generation_failures": self.generation_failures,
            "expired_total": self.expired_total,
            "generation_durations": list(self.generation_durations),
        }


@dataclass(frozen=True)
class AcquireResult:
    variant: Dict
    image_bytes: bytes
    fresh: bool


class RegistryService:
    """
    Variant registry with background replenishment

    All state changes happen under one lock; pipelines run on the worker
    pool outside it.
    """

    def __init__(
        self,
        data_dir: Optional[Union[str, Path]] = None,
        generator: Optional[Generator] = None,
        max_workers: int = 8,
        selection_seed: Optional[int] = None,
        clock: Callable[[], float] = time.time,
        autostart: bool = True,
        track_transitions: bool = False,
    ):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.generator = generator or default_generator
        self.clock = clock
        self.autostart = autostart
        self._lock = threading.RLock()
        self._changed = threading.Condition(self._lock)
        self._images: Dict[str, ImageRecord] = {}
        self._executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="mosaic-gen")
        self._futures: Set[Future] = set()
        self._selector = random.Random(selection_seed) if selection_seed is not None else secrets.SystemRandom()
        self._closed = False
        # Unique across records: a generation outliving its record never matches a newer one
        self._epochs = itertools.count(1)
        self.track_transitions = track_transitions
        self.transitions: List[Tuple[str, Optional[str], str]] = []

        if self.data_dir is not None:
            (self.data_dir / "images").mkdir(parents=True, exist_ok=True)
            self._recover()

    # ------------------------------------------------------------ lifecycle

    def shutdown(self, wait: bool = True) -> None:
        with self._lock:
            self._closed = True
        self._executor.shutdown(wait=wait, cancel_futures=True)
        logger.info("✓ Registry shut down")

    def _transition(self, record: ImageRecord, variant: Variant, new: VariantState) -> None:
        old = variant.state
        if (old, new) not in ALLOWED_TRANSITIONS:
            raise IllegalTransitionError(f"variant {variant.variant_id}: illegal transition "
                                         f"{old.value} -> {new.value}")
        variant.state = new
        if self.track_transitions:
            self.transitions.append((variant.variant_id, old.value, new.value))
        logger.debug(f"{record.name}/{variant.variant_id}: {old.value} -> {new.value}")
        self._changed.notify_all()

    def _expire(self, record: ImageRecord, variant: Variant) -> None:
        self._transition(record, variant, VariantState.EXPIRED)
        record.variants.pop(variant.variant_id, None)
        record.retired.append(variant)
        record.expired_total += 1
        record.deferred.discard(variant.variant_id)
        digest = variant.digest
        if digest is None:
            return
        still_used = any(v.digest == digest and v.state is not VariantState.GENERATING
                         for v in record.variants.values())
        if not still_used:
            record.blobs.pop(digest, None)
            path = self._blob_path(record.name, digest)
            if path is not None and path.exists():
                path.unlink()

    # ------------------------------------------------------------ persistence

    def _image_dir(self, name: str) -> Optional[Path]:
        return self.data_dir / "images" / name if self.data_dir is not None else None

    def _blob_path(self, name: str, digest: str) -> Optional[Path]:
        directory = self._image_dir(name)
        return directory / "blobs" / f"{digest}.disa" if directory is not None else None

    @staticmethod
    def _atomic_write(path: Path, payload: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + f".tmp{threading.get_ident()}")
        with open(tmp, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    def _persist(self, record: ImageRecord) -> None:
        directory = self._image_dir(record.name)
        if directory is None:
            return
        manifest = {
            "name": record.name,
            "base_digest": record.base_digest,
            "pipeline": record.pipeline.model_dump(),
            "policy": record.policy.model_dump(),
            "created_at": record.created_at,
            "used_seeds": sorted(record.used_seeds),
            "deferred": sorted(record.deferred),
            "next_sequence": record.next_sequence,
            "counters": record.counters(),
            "variants": [v.to_dict() for v in record.history()],
        }
        self._atomic_write(directory / "manifest.json", json.dumps(manifest, indent=2).encode())

    def _recover(self) -> None:
        """Replay every manifest; interrupted generations and lost blobs expire"""
        for manifest_path in sorted((self.data_dir / "images").glob("*/manifest.json")):
            directory = manifest_path.parent
            try:
                manifest = json.loads(manifest_path.read_text())
                base = ProgramImage.from_bytes((directory / "base.disa").read_bytes())
            except (OSError, ValueError, RewriterError) as e:
                logger.error(f"✗ Could not recover image in {directory}: {e}")
                continue
            record = ImageRecord(
                name=manifest["name"],
                base=base,
                base_digest=manifest["base_digest"],
                pipeline=PipelineSpec.model_validate(manifest["pipeline"]),
                policy=PoolPolicy.model_validate(manifest["policy"]),
                created_at=manifest["created_at"],
                epoch=next(self._epochs),
                used_seeds=set(manifest.get("used_seeds", [])),
                deferred=set(manifest.get("deferred", [])),
                next_sequence=manifest.get("next_sequence", 0),
            )
            counters = manifest.get("counters", {})
            for key in ("acquires", "served", "fresh_serves", "empty_pool_events",
                        "generations_completed", "generation_failures"):
                setattr(record, key, counters.get(key, 0))
            record.expired_total = counters.get("expired_total", 0)
            record.generation_durations.extend(counters.get("generation_durations", []))

            recovered = 0
            with self._lock:
                for data in manifest.get("variants", []):
                    variant = Variant.from_dict(data)
                    if variant.state is VariantState.EXPIRED:
                        record.retired.append(variant)
                    else:
                        record.variants[variant.variant_id] = variant
                for variant in list(record.variants.values()):
                    if variant.state is VariantState.GENERATING:
                        self._expire(record, variant)
                        recovered += 1
                    elif variant.state in (VariantState.FRESH, VariantState.DEPLOYED):
                        path = self._blob_path(record.name, variant.digest)
                        if path.exists():
                            record.blobs[variant.digest] = path.read_bytes()
                        else:
                            self._expire(record, variant)
                            recovered += 1
                self._images[record.name] = record
                self._persist(record)
            logger.info(f"✓ Recovered image '{record.name}' "
                        f"({len(record.in_state(VariantState.FRESH))} fresh, {recovered} expired on recovery)")
        if self.autostart:
            with self._lock:
                for record in self._images.values():
                    self._replenish(record)

    # ------------------------------------------------------------ generation

    def _new_seed(self, record: ImageRecord) -> int:
        while True:
            seed = secrets.randbits(64)
            if seed not in record.used_seeds:
                record.used_seeds.add(seed)
                return seed

    def _replenish(self, record: ImageRecord) -> int:
        """Start generations until fresh + generating reaches the target (lock held)"""
        if self._closed or record.last_error is not None:
            return 0
        started = 0
        policy = record.policy
        while True:
            pending = len(record.in_state(VariantState.FRESH)) + len(record.in_state(VariantState.GENERATING))
            if pending >= policy.target_pool_size or record.in_flight >= policy.generator_parallelism:
                break
            variant = Variant(uuid.uuid4().hex[:16], record.name, self._new_seed(record),
                              sequence=record.next_sequence)
            record.next_sequence += 1
            record.variants[variant.variant_id] = variant
            if self.track_transitions:
                self.transitions.append((variant.variant_id, None, VariantState.GENERATING.value))
            record.in_flight += 1
            future = self._executor.submit(self._generate, record.name, record.epoch, variant.variant_id,
                                           record.base, record.pipeline.with_seed(variant.master_seed))
            self._futures.add(future)
            future.add_done_callback(self._futures.discard)
            started += 1
        return started

    def _generate(self, name: str, epoch: int, variant_id: str, base: ProgramImage,
                  pipeline: PipelineSpec) -> None:
        started = time.perf_counter()
        error = None
        blob = b""
        try:
            blob = self.generator(base, pipeline).to_bytes()
        except Exception as e:
            error = e
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        with self._lock:
            record = self._images.get(name)
            if record is None:
                return
            variant = record.variants.get(variant_id)
            if record.epoch == epoch:
                record.in_flight -= 1
            if variant is None or variant.state is not VariantState.GENERATING:
                # Abandoned by a re-put, pipeline update or removal
                self._replenish(record)
                return
            if error is not None:
                record.generation_failures += 1
                record.last_error = f"{type(error).__name__}: {error}"
                self._expire(record, variant)
                logger.error(f"✗ Generation of {name}/{variant_id} failed: {error}")
                self._persist(record)
                return

            digest = hashlib.sha256(blob).hexdigest()
            variant.digest = digest
            variant.size_bytes = len(blob)
            variant.generation_ms = elapsed_ms
            variant.created_at = self.clock()
            record.blobs[digest] = blob
            path = self._blob_path(name, digest)
            if path is not None:
                self._atomic_write(path, blob)
            self._transition(record, variant, VariantState.FRESH)
            record.generations_completed += 1
            record.generation_durations.append(elapsed_ms)
            for deferred_id in sorted(record.deferred):
                self._expire(record, record.variants[deferred_id])
            logger.info(f"✓ Generated {name}/{variant_id} digest={digest[:12]} in {elapsed_ms:.1f} ms")
            self._replenish(record)
            self._persist(record)

    # ------------------------------------------------------------ operations

    def _validate_image(self, image: Union[ProgramImage, bytes]) -> ProgramImage:
        try:
            if isinstance(image, (bytes, bytearray)):
                image = ProgramImage.from_bytes(bytes(image))
            check_image(image)
            lift(image)
        except RewriterError as e:
            raise InvalidImageError(f"invalid image: {e}") from e
        return image

    def _validate_pipeline(self, pipeline: PipelineSpec) -> None:
        try:
            for stage in pipeline.stages:
                resolve(stage.plugin).resolve_config(stage.config)
        except RewriterError as e:
            raise InvalidRequestError(f"invalid pipeline: {e}") from e

    def _record(self, name: str) -> ImageRecord:
        record = self._images.get(name)
        if record is None:
            raise UnknownImageError(f"unknown image '{name}'")
        return record

    def _abandon_all(self, record: ImageRecord) -> int:
        expired = 0
        for variant in list(record.variants.values()):
            self._expire(record, variant)
            expired += 1
        record.epoch = next(self._epochs)
        record.in_flight = 0
        return expired

    def put_image(self, name: str, image: Union[ProgramImage, bytes],
                  pipeline: Optional[PipelineSpec] = None,
                  policy: Optional[PoolPolicy] = None) -> Dict:
        """
        Store (or replace) a base image and start filling its pool

        Re-putting a name expires every existing variant and resets the
        uniqueness accounting.
        """
        if not name or not NAME_RE.match(name):
            raise InvalidRequestError(f"invalid image name '{name}'")
        image = self._validate_image(image)
        pipeline = pipeline or PipelineSpec()
        policy = policy or PoolPolicy()
        self._validate_pipeline(pipeline)

        base_bytes = image.to_bytes()
        with self._lock:
            previous = self._images.get(name)
            expired = self._abandon_all(previous) if previous is not None else 0
            record = ImageRecord(
                name=name,
                base=image,
                base_digest=hashlib.sha256(base_bytes).hexdigest(),
                pipeline=pipeline,
                policy=policy,
                created_at=self.clock(),
                epoch=next(self._epochs),
                used_seeds=previous.used_seeds if previous is not None else set(),
                next_sequence=previous.next_sequence if previous is not None else 0,
            )
            self._images[name] = record
            directory = self._image_dir(name)
            if directory is not None:
                self._atomic_write(directory / "base.disa", base_bytes)
            if self.autostart:
                self._replenish(record)
            self._persist(record)

        logger.info(f"✓ Stored image '{name}' ({len(image.code)} records, "
                    f"{len(pipeline.stages)} stage pipeline, pool target {policy.target_pool_size})")
        return {
            "name": name,
            "status": "replaced" if previous is not None else "created",
            "replaced": previous is not None,
            "expired": expired,
            "digest": record.base_digest,
            "target_pool_size": policy.target_pool_size,
        }

    def update_pipeline(self, name: str, pipeline: PipelineSpec) -> Dict:
        """Swap the transform pipeline of an image and regenerate its pool"""
        self._validate_pipeline(pipeline)
        with self._lock:
            record = self._record(name)
            expired = self._abandon_all(record)
            record.pipeline = pipeline
            record.last_error = None
            if self.autostart:
                self._replenish(record)
            self._persist(record)
        logger.info(f"✓ Pipeline of '{name}' updated; {expired} variant(s) expired")
        return {"name": name, "expired": expired, "stages": [s.plugin for s in pipeline.stages]}

    def remove_image(self, name: str) -> Dict:
        with self._lock:
            record = self._record(name)
            expired = self._abandon_all(record)
            del self._images[name]
            directory = self._image_dir(name)
        if directory is not None and directory.exists():
            for path in sorted(directory.rglob("*"), reverse=True):
                path.unlink() if path.is_file() else path.rmdir()
            directory.rmdir()
        logger.info(f"✓ Removed image '{name}'")
        return {"name": name, "expired": expired}

    def list_images(self) -> List[Dict]:
        with self._lock:
            return [
                {
                    "name": record.name,
                    "digest": record.base_digest,
                    "pipeline": record.pipeline,
                    "policy": record.policy,
                    "variants_by_state": self._state_counts(record),
                }
                for record in sorted(self._images.values(), key=lambda r: r.name)
            ]

    def _select(self, candidates: List[Variant]) -> Variant:
        """Uniform choice among candidates (ordered for reproducible seeding)"""
        ordered = sorted(candidates, key=lambda v: v.sequence)
        return ordered[self._selector.randrange(len(ordered))]

    def acquire(self, name: str) -> AcquireResult:
        """
        Serve one variant of an image

        Raises:
            UnknownImageError: no such image
            PoolExhaustedError: no fresh variant and the policy rejects, or
                nothing is stored to fall back on
        """
        with self._lock:
            record = self._record(name)
            now = self.clock()
            self._sweep(record, now)
            policy = record.policy
            record.acquires += 1

            fresh = record.in_state(VariantState.FRESH)
            if fresh:
                variant = self._select(fresh)
                first = True
            else:
                record.empty_pool_events += 1
                stored = record.in_state(VariantState.DEPLOYED)
                if policy.on_empty == "reject" or not stored:
                    if self.autostart:
                        self._replenish(record)
                    self._persist(record)
                    raise PoolExhaustedError(f"pool exhausted for image '{name}'")
                variant = min(stored, key=lambda v: (v.deploy_count, v.sequence))
                first = False

            self._transition(record, variant, VariantState.DEPLOYED)
            variant.deploy_count += 1
            variant.last_deployed_at = now
            record.served += 1
            if first:
                record.fresh_serves += 1
            snapshot = variant.to_dict()
            blob = record.blobs[variant.digest]

            limit = policy.max_deploys_per_variant
            if limit is not None and variant.deploy_count >= limit:
                if policy.on_empty == "reject" or record.in_state(VariantState.FRESH):
                    self._expire(record, variant)
                else:
                    record.deferred.add(variant.variant_id)
            if self.autostart:
                self._replenish(record)
            self._persist(record)
        return AcquireResult(snapshot, blob, first)

    def _sweep(self, record: ImageRecord, now: float) -> int:
        ttl = record.policy.variant_ttl
        if ttl is None:
            return 0
        expired = 0
        for variant in list(record.variants.values()):
            if variant.state in (VariantState.FRESH, VariantState.DEPLOYED) and now - variant.created_at >= ttl:
                self._expire(record, variant)
                expired += 1
        return expired

    def expire_sweep(self, now: Optional[float] = None, name: Optional[str] = None) -> int:
        """Expire every fresh/deployed variant older than its image's TTL"""
        with self._lock:
            now = self.clock() if now is None else now
            records = [self._record(name)] if name is not None else list(self._images.values())
            total = 0
            for record in records:
                expired = self._sweep(record, now)
                if expired:
                    if self.autostart:
                        self._replenish(record)
                    self._persist(record)
                total += expired
        if total:
            logger.info(f"✓ Expired {total} variant(s) past TTL")
        return total

    def wait_for_pool(self, name: str, fresh: Optional[int] = None, timeout: float = 10.0) -> bool:
        """Block until the image has `fresh` fresh variants (default: its target)"""
        deadline = time.monotonic() + timeout
        with self._changed:
            while True:
                record = self._record(name)
                wanted = record.policy.target_pool_size if fresh is None else fresh
                if len(record.in_state(VariantState.FRESH)) >= wanted:
                    return True
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._changed.wait(remaining)

    def variants(self, name: str) -> List[Dict]:
        with self._lock:
            record = self._record(name)
            return [v.to_dict() for v in record.history()]

    def policy_of(self, name: str) -> PoolPolicy:
        with self._lock:
            return self._record(name).policy

    # ------------------------------------------------------------ metrics

    @staticmethod
    def _state_counts(record: ImageRecord) -> Dict[str, int]:
        counts = {state.value: 0 for state in VariantState}
        for variant in record.variants.values():
            counts[variant.state.value] += 1
        counts[VariantState.EXPIRED.value] = record.expired_total
        return counts

    @staticmethod
    def _generation_stats(durations: Sequence[float]) -> Dict:
        if not durations:
            return {"count": 0, "mean_ms": 0.0, "p50_ms": 0.0, "p95_ms": 0.0, "p99_ms": 0.0}
        values = np.asarray(durations, dtype=float)
        p50, p95, p99 = np.percentile(values, [50, 95, 99])
        return {
            "count": int(values.size),
            "mean_ms": float(values.mean()),
            "p50_ms": float(p50),
            "p95_ms": float(p95),
            "p99_ms": float(p99),
        }

    def _summarize(self, records: List[ImageRecord], name: Optional[str], now: float) -> Dict:
        storage_by_state = {VariantState.FRESH.value: 0, VariantState.DEPLOYED.value: 0}
        states = {state.value: 0 for state in VariantState}
        durations: List[float] = []
        acquires = served = fresh_serves = empty = generated = 0
        elapsed = 0.0
        for record in records:
            for variant in record.variants.values():
                states[variant.state.value] += 1
                if variant.state.value in storage_by_state:
                    storage_by_state[variant.state.value] += variant.size_bytes
            states[VariantState.EXPIRED.value] += record.expired_total
            durations.extend(record.generation_durations)
            acquires += record.acquires
            served += record.served
            fresh_serves += record.fresh_serves
            empty += record.empty_pool_events
            generated += record.generations_completed
            elapsed = max(elapsed, now - record.created_at)
        return {
            "name": name,
            "storage_bytes": sum(storage_by_state.values()),
            "storage_by_state": storage_by_state,
            "variants_by_state": states,
            "generation_ms": self._generation_stats(durations),
            "replacement_rate": generated / elapsed if elapsed > 0 else 0.0,
            "uniqueness_ratio": fresh_serves / served if served else 1.0,
            "pool_empty_fraction": empty / acquires if acquires else 0.0,
            "acquire_count": acquires,
            "empty_pool_events": empty,
        }

    def metrics(self, name: Optional[str] = None) -> Dict:
        """Consistent snapshot; per image when named, aggregate otherwise"""
        with self._lock:
            now = self.clock()
            if name is not None:
                return self._summarize([self._record(name)], name, now)
            return {
                "aggregate": self._summarize(list(self._images.values()), None, now),
                "images": {n: self._summarize([r], n, now) for n, r in sorted(self._images.items())},
            }

    def health(self) -> Dict:
        with self._lock:
            return {"images": len(self._images), "in_flight": sum(r.in_flight for r in self._images.values())}
