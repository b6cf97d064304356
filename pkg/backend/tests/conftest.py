"""
Shared fixtures

Fixture programs live in tests/fixtures/programs/*.dasm. Header lines:

    ;! inputs <words> <low> <high>   words per random input vector and their range
    ;! tags <tag> ...                 what the program exercises
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Tuple
import sys

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from app.models.schemas import PipelineSpec, PoolPolicy, StageSpec  # noqa: E402
from app.rewriter.assembler import assemble  # noqa: E402
from app.rewriter.equivalence import random_vectors  # noqa: E402
from app.rewriter.isa import DataKind, DataObject, ProgramImage, wrap64  # noqa: E402
from app.services.registry import RegistryService  # noqa: E402

PROGRAM_DIR = Path(__file__).parent / "fixtures" / "programs"

PLUGINS = ["bilr", "stack_pad", "global_shuffle", "heap_pad", "canary", "indirect_to_direct", "cfi_check"]

CANONICAL_PIPELINES: Dict[str, List[str]] = {
    "diversity": ["bilr", "stack_pad", "global_shuffle", "heap_pad"],
    "canary-layout": ["canary", "bilr"],
    "devirtualize": ["indirect_to_direct", "bilr", "global_shuffle"],
    "cfi-heap": ["cfi_check", "heap_pad", "bilr"],
    "everything": ["canary", "stack_pad", "cfi_check", "bilr", "global_shuffle", "heap_pad"],
}

# Tag -> plugins that must refuse such a program
EXPECTED_REFUSALS: Dict[str, FrozenSet[str]] = {
    "stack-escape": frozenset({"stack_pad"}),
    "unattributed-global": frozenset({"global_shuffle"}),
    "untargeted-indirect": frozenset({"indirect_to_direct"}),
}


@dataclass(frozen=True)
class Fixture:
    name: str
    source: str
    image: ProgramImage
    tags: FrozenSet[str]
    words: int
    low: int
    high: int

    def vectors(self, count: int = 50, seed: int = 1) -> List[List[int]]:
        return random_vectors(count, seed, self.words, self.low, self.high)

    def refusing_plugins(self) -> FrozenSet[str]:
        refusing = frozenset()
        for tag in self.tags:
            refusing |= EXPECTED_REFUSALS.get(tag, frozenset())
        return refusing


def _parse_header(source: str) -> Tuple[Tuple[int, int, int], FrozenSet[str]]:
    inputs = (0, 0, 0)
    tags: FrozenSet[str] = frozenset()
    for line in source.splitlines():
        if not line.startswith(";!"):
            continue
        key, *values = line[2:].split()
        if key == "inputs":
            inputs = tuple(int(v) for v in values)
        elif key == "tags":
            tags = frozenset(values)
    return inputs, tags


def load_fixture(name: str) -> Fixture:
    source = (PROGRAM_DIR / f"{name}.dasm").read_text()
    (words, low, high), tags = _parse_header(source)
    return Fixture(name, source, assemble(source), tags, words, low, high)


def all_fixtures() -> List[Fixture]:
    return [load_fixture(path.stem) for path in sorted(PROGRAM_DIR.glob("*.dasm"))]


def pipeline_of(plugins: List[str], master_seed: int = 0) -> PipelineSpec:
    return PipelineSpec(master_seed=master_seed, stages=[StageSpec(plugin=p) for p in plugins])


def seed_stamp_generator(base: ProgramImage, pipeline: PipelineSpec) -> ProgramImage:
    """Cheap generator: the base image plus a data object holding the seed"""
    stamp = DataObject(0x5EED, DataKind.RAW, (wrap64(pipeline.master_seed),))
    return ProgramImage(base.entry, base.code, base.data_objects + (stamp,), base.pins)


@pytest.fixture(scope="session")
def fixtures() -> List[Fixture]:
    return all_fixtures()


@pytest.fixture
def fixture():
    return load_fixture


@pytest.fixture
def base_image() -> ProgramImage:
    return load_fixture("weighted_blocks").image


@pytest.fixture
def make_registry(tmp_path):
    """Factory for registries that are shut down after the test"""
    created: List[RegistryService] = []

    def factory(**kwargs) -> RegistryService:
        kwargs.setdefault("data_dir", tmp_path / "registry")
        kwargs.setdefault("generator", seed_stamp_generator)
        registry = RegistryService(**kwargs)
        created.append(registry)
        return registry

    yield factory
    for registry in created:
        registry.shutdown(wait=True)


@pytest.fixture
def policy():
    def build(**fields) -> PoolPolicy:
        return PoolPolicy(**fields)
    return build
