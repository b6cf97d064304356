"""
Functional equivalence checks built on the interpreter

Two images are equivalent on an input vector when they produce the same
output words and the same termination. Random input vectors come from a
seeded numpy generator so every check is reproducible.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import json
import logging

import numpy as np

from .interpreter import DEFAULT_STEP_LIMIT, ExecutionResult, execute
from .isa import ProgramImage

logger = logging.getLogger(__name__)

DEFAULT_VECTOR_LENGTH = 8
DEFAULT_LOW = -100
DEFAULT_HIGH = 100


def random_vectors(count: int, seed: int, length: int = DEFAULT_VECTOR_LENGTH,
                   low: int = DEFAULT_LOW, high: int = DEFAULT_HIGH) -> List[List[int]]:
    """`count` input vectors of `length` words drawn uniformly from [low, high]"""
    rng = np.random.default_rng(seed)
    draws = rng.integers(low, high, size=(count, length), endpoint=True)
    return [[int(w) for w in row] for row in draws]


def parse_input_source(source: str, length: int = DEFAULT_VECTOR_LENGTH) -> List[List[int]]:
    """
    Resolve an inputs argument

    `random:N:seed` draws N random vectors; anything else is a path to a
    JSON file holding a list of word lists, or a text file with one
    comma-separated vector per line.
    """
    if source.startswith("random:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected random:N:seed, got '{source}'")
        return random_vectors(int(parts[1]), int(parts[2]), length)
    path = Path(source)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        return [[int(w) for w in vector] for vector in data]
    vectors = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            vectors.append([int(w, 0) for w in line.split(",") if w.strip()])
    return vectors


@dataclass(frozen=True)
class Divergence:
    inputs: List[int]
    expected: ExecutionResult
    actual: ExecutionResult

    def describe(self) -> str:
        return (f"inputs={self.inputs}: expected {list(self.expected.output)} "
                f"{self.expected.describe()}, got {list(self.actual.output)} {self.actual.describe()}")

    def to_dict(self) -> Dict:
        return {"inputs": self.inputs, "expected": self.expected.to_dict(), "actual": self.actual.to_dict()}


@dataclass
class EquivalenceReport:
    vectors: int = 0
    divergences: List[Divergence] = field(default_factory=list)

    @property
    def equivalent(self) -> bool:
        return not self.divergences

    def to_dict(self) -> Dict:
        return {
            "equivalent": self.equivalent,
            "vectors": self.vectors,
            "divergences": [d.to_dict() for d in self.divergences],
        }


def verify(original: ProgramImage, candidate: ProgramImage, vectors: Sequence[Sequence[int]],
           step_limit: int = DEFAULT_STEP_LIMIT) -> EquivalenceReport:
    """Execute both images on every vector and collect the disagreements"""
    report = EquivalenceReport()
    for vector in vectors:
        expected = execute(original, vector, step_limit)
        actual = execute(candidate, vector, step_limit)
        report.vectors += 1
        if expected.outcome != actual.outcome:
            report.divergences.append(Divergence(list(vector), expected, actual))
    if report.divergences:
        logger.info(f"✗ {len(report.divergences)}/{report.vectors} input vectors diverge")
    return report


@dataclass
class MultiVariantReport:
    results: List[ExecutionResult]
    # Index of the variants that disagree with the majority outcome
    dissenters: List[int]

    @property
    def divergent(self) -> bool:
        return bool(self.dissenters)

    def to_dict(self) -> Dict:
        return {
            "divergent": self.divergent,
            "dissenters": self.dissenters,
            "results": [r.to_dict() for r in self.results],
        }


def multi_variant_run(images: Sequence[ProgramImage], inputs: Sequence[int],
                      step_limit: int = DEFAULT_STEP_LIMIT) -> MultiVariantReport:
    """
    Run several variants on one input and flag behavioral divergence

    Variants of one program must agree; a dissenting variant is the
    signature of an attack whose effect depended on a particular layout.
    """
    if not images:
        raise ValueError("multi_variant_run needs at least one image")
    results = [execute(image, inputs, step_limit) for image in images]
    tally: Dict[tuple, int] = {}
    for result in results:
        tally[result.outcome] = tally.get(result.outcome, 0) + 1
    majority: Optional[tuple] = max(tally, key=lambda outcome: tally[outcome])
    dissenters = [i for i, r in enumerate(results) if r.outcome != majority]
    return MultiVariantReport(results, dissenters)
