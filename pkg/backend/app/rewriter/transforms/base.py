"""
Transform plugin API

A plugin is a named, seeded IR -> IR rewrite. It declares the IR facets it
reads and writes, the analyses it needs up to date, and how much work it
would do on a given IR (its work set), which is what the pipeline uses to
detect stages starved by earlier ones.
"""

from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple
import logging

from ..analysis import LIVENESS, liveness_of
from ..errors import TransformError
from ..ir import ProgramIR, validate
from ..isa import GENERAL_REGS, Instruction, Opcode
from ..prng import Xoshiro256

logger = logging.getLogger(__name__)


class Facet(str, Enum):
    CODE_LAYOUT = "code-layout"
    STACK_FRAMES = "stack-frames"
    GLOBAL_LAYOUT = "global-layout"
    HEAP_SIZES = "heap-sizes"
    INDIRECT_BRANCHES = "indirect-branches"
    INSTRUCTION_STREAM = "instruction-stream"


class TransformPlugin:
    """Base class for every transform in the catalog"""

    name: str = ""
    version: str = "1.0"
    reads: FrozenSet[Facet] = frozenset()
    writes: FrozenSet[Facet] = frozenset()
    needs: Tuple[str, ...] = ()
    # Diversity plugins randomize layout; hardening plugins add checks
    diversity: bool = False
    # Warning emitted when the plugin finds nothing to do on its own
    idle_warning: Optional[str] = None
    defaults: Dict = {}

    def work_set(self, ir: ProgramIR) -> int:
        """Number of sites this plugin would rewrite"""
        raise NotImplementedError

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        """Rewrite `ir` in place (it is already a private copy)"""
        raise NotImplementedError

    def resolve_config(self, config: Optional[Dict]) -> Dict:
        merged = dict(self.defaults)
        for key, value in (config or {}).items():
            if key not in self.defaults:
                raise TransformError(self.name, f"unknown config key '{key}'")
            merged[key] = value
        for key, value in merged.items():
            if isinstance(self.defaults[key], int) and (not isinstance(value, int) or value < 1):
                raise TransformError(self.name, f"config '{key}' must be a positive integer")
        return merged

    def apply(self, ir: ProgramIR, seed: int = 0, config: Optional[Dict] = None) -> ProgramIR:
        """
        Run the plugin on a copy of `ir`

        Deterministic in (ir, seed, config). The result passes validate;
        refusals raise TransformError.
        """
        settings = self.resolve_config(config)
        out = ir.copy()
        if LIVENESS in self.needs:
            liveness_of(out)
        self.transform(out, Xoshiro256(seed), settings)
        out.record_transform(self.name, version=self.version, seed=seed)
        report = validate(out)
        if report:
            raise TransformError(self.name, f"produced invalid IR: {report[0]}")
        return out

    def __call__(self, ir: ProgramIR, seed: int = 0, config: Optional[Dict] = None) -> ProgramIR:
        return self.apply(ir, seed, config)

    def refuse(self, message: str) -> TransformError:
        return TransformError(self.name, message)

    def describe(self) -> Dict:
        return {
            "name": self.name,
            "version": self.version,
            "reads": sorted(f.value for f in self.reads),
            "writes": sorted(f.value for f in self.writes),
            "kind": "diversity" if self.diversity else "hardening",
            "config": dict(self.defaults),
        }


def pick_scratch(dead: FrozenSet[int], count: int, forbid: Sequence[int] = ()) -> Tuple[List[int], List[int]]:
    """
    Choose scratch registers, dead ones first (highest-numbered first)

    Returns:
        (registers, spilled): `count` registers, and the subset that is live
        and has to be saved with PUSH/POP around its use
    """
    blocked = set(forbid)
    free = sorted((r for r in dead if r in GENERAL_REGS and r not in blocked), reverse=True)
    chosen = free[:count]
    spilled: List[int] = []
    for reg in sorted(GENERAL_REGS, reverse=True):
        if len(chosen) == count:
            break
        if reg not in blocked and reg not in chosen:
            chosen.append(reg)
            spilled.append(reg)
    return chosen, spilled


def push_all(regs: Sequence[int]) -> List[Instruction]:
    return [Instruction(Opcode.PUSH, a=r) for r in regs]


def pop_all(regs: Sequence[int]) -> List[Instruction]:
    return [Instruction(Opcode.POP, a=r) for r in reversed(regs)]
