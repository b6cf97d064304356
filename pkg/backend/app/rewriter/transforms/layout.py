"""
Layout transforms: block order and data object order

Both only permute; the emitter turns the new order into fresh offsets,
restores severed fallthroughs and re-bases global references.
"""

from typing import Dict, List
import logging

from ..ir import ProgramIR
from ..isa import GLOBAL_BASE, STACK_TOP, Opcode
from ..prng import Xoshiro256
from .base import Facet, TransformPlugin

logger = logging.getLogger(__name__)


class Bilr(TransformPlugin):
    """Block-level instruction randomization over the whole program"""

    name = "bilr"
    reads = frozenset({Facet.CODE_LAYOUT})
    writes = frozenset({Facet.CODE_LAYOUT})
    diversity = True

    def work_set(self, ir: ProgramIR) -> int:
        movable = sum(1 for blk in ir.blocks if blk.members[0] not in ir.pins)
        return movable if movable > 1 else 0

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        blocks = ir.layout()
        free = [blk for blk in blocks if blk.members[0] not in ir.pins]
        pinned = sorted((blk for blk in blocks if blk.members[0] in ir.pins),
                        key=lambda blk: ir.pins[blk.members[0]])
        rng.shuffle(free)

        # Sizes are estimated with one extra record per block for a
        # fallthrough JMP, so a pin is placed before it can be overrun.
        order: List[int] = []
        estimate = 0
        for blk in free:
            while pinned and estimate + len(blk.members) + 1 > ir.pins[pinned[0].members[0]]:
                anchor = pinned.pop(0)
                order.append(anchor.id)
                estimate = max(estimate, ir.pins[anchor.members[0]]) + len(anchor.members) + 1
            order.append(blk.id)
            estimate += len(blk.members) + 1
        order.extend(blk.id for blk in pinned)
        ir.set_layout(order)


class GlobalShuffle(TransformPlugin):
    """Permute data object slots, and with them every global base address"""

    name = "global_shuffle"
    reads = frozenset({Facet.GLOBAL_LAYOUT})
    writes = frozenset({Facet.GLOBAL_LAYOUT})
    diversity = True

    def work_set(self, ir: ProgramIR) -> int:
        count = len(ir.data_objects)
        return count if count > 1 else 0

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        for ins in ir.iter_layout():
            payload = ins.payload
            if ins.unattributed_global:
                raise self.refuse(f"immediate {payload.imm} at instruction {ins.id} "
                                  f"lies in the global window but matches no data object")
            if payload.opcode in (Opcode.LOAD, Opcode.STORE) and GLOBAL_BASE <= payload.imm < STACK_TOP:
                raise self.refuse(f"displacement {payload.imm} at instruction {ins.id} "
                                  f"cannot be attributed to exactly one data object")
        order = list(range(len(ir.data_objects)))
        rng.shuffle(order)
        ir.set_data_order(order)
        ir.metadata["data_order"] = order
