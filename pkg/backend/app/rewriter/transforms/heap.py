"""Heap transform: seeded padding of every allocation request."""

from typing import Dict
import logging

from ..analysis import LIVENESS, liveness_of
from ..ir import ProgramIR, iter_ids
from ..isa import Instruction, Opcode
from ..prng import Xoshiro256
from .base import Facet, TransformPlugin, pick_scratch

logger = logging.getLogger(__name__)


class HeapPad(TransformPlugin):
    name = "heap_pad"
    reads = frozenset({Facet.HEAP_SIZES})
    writes = frozenset({Facet.HEAP_SIZES, Facet.INSTRUCTION_STREAM})
    needs = (LIVENESS,)
    diversity = True
    defaults = {"max_pad_words": 8}

    def work_set(self, ir: ProgramIR) -> int:
        return sum(1 for ins in ir.instructions.values() if ins.opcode is Opcode.ALLOC)

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        liveness = liveness_of(ir)
        pads: Dict[int, int] = {}
        for iid in iter_ids(ir, [Opcode.ALLOC]):
            pad = rng.between(1, config["max_pad_words"])
            payload = ir.instructions[iid].payload
            a, b = payload.a, payload.b
            regs, spilled = pick_scratch(liveness.dead_before(iid), 1, forbid=[b])
            if spilled:
                regs, spilled = pick_scratch(frozenset(), 1, forbid=[a, b])
            s = regs[0]

            sizing = [Instruction(Opcode.MOVI, a=s, imm=pad), Instruction(Opcode.ADD, a=s, b=b, c=s)]
            if spilled:
                sizing.insert(0, Instruction(Opcode.PUSH, a=s))
            ir.insert_before(iid, sizing)
            ir.replace(iid, Instruction(Opcode.ALLOC, a=a, b=s))
            if spilled:
                ir.insert_after(iid, [Instruction(Opcode.POP, a=s)])
            pads[iid] = pad
        ir.metadata["heap_pads"] = pads
