"""
Stack transforms: per-frame padding and canaries
"""

from typing import Dict
import logging

from ..analysis import LIVENESS, liveness_of
from ..ir import NewInstruction, ProgramIR
from ..isa import SP, Instruction, Opcode, wrap64
from ..prng import Xoshiro256
from .base import Facet, TransformPlugin, pick_scratch, pop_all, push_all
from .frames import discover_frames, shift_displacements

logger = logging.getLogger(__name__)


def _resize(ir: ProgramIR, iid: int, extra: int) -> None:
    payload = ir.instructions[iid].payload
    ir.replace(iid, payload.with_imm(payload.imm + extra))


class StackPad(TransformPlugin):
    """Grow every frame by a seeded pad placed below its locals"""

    name = "stack_pad"
    reads = frozenset({Facet.STACK_FRAMES, Facet.INSTRUCTION_STREAM})
    writes = frozenset({Facet.STACK_FRAMES})
    diversity = True
    defaults = {"max_pad_words": 16}

    def work_set(self, ir: ProgramIR) -> int:
        return sum(1 for ins in ir.instructions.values() if ins.opcode is Opcode.ENTER)

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        frames = discover_frames(ir, self.name, refuse_escape=True)
        pads: Dict[int, int] = {}
        for frame in frames:
            pad = rng.between(1, config["max_pad_words"])
            # Everything at or above the push depth moves up by the pad
            shift_displacements(ir, frame, 0, pad)
            _resize(ir, frame.enter, pad)
            for leave in frame.leaves:
                _resize(ir, leave, pad)
            pads[frame.enter] = pad
        ir.metadata["stack_pads"] = pads
        logger.debug(f"stack_pad: padded {len(pads)} frame(s)")


class Canary(TransformPlugin):
    """
    Guard every frame with a seeded canary word

    ENTER n becomes ENTER n+1 with the canary at [sp+n], just above the
    locals. Each LEAVE is preceded by a reload and compare that executes
    TRAP on mismatch.
    """

    name = "canary"
    reads = frozenset({Facet.STACK_FRAMES})
    writes = frozenset({Facet.STACK_FRAMES, Facet.INSTRUCTION_STREAM})
    needs = (LIVENESS,)
    defaults = {}

    def work_set(self, ir: ProgramIR) -> int:
        return sum(1 for ins in ir.instructions.values() if ins.opcode is Opcode.ENTER)

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        liveness = liveness_of(ir)
        frames = discover_frames(ir, self.name)
        canaries: Dict[int, int] = {}
        for frame in frames:
            size = frame.size
            word = wrap64(rng.next_u64())
            canaries[frame.enter] = word

            shift_displacements(ir, frame, size, 1)
            _resize(ir, frame.enter, 1)
            for leave in frame.leaves:
                _resize(ir, leave, 1)

            after_enter = ir.instructions[frame.enter].fallthrough
            regs, spilled = pick_scratch(liveness.dead_before(after_enter), 1)
            s = regs[0]
            depth = len(spilled)
            # Code grows by 2 + 4 * len(leaves) records when nothing spills: the
            # MOVI/STORE plant below, then LOAD/MOVI/BEQ/TRAP ahead of each LEAVE.
            prologue = (push_all(spilled)
                        + [Instruction(Opcode.MOVI, a=s, imm=word),
                           Instruction(Opcode.STORE, a=s, b=SP, imm=size + depth)]
                        + pop_all(spilled))
            ir.insert_after(frame.enter, prologue)

            for leave in frame.leaves:
                regs, spilled = pick_scratch(liveness.dead_before(leave), 2)
                s, t = regs
                depth = len(spilled)
                ok = ir.insert_before(leave, pop_all(spilled))[0] if spilled else leave
                check = (push_all(spilled)
                         + [Instruction(Opcode.LOAD, a=s, b=SP, imm=size + depth),
                            Instruction(Opcode.MOVI, a=t, imm=word),
                            NewInstruction(Instruction(Opcode.BEQ, a=s, b=t), target=ok),
                            Instruction(Opcode.TRAP)])
                ir.insert_before(ok, check)
        ir.metadata["canaries"] = canaries
        logger.debug(f"canary: guarded {len(canaries)} frame(s)")
