"""
Indirect branch hardening

indirect_to_direct replaces JMPI/CALLI with a compare-and-branch chain over
the known targets; cfi_check keeps the indirect branch and guards it with the
same membership chain. Both end the chain in TRAP.
"""

from typing import Callable, Dict, List, Sequence
import logging

from ..analysis import LIVENESS, liveness_of
from ..ir import Insertable, NewInstruction, ProgramIR, iter_ids
from ..isa import INDIRECT_BRANCHES, Instruction, Opcode
from ..prng import Xoshiro256
from .base import Facet, TransformPlugin, pick_scratch, pop_all, push_all

logger = logging.getLogger(__name__)


def compare_chain(reg: int, scratch: int, targets: Sequence[int],
                  destination: Callable[[int], int]) -> List[Insertable]:
    """MOVI scratch, &T; BEQ reg, scratch, dest(T) for each target, then TRAP"""
    chain: List[Insertable] = []
    for target in targets:
        chain.append(NewInstruction(Instruction(Opcode.MOVI, a=scratch), code_ref=target))
        chain.append(NewInstruction(Instruction(Opcode.BEQ, a=reg, b=scratch), target=destination(target)))
    chain.append(Instruction(Opcode.TRAP))
    return chain


class IndirectToDirect(TransformPlugin):
    name = "indirect_to_direct"
    reads = frozenset({Facet.INDIRECT_BRANCHES})
    writes = frozenset({Facet.INDIRECT_BRANCHES, Facet.INSTRUCTION_STREAM, Facet.CODE_LAYOUT})
    needs = (LIVENESS,)

    def work_set(self, ir: ProgramIR) -> int:
        return ir.indirect_count()

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        liveness = liveness_of(ir)
        targets = ir.known_indirect_targets()
        sites = iter_ids(ir, INDIRECT_BRANCHES)
        if sites and not targets:
            raise self.refuse(f"indirect branch {sites[0]} has no known targets")

        for iid in sites:
            ins = ir.instructions[iid]
            reg = ins.payload.a
            regs, spilled = pick_scratch(liveness.dead_before(iid), 1, forbid=[reg])
            s = regs[0]
            restore = pop_all(spilled)

            if ins.opcode is Opcode.CALLI:
                return_site = ins.fallthrough
                arms = {}
                for target in targets:
                    tail = ir.layout()[-1].id
                    arm = ir.add_block(restore + [NewInstruction(Instruction(Opcode.CALL), target=target),
                                                  NewInstruction(Instruction(Opcode.JMP), target=return_site)],
                                       after_block=tail)
                    arms[target] = arm.members[0]
                destination = arms.__getitem__
            elif spilled:
                arms = {}
                for target in targets:
                    tail = ir.layout()[-1].id
                    arm = ir.add_block(restore + [NewInstruction(Instruction(Opcode.JMP), target=target)],
                                       after_block=tail)
                    arms[target] = arm.members[0]
                destination = arms.__getitem__
            else:
                destination = lambda target: target

            ir.insert_before(iid, push_all(spilled) + compare_chain(reg, s, targets, destination))
            ir.delete(iid)
        logger.debug(f"indirect_to_direct: converted {len(sites)} site(s) over {len(targets)} target(s)")


class CfiCheck(TransformPlugin):
    name = "cfi_check"
    reads = frozenset({Facet.INDIRECT_BRANCHES})
    writes = frozenset({Facet.INSTRUCTION_STREAM})
    needs = (LIVENESS,)
    idle_warning = "no indirect branches to instrument"

    def work_set(self, ir: ProgramIR) -> int:
        return ir.indirect_count()

    def transform(self, ir: ProgramIR, rng: Xoshiro256, config: Dict) -> None:
        liveness = liveness_of(ir)
        targets = ir.known_indirect_targets()
        for iid in iter_ids(ir, INDIRECT_BRANCHES):
            if not targets:
                ir.insert_before(iid, [Instruction(Opcode.TRAP)])
                continue
            reg = ir.instructions[iid].payload.a
            regs, spilled = pick_scratch(liveness.dead_before(iid), 1, forbid=[reg])
            s = regs[0]
            guarded = ir.insert_before(iid, pop_all(spilled))[0] if spilled else iid
            ir.insert_before(guarded, push_all(spilled)
                             + compare_chain(reg, s, targets, lambda target: guarded))
