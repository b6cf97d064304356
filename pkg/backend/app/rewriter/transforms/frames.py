"""
Stack frame discovery shared by the stack transforms

A frame runs from an ENTER to its matching LEAVE(s) along intraprocedural
control flow: calls continue at their return site, indirect jumps follow the
known targets. Along the way the push depth of every member is recorded so
SP-relative displacements can be classified.
"""

from dataclasses import dataclass, field
from typing import Dict, List

from ..errors import TransformError
from ..ir import ProgramIR
from ..isa import CALLS, SP, Instruction, Opcode


@dataclass
class Frame:
    enter: int
    size: int
    # member id -> push depth before it (pushes since ENTER, not counting calls)
    depth: Dict[int, int] = field(default_factory=dict)
    leaves: List[int] = field(default_factory=list)

    def sp_accesses(self, ir: ProgramIR) -> List[int]:
        """LOAD/STORE members addressing relative to SP"""
        return [iid for iid in self.depth
                if ir.instructions[iid].opcode in (Opcode.LOAD, Opcode.STORE)
                and ir.instructions[iid].payload.b == SP]


def sp_escapes(payload: Instruction) -> bool:
    """True when SP is used as a data operand rather than a base or implicitly"""
    op = payload.opcode
    if op in (Opcode.LOAD, Opcode.STORE):
        return payload.a == SP
    if op in (Opcode.MOVI, Opcode.MOV, Opcode.ADD, Opcode.SUB, Opcode.MUL, Opcode.POP,
              Opcode.PUSH, Opcode.ALLOC, Opcode.BEQ, Opcode.BLT, Opcode.JMPI,
              Opcode.CALLI, Opcode.IN, Opcode.OUT):
        return SP in (payload.a, payload.b, payload.c)
    return False


def _intraprocedural(ir: ProgramIR, iid: int, targets: List[int]) -> List[int]:
    ins = ir.instructions[iid]
    op = ins.opcode
    if op in CALLS:
        return [ins.fallthrough] if ins.fallthrough is not None else []
    succ = list(ins.branch_targets)
    if op is Opcode.JMPI:
        succ.extend(targets)
    if ins.fallthrough is not None:
        succ.append(ins.fallthrough)
    return succ


def discover_frames(ir: ProgramIR, plugin: str, refuse_escape: bool = False) -> List[Frame]:
    """
    Find every ENTER..LEAVE frame

    Raises:
        TransformError: nested ENTER, RET inside a frame, LEAVE size
            mismatch, inconsistent push depth, an instruction claimed by two
            frames, a LEAVE owned by no frame, or (with refuse_escape) SP
            used as a data operand inside a frame
    """
    targets = ir.known_indirect_targets()
    frames: List[Frame] = []
    owner: Dict[int, int] = {}
    for ins in ir.iter_layout():
        if ins.opcode is not Opcode.ENTER:
            continue
        frame = Frame(ins.id, ins.payload.imm)
        stack = [(s, 0) for s in _intraprocedural(ir, ins.id, targets)]
        while stack:
            iid, depth = stack.pop()
            if iid in frame.depth:
                if frame.depth[iid] != depth:
                    raise TransformError(plugin, f"inconsistent push depth at instruction {iid} "
                                                 f"in frame of ENTER {ins.id}")
                continue
            member = ir.instructions[iid]
            op = member.opcode
            if op is Opcode.ENTER:
                raise TransformError(plugin, f"nested ENTER {iid} inside frame of ENTER {ins.id}")
            if op is Opcode.RET:
                raise TransformError(plugin, f"RET {iid} inside open frame of ENTER {ins.id}")
            if iid in owner:
                raise TransformError(plugin, f"instruction {iid} claimed by frames of ENTER "
                                             f"{owner[iid]} and ENTER {ins.id}")
            if refuse_escape and sp_escapes(member.payload):
                raise TransformError(plugin, f"stack pointer escapes at instruction {iid} "
                                             f"in frame of ENTER {ins.id}")
            frame.depth[iid] = depth
            if op is Opcode.LEAVE:
                if member.payload.imm != frame.size:
                    raise TransformError(plugin, f"LEAVE {iid} size {member.payload.imm} does not "
                                                 f"match ENTER {ins.id} size {frame.size}")
                frame.leaves.append(iid)
                continue
            if op is Opcode.PUSH:
                depth += 1
            elif op is Opcode.POP:
                depth -= 1
            for succ in _intraprocedural(ir, iid, targets):
                stack.append((succ, depth))
        for iid in frame.depth:
            owner[iid] = ins.id
        frame.leaves.sort()
        frames.append(frame)

    owned = {leave for frame in frames for leave in frame.leaves}
    for ins in ir.iter_layout():
        if ins.opcode is Opcode.LEAVE and ins.id not in owned:
            raise TransformError(plugin, f"LEAVE {ins.id} is owned by no frame")
    return frames


def shift_displacements(ir: ProgramIR, frame: Frame, threshold: int, amount: int) -> int:
    """
    Add `amount` to SP-relative displacements at or above `threshold`

    The threshold is taken relative to the frame base, so pushes made inside
    the frame raise it for the instructions below them.
    """
    changed = 0
    for iid in frame.sp_accesses(ir):
        payload = ir.instructions[iid].payload
        if payload.imm >= threshold + frame.depth[iid]:
            ir.replace(iid, payload.with_imm(payload.imm + amount))
            changed += 1
    return changed
