"""
Lifter: ProgramImage -> ProgramIR

Recursive-descent disassembly from the entry, every jumptable entry and every
pinned offset, followed by basic block formation at leaders.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set
import logging

from .emitter import emit
from .errors import LiftError
from .equivalence import Divergence, verify
from .interpreter import DEFAULT_STEP_LIMIT
from .ir import GlobalRef, IRDataObject, IRInstruction, ProgramIR, UnreachableRecord, validate
from .isa import (
    BLOCK_ENDERS,
    DIRECT_BRANCHES,
    GLOBAL_STRIDE,
    INDIRECT_BRANCHES,
    TERMINATORS,
    DataKind,
    Opcode,
    ProgramImage,
    global_slot,
)

logger = logging.getLogger(__name__)


def _reachable(image: ProgramImage, roots: Sequence[int]) -> Set[int]:
    code = image.code
    n = len(code)
    seen: Set[int] = set()
    stack = list(roots)
    while stack:
        pc = stack.pop()
        if pc in seen:
            continue
        seen.add(pc)
        ins = code[pc]
        op = ins.opcode
        if op in DIRECT_BRANCHES:
            if not 0 <= ins.imm < n:
                raise LiftError(f"branch target {ins.imm} out of range at offset {pc}")
            stack.append(ins.imm)
        if op not in TERMINATORS:
            if pc + 1 >= n:
                raise LiftError(f"control falls off the end of code at offset {pc}")
            stack.append(pc + 1)
    return seen


def lift(image: ProgramImage) -> ProgramIR:
    """
    Build the IR of an image

    Raises:
        LiftError: empty code, entry out of range, a jumptable word that is
            not an instruction offset, a data object longer than its slot,
            a pin outside code, a branch out of range, or control falling
            off the end of code
    """
    code = image.code
    n = len(code)
    if n == 0:
        raise LiftError("image has no instructions")
    if not 0 <= image.entry < n:
        raise LiftError(f"entry {image.entry} out of range")

    roots = [image.entry]
    for obj in image.data_objects:
        if len(obj.words) > GLOBAL_STRIDE:
            raise LiftError(f"data object {obj.name_hash:016x} overflows its slot")
        if obj.kind is DataKind.JUMPTABLE:
            for word in obj.words:
                if not 0 <= word < n:
                    raise LiftError(
                        f"misaligned jump table entry {word} in object {obj.name_hash:016x}"
                    )
                roots.append(word)
    for pin in image.pins:
        if not 0 <= pin.offset < n:
            raise LiftError(f"pin offset {pin.offset} out of range")
        roots.append(pin.offset)

    reachable = _reachable(image, roots)
    offsets = sorted(reachable)
    id_of: Dict[int, int] = {pc: index for index, pc in enumerate(offsets)}

    ir = ProgramIR()
    ir.metadata["format_version"] = image.version
    n_objects = len(image.data_objects)
    for pc in offsets:
        payload = code[pc]
        ins = IRInstruction(id_of[pc], payload, original_offset=pc,
                            indirect=payload.opcode in INDIRECT_BRANCHES)
        if payload.opcode in DIRECT_BRANCHES:
            ins.branch_targets = (id_of[payload.imm],)
        elif payload.opcode is Opcode.MOVI:
            attributed = global_slot(payload.imm, n_objects)
            if attributed is not None:
                slot, offset = attributed
                if slot is None:
                    ins.unattributed_global = True
                else:
                    ins.global_ref = GlobalRef(image.data_objects[slot].name_hash, offset)
        ir.add_instruction(ins)

    for obj in image.data_objects:
        if obj.kind is DataKind.JUMPTABLE:
            ir.data_objects.append(IRDataObject(obj.name_hash, obj.kind, list(obj.words),
                                                [id_of[w] for w in obj.words]))
        else:
            ir.data_objects.append(IRDataObject(obj.name_hash, obj.kind, list(obj.words)))
    ir.entry = id_of[image.entry]
    ir.pins = {id_of[p.offset]: p.required for p in image.pins}

    leaders: Set[int] = set(roots)
    for pc in offsets:
        ins = code[pc]
        if ins.opcode in DIRECT_BRANCHES:
            leaders.add(ins.imm)
        if ins.opcode in BLOCK_ENDERS and pc + 1 in reachable:
            leaders.add(pc + 1)
        if pc - 1 not in reachable:
            leaders.add(pc)

    runs: List[List[int]] = []
    for pc in offsets:
        if pc in leaders or not runs:
            runs.append([pc])
        else:
            runs[-1].append(pc)

    block_of_offset: Dict[int, int] = {}
    blocks = []
    for run in runs:
        blk = ir.add_block_raw([id_of[pc] for pc in run])
        block_of_offset[run[0]] = blk.id
        blocks.append((blk, run))
    for blk, run in blocks:
        last = code[run[-1]]
        if last.opcode not in TERMINATORS:
            blk.fallthrough_block = block_of_offset[run[-1] + 1]
    ir.finalize()

    for pc in range(n):
        if pc in reachable:
            continue
        payload = code[pc]
        if payload.opcode is Opcode.TRAP:
            continue
        ir.residue.append(UnreachableRecord(pc, payload))

    logger.debug("Lifted %d/%d records into %d blocks (%d residue)",
                 len(offsets), n, len(ir.blocks), len(ir.residue))
    return ir


@dataclass
class RoundtripReport:
    vectors: int = 0
    divergences: List[Divergence] = field(default_factory=list)
    violations: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.divergences and not self.violations and self.error is None


def roundtrip_check(
    image: ProgramImage,
    inputs: Sequence[Sequence[int]],
    emitter: Callable[[ProgramIR], ProgramImage] = emit,
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> RoundtripReport:
    """
    Lift, re-emit with the identity layout and compare executions

    Never raises: lift or emit failures land in report.error.
    """
    report = RoundtripReport()
    try:
        ir = lift(image)
        report.violations = [str(v) for v in validate(ir)]
        rebuilt = emitter(ir)
    except Exception as e:
        report.error = str(e)
        return report
    checked = verify(image, rebuilt, inputs, step_limit)
    report.vectors = checked.vectors
    report.divergences = checked.divergences
    return report
