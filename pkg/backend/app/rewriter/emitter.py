"""
Emitter: ProgramIR -> ProgramImage

Blocks are placed by layout_rank. A pinned block is preceded by TRAP filler
up to its required offset, a block whose fallthrough successor is not
physically next gets an explicit JMP, and every symbolic reference is
patched to its final offset.
"""

from typing import Dict, List, Optional, Tuple
import hashlib
import logging

from .errors import EmitError
from .ir import ProgramIR, validate
from .isa import (
    DIRECT_BRANCHES,
    GLOBAL_BASE,
    GLOBAL_STRIDE,
    TERMINATORS,
    DataKind,
    DataObject,
    Instruction,
    Opcode,
    Pin,
    ProgramImage,
)

logger = logging.getLogger(__name__)

# Placement slots: ("ins", id) | ("jmp", block id) | ("filler", None) | ("residue", index)
Slot = Tuple[str, Optional[int]]


def _place(ir: ProgramIR) -> List[Slot]:
    required = sorted(ir.pins.values())
    for a, b in zip(required, required[1:]):
        if a == b:
            raise EmitError(f"pins overlap at offset {a}")

    slots: List[Slot] = []
    pending: Optional[int] = None
    for blk in ir.layout():
        pin = ir.pins.get(blk.members[0])
        if pending is not None and (pending != blk.id or (pin is not None and pin > len(slots))):
            slots.append(("jmp", pending))
            pending = None
        if pin is not None:
            if pin < len(slots):
                raise EmitError(
                    f"pinned offset {pin} unreachable: preceding blocks occupy {len(slots)} records"
                )
            slots.extend([("filler", None)] * (pin - len(slots)))
        slots.extend(("ins", iid) for iid in blk.members)
        last = ir.instructions[blk.members[-1]]
        pending = None if last.opcode in TERMINATORS else blk.fallthrough_block
    if pending is not None:
        slots.append(("jmp", pending))
    slots.extend(("residue", index) for index in range(len(ir.residue)))
    return slots


def emit(ir: ProgramIR, patch_jumptables: bool = True) -> ProgramImage:
    """
    Lower the IR to a bit-exact image

    Args:
        ir: valid IR
        patch_jumptables: test hook; when False jumptable words are written
            as they were in the source image instead of final offsets

    Raises:
        EmitError: invalid IR, overlapping pins, or a pin that preceding
            code has already passed
    """
    report = validate(ir)
    if report:
        raise EmitError(f"cannot emit invalid IR: {report[0]}")

    slots = _place(ir)
    offset: Dict[int, int] = {}
    for position, (kind, value) in enumerate(slots):
        if kind == "ins":
            offset[value] = position

    slot_of = {obj.name_hash: index for index, obj in enumerate(ir.data_objects)}
    code: List[Instruction] = []
    for kind, value in slots:
        if kind == "filler":
            code.append(Instruction(Opcode.TRAP))
        elif kind == "jmp":
            code.append(Instruction(Opcode.JMP, imm=offset[ir.first_of(value)]))
        elif kind == "residue":
            code.append(ir.residue[value].payload)
        else:
            ins = ir.instructions[value]
            payload = ins.payload
            if payload.opcode in DIRECT_BRANCHES:
                payload = payload.with_imm(offset[ins.branch_targets[0]])
            elif ins.code_ref is not None:
                payload = payload.with_imm(offset[ins.code_ref])
            elif ins.global_ref is not None:
                slot = slot_of[ins.global_ref.name_hash]
                payload = payload.with_imm(GLOBAL_BASE + slot * GLOBAL_STRIDE + ins.global_ref.offset)
            code.append(payload)

    objects = []
    for obj in ir.data_objects:
        if obj.kind is DataKind.JUMPTABLE:
            words = [offset[e] for e in obj.entries] if patch_jumptables else list(obj.words)
            objects.append(DataObject(obj.name_hash, obj.kind, tuple(words)))
        else:
            objects.append(DataObject(obj.name_hash, obj.kind, tuple(obj.words)))

    pins = tuple(sorted((Pin(offset[iid], required) for iid, required in ir.pins.items()),
                        key=lambda p: p.offset))
    image = ProgramImage(offset[ir.entry], tuple(code), tuple(objects), pins,
                         ir.metadata.get("format_version", 1))
    logger.debug("Emitted %d records (%d instructions)", len(code), len(offset))
    return image


def digest(image: ProgramImage) -> bytes:
    """SHA-256 over the canonical serialization"""
    return hashlib.sha256(image.to_bytes()).digest()


def digest_hex(image: ProgramImage) -> str:
    return digest(image).hex()
