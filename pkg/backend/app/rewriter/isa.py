"""
Desk instruction set and the .disa binary image format

Every instruction is a fixed 16-byte little-endian record:

    opcode u8 | reg_a u8 | reg_b u8 | reg_c u8 | pad u32 (=0) | imm i64

Branch immediates are absolute code offsets in instruction units. An image is
a header followed by the code records, the data object table and the pin
table (see docs/DISA.md for the byte layout).
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, List, Tuple
import struct

from .errors import DecodeError, ImageError


MAGIC = b"DISA"
FORMAT_VERSION = 1

NUM_REGS = 9
SP = 8
GENERAL_REGS: FrozenSet[int] = frozenset(range(8))

WORD_BITS = 64
INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

# Word-addressed memory map
GLOBAL_BASE = 0x1000_0000
GLOBAL_STRIDE = 0x10_0000
STACK_TOP = 0x2000_0000
HEAP_BASE = 0x3000_0000

RECORD = struct.Struct("<BBBBIq")
HEADER = struct.Struct("<4sHHIIII")
DATA_HEADER = struct.Struct("<QBxxxI")
WORD = struct.Struct("<q")
PIN = struct.Struct("<II")


class Opcode(IntEnum):
    TRAP = 0x00
    MOVI = 0x01
    MOV = 0x02
    ADD = 0x03
    SUB = 0x04
    MUL = 0x05
    LOAD = 0x06
    STORE = 0x07
    PUSH = 0x08
    POP = 0x09
    ENTER = 0x0A
    LEAVE = 0x0B
    ALLOC = 0x0C
    JMP = 0x0D
    BEQ = 0x0E
    BLT = 0x0F
    JMPI = 0x10
    CALL = 0x11
    CALLI = 0x12
    RET = 0x13
    IN = 0x14
    OUT = 0x15
    HALT = 0x16


# Fields each opcode uses; everything else must be zero in canonical form.
OPERANDS: Dict[Opcode, Tuple[str, ...]] = {
    Opcode.MOVI: ("a", "imm"),
    Opcode.MOV: ("a", "b"),
    Opcode.ADD: ("a", "b", "c"),
    Opcode.SUB: ("a", "b", "c"),
    Opcode.MUL: ("a", "b", "c"),
    Opcode.LOAD: ("a", "b", "imm"),
    Opcode.STORE: ("a", "b", "imm"),
    Opcode.PUSH: ("a",),
    Opcode.POP: ("a",),
    Opcode.ENTER: ("imm",),
    Opcode.LEAVE: ("imm",),
    Opcode.ALLOC: ("a", "b"),
    Opcode.JMP: ("imm",),
    Opcode.BEQ: ("a", "b", "imm"),
    Opcode.BLT: ("a", "b", "imm"),
    Opcode.JMPI: ("a",),
    Opcode.CALL: ("imm",),
    Opcode.CALLI: ("a",),
    Opcode.RET: (),
    Opcode.IN: ("a",),
    Opcode.OUT: ("a",),
    Opcode.HALT: (),
    Opcode.TRAP: (),
}

DIRECT_BRANCHES = frozenset({Opcode.JMP, Opcode.BEQ, Opcode.BLT, Opcode.CALL})
CONDITIONAL_BRANCHES = frozenset({Opcode.BEQ, Opcode.BLT})
INDIRECT_BRANCHES = frozenset({Opcode.JMPI, Opcode.CALLI})
CALLS = frozenset({Opcode.CALL, Opcode.CALLI})
# Control never falls through these
TERMINATORS = frozenset({Opcode.JMP, Opcode.JMPI, Opcode.RET, Opcode.HALT, Opcode.TRAP})
# Instructions that end a basic block
BLOCK_ENDERS = TERMINATORS | CONDITIONAL_BRANCHES | CALLS


def wrap64(value: int) -> int:
    """Wrap an integer to signed 64-bit two's complement"""
    value &= (1 << 64) - 1
    return value - (1 << 64) if value >> 63 else value


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction record"""

    opcode: Opcode
    a: int = 0
    b: int = 0
    c: int = 0
    imm: int = 0

    def __post_init__(self):
        used = OPERANDS[self.opcode]
        for name in ("a", "b", "c"):
            reg = getattr(self, name)
            if not 0 <= reg < NUM_REGS:
                raise ImageError(f"{self.opcode.name}: register index {reg} out of range")
            if name not in used and reg != 0:
                raise ImageError(f"{self.opcode.name}: unused field {name} must be zero")
        if not INT64_MIN <= self.imm <= INT64_MAX:
            raise ImageError(f"{self.opcode.name}: immediate {self.imm} overflows 64 bits")
        if "imm" not in used and self.imm != 0:
            raise ImageError(f"{self.opcode.name}: unused immediate must be zero")

    def with_imm(self, imm: int) -> "Instruction":
        return Instruction(self.opcode, self.a, self.b, self.c, imm)

    def reads(self) -> FrozenSet[int]:
        """Registers read by this instruction (SP included)"""
        op = self.opcode
        if op is Opcode.MOV or op is Opcode.LOAD or op is Opcode.ALLOC:
            return frozenset({self.b})
        if op in (Opcode.ADD, Opcode.SUB, Opcode.MUL):
            return frozenset({self.b, self.c})
        if op is Opcode.STORE or op in CONDITIONAL_BRANCHES:
            return frozenset({self.a, self.b})
        if op is Opcode.PUSH or op is Opcode.CALLI:
            return frozenset({self.a, SP})
        if op in (Opcode.POP, Opcode.ENTER, Opcode.LEAVE, Opcode.CALL, Opcode.RET):
            return frozenset({SP})
        if op is Opcode.JMPI or op is Opcode.OUT:
            return frozenset({self.a})
        return frozenset()

    def writes(self) -> FrozenSet[int]:
        """Registers written by this instruction (SP included)"""
        op = self.opcode
        if op in (Opcode.MOVI, Opcode.MOV, Opcode.ADD, Opcode.SUB, Opcode.MUL,
                  Opcode.LOAD, Opcode.ALLOC, Opcode.IN):
            return frozenset({self.a})
        if op is Opcode.POP:
            return frozenset({self.a, SP})
        if op in (Opcode.PUSH, Opcode.ENTER, Opcode.LEAVE, Opcode.CALL, Opcode.CALLI, Opcode.RET):
            return frozenset({SP})
        return frozenset()

    def encode(self) -> bytes:
        return RECORD.pack(int(self.opcode), self.a, self.b, self.c, 0, self.imm)

    @classmethod
    def decode(cls, record: bytes, offset: int = 0) -> "Instruction":
        if len(record) != RECORD.size:
            raise DecodeError(f"truncated record at offset {offset}: {len(record)} bytes")
        op_byte, a, b, c, pad, imm = RECORD.unpack(record)
        try:
            opcode = Opcode(op_byte)
        except ValueError:
            raise DecodeError(f"unknown opcode byte 0x{op_byte:02x} at offset {offset}") from None
        if pad != 0:
            raise DecodeError(f"non-canonical record at offset {offset}: nonzero padding")
        try:
            return cls(opcode, a, b, c, imm)
        except ImageError as e:
            raise DecodeError(f"non-canonical record at offset {offset}: {e}") from None


class DataKind(IntEnum):
    RAW = 0
    JUMPTABLE = 1


@dataclass(frozen=True)
class DataObject:
    name_hash: int
    kind: DataKind
    words: Tuple[int, ...] = ()


@dataclass(frozen=True)
class Pin:
    offset: int
    required: int


@dataclass(frozen=True)
class ProgramImage:
    """A bit-exact .disa program: entry point, code, data objects and pins"""

    entry: int
    code: Tuple[Instruction, ...]
    data_objects: Tuple[DataObject, ...] = ()
    pins: Tuple[Pin, ...] = ()
    version: int = field(default=FORMAT_VERSION)

    def global_address(self, slot: int) -> int:
        return GLOBAL_BASE + slot * GLOBAL_STRIDE

    def to_bytes(self) -> bytes:
        parts: List[bytes] = [
            HEADER.pack(MAGIC, self.version, 0, self.entry,
                        len(self.code), len(self.data_objects), len(self.pins))
        ]
        parts.extend(ins.encode() for ins in self.code)
        for obj in self.data_objects:
            parts.append(DATA_HEADER.pack(obj.name_hash, int(obj.kind), len(obj.words)))
            parts.extend(WORD.pack(w) for w in obj.words)
        parts.extend(PIN.pack(p.offset, p.required) for p in self.pins)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ProgramImage":
        if len(blob) < HEADER.size:
            raise DecodeError("truncated header")
        magic, version, flags, entry, n_code, n_data, n_pins = HEADER.unpack_from(blob, 0)
        if magic != MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise DecodeError(f"unsupported format version {version}")
        if flags != 0:
            raise DecodeError("non-canonical header: nonzero flags")

        pos = HEADER.size
        code = []
        for i in range(n_code):
            record = blob[pos:pos + RECORD.size]
            code.append(Instruction.decode(record, i))
            pos += RECORD.size

        data_objects = []
        for _ in range(n_data):
            if pos + DATA_HEADER.size > len(blob):
                raise DecodeError("truncated data object header")
            name_hash, kind, length = DATA_HEADER.unpack_from(blob, pos)
            pos += DATA_HEADER.size
            try:
                data_kind = DataKind(kind)
            except ValueError:
                raise DecodeError(f"unknown data object kind {kind}") from None
            if length > GLOBAL_STRIDE:
                raise DecodeError(f"data object of {length} words overflows its {GLOBAL_STRIDE}-word slot")
            end = pos + length * WORD.size
            if end > len(blob):
                raise DecodeError("truncated data object payload")
            words = tuple(WORD.unpack_from(blob, pos + i * WORD.size)[0] for i in range(length))
            pos = end
            data_objects.append(DataObject(name_hash, data_kind, words))

        pins = []
        for _ in range(n_pins):
            if pos + PIN.size > len(blob):
                raise DecodeError("truncated pin table")
            pins.append(Pin(*PIN.unpack_from(blob, pos)))
            pos += PIN.size

        if pos != len(blob):
            raise DecodeError(f"{len(blob) - pos} trailing bytes after pin table")

        return cls(entry, tuple(code), tuple(data_objects), tuple(pins), version)


def decode_code(section: bytes) -> Tuple[Instruction, ...]:
    """Decode a bare code section (a multiple of 16 bytes)"""
    if len(section) % RECORD.size:
        raise DecodeError(
            f"truncated record: code section of {len(section)} bytes is not a multiple of {RECORD.size}"
        )
    return tuple(
        Instruction.decode(section[i:i + RECORD.size], i // RECORD.size)
        for i in range(0, len(section), RECORD.size)
    )


def check_image(image: ProgramImage) -> None:
    """Raise ImageError if the image violates a structural invariant"""
    n = len(image.code)
    if n == 0:
        raise ImageError("image has no instructions")
    if not 0 <= image.entry < n:
        raise ImageError(f"entry {image.entry} outside code of {n} records")
    for obj in image.data_objects:
        if len(obj.words) > GLOBAL_STRIDE:
            raise ImageError(
                f"data object {obj.name_hash:016x} of {len(obj.words)} words overflows its slot"
            )
        if obj.kind is DataKind.JUMPTABLE:
            for word in obj.words:
                if not 0 <= word < n:
                    raise ImageError(
                        f"jumptable {obj.name_hash:016x} entry {word} is not a code offset"
                    )
    previous = -1
    for pin in image.pins:
        if pin.offset <= previous:
            raise ImageError("pin table offsets must be strictly increasing")
        if pin.offset >= n:
            raise ImageError(f"pin offset {pin.offset} outside code")
        previous = pin.offset


def global_slot(imm: int, n_objects: int):
    """
    Attribute an immediate to a data object slot

    Returns:
        (slot, offset) when imm lies inside the slot of an existing object,
        (None, None) when it lies in the global window but maps to no object,
        None when it is outside the global window entirely
    """
    if imm < GLOBAL_BASE or imm >= STACK_TOP:
        return None
    slot, offset = divmod(imm - GLOBAL_BASE, GLOBAL_STRIDE)
    if slot < n_objects:
        return slot, offset
    return None, None
