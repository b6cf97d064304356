"""
Assembler and disassembler for the .dasm text format

The grammar is documented in docs/DASM.md. In short:

    ; comment                      # also a comment
    .entry main
    .global table, 4, 1, 2        ; name, length in words, initial words
    .jumptable cases: L1 L2 L3
    .pin handler 40               ; place label 'handler' at offset 40
    main:
        movi r1, @table+2
        load r0, r1, 0
        beq r0, r2, done
    done:
        halt
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple
import hashlib
import logging
import re

from .errors import AssemblyError
from .isa import (
    GLOBAL_BASE,
    GLOBAL_STRIDE,
    INT64_MAX,
    INT64_MIN,
    OPERANDS,
    SP,
    DataKind,
    DataObject,
    Instruction,
    Opcode,
    Pin,
    ProgramImage,
    global_slot,
)

logger = logging.getLogger(__name__)

LABEL_RE = re.compile(r"^[A-Za-z_.$][\w.$]*$")
LABEL_DEF_RE = re.compile(r"^([A-Za-z_.$][\w.$]*)\s*:(.*)$")
HASH_NAME_RE = re.compile(r"^h_([0-9a-f]{16})$")
GLOBAL_REF_RE = re.compile(r"^@([A-Za-z_.$][\w.$]*)\s*(?:([+-])\s*(\w+))?$")

MNEMONICS = {op.name.lower(): op for op in Opcode}
BRANCH_TARGET_OPS = {Opcode.JMP, Opcode.BEQ, Opcode.BLT, Opcode.CALL}


def name_hash(name: str) -> int:
    """
    Hash a data object name to its 64-bit table key

    Names spelled h_<16 hex digits> denote that hash literally, which is how
    the disassembler renders objects whose source names are gone.
    """
    literal = HASH_NAME_RE.match(name)
    if literal:
        return int(literal.group(1), 16)
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def hash_name(value: int) -> str:
    return f"h_{value:016x}"


def parse_int(token: str, line: int) -> int:
    try:
        value = int(token, 0)
    except ValueError:
        raise AssemblyError(f"expected an integer, got '{token}'", line) from None
    if not INT64_MIN <= value <= INT64_MAX:
        raise AssemblyError(f"immediate overflow: {token}", line)
    return value


def parse_reg(token: str, line: int) -> int:
    token = token.lower()
    if token == "sp":
        return SP
    if re.fullmatch(r"r[0-8]", token):
        return int(token[1:])
    raise AssemblyError(f"expected a register, got '{token}'", line)


@dataclass
class _Statement:
    line: int
    opcode: Opcode
    operands: List[str]


@dataclass
class _DataDecl:
    line: int
    name: str
    kind: DataKind
    length: int = 0
    init: Tuple[int, ...] = ()
    labels: Tuple[str, ...] = ()


def _strip_comment(text: str) -> str:
    for marker in (";", "#"):
        index = text.find(marker)
        if index >= 0:
            text = text[:index]
    return text.strip()


def _split_operands(text: str) -> List[str]:
    text = text.strip()
    if not text:
        return []
    return [part.strip() for part in text.split(",")]


def assemble(source: str) -> ProgramImage:
    """
    Assemble .dasm text into a ProgramImage

    Args:
        source: assembly text

    Returns:
        The linked image, with every label resolved to an absolute offset

    Raises:
        AssemblyError: undefined or duplicate label, immediate overflow,
            malformed directive, or an empty program
    """
    lines = source.splitlines()

    entry_label: Optional[Tuple[str, int]] = None
    pins: Dict[str, Tuple[int, int]] = {}
    data: List[_DataDecl] = []
    # Each item is either a label definition or a statement, in source order
    items: List[Tuple[str, object]] = []

    for number, raw in enumerate(lines, 1):
        text = _strip_comment(raw)
        if not text:
            continue

        if text.startswith("."):
            directive, *rest_parts = text.split(None, 1)
            rest = rest_parts[0].strip() if rest_parts else ""
            if directive == ".entry":
                if not LABEL_RE.match(rest):
                    raise AssemblyError("malformed directive: .entry expects a label", number)
                entry_label = (rest, number)
            elif directive == ".global":
                fields = _split_operands(rest)
                if len(fields) < 2 or not LABEL_RE.match(fields[0]):
                    raise AssemblyError("malformed directive: .global name, len, [init...]", number)
                length = parse_int(fields[1], number)
                init = tuple(parse_int(f, number) for f in fields[2:])
                if length < 1 or len(init) > length:
                    raise AssemblyError(
                        f"malformed directive: .global {fields[0]} has length {length} "
                        f"and {len(init)} initial words", number
                    )
                if length > GLOBAL_STRIDE:
                    raise AssemblyError(
                        f"malformed directive: .global {fields[0]} of {length} words overflows "
                        f"its {GLOBAL_STRIDE}-word slot", number
                    )
                data.append(_DataDecl(number, fields[0], DataKind.RAW, length, init))
            elif directive == ".jumptable":
                name, colon, targets = rest.partition(":")
                entries = tuple(t for t in re.split(r"[\s,]+", targets.strip()) if t)
                if not colon or not LABEL_RE.match(name.strip()) or not entries:
                    raise AssemblyError("malformed directive: .jumptable name: label+", number)
                data.append(_DataDecl(number, name.strip(), DataKind.JUMPTABLE, len(entries), labels=entries))
            elif directive == ".pin":
                fields = rest.split()
                if len(fields) != 2 or not LABEL_RE.match(fields[0]):
                    raise AssemblyError("malformed directive: .pin label offset", number)
                offset = parse_int(fields[1], number)
                if offset < 0:
                    raise AssemblyError("malformed directive: pin offset must be non-negative", number)
                if fields[0] in pins:
                    raise AssemblyError(f"label '{fields[0]}' pinned twice", number)
                pins[fields[0]] = (offset, number)
            else:
                raise AssemblyError(f"malformed directive: unknown directive {directive}", number)
            continue

        while True:
            match = LABEL_DEF_RE.match(text)
            if not match:
                break
            items.append(("label", (match.group(1), number)))
            text = match.group(2).strip()
            if not text:
                break
        if not text:
            continue

        mnemonic, *rest_parts = text.split(None, 1)
        rest = rest_parts[0] if rest_parts else ""
        opcode = MNEMONICS.get(mnemonic.lower())
        if opcode is None:
            raise AssemblyError(f"unknown mnemonic '{mnemonic}'", number)
        items.append(("stmt", _Statement(number, opcode, _split_operands(rest))))

    if not any(kind == "stmt" for kind, _ in items):
        raise AssemblyError("no instructions")

    # Pass 1: lay out instructions, honoring pins with TRAP filler
    labels: Dict[str, int] = {}
    statements: List[Optional[_Statement]] = []
    for kind, payload in items:
        if kind == "label":
            name, number = payload
            if name in labels:
                raise AssemblyError(f"duplicate label '{name}'", number)
            if name in pins:
                required, _ = pins[name]
                if len(statements) > required:
                    raise AssemblyError(
                        f"pin offset {required} unreachable for label '{name}': "
                        f"code already at {len(statements)}", number
                    )
                statements.extend([None] * (required - len(statements)))
            labels[name] = len(statements)
        else:
            statements.append(payload)

    for name, (offset, number) in pins.items():
        if name not in labels:
            raise AssemblyError(f"undefined label '{name}'", number)
        if labels[name] >= len(statements):
            raise AssemblyError(f"pinned label '{name}' does not label an instruction", number)

    seen_names = set()
    for decl in data:
        key = name_hash(decl.name)
        if key in seen_names:
            raise AssemblyError(f"duplicate data object '{decl.name}'", decl.line)
        seen_names.add(key)
    slots = {decl.name: i for i, decl in enumerate(data)}

    def resolve_label(token: str, line: int) -> int:
        if LABEL_RE.match(token):
            if token not in labels:
                raise AssemblyError(f"undefined label '{token}'", line)
            return labels[token]
        return parse_int(token, line)

    def resolve_movi(token: str, line: int) -> int:
        ref = GLOBAL_REF_RE.match(token)
        if ref:
            name, sign, amount = ref.groups()
            if name not in slots:
                raise AssemblyError(f"undefined data object '{name}'", line)
            offset = parse_int(amount, line) if amount else 0
            if sign == "-":
                offset = -offset
            if not 0 <= offset < GLOBAL_STRIDE:
                raise AssemblyError(f"offset {offset} outside the slot of '{name}'", line)
            return GLOBAL_BASE + slots[name] * GLOBAL_STRIDE + offset
        return parse_int(token, line)

    # Pass 2: encode
    code: List[Instruction] = []
    for stmt in statements:
        if stmt is None:
            code.append(Instruction(Opcode.TRAP))
            continue
        fields = OPERANDS[stmt.opcode]
        if len(stmt.operands) != len(fields):
            raise AssemblyError(
                f"{stmt.opcode.name.lower()} expects {len(fields)} operand(s), got {len(stmt.operands)}",
                stmt.line,
            )
        values = {}
        for field_name, token in zip(fields, stmt.operands):
            if field_name == "imm":
                if stmt.opcode in BRANCH_TARGET_OPS:
                    values["imm"] = resolve_label(token, stmt.line)
                elif stmt.opcode is Opcode.MOVI:
                    values["imm"] = resolve_movi(token, stmt.line)
                else:
                    values["imm"] = parse_int(token, stmt.line)
            else:
                values[field_name] = parse_reg(token, stmt.line)
        code.append(Instruction(stmt.opcode, **values))

    objects = []
    for decl in data:
        if decl.kind is DataKind.JUMPTABLE:
            words = tuple(resolve_label(label, decl.line) for label in decl.labels)
        else:
            words = decl.init + (0,) * (decl.length - len(decl.init))
        objects.append(DataObject(name_hash(decl.name), decl.kind, words))

    entry = 0
    if entry_label is not None:
        name, number = entry_label
        if name not in labels:
            raise AssemblyError(f"undefined label '{name}'", number)
        entry = labels[name]

    pin_table = tuple(sorted(
        (Pin(labels[name], offset) for name, (offset, _) in pins.items()),
        key=lambda p: p.offset,
    ))

    logger.debug("Assembled %d instructions, %d data objects, %d pins",
                 len(code), len(objects), len(pin_table))
    return ProgramImage(entry, tuple(code), tuple(objects), pin_table)


def _reg_name(index: int) -> str:
    return "sp" if index == SP else f"r{index}"


def disassemble(image: ProgramImage) -> str:
    """
    Render an image as .dasm text

    Code offsets become synthetic labels L<offset>; data objects are named by
    their hash so that re-assembly reproduces the same table.
    """
    n = len(image.code)
    targets = {image.entry}
    for ins in image.code:
        if ins.opcode in BRANCH_TARGET_OPS and 0 <= ins.imm < n:
            targets.add(ins.imm)
    for obj in image.data_objects:
        if obj.kind is DataKind.JUMPTABLE:
            targets.update(w for w in obj.words if 0 <= w < n)
    targets.update(p.offset for p in image.pins)

    out: List[str] = [f".entry L{image.entry}"]
    for obj in image.data_objects:
        name = hash_name(obj.name_hash)
        if obj.kind is DataKind.JUMPTABLE:
            entries = " ".join(f"L{w}" if 0 <= w < n else str(w) for w in obj.words)
            out.append(f".jumptable {name}: {entries}")
        else:
            words = ", ".join(str(w) for w in obj.words)
            out.append(f".global {name}, {len(obj.words)}" + (f", {words}" if words else ""))
    for pin in image.pins:
        out.append(f".pin L{pin.offset} {pin.required}")

    n_objects = len(image.data_objects)
    for offset, ins in enumerate(image.code):
        if offset in targets:
            out.append(f"L{offset}:")
        operands = []
        for field_name in OPERANDS[ins.opcode]:
            if field_name != "imm":
                operands.append(_reg_name(getattr(ins, field_name)))
            elif ins.opcode in BRANCH_TARGET_OPS and 0 <= ins.imm < n:
                operands.append(f"L{ins.imm}")
            elif ins.opcode is Opcode.MOVI:
                slot = global_slot(ins.imm, n_objects)
                if slot is not None and slot[0] is not None:
                    index, within = slot
                    ref = f"@{hash_name(image.data_objects[index].name_hash)}"
                    operands.append(ref + (f"+{within}" if within else ""))
                else:
                    operands.append(str(ins.imm))
            else:
                operands.append(str(ins.imm))
        text = ins.opcode.name.lower()
        out.append(f"    {text} {', '.join(operands)}".rstrip())
    return "\n".join(out) + "\n"
