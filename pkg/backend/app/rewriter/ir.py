"""
Rewriter intermediate representation

The IR holds every reachable instruction, the data objects, the pins and
program metadata. All references are symbolic instruction ids; code offsets
only exist in a ProgramImage. Basic blocks own ordered member lists and a
block-level fallthrough edge, and the emitter places them by layout_rank.

Every mutation keeps referential integrity (or raises IRError) and marks the
cached analyses stale.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union
import copy
import logging

from .errors import IRError
from .isa import (
    BLOCK_ENDERS,
    CALLS,
    DIRECT_BRANCHES,
    FORMAT_VERSION,
    INDIRECT_BRANCHES,
    OPERANDS,
    TERMINATORS,
    WORD_BITS,
    DataKind,
    Instruction,
    Opcode,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlobalRef:
    """A MOVI immediate that addresses a data object"""

    name_hash: int
    offset: int = 0


@dataclass
class IRInstruction:
    id: int
    payload: Instruction
    original_offset: Optional[int] = None
    fallthrough: Optional[int] = None
    branch_targets: Tuple[int, ...] = ()
    indirect: bool = False
    # MOVI whose immediate is the final code offset of another instruction
    code_ref: Optional[int] = None
    global_ref: Optional[GlobalRef] = None
    unattributed_global: bool = False

    @property
    def opcode(self) -> Opcode:
        return self.payload.opcode


@dataclass
class IRDataObject:
    name_hash: int
    kind: DataKind
    words: List[int] = field(default_factory=list)
    # Jumptable entries as instruction ids
    entries: List[int] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.entries) if self.kind is DataKind.JUMPTABLE else len(self.words)


@dataclass
class BasicBlock:
    id: int
    members: List[int]
    layout_rank: int
    fallthrough_block: Optional[int] = None
    successors: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class UnreachableRecord:
    """A code record no control flow reaches, carried verbatim"""

    original_offset: int
    payload: Instruction


@dataclass
class CachedAnalysis:
    result: object
    valid: bool = True


@dataclass(frozen=True)
class NewInstruction:
    """An instruction to insert, with its symbolic references"""

    payload: Instruction
    target: Optional[int] = None
    code_ref: Optional[int] = None


@dataclass(frozen=True)
class Violation:
    kind: str
    id: Optional[int]
    message: str

    def __str__(self) -> str:
        where = f" [{self.id}]" if self.id is not None else ""
        return f"{self.kind}{where}: {self.message}"


Insertable = Union[Instruction, NewInstruction]


class ProgramIR:
    """Mutable IR value; plugins work on copies"""

    def __init__(self):
        self.instructions: Dict[int, IRInstruction] = {}
        self.blocks: List[BasicBlock] = []
        self.data_objects: List[IRDataObject] = []
        self.entry: Optional[int] = None
        self.pins: Dict[int, int] = {}
        self.residue: List[UnreachableRecord] = []
        self.metadata: Dict = {"word_width": WORD_BITS, "format_version": FORMAT_VERSION,
                               "transforms": []}
        self.analyses: Dict[str, CachedAnalysis] = {}
        self._block_of: Dict[int, int] = {}
        self._next_id = 0
        self._next_block = 0

    # ------------------------------------------------------------------ access

    def copy(self) -> "ProgramIR":
        return copy.deepcopy(self)

    def block(self, block_id: int) -> BasicBlock:
        for blk in self.blocks:
            if blk.id == block_id:
                return blk
        raise IRError(f"unknown block {block_id}")

    def block_of(self, iid: int) -> BasicBlock:
        if iid not in self._block_of:
            raise IRError(f"instruction {iid} is not placed in a block")
        return self.block(self._block_of[iid])

    def block_index(self) -> Dict[int, BasicBlock]:
        return {blk.id: blk for blk in self.blocks}

    def layout(self) -> List[BasicBlock]:
        return sorted(self.blocks, key=lambda b: b.layout_rank)

    def iter_layout(self) -> Iterator[IRInstruction]:
        for blk in self.layout():
            for iid in blk.members:
                yield self.instructions[iid]

    def jumptable_entries(self) -> List[int]:
        entries: List[int] = []
        for obj in self.data_objects:
            if obj.kind is DataKind.JUMPTABLE:
                entries.extend(obj.entries)
        return entries

    def known_indirect_targets(self) -> List[int]:
        """Every instruction an indirect branch may reach: jumptable entries and pins"""
        seen: Set[int] = set()
        ordered: List[int] = []
        for iid in self.jumptable_entries() + sorted(self.pins):
            if iid not in seen:
                seen.add(iid)
                ordered.append(iid)
        return ordered

    def return_sites(self) -> List[int]:
        return [ins.fallthrough for ins in self.instructions.values()
                if ins.opcode in CALLS and ins.fallthrough is not None]

    def indirect_count(self) -> int:
        return sum(1 for ins in self.instructions.values() if ins.indirect)

    def first_of(self, block_id: int) -> int:
        return self.block(block_id).members[0]

    # ------------------------------------------------------------- analyses

    def cached(self, name: str):
        entry = self.analyses.get(name)
        if entry is not None and entry.valid:
            return entry.result
        return None

    def is_valid(self, name: str) -> bool:
        entry = self.analyses.get(name)
        return entry is not None and entry.valid

    def _touch(self) -> None:
        for entry in self.analyses.values():
            entry.valid = False

    # -------------------------------------------------------------- building

    def new_id(self) -> int:
        iid = self._next_id
        self._next_id += 1
        return iid

    def _create(self, spec: Insertable) -> IRInstruction:
        if isinstance(spec, Instruction):
            spec = NewInstruction(spec)
        payload = spec.payload
        ins = IRInstruction(self.new_id(), payload, indirect=payload.opcode in INDIRECT_BRANCHES)
        if spec.target is not None:
            if payload.opcode not in DIRECT_BRANCHES:
                raise IRError(f"{payload.opcode.name} cannot carry a branch target")
            if spec.target not in self.instructions:
                raise IRError(f"branch target {spec.target} does not exist")
            ins.branch_targets = (spec.target,)
        elif payload.opcode in DIRECT_BRANCHES:
            raise IRError(f"inserted {payload.opcode.name} needs a target")
        if spec.code_ref is not None:
            if payload.opcode is not Opcode.MOVI:
                raise IRError("only MOVI can carry a code reference")
            if spec.code_ref not in self.instructions:
                raise IRError(f"code reference {spec.code_ref} does not exist")
            ins.code_ref = spec.code_ref
        self.instructions[ins.id] = ins
        return ins

    def add_instruction(self, ins: IRInstruction) -> None:
        """Register a fully formed instruction (used by the lifter)"""
        self.instructions[ins.id] = ins
        self._next_id = max(self._next_id, ins.id + 1)

    def add_block_raw(self, members: List[int], fallthrough_block: Optional[int] = None) -> BasicBlock:
        """Append a block at the end of the layout (used by the lifter)"""
        blk = BasicBlock(self._next_block, list(members), len(self.blocks), fallthrough_block)
        self._next_block += 1
        self.blocks.append(blk)
        for iid in members:
            self._block_of[iid] = blk.id
        return blk

    def finalize(self) -> None:
        """Recompute derived links after bulk construction"""
        self.refresh_successors()

    def _relink(self, blk: BasicBlock, blocks: Optional[Dict[int, BasicBlock]] = None) -> None:
        members = blk.members
        for index, iid in enumerate(members):
            ins = self.instructions[iid]
            self._block_of[iid] = blk.id
            if index + 1 < len(members):
                ins.fallthrough = members[index + 1]
            elif ins.opcode in TERMINATORS or blk.fallthrough_block is None:
                ins.fallthrough = None
            else:
                target = blocks[blk.fallthrough_block] if blocks else self.block(blk.fallthrough_block)
                ins.fallthrough = target.members[0]

    def refresh_successors(self) -> None:
        """Re-derive instruction fallthroughs and block successor lists"""
        index = self.block_index()
        for blk in self.blocks:
            self._relink(blk, index)
        targets = self.known_indirect_targets()
        returns = self.return_sites()
        for blk in self.blocks:
            last = self.instructions[blk.members[-1]]
            succ: List[int] = []
            candidates: List[int] = list(last.branch_targets)
            if last.opcode in INDIRECT_BRANCHES:
                candidates.extend(targets)
            if last.opcode is Opcode.RET:
                candidates.extend(returns)
            if last.fallthrough is not None:
                candidates.append(last.fallthrough)
            for iid in candidates:
                owner = self._block_of.get(iid)
                if owner is not None and owner in index and owner not in succ:
                    succ.append(owner)
            blk.successors = succ

    # ------------------------------------------------------------- mutation

    def _references_to(self, iid: int) -> int:
        count = 0
        for ins in self.instructions.values():
            count += ins.branch_targets.count(iid)
            if ins.code_ref == iid:
                count += 1
        count += self.jumptable_entries().count(iid)
        if iid in self.pins:
            count += 1
        if self.entry == iid:
            count += 1
        return count

    def retarget(self, old: int, new: int, exclude: Iterable[int] = ()) -> None:
        """Redirect every symbolic reference to `old` onto `new`, except from `exclude`"""
        if new not in self.instructions:
            raise IRError(f"retarget destination {new} does not exist")
        skip = set(exclude)
        for ins in self.instructions.values():
            if ins.id in skip:
                continue
            if old in ins.branch_targets:
                ins.branch_targets = tuple(new if t == old else t for t in ins.branch_targets)
            if ins.code_ref == old:
                ins.code_ref = new
        for obj in self.data_objects:
            if obj.kind is DataKind.JUMPTABLE:
                obj.entries = [new if e == old else e for e in obj.entries]
        if old in self.pins:
            if new in self.pins and new != old:
                raise IRError(f"retargeting pin of {old} onto already pinned {new}")
            self.pins[new] = self.pins.pop(old)
        if self.entry == old:
            self.entry = new
        self._touch()

    def _place_after(self, anchor_block: BasicBlock, blk: BasicBlock) -> None:
        rank = anchor_block.layout_rank + 1
        for other in self.blocks:
            if other.layout_rank >= rank:
                other.layout_rank += 1
        blk.layout_rank = rank
        position = self.blocks.index(anchor_block) + 1
        self.blocks.insert(position, blk)

    def split_block(self, iid: int) -> BasicBlock:
        """
        Start a new block at `iid`, placed right after its current block

        Returns the block that now begins with `iid` (unchanged if it
        already led its block).
        """
        blk = self.block_of(iid)
        index = blk.members.index(iid)
        if index == 0:
            return blk
        tail = BasicBlock(self._next_block, blk.members[index:], 0, blk.fallthrough_block)
        self._next_block += 1
        blk.members = blk.members[:index]
        last = self.instructions[blk.members[-1]]
        self._place_after(blk, tail)
        blk.fallthrough_block = None if last.opcode in TERMINATORS else tail.id
        self._relink(tail)
        self._relink(blk)
        self.refresh_successors()
        self._touch()
        return tail

    def _normalize(self, blk: BasicBlock) -> None:
        """Split a block after any control transfer that is not its last member"""
        current = blk
        while True:
            cut = None
            for index, iid in enumerate(current.members[:-1]):
                if self.instructions[iid].opcode in BLOCK_ENDERS:
                    cut = current.members[index + 1]
                    break
            if cut is None:
                return
            current = self.split_block(cut)

    def insert_before(self, anchor: int, specs: Sequence[Insertable], retarget: bool = True) -> List[int]:
        """
        Insert instructions in front of `anchor`

        With retarget=True every reference to `anchor` (branches, jumptable
        entries, pins, entry) moves to the first inserted instruction, so all
        paths into `anchor` run the new code. With retarget=False only the
        fallthrough path does.
        """
        if anchor not in self.instructions:
            raise IRError(f"insert anchor {anchor} does not exist")
        if not specs:
            return []
        blk = self.block_of(anchor)
        if not retarget and blk.members[0] == anchor and self._references_to(anchor):
            # New code stays in the predecessor chain; only fallthrough reaches it
            created = [self._create(s) for s in specs]
            holder = BasicBlock(self._next_block, [c.id for c in created], 0, blk.id)
            self._next_block += 1
            predecessors = [b for b in self.blocks if b.fallthrough_block == blk.id]
            if not predecessors:
                for c in created:
                    del self.instructions[c.id]
                return []
            before = max(predecessors, key=lambda b: b.layout_rank)
            self._place_after(before, holder)
            self._relink(holder)
            for pred in predecessors:
                pred.fallthrough_block = holder.id
                self._relink(pred)
            self._normalize(holder)
            self.refresh_successors()
            self._touch()
            return [c.id for c in created]

        created = [self._create(s) for s in specs]
        index = blk.members.index(anchor)
        blk.members[index:index] = [c.id for c in created]
        if retarget:
            self.retarget(anchor, created[0].id, exclude=[c.id for c in created])
        self._relink(blk)
        self._normalize(blk)
        self.refresh_successors()
        self._touch()
        return [c.id for c in created]

    def insert_after(self, anchor: int, specs: Sequence[Insertable]) -> List[int]:
        """Insert instructions behind a non-control-transfer instruction"""
        if anchor not in self.instructions:
            raise IRError(f"insert anchor {anchor} does not exist")
        if self.instructions[anchor].opcode in BLOCK_ENDERS:
            raise IRError(f"cannot insert after control transfer {anchor}")
        if not specs:
            return []
        blk = self.block_of(anchor)
        created = [self._create(s) for s in specs]
        index = blk.members.index(anchor) + 1
        blk.members[index:index] = [c.id for c in created]
        self._relink(blk)
        self._normalize(blk)
        self.refresh_successors()
        self._touch()
        return [c.id for c in created]

    def add_block(self, specs: Sequence[Insertable], after_block: int,
                  fallthrough_block: Optional[int] = None) -> BasicBlock:
        """Create a new block placed right after `after_block` in the layout"""
        if not specs:
            raise IRError("a block needs at least one instruction")
        anchor = self.block(after_block)
        last = specs[-1] if isinstance(specs[-1], Instruction) else specs[-1].payload
        if last.opcode not in TERMINATORS and fallthrough_block is None:
            raise IRError("new block falls through to nothing")
        created = [self._create(s) for s in specs]
        blk = BasicBlock(self._next_block, [c.id for c in created], 0, fallthrough_block)
        self._next_block += 1
        self._place_after(anchor, blk)
        self._relink(blk)
        self._normalize(blk)
        self.refresh_successors()
        self._touch()
        return blk

    def replace(self, iid: int, payload: Instruction, target: Optional[int] = None) -> None:
        """
        Modify an instruction in place

        Control-transfer shape must be preserved: a block ender can only be
        replaced by another block ender of the same fallthrough behavior.
        """
        ins = self.instructions.get(iid)
        if ins is None:
            raise IRError(f"instruction {iid} does not exist")
        old, new = ins.opcode, payload.opcode
        if (old in BLOCK_ENDERS) != (new in BLOCK_ENDERS) or (old in TERMINATORS) != (new in TERMINATORS):
            raise IRError(f"replacing {old.name} with {new.name} changes block structure")
        if new in DIRECT_BRANCHES:
            if target is None:
                if old not in DIRECT_BRANCHES:
                    raise IRError(f"{new.name} needs a target")
                target = ins.branch_targets[0]
            if target not in self.instructions:
                raise IRError(f"branch target {target} does not exist")
            ins.branch_targets = (target,)
        else:
            ins.branch_targets = ()
        # A ref overrides the immediate at emission, so a new value drops it.
        if new is not Opcode.MOVI or payload.imm != ins.payload.imm:
            ins.code_ref = None
            ins.global_ref = None
            ins.unattributed_global = False
        ins.payload = payload
        ins.indirect = new in INDIRECT_BRANCHES
        self.refresh_successors()
        self._touch()

    def delete(self, iid: int) -> None:
        """
        Remove an instruction

        References to it move to the instruction that follows it; deleting a
        referenced instruction with no successor raises IRError.
        """
        ins = self.instructions.get(iid)
        if ins is None:
            raise IRError(f"instruction {iid} does not exist")
        blk = self.block_of(iid)
        index = blk.members.index(iid)
        follower: Optional[int] = None
        if index + 1 < len(blk.members):
            follower = blk.members[index + 1]
        elif ins.opcode not in TERMINATORS and blk.fallthrough_block is not None:
            follower = self.first_of(blk.fallthrough_block)

        if self._references_to(iid):
            if follower is None:
                raise IRError(f"instruction {iid} is referenced and has no successor to take its place")
            self.retarget(iid, follower)

        remaining = blk.members[:index] + blk.members[index + 1:]
        if remaining:
            last = self.instructions[remaining[-1]]
            if index == len(blk.members) - 1 and last.opcode not in TERMINATORS and blk.fallthrough_block is None:
                raise IRError(f"deleting {iid} leaves block {blk.id} without a successor")
            blk.members = remaining
            self._relink(blk)
        else:
            for other in self.blocks:
                if other.fallthrough_block == blk.id:
                    other.fallthrough_block = blk.fallthrough_block
            self.blocks.remove(blk)
            for rank, other in enumerate(self.layout()):
                other.layout_rank = rank
            for other in self.blocks:
                self._relink(other)

        del self.instructions[iid]
        self._block_of.pop(iid, None)
        self.refresh_successors()
        self._touch()

    def set_layout(self, order: Sequence[int]) -> None:
        """Assign layout ranks from an ordered list of block ids"""
        if sorted(order) != sorted(b.id for b in self.blocks):
            raise IRError("layout order must list every block exactly once")
        index = self.block_index()
        for rank, block_id in enumerate(order):
            index[block_id].layout_rank = rank
        self._touch()

    def set_data_order(self, order: Sequence[int]) -> None:
        """Reorder data objects; `order` lists current indices in their new order"""
        if sorted(order) != list(range(len(self.data_objects))):
            raise IRError("data order must be a permutation of object indices")
        self.data_objects = [self.data_objects[i] for i in order]
        self._touch()

    def record_transform(self, name: str, **details) -> None:
        self.metadata["transforms"].append({"plugin": name, **details})


# ------------------------------------------------------------------ validation

def validate(ir: ProgramIR) -> List[Violation]:
    """
    Check every IR invariant

    Returns:
        One Violation per broken invariant; empty when the IR is well formed.
        Never raises on malformed IR.
    """
    report: List[Violation] = []

    def check(fn):
        try:
            fn()
        except Exception as e:  # malformed IR must be reported, not raised
            report.append(Violation("internal", None, f"validator could not complete a check: {e}"))

    instructions = ir.instructions
    blocks_by_id: Dict[int, BasicBlock] = {}

    def check_entry():
        if ir.entry is None or ir.entry not in instructions:
            report.append(Violation("dangling entry", ir.entry, "entry instruction does not exist"))

    def check_instructions():
        for iid, ins in instructions.items():
            op = ins.opcode
            if ins.fallthrough is not None and ins.fallthrough not in instructions:
                report.append(Violation("dangling fallthrough", iid, f"fallthrough {ins.fallthrough} missing"))
            for t in ins.branch_targets:
                if t not in instructions:
                    report.append(Violation("dangling branch target", iid, f"target {t} missing"))
            if op in DIRECT_BRANCHES and len(ins.branch_targets) != 1:
                report.append(Violation("malformed branch", iid, f"{op.name} needs exactly one target"))
            if op not in DIRECT_BRANCHES and ins.branch_targets:
                report.append(Violation("malformed branch", iid, f"{op.name} cannot have branch targets"))
            if op in TERMINATORS and ins.fallthrough is not None:
                report.append(Violation("malformed fallthrough", iid, f"{op.name} cannot fall through"))
            if ins.indirect != (op in INDIRECT_BRANCHES):
                report.append(Violation("indirect flag", iid, "indirect flag disagrees with opcode"))
            if ins.code_ref is not None and ins.code_ref not in instructions:
                report.append(Violation("dangling code reference", iid, f"code_ref {ins.code_ref} missing"))
            if ins.global_ref is not None and ins.global_ref.name_hash not in {
                    o.name_hash for o in ir.data_objects}:
                report.append(Violation("dangling global reference", iid,
                                        f"object {ins.global_ref.name_hash:016x} missing"))

    def check_data():
        for obj in ir.data_objects:
            if obj.kind is DataKind.JUMPTABLE:
                for e in obj.entries:
                    if e not in instructions:
                        report.append(Violation("dangling jumptable entry", e,
                                                f"jumptable {obj.name_hash:016x} entry missing"))
        for iid in ir.pins:
            if iid not in instructions:
                report.append(Violation("dangling pin", iid, "pinned instruction missing"))

    def check_blocks():
        owner: Dict[int, int] = {}
        for blk in ir.blocks:
            if blk.id in blocks_by_id:
                report.append(Violation("duplicate block id", blk.id, "block id used twice"))
            blocks_by_id[blk.id] = blk
        for blk in ir.blocks:
            if not blk.members:
                report.append(Violation("empty block", blk.id, "block has no members"))
                continue
            for iid in blk.members:
                if iid not in instructions:
                    report.append(Violation("dangling block member", iid, f"member of block {blk.id} missing"))
                elif iid in owner:
                    report.append(Violation("blocks not a partition", iid,
                                            f"in blocks {owner[iid]} and {blk.id}"))
                else:
                    owner[iid] = blk.id
            if blk.fallthrough_block is not None and blk.fallthrough_block not in blocks_by_id:
                report.append(Violation("dangling fallthrough block", blk.id,
                                        f"block {blk.fallthrough_block} missing"))
            members = [m for m in blk.members if m in instructions]
            for index, iid in enumerate(members):
                ins = instructions[iid]
                if index + 1 < len(members):
                    if ins.opcode in BLOCK_ENDERS:
                        report.append(Violation("block not single-exit", iid,
                                                f"{ins.opcode.name} in the middle of block {blk.id}"))
                    if ins.fallthrough != members[index + 1]:
                        report.append(Violation("broken fallthrough chain", iid,
                                                f"does not fall through to {members[index + 1]}"))
                elif ins.opcode not in TERMINATORS:
                    if blk.fallthrough_block is None:
                        report.append(Violation("falls off block", iid,
                                                f"block {blk.id} ends without a successor"))
                    elif blk.fallthrough_block in blocks_by_id:
                        expected = blocks_by_id[blk.fallthrough_block].members[0]
                        if ins.fallthrough != expected:
                            report.append(Violation("broken fallthrough chain", iid,
                                                    f"block fallthrough should reach {expected}"))
        for iid in instructions:
            if iid not in owner:
                report.append(Violation("unplaced instruction", iid, "instruction belongs to no block"))

        leaders = {blk.members[0] for blk in ir.blocks if blk.members}
        referenced: List[Tuple[int, str]] = []
        for iid, ins in instructions.items():
            referenced.extend((t, f"branch from {iid}") for t in ins.branch_targets)
            if ins.code_ref is not None:
                referenced.append((ins.code_ref, f"code reference from {iid}"))
        referenced.extend((e, "jumptable entry") for e in ir.jumptable_entries())
        referenced.extend((p, "pin") for p in ir.pins)
        if ir.entry is not None:
            referenced.append((ir.entry, "entry"))
        for target, source in referenced:
            if target in instructions and target not in leaders:
                report.append(Violation("block not single-entry", target,
                                        f"{source} lands inside a block"))

        ranks = sorted(blk.layout_rank for blk in ir.blocks)
        if ranks != list(range(len(ir.blocks))):
            report.append(Violation("layout_rank not a permutation", None,
                                    f"ranks {ranks} over {len(ir.blocks)} blocks"))

    for fn in (check_entry, check_instructions, check_data, check_blocks):
        check(fn)
    return report


# ------------------------------------------------------------------- dumping

def _format_payload(ins: IRInstruction) -> str:
    p = ins.payload
    fields = []
    for name in OPERANDS[p.opcode]:
        value = getattr(p, name)
        if name == "imm":
            fields.append(f"#{value}")
        else:
            fields.append("sp" if value == 8 else f"r{value}")
    return f"{p.opcode.name.lower()} {', '.join(fields)}".rstrip()


def dump_ir(ir: ProgramIR) -> str:
    """Line-oriented text rendering of the IR, in layout order"""
    lines = [f"entry {ir.entry}"]
    for obj in ir.data_objects:
        if obj.kind is DataKind.JUMPTABLE:
            lines.append(f"data {obj.name_hash:016x} jumptable -> {','.join(map(str, obj.entries))}")
        else:
            lines.append(f"data {obj.name_hash:016x} raw len={len(obj.words)}")
    for blk in ir.layout():
        succ = ",".join(f"b{s}" for s in blk.successors)
        lines.append(f"b{blk.id} rank={blk.layout_rank} succ=[{succ}]")
        for iid in blk.members:
            ins = ir.instructions[iid]
            text = f"  {iid} {_format_payload(ins)}"
            if ins.branch_targets:
                text += " -> " + ",".join(map(str, ins.branch_targets))
            if ins.code_ref is not None:
                text += f" code_ref={ins.code_ref}"
            if ins.global_ref is not None:
                text += f" global={ins.global_ref.name_hash:016x}+{ins.global_ref.offset}"
            if iid in ir.pins:
                text += f" pin={ir.pins[iid]}"
            lines.append(text)
    for record in ir.residue:
        lines.append(f"residue @{record.original_offset} {record.payload.opcode.name.lower()}")
    return "\n".join(lines) + "\n"


def iter_ids(ir: ProgramIR, opcodes: Iterable[Opcode]) -> List[int]:
    """Ids of instructions with the given opcodes, in layout order"""
    wanted = set(opcodes)
    return [ins.id for ins in ir.iter_layout() if ins.opcode in wanted]
