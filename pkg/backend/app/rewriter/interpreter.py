"""
Deterministic interpreter for desk images

The interpreter is the functional-equivalence oracle: two images are
equivalent on an input when they produce the same output words and the same
termination.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

from .isa import (
    GLOBAL_BASE,
    GLOBAL_STRIDE,
    HEAP_BASE,
    SP,
    STACK_TOP,
    Opcode,
    ProgramImage,
    wrap64,
)

DEFAULT_STEP_LIMIT = 1_000_000

HALT = "halt"
TRAP = "trap"
STEP_LIMIT = "step_limit"
FAULT = "fault"

FAULT_BAD_TARGET = "bad_target"
FAULT_INPUT_EXHAUSTED = "input_exhausted"
FAULT_PC_OUT_OF_RANGE = "pc_out_of_range"
FAULT_BAD_ALLOC = "bad_alloc"


@dataclass(frozen=True)
class ExecutionResult:
    output: Tuple[int, ...]
    steps: int
    termination: str
    fault_kind: Optional[str] = None

    @property
    def outcome(self) -> Tuple[Tuple[int, ...], str, Optional[str]]:
        """What equivalence compares: output words and termination"""
        return self.output, self.termination, self.fault_kind

    def describe(self) -> str:
        if self.termination == FAULT:
            return f"fault({self.fault_kind})"
        return self.termination

    def to_dict(self) -> Dict:
        return {
            "output": list(self.output),
            "steps": self.steps,
            "termination": self.describe(),
        }


def execute(
    image: ProgramImage,
    inputs: Sequence[int] = (),
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> ExecutionResult:
    """
    Run an image to completion

    Args:
        image: program to run
        inputs: words consumed by IN, in order
        step_limit: maximum number of instructions to execute (>= 1)

    Returns:
        ExecutionResult; faults are results, never exceptions
    """
    if step_limit < 1:
        raise ValueError("step_limit must be >= 1")

    code = [(int(i.opcode), i.a, i.b, i.c, i.imm) for i in image.code]
    n = len(code)

    memory: Dict[int, int] = {}
    for slot, obj in enumerate(image.data_objects):
        base = GLOBAL_BASE + slot * GLOBAL_STRIDE
        for i, word in enumerate(obj.words):
            if word:
                memory[base + i] = word

    regs = [0] * 9
    regs[SP] = STACK_TOP
    heap = HEAP_BASE
    output = []
    feed = list(inputs)
    cursor = 0
    pc = image.entry
    steps = 0

    MOVI, MOV, ADD, SUB, MUL = (int(Opcode.MOVI), int(Opcode.MOV), int(Opcode.ADD),
                                int(Opcode.SUB), int(Opcode.MUL))
    LOAD, STORE, PUSH, POP = int(Opcode.LOAD), int(Opcode.STORE), int(Opcode.PUSH), int(Opcode.POP)
    ENTER, LEAVE, ALLOC = int(Opcode.ENTER), int(Opcode.LEAVE), int(Opcode.ALLOC)
    JMP, BEQ, BLT, JMPI = int(Opcode.JMP), int(Opcode.BEQ), int(Opcode.BLT), int(Opcode.JMPI)
    CALL, CALLI, RET = int(Opcode.CALL), int(Opcode.CALLI), int(Opcode.RET)
    IN, OUT, HALT_OP, TRAP_OP = int(Opcode.IN), int(Opcode.OUT), int(Opcode.HALT), int(Opcode.TRAP)

    def fault(kind: str) -> ExecutionResult:
        return ExecutionResult(tuple(output), steps, FAULT, kind)

    while True:
        if steps >= step_limit:
            return ExecutionResult(tuple(output), steps, STEP_LIMIT)
        if not 0 <= pc < n:
            return fault(FAULT_PC_OUT_OF_RANGE)
        op, a, b, c, imm = code[pc]
        steps += 1
        pc += 1

        if op == MOVI:
            regs[a] = imm
        elif op == MOV:
            regs[a] = regs[b]
        elif op == ADD:
            regs[a] = wrap64(regs[b] + regs[c])
        elif op == SUB:
            regs[a] = wrap64(regs[b] - regs[c])
        elif op == MUL:
            regs[a] = wrap64(regs[b] * regs[c])
        elif op == LOAD:
            regs[a] = memory.get(wrap64(regs[b] + imm), 0)
        elif op == STORE:
            memory[wrap64(regs[b] + imm)] = regs[a]
        elif op == PUSH:
            value = regs[a]
            regs[SP] = wrap64(regs[SP] - 1)
            memory[regs[SP]] = value
        elif op == POP:
            value = memory.get(regs[SP], 0)
            regs[SP] = wrap64(regs[SP] + 1)
            regs[a] = value
        elif op == ENTER:
            regs[SP] = wrap64(regs[SP] - imm)
        elif op == LEAVE:
            regs[SP] = wrap64(regs[SP] + imm)
        elif op == ALLOC:
            size = regs[b]
            if size < 0:
                return fault(FAULT_BAD_ALLOC)
            regs[a] = heap
            heap = wrap64(heap + size)
        elif op == JMP:
            pc = imm
        elif op == BEQ:
            if regs[a] == regs[b]:
                pc = imm
        elif op == BLT:
            if regs[a] < regs[b]:
                pc = imm
        elif op == JMPI:
            target = regs[a]
            if not 0 <= target < n:
                return fault(FAULT_BAD_TARGET)
            pc = target
        elif op == CALL or op == CALLI:
            target = imm if op == CALL else regs[a]
            if op == CALLI and not 0 <= target < n:
                return fault(FAULT_BAD_TARGET)
            regs[SP] = wrap64(regs[SP] - 1)
            memory[regs[SP]] = pc
            pc = target
        elif op == RET:
            target = memory.get(regs[SP], 0)
            regs[SP] = wrap64(regs[SP] + 1)
            if not 0 <= target < n:
                return fault(FAULT_BAD_TARGET)
            pc = target
        elif op == IN:
            if cursor >= len(feed):
                return fault(FAULT_INPUT_EXHAUSTED)
            regs[a] = wrap64(feed[cursor])
            cursor += 1
        elif op == OUT:
            output.append(regs[a])
        elif op == HALT_OP:
            return ExecutionResult(tuple(output), steps, HALT)
        elif op == TRAP_OP:
            return ExecutionResult(tuple(output), steps, TRAP)
